//! Bounded dual steps, the nonlinearity certificate, proximal schedules and
//! initialization.

use crate::config::{DualDirection, SolverConfig};
use crate::error::{Error, Result};
use crate::family::{Family, PerFamily};
use crate::partition::{slack_upper_bounds, BlockRows, ConsensusPartition};
use crate::problem::{Problem, QuadraticConstraint};
use crate::scalar::{clamp, norm2_sq, norm_inf, Real};
use crate::state::{block_residuals, BlockState, GlobalState, Instance};
use crate::subproblem::QuadTerm;

/// Componentwise `mu - alpha r`, kept only where it stays in `[0, upper]`.
/// Returns the new duals and the effective step per component.
pub fn dual_step<T: Real>(mu: &[T], residual: &[T], alpha: T, upper: &[T]) -> (Vec<T>, Vec<T>) {
    let mut out = Vec::with_capacity(mu.len());
    let mut eff = Vec::with_capacity(mu.len());
    for j in 0..mu.len() {
        let cand = mu[j] - alpha * residual[j];
        if cand >= T::zero() && cand <= upper[j] {
            out.push(cand);
            eff.push(alpha);
        } else {
            out.push(mu[j]);
            eff.push(T::zero());
        }
    }
    (out, eff)
}

/// `clamp(mu + alpha r, 0, upper)`. The returned step is signed so that
/// `mu_new = mu - eff * r` still holds componentwise.
pub fn dual_ascent_step<T: Real>(mu: &[T], residual: &[T], alpha: T, upper: &[T]) -> (Vec<T>, Vec<T>) {
    let mut out = Vec::with_capacity(mu.len());
    let mut eff = Vec::with_capacity(mu.len());
    for j in 0..mu.len() {
        let new = clamp(mu[j] + alpha * residual[j], T::zero(), upper[j]);
        eff.push(if residual[j] == T::zero() { T::zero() } else { (mu[j] - new) / residual[j] });
        out.push(new);
    }
    (out, eff)
}

/// Dispatches on the configured direction.
pub fn dual_update<T: Real>(
    direction: DualDirection,
    mu: &[T],
    residual: &[T],
    alpha: T,
    upper: &[T],
) -> (Vec<T>, Vec<T>) {
    match direction {
        DualDirection::Descent => dual_step(mu, residual, alpha, upper),
        DualDirection::ProjectedAscent => dual_ascent_step(mu, residual, alpha, upper),
    }
}

/// Nonlinearity term of one subvector update: the quadratic-form value
/// `sum_j left_j * 0.5 * d^T Hess_j d` with `d = X^k_l - X^{k+1}_l` and
/// `left_j = Fmu_j + rho (F_j(X^{k+1,k+1}) + FY_j)`.
pub fn compute_u<T: Real>(terms: &[QuadTerm<T>], rho: T, x_new: &[T], x_old: &[T]) -> T {
    let d: Vec<T> = x_old.iter().zip(x_new).map(|(&a, &b)| a - b).collect();
    terms
        .iter()
        .map(|t| {
            let left = t.dual + rho * (t.value(t.accum(x_new)) + t.slack);
            left * T::half() * t.hess_quad(&d)
        })
        .sum()
}

/// Same quantity via `F(X^{k+1,k}) - F(X^{k+1,k+1}) - d^T grad F(X^{k+1,k+1})`.
pub fn compute_u_difference<T: Real>(terms: &[QuadTerm<T>], rho: T, x_new: &[T], x_old: &[T]) -> T {
    terms
        .iter()
        .map(|t| {
            let acc_new = t.accum(x_new);
            let f_new = t.value(acc_new);
            let f_old = t.value(t.accum(x_old));
            let two = T::two();
            let mut dg = T::zero();
            for j in 0..x_new.len() {
                let gj = match t.kind {
                    crate::problem::QuadraticKind::SumSquare => t.a[j] + two * acc_new.c * t.c[j],
                    crate::problem::QuadraticKind::ProductForm => {
                        two * acc_new.c * t.c[j] - acc_new.b * t.a[j] - acc_new.a * t.b[j]
                    }
                };
                dg += (x_old[j] - x_new[j]) * gj;
            }
            (t.dual + rho * (f_new + t.slack)) * (f_old - f_new - dg)
        })
        .sum()
}

/// Curvature constant `|u|_1 * sum_j (2 |c_j|_inf^2 + 2 |a_j|_inf |b_j|_inf)`
/// over the given constraints; bounds `|U| <= C (|Fmu|_inf + rho |F + FY|_inf) |d|_1`.
pub fn curvature_bound<T: Real>(quadratic: &[&QuadraticConstraint<T>], bound: &[T]) -> T {
    let u1: T = bound.iter().copied().sum();
    let s: T = quadratic
        .iter()
        .map(|q| {
            let c = norm_inf(&q.c.weights);
            let prod = match q.kind {
                crate::problem::QuadraticKind::SumSquare => T::zero(),
                crate::problem::QuadraticKind::ProductForm => {
                    norm_inf(&q.a.weights) * norm_inf(&q.b.weights)
                }
            };
            T::two() * c * c + T::two() * prod
        })
        .sum();
    u1 * s
}

/// One-step-delayed L1 proximal weight.
pub fn sigma1_schedule<T: Real>(u_prev: T, dx_prev_l1: T, gamma_bound: T) -> T {
    if u_prev >= T::zero() || dx_prev_l1 <= T::zero() {
        T::zero()
    } else {
        gamma_bound * u_prev.abs() / dx_prev_l1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState<T> {
    /// Indexed `[block][subvector]`.
    pub sigma1: Vec<Vec<T>>,
    pub sigma2: Vec<Vec<T>>,
    pub tau: T,
    pub gamma: Vec<PerFamily<T>>,
    pub u_prev: Vec<Vec<T>>,
    /// Parameters clamped to the cap in the last update.
    pub capped: usize,
}

/// Squared step norms of the last iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNorms<T> {
    pub dx2: Vec<Vec<T>>,
    pub dx1: Vec<Vec<T>>,
    pub dz2: T,
    pub dy2: Vec<PerFamily<T>>,
}

impl<T: Real> ScheduleState<T> {
    pub fn initial(config: &SolverConfig<T>, blocks: usize, subvectors: usize) -> Self {
        let m = config.margin;
        let floor = |i: usize| {
            let r = T::two() * config.rho_for(i);
            m * r * r
        };
        let tau = (0..blocks).map(floor).fold(config.tau0, |a, b| a.max(b));
        ScheduleState {
            sigma1: vec![vec![T::zero(); subvectors]; blocks],
            sigma2: (0..blocks).map(|i| vec![floor(i); subvectors]).collect(),
            tau,
            gamma: (0..blocks)
                .map(|i| PerFamily::splat(floor(i).max(config.gamma0)))
                .collect(),
            u_prev: vec![vec![T::zero(); subvectors]; blocks],
            capped: 0,
        }
    }
}

fn capped<T: Real>(v: T, cap: T, count: &mut usize) -> T {
    if v > cap {
        *count += 1;
        cap
    } else {
        v
    }
}

/// Next proximal parameters from the previous ones and the last step sizes.
pub fn parameter_schedules<T: Real>(
    prev: &ScheduleState<T>,
    steps: &StepNorms<T>,
    u_now: &[Vec<T>],
    config: &SolverConfig<T>,
) -> ScheduleState<T> {
    let m = config.margin;
    let blocks = prev.sigma2.len();
    let mut count = 0;
    let sigma2 = (0..blocks)
        .map(|i| {
            let r2 = T::two() * config.rho_for(i);
            let cap = config.cap_for(i);
            prev.sigma2[i]
                .iter()
                .zip(&steps.dx2[i])
                .map(|(&s, &d)| {
                    let est = (s + r2) * (s + r2) * d;
                    capped(m * (r2 * r2).max(est), cap, &mut count)
                })
                .collect()
        })
        .collect();
    let wsum: T = (0..blocks)
        .map(|i| prev.tau + T::two() * config.rho_for(i))
        .sum();
    let tau_est = wsum * wsum * steps.dz2 / T::from_usize_lossy(blocks);
    let tau_floor = (0..blocks)
        .map(|i| {
            let r2 = T::two() * config.rho_for(i);
            r2 * r2
        })
        .fold(T::zero(), |a, b| a.max(b));
    let tau_cap = (0..blocks)
        .map(|i| config.cap_for(i))
        .fold(T::infinity(), |a, b| a.min(b));
    let tau = capped(m * tau_floor.max(tau_est), tau_cap, &mut count);
    let gamma = (0..blocks)
        .map(|i| {
            let r = config.rho_for(i);
            let cap = config.cap_for(i);
            PerFamily::from_fn(|fam| {
                let g = *prev.gamma[i].get(fam);
                let est = (g + r) * (g + r) * *steps.dy2[i].get(fam);
                capped(m * (r * r).max(est), cap, &mut count)
            })
        })
        .collect();
    let sigma1 = (0..blocks)
        .map(|i| {
            u_now[i]
                .iter()
                .zip(&steps.dx1[i])
                .map(|(&u, &d)| sigma1_schedule(u, d, config.gamma_bound))
                .collect()
        })
        .collect();
    ScheduleState {
        sigma1,
        sigma2,
        tau,
        gamma,
        u_prev: u_now.to_vec(),
        capped: count,
    }
}

/// Slack-free part of each residual family at `(x, z)`.
pub fn residual_bases<T: Real>(problem: &Problem<T>, rows: &BlockRows, x: &[T], z: &[T]) -> PerFamily<Vec<T>> {
    let h: Vec<T> = rows.h.iter().map(|&j| problem.eq.rows[j].eval(x)).collect();
    PerFamily {
        px: x.iter().zip(z).map(|(&a, &b)| a - b).collect(),
        nx: x.iter().zip(z).map(|(&a, &b)| b - a).collect(),
        f: rows.f.iter().map(|&j| problem.quadratic[j].eval(x)).collect(),
        g: rows.g.iter().map(|&j| problem.ineq.rows[j].eval(x)).collect(),
        ph: h.clone(),
        nh: h.iter().map(|&v| -v).collect(),
    }
}

/// Builds the prepared instance from an already-scaled problem.
pub fn prepare<T: Real>(
    problem: Problem<T>,
    partition: ConsensusPartition,
    config: &SolverConfig<T>,
) -> Result<Instance<T>> {
    let blocks = partition.blocks;
    config.validate(blocks)?;
    let slack_bounds = slack_upper_bounds(&problem, &partition, config.slack_eps());
    let rows = partition.all_rows();
    let rho: Vec<T> = (0..blocks).map(|i| config.rho_for(i)).collect();
    let alpha = (0..blocks)
        .map(|i| PerFamily::from_fn(|f| config.alpha_for(f, i)))
        .collect();
    let f_curvature = rows
        .iter()
        .map(|r| {
            config.f_curvature_bound.unwrap_or_else(|| {
                let qs: Vec<_> = r.f.iter().map(|&j| &problem.quadratic[j]).collect();
                curvature_bound(&qs, &problem.bound)
            })
        })
        .collect();
    Ok(Instance {
        problem,
        partition,
        rows,
        slack_bounds,
        dual_upper: Vec::new(),
        rho,
        alpha,
        f_curvature,
    })
}

/// Interior starting point, slacks at their bounds, duals proportional to
/// the initial residuals. Fills `inst.dual_upper` when not configured.
pub fn init_state<T: Real>(
    inst: &mut Instance<T>,
    config: &SolverConfig<T>,
) -> Result<(GlobalState<T>, ScheduleState<T>)> {
    let p = &inst.problem;
    let z0: Vec<T> = p
        .cost
        .iter()
        .zip(&p.bound)
        .map(|(&f, &u)| {
            let s = if f < T::zero() { -T::one() } else { T::one() };
            config.lambda_z * s * u
        })
        .collect();
    let mut blocks = Vec::with_capacity(inst.blocks());
    let mut uppers = Vec::with_capacity(inst.blocks());
    for i in 0..inst.blocks() {
        let slack = inst.slack_bounds[i].clone();
        let r0 = block_residuals(p, &inst.rows[i], &z0, &z0, &slack);
        let dual = r0.map(|fam, r| {
            let lam = config.lambda_for(fam, i);
            r.iter().map(|&v| lam * v).collect::<Vec<T>>()
        });
        let upper = dual.map(|fam, mu| match config.dual_upper.get(fam) {
            Some(u) => vec![*u; mu.len()],
            None => mu.iter().map(|&m| (T::lit(10.0) * m).max(T::one())).collect(),
        });
        for fam in Family::ALL {
            for (m, u) in dual.get(fam).iter().zip(upper.get(fam)) {
                if !(*m >= T::zero() && *m <= *u) {
                    return Err(Error::DualInit {
                        family: fam,
                        block: i,
                        value: m.as_f64(),
                        upper: u.as_f64(),
                    });
                }
            }
        }
        uppers.push(upper);
        blocks.push(BlockState {
            x: z0.clone(),
            slack,
            dual,
        });
    }
    inst.dual_upper = uppers;
    let sched = ScheduleState::initial(config, inst.blocks(), inst.partition.subvectors());
    Ok((
        GlobalState {
            z: z0,
            blocks,
            k: 0,
        },
        sched,
    ))
}

/// Closed form of the initial Lagrangian when `X_i = Z` and duals are `lambda r^0`.
pub fn initial_lagrangian<T: Real>(inst: &Instance<T>, config: &SolverConfig<T>, state: &GlobalState<T>) -> T {
    let p = &inst.problem;
    let fz = p.objective(&state.z);
    (0..inst.blocks())
        .map(|i| {
            let r0 = block_residuals(p, &inst.rows[i], &state.z, &state.z, &state.blocks[i].slack);
            let half = inst.rho[i] * T::half();
            fz + Family::ALL
                .iter()
                .map(|&fam| (config.lambda_for(fam, i) + half) * norm2_sq(r0.get(fam)))
                .sum::<T>()
        })
        .sum()
}
