//! Lagrangian sequence, descent certificate, KKT surrogates and rate estimate.

use crate::dual::ScheduleState;
use crate::error::{Error, Result};
use crate::family::{Family, PerFamily};
use crate::problem::{Accum, Problem, QuadraticKind};
use crate::scalar::{diff_norm1, diff_norm2_sq, dot, norm2_sq, Real};
use crate::state::{block_residuals, BlockState, GlobalState, Instance};

/// The three groups the Lagrangian is made of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianParts<T> {
    pub cost: T,
    pub pairing: T,
    pub penalty: T,
}

impl<T: Real> LagrangianParts<T> {
    pub fn total(&self) -> T {
        self.cost + self.pairing + self.penalty
    }
}

pub fn lagrangian_parts<T: Real>(inst: &Instance<T>, state: &GlobalState<T>) -> LagrangianParts<T> {
    let p = &inst.problem;
    let mut parts = LagrangianParts {
        cost: T::zero(),
        pairing: T::zero(),
        penalty: T::zero(),
    };
    for (i, b) in state.blocks.iter().enumerate() {
        parts.cost += p.objective(&b.x);
        let r = block_residuals(p, &inst.rows[i], &b.x, &state.z, &b.slack);
        for fam in Family::ALL {
            parts.pairing += dot(b.dual.get(fam), r.get(fam));
            parts.penalty += inst.rho[i] * T::half() * norm2_sq(r.get(fam));
        }
    }
    parts
}

/// Sum over blocks of the augmented Lagrangian.
pub fn lagrangian_value<T: Real>(inst: &Instance<T>, state: &GlobalState<T>) -> T {
    lagrangian_parts(inst, state).total()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CertificateRecord<T> {
    pub l_k: T,
    pub l_k1: T,
    pub d: T,
    pub p: T,
    pub sigma1_l1: T,
    pub u_sum: T,
    pub j: T,
    pub lemma1_gap: T,
}

/// Nonnegative pieces of `P^k`, kept apart so each can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PTerms<T> {
    pub x_prox: T,
    pub z_prox: T,
    pub slack_prox: T,
    pub f_cross: T,
    pub g_cross: T,
    pub h_cross: T,
}

impl<T: Real> PTerms<T> {
    pub fn total(&self) -> T {
        self.x_prox + self.z_prox + self.slack_prox + self.f_cross + self.g_cross + self.h_cross
    }

    pub fn all_nonnegative(&self) -> bool {
        [self.x_prox, self.z_prox, self.slack_prox, self.f_cross, self.g_cross, self.h_cross]
            .iter()
            .all(|&v| v >= T::zero())
    }
}

fn composite<T: Real>(old: &[T], new: &[T], upto: usize) -> Vec<T> {
    new[..upto].iter().chain(&old[upto..]).copied().collect()
}

fn f_value_accum<T: Real>(p: &Problem<T>, j: usize, x: &[T]) -> (T, Accum<T>) {
    let q = &p.quadratic[j];
    let acc = q.accumulate(x);
    (q.value_from(acc), acc)
}

fn sub_hess_quad<T: Real>(p: &Problem<T>, j: usize, range: std::ops::Range<usize>, d: &[T]) -> T {
    let q = &p.quadratic[j];
    let cd = dot(&q.c.weights[range.clone()], d);
    match q.kind {
        QuadraticKind::SumSquare => T::two() * cd * cd,
        QuadraticKind::ProductForm => {
            let ad = dot(&q.a.weights[range.clone()], d);
            let bd = dot(&q.b.weights[range], d);
            T::two() * (cd * cd - ad * bd)
        }
    }
}

/// Certificate quantities of the transition `state_k -> state_k1` made with
/// the proximal parameters `sched`.
pub fn certificate<T: Real>(
    inst: &Instance<T>,
    state_k: &GlobalState<T>,
    state_k1: &GlobalState<T>,
    sched: &ScheduleState<T>,
) -> Result<(CertificateRecord<T>, PTerms<T>)> {
    let nb = inst.blocks();
    let m = inst.partition.subvectors();
    if state_k.blocks.len() != nb || state_k1.blocks.len() != nb {
        return Err(Error::MissingIntermediate("both states for every block"));
    }
    if sched.sigma2.len() != nb
        || sched.sigma1.len() != nb
        || sched.gamma.len() != nb
        || sched.sigma2.iter().chain(&sched.sigma1).any(|v| v.len() != m)
    {
        return Err(Error::MissingIntermediate("the proximal parameters of every subvector"));
    }
    let p = &inst.problem;
    let mut pt = PTerms::default();
    let mut d = T::zero();
    let mut s1 = T::zero();
    let mut u_sum = T::zero();
    let dz2 = diff_norm2_sq(&state_k1.z, &state_k.z);
    for i in 0..nb {
        let (bk, bk1): (&BlockState<T>, &BlockState<T>) = (&state_k.blocks[i], &state_k1.blocks[i]);
        let rho = inst.rho[i];
        let rows = &inst.rows[i];
        let r1 = block_residuals(p, rows, &bk1.x, &state_k1.z, &bk1.slack);
        for fam in Family::ALL {
            d += bk
                .dual
                .get(fam)
                .iter()
                .zip(bk1.dual.get(fam))
                .zip(r1.get(fam))
                .map(|((&a, &b), &r)| (a - b) * r)
                .sum::<T>();
            let g = *sched.gamma[i].get(fam);
            pt.slack_prox += (g + rho * T::half()) * diff_norm2_sq(bk1.slack.get(fam), bk.slack.get(fam));
        }
        pt.z_prox += (sched.tau + rho) * dz2;
        for (l, range) in inst.partition.ranges.iter().enumerate() {
            let before = composite(&bk.x, &bk1.x, range.start);
            let after = composite(&bk.x, &bk1.x, range.end);
            let delta: Vec<T> = (range.clone()).map(|j| bk.x[j] - bk1.x[j]).collect();
            let dx2 = norm2_sq(&delta);
            pt.x_prox += (sched.sigma2[i][l] + rho) * dx2;
            s1 += sched.sigma1[i][l] * diff_norm1(&bk.x[range.clone()], &bk1.x[range.clone()]);
            for (k, &j) in rows.f.iter().enumerate() {
                let (f_after, _) = f_value_accum(p, j, &after);
                let (f_before, _) = f_value_accum(p, j, &before);
                pt.f_cross += rho * T::half() * (f_after - f_before) * (f_after - f_before);
                let left = bk.dual.f[k] + rho * (f_after + bk.slack.f[k]);
                u_sum += left * T::half() * sub_hess_quad(p, j, range.clone(), &delta);
            }
            for &j in &rows.g {
                let gd = dot(&p.ineq.rows[j].weights[range.clone()], &delta);
                pt.g_cross += rho * T::half() * gd * gd;
            }
            for &j in &rows.h {
                let hd = dot(&p.eq.rows[j].weights[range.clone()], &delta);
                pt.h_cross += rho * hd * hd;
            }
        }
    }
    let l_k = lagrangian_value(inst, state_k);
    let l_k1 = lagrangian_value(inst, state_k1);
    let p_total = pt.total();
    let j = d + p_total + s1 + u_sum;
    Ok((
        CertificateRecord {
            l_k,
            l_k1,
            d,
            p: p_total,
            sigma1_l1: s1,
            u_sum,
            j,
            lemma1_gap: l_k - l_k1 - j,
        },
        pt,
    ))
}

/// `sum alpha_eff r^2`: the dual term after substituting the update rule.
pub fn dual_decrease_substituted<T: Real>(
    inst: &Instance<T>,
    state_k1: &GlobalState<T>,
    alpha_eff: &[PerFamily<Vec<T>>],
) -> T {
    let p = &inst.problem;
    let mut d = T::zero();
    for (i, b) in state_k1.blocks.iter().enumerate() {
        let r = block_residuals(p, &inst.rows[i], &b.x, &state_k1.z, &b.slack);
        for fam in Family::ALL {
            d += alpha_eff[i]
                .get(fam)
                .iter()
                .zip(r.get(fam))
                .map(|(&a, &v)| a * v * v)
                .sum::<T>();
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktReport<T> {
    /// `max_i |X_i - Z|_inf`.
    pub consensus_gap: T,
    pub f_violation: T,
    pub g_violation: T,
    pub h_violation: T,
    pub f_complementarity: T,
    pub g_complementarity: T,
    /// Projected-gradient residual of the block-copy stationarity, max over blocks.
    pub x_stationarity: T,
    /// Projected residual of the common-variable stationarity.
    pub z_stationarity: T,
}

impl<T: Real> KktReport<T> {
    pub fn stationarity(&self) -> T {
        self.x_stationarity.max(self.z_stationarity)
    }

    pub fn max(&self) -> T {
        [
            self.consensus_gap,
            self.f_violation,
            self.g_violation,
            self.h_violation,
            self.f_complementarity,
            self.g_complementarity,
            self.x_stationarity,
            self.z_stationarity,
        ]
        .iter()
        .fold(T::zero(), |m, &v| m.max(v))
    }
}

fn projected_residual<T: Real>(x: &[T], g: &[T], u: &[T]) -> T {
    x.iter()
        .zip(g)
        .zip(u)
        .map(|((&xj, &gj), &uj)| {
            let p = crate::scalar::clamp(xj - gj, -uj, uj);
            (p - xj).abs()
        })
        .fold(T::zero(), |m, v| m.max(v))
}

pub fn kkt_residual<T: Real>(inst: &Instance<T>, state: &GlobalState<T>) -> KktReport<T> {
    let p = &inst.problem;
    let n = p.n;
    let z = &state.z;
    let mut rep = KktReport::<T>::default();
    let mut zgrad = vec![T::zero(); n];
    for (i, b) in state.blocks.iter().enumerate() {
        let rows = &inst.rows[i];
        for j in 0..n {
            rep.consensus_gap = rep.consensus_gap.max((b.x[j] - z[j]).abs());
        }
        let mut g: Vec<T> = (0..n)
            .map(|j| p.cost[j] + b.dual.px[j] - b.dual.nx[j])
            .collect();
        for j in 0..n {
            zgrad[j] += b.dual.nx[j] - b.dual.px[j];
        }
        for (k, &r) in rows.f.iter().enumerate() {
            let q = &p.quadratic[r];
            let gr = q.grad(&b.x);
            for j in 0..n {
                g[j] += b.dual.f[k] * gr[j];
            }
            rep.f_complementarity += b.dual.f[k] * q.eval(z);
        }
        for (k, &r) in rows.g.iter().enumerate() {
            let row = &p.ineq.rows[r];
            for j in 0..n {
                g[j] += b.dual.g[k] * row.weights[j];
            }
            rep.g_complementarity += b.dual.g[k] * row.eval(z);
        }
        for (k, &r) in rows.h.iter().enumerate() {
            let row = &p.eq.rows[r];
            let net = b.dual.ph[k] - b.dual.nh[k];
            for j in 0..n {
                g[j] += net * row.weights[j];
            }
        }
        rep.x_stationarity = rep.x_stationarity.max(projected_residual(&b.x, &g, &p.bound));
    }
    rep.f_complementarity = rep.f_complementarity.abs();
    rep.g_complementarity = rep.g_complementarity.abs();
    rep.z_stationarity = projected_residual(z, &zgrad, &p.bound);
    for q in &p.quadratic {
        rep.f_violation = rep.f_violation.max(q.eval(z).max(T::zero()));
    }
    for r in &p.ineq.rows {
        rep.g_violation = rep.g_violation.max(r.eval(z).max(T::zero()));
    }
    for r in &p.eq.rows {
        rep.h_violation = rep.h_violation.max(r.eval(z).abs());
    }
    rep
}

/// Consensus state that realises the single-problem KKT pair `(z, multipliers)`:
/// block duals are `N` times the problem multipliers and the net consensus
/// duals redistribute the per-block imbalance.
pub fn state_from_multipliers<T: Real>(
    inst: &Instance<T>,
    z: &[T],
    mult_f: &[T],
    mult_g: &[T],
    mult_h: &[T],
) -> GlobalState<T> {
    let p = &inst.problem;
    let n = p.n;
    let nb = T::from_usize_lossy(inst.blocks());
    // Normal-cone component: minus the full Lagrangian gradient.
    let mut full: Vec<T> = p.cost.clone();
    for (q, &m) in p.quadratic.iter().zip(mult_f) {
        for (o, g) in full.iter_mut().zip(q.grad(z)) {
            *o += m * g;
        }
    }
    for (r, &m) in p.ineq.rows.iter().zip(mult_g) {
        for (o, &w) in full.iter_mut().zip(&r.weights) {
            *o += m * w;
        }
    }
    for (r, &m) in p.eq.rows.iter().zip(mult_h) {
        for (o, &w) in full.iter_mut().zip(&r.weights) {
            *o += m * w;
        }
    }
    let blocks = (0..inst.blocks())
        .map(|i| {
            let rows = &inst.rows[i];
            let mut own: Vec<T> = p.cost.clone();
            for &r in &rows.f {
                for (o, g) in own.iter_mut().zip(p.quadratic[r].grad(z)) {
                    *o += nb * mult_f[r] * g;
                }
            }
            for &r in &rows.g {
                for (o, &w) in own.iter_mut().zip(&p.ineq.rows[r].weights) {
                    *o += nb * mult_g[r] * w;
                }
            }
            for &r in &rows.h {
                for (o, &w) in own.iter_mut().zip(&p.eq.rows[r].weights) {
                    *o += nb * mult_h[r] * w;
                }
            }
            // own + net + normal = 0 with normal = -full.
            let net: Vec<T> = (0..n).map(|j| full[j] - own[j]).collect();
            let hvals: Vec<T> = rows.h.iter().map(|&r| p.eq.rows[r].eval(z)).collect();
            let slack = PerFamily {
                px: vec![T::zero(); n],
                nx: vec![T::zero(); n],
                f: rows.f.iter().map(|&r| (-p.quadratic[r].eval(z)).max(T::zero())).collect(),
                g: rows.g.iter().map(|&r| (-p.ineq.rows[r].eval(z)).max(T::zero())).collect(),
                ph: hvals.iter().map(|&h| (-h).max(T::zero())).collect(),
                nh: hvals.iter().map(|&h| h.max(T::zero())).collect(),
            };
            let dual = PerFamily {
                px: net.iter().map(|&v| v.max(T::zero())).collect(),
                nx: net.iter().map(|&v| (-v).max(T::zero())).collect(),
                f: rows.f.iter().map(|&r| nb * mult_f[r]).collect(),
                g: rows.g.iter().map(|&r| nb * mult_g[r]).collect(),
                ph: rows.h.iter().map(|&r| (nb * mult_h[r]).max(T::zero())).collect(),
                nh: rows.h.iter().map(|&r| (-nb * mult_h[r]).max(T::zero())).collect(),
            };
            BlockState {
                x: z.to_vec(),
                slack,
                dual,
            }
        })
        .collect();
    GlobalState {
        z: z.to_vec(),
        blocks,
        k: 0,
    }
}

/// Tail-window least-squares slope of `log r` against `log k`, and the median
/// of `k r^2` over the same window.
pub fn rate_estimate_series(ks: &[f64], rs: &[f64], window: f64) -> Result<(f64, f64)> {
    const MIN: usize = 50;
    if ks.len() < MIN {
        return Err(Error::TraceTooShort {
            needed: MIN,
            got: ks.len(),
        });
    }
    let w = ((ks.len() as f64 * window).round() as usize).clamp(2, ks.len());
    let start = ks.len() - w;
    Ok((
        loglog_slope(&ks[start..], &rs[start..]),
        median_k_r2(&ks[start..], &rs[start..]),
    ))
}

pub fn loglog_slope(ks: &[f64], rs: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(rs)
        .filter(|(k, r)| **k > 0.0 && **r > 0.0)
        .map(|(k, r)| (k.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn median_k_r2(ks: &[f64], rs: &[f64]) -> f64 {
    let mut v: Vec<f64> = ks.iter().zip(rs).map(|(k, r)| k * r * r).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn rate_estimate<T: Real>(traces: &[crate::runtime::IterationTrace<T>], window: f64) -> Result<(f64, f64)> {
    let ks: Vec<f64> = traces.iter().map(|t| (t.k + 1) as f64).collect();
    let rs: Vec<f64> = traces.iter().map(|t| t.consensus.as_f64()).collect();
    rate_estimate_series(&ks, &rs, window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_rates() {
        let ks: Vec<f64> = (1..=400).map(|k| k as f64).collect();
        let rs: Vec<f64> = ks.iter().map(|k| k.powf(-0.5)).collect();
        let (s, m) = rate_estimate_series(&ks, &rs, 0.5).unwrap();
        assert!((s + 0.5).abs() < 1e-6);
        assert!((m - 1.0).abs() < 1e-9);
        let rs: Vec<f64> = ks.iter().map(|k| 1.0 / k).collect();
        let (s, _) = rate_estimate_series(&ks, &rs, 0.5).unwrap();
        assert!((s + 1.0).abs() < 1e-6);
        assert!(rate_estimate_series(&ks[..10], &rs[..10], 0.5).is_err());
    }
}
