//! Reference solver for desk-scale instances.
//!
//! Deliberately independent of the distributed solver: it reads the problem
//! data but evaluates constraints, gradients and objective with its own
//! routines below. Single block, `f64` only.
//!
//! Method: augmented Lagrangian with penalty continuation (x10 per stage,
//! 6 stages) and accelerated projected-gradient inner solves, started from
//! seeded random points and box corners. For `n <= 3` a hierarchical grid
//! search down to resolution 1e-3 supplies one more start.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::problem::{Problem, QuadraticKind};

/// Intended instance size; larger problems still run, only slower.
pub const MAX_DIM: usize = 8;
pub const MAX_CONSTRAINTS: usize = 20;
const RANDOM_STARTS: usize = 32;
const STAGES: usize = 6;
const OUTER_PER_STAGE: usize = 40;
const INNER_MAX: usize = 4000;
const GRID_RESOLUTION: f64 = 1e-3;
const POLISH_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleStatus {
    Optimal,
    Infeasible,
}

/// Multipliers in the convention `f + sum mu_j grad c_j` in minus the box
/// normal cone, with `mu >= 0` on inequalities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Multipliers {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub z_star: Vec<f64>,
    pub f_star: f64,
    pub multipliers: Multipliers,
    pub status: OracleStatus,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub objective: f64,
    pub objective_oracle: f64,
    pub relative_gap: f64,
    pub max_violation: f64,
    pub distance_inf: f64,
    /// Coordinates agreeing with the oracle optimum within `shared_tol`.
    pub shared: Vec<usize>,
    pub shared_tol: f64,
}

impl std::fmt::Display for GapReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "objective       {:.10e}", self.objective)?;
        writeln!(f, "oracle          {:.10e}", self.objective_oracle)?;
        writeln!(f, "relative_gap    {:.3e}", self.relative_gap)?;
        writeln!(f, "max_violation   {:.3e}", self.max_violation)?;
        writeln!(f, "distance_inf    {:.3e}", self.distance_inf)?;
        write!(f, "shared          {:?} (tol {:.1e})", self.shared, self.shared_tol)
    }
}

#[derive(Debug, Clone)]
struct Quad {
    sum_square: bool,
    a: (Vec<f64>, f64),
    b: (Vec<f64>, f64),
    c: (Vec<f64>, f64),
}

/// Flat copy of the constraint data, `ineq` first (quadratics then rows).
#[derive(Debug, Clone)]
struct Flat {
    n: usize,
    cost: Vec<f64>,
    ub: Vec<f64>,
    quad: Vec<Quad>,
    lin: Vec<(Vec<f64>, f64)>,
    eq: Vec<(Vec<f64>, f64)>,
}

fn lin_eval(w: &[f64], o: f64, z: &[f64]) -> f64 {
    w.iter().zip(z).fold(o, |s, (a, b)| s + a * b)
}

impl Flat {
    fn new(p: &Problem<f64>) -> Self {
        let quad = p
            .quadratic
            .iter()
            .map(|q| Quad {
                sum_square: q.kind == QuadraticKind::SumSquare,
                a: (q.a.weights.clone(), q.a.offset),
                b: (q.b.weights.clone(), q.b.offset),
                c: (q.c.weights.clone(), q.c.offset),
            })
            .collect();
        Flat {
            n: p.n,
            cost: p.cost.clone(),
            ub: p.bound.clone(),
            quad,
            lin: p.ineq.rows.iter().map(|r| (r.weights.clone(), r.offset)).collect(),
            eq: p.eq.rows.iter().map(|r| (r.weights.clone(), r.offset)).collect(),
        }
    }

    fn n_ineq(&self) -> usize {
        self.quad.len() + self.lin.len()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        lin_eval(&self.cost, 0.0, z)
    }

    fn ineq(&self, j: usize, z: &[f64]) -> f64 {
        if j < self.quad.len() {
            let q = &self.quad[j];
            let a = lin_eval(&q.a.0, q.a.1, z);
            let c = lin_eval(&q.c.0, q.c.1, z);
            if q.sum_square {
                a + c * c
            } else {
                c * c - a * lin_eval(&q.b.0, q.b.1, z)
            }
        } else {
            let (w, o) = &self.lin[j - self.quad.len()];
            lin_eval(w, *o, z)
        }
    }

    fn ineq_grad(&self, j: usize, z: &[f64]) -> Vec<f64> {
        if j < self.quad.len() {
            let q = &self.quad[j];
            let (aw, bw, cw) = (&q.a.0, &q.b.0, &q.c.0);
            let c = lin_eval(cw, q.c.1, z);
            if q.sum_square {
                (0..self.n).map(|k| aw[k] + 2.0 * c * cw[k]).collect()
            } else {
                let a = lin_eval(aw, q.a.1, z);
                let b = lin_eval(bw, q.b.1, z);
                (0..self.n).map(|k| 2.0 * c * cw[k] - a * bw[k] - b * aw[k]).collect()
            }
        } else {
            self.lin[j - self.quad.len()].0.clone()
        }
    }

    fn eq_val(&self, j: usize, z: &[f64]) -> f64 {
        lin_eval(&self.eq[j].0, self.eq[j].1, z)
    }

    fn violation(&self, z: &[f64]) -> f64 {
        let mut v = 0.0f64;
        for j in 0..self.n_ineq() {
            v = v.max(self.ineq(j, z));
        }
        for j in 0..self.eq.len() {
            v = v.max(self.eq_val(j, z).abs());
        }
        for (x, u) in z.iter().zip(&self.ub) {
            v = v.max(x.abs() - u);
        }
        v
    }

    fn project(&self, z: &mut [f64]) {
        for (x, u) in z.iter_mut().zip(&self.ub) {
            *x = x.clamp(-u, *u);
        }
    }

    /// PHR augmented Lagrangian value and gradient.
    fn al(&self, z: &[f64], lam: &[f64], nu: &[f64], c: f64) -> (f64, Vec<f64>) {
        let mut val = self.objective(z);
        let mut grad = self.cost.clone();
        for j in 0..self.n_ineq() {
            let s = (lam[j] + c * self.ineq(j, z)).max(0.0);
            val += (s * s - lam[j] * lam[j]) / (2.0 * c);
            if s > 0.0 {
                for (g, d) in grad.iter_mut().zip(self.ineq_grad(j, z)) {
                    *g += s * d;
                }
            }
        }
        for j in 0..self.eq.len() {
            let h = self.eq_val(j, z);
            val += nu[j] * h + 0.5 * c * h * h;
            let s = nu[j] + c * h;
            for (g, w) in grad.iter_mut().zip(&self.eq[j].0) {
                *g += s * w;
            }
        }
        (val, grad)
    }

    /// Accelerated projected gradient with backtracking and restarts.
    fn inner(&self, z0: &[f64], lam: &[f64], nu: &[f64], c: f64) -> Vec<f64> {
        let mut x = z0.to_vec();
        self.project(&mut x);
        let mut y = x.clone();
        let mut t = 1.0f64;
        let mut lip = 1.0f64;
        let (mut fx, _) = self.al(&x, lam, nu, c);
        for _ in 0..INNER_MAX {
            let (fy, gy) = self.al(&y, lam, nu, c);
            let mut next;
            loop {
                next = (0..self.n).map(|k| y[k] - gy[k] / lip).collect::<Vec<_>>();
                self.project(&mut next);
                let d: Vec<f64> = (0..self.n).map(|k| next[k] - y[k]).collect();
                let model = fy
                    + d.iter().zip(&gy).map(|(a, b)| a * b).sum::<f64>()
                    + 0.5 * lip * d.iter().map(|a| a * a).sum::<f64>();
                let (fn_, _) = self.al(&next, lam, nu, c);
                if fn_ <= model + 1e-12 * (1.0 + model.abs()) || lip > 1e16 {
                    break;
                }
                lip *= 2.0;
            }
            let (fnext, _) = self.al(&next, lam, nu, c);
            let step: f64 = (0..self.n).map(|k| (next[k] - x[k]).abs()).fold(0.0, f64::max);
            if fnext > fx {
                // Restart momentum.
                t = 1.0;
                y = x.clone();
                lip *= 2.0;
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = (0..self.n)
                .map(|k| next[k] + (t - 1.0) / t_next * (next[k] - x[k]))
                .collect();
            self.project(&mut y);
            t = t_next;
            x = next;
            fx = fnext;
            lip = (lip * 0.9).max(1e-8);
            if step <= 1e-13 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                break;
            }
        }
        x
    }

    fn local_solve(&self, z0: &[f64], tol: f64) -> Vec<f64> {
        let mut lam = vec![0.0; self.n_ineq()];
        let mut nu = vec![0.0; self.eq.len()];
        let mut z = z0.to_vec();
        let mut c = 1.0;
        for _ in 0..STAGES {
            for _ in 0..OUTER_PER_STAGE {
                z = self.inner(&z, &lam, &nu, c);
                let mut change = 0.0f64;
                for (j, l) in lam.iter_mut().enumerate() {
                    let new = (*l + c * self.ineq(j, &z)).max(0.0);
                    change = change.max((new - *l).abs());
                    *l = new;
                }
                for (j, v) in nu.iter_mut().enumerate() {
                    let h = self.eq_val(j, &z);
                    change = change.max((c * h).abs());
                    *v += c * h;
                }
                if self.violation(&z) <= 0.01 * tol && change <= tol {
                    return z;
                }
            }
            c *= 10.0;
        }
        z
    }

    fn merit(&self, z: &[f64]) -> f64 {
        let scale = 1e3 * (1.0 + self.cost.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        self.objective(z) + scale * self.violation(z).max(0.0)
    }

    /// Coarse-to-fine grid on the box, shrinking around the best merit point
    /// until the spacing reaches the target resolution.
    fn grid(&self) -> Vec<f64> {
        const PTS: usize = 21;
        let mut lo: Vec<f64> = self.ub.iter().map(|u| -u).collect();
        let mut hi = self.ub.clone();
        let mut best = vec![0.0; self.n];
        loop {
            let h: Vec<f64> = (0..self.n).map(|k| (hi[k] - lo[k]) / (PTS - 1) as f64).collect();
            let total = PTS.pow(self.n as u32);
            let mut best_m = f64::INFINITY;
            let mut z = vec![0.0; self.n];
            for idx in 0..total {
                let mut r = idx;
                for k in 0..self.n {
                    z[k] = lo[k] + h[k] * (r % PTS) as f64;
                    r /= PTS;
                }
                let m = self.merit(&z);
                if m < best_m {
                    best_m = m;
                    best.copy_from_slice(&z);
                }
            }
            if h.iter().all(|&s| s <= GRID_RESOLUTION) {
                return best;
            }
            for k in 0..self.n {
                lo[k] = (best[k] - 3.0 * h[k]).max(-self.ub[k]);
                hi[k] = (best[k] + 3.0 * h[k]).min(self.ub[k]);
            }
        }
    }

    fn starts(&self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<Vec<f64>> = (0..RANDOM_STARTS)
            .map(|_| self.ub.iter().map(|&u| rng.gen_range(-u..=u)).collect())
            .collect();
        let corners = 1usize << self.n;
        for m in 0..corners {
            out.push(
                (0..self.n)
                    .map(|k| if m >> k & 1 == 1 { self.ub[k] } else { -self.ub[k] })
                    .collect(),
            );
        }
        out.push(vec![0.0; self.n]);
        out
    }

    /// Least-squares multipliers on the active set, over the free coordinates.
    fn multipliers(&self, z: &[f64], tol: f64) -> Multipliers {
        let act_tol = tol.sqrt().max(1e-6);
        let active: Vec<usize> = (0..self.n_ineq()).filter(|&j| self.ineq(j, z) >= -act_tol).collect();
        let free: Vec<usize> = (0..self.n)
            .filter(|&k| z[k].abs() < self.ub[k] - act_tol)
            .collect();
        let cols = active.len() + self.eq.len();
        let mut out = Multipliers {
            f: vec![0.0; self.quad.len()],
            g: vec![0.0; self.lin.len()],
            h: vec![0.0; self.eq.len()],
        };
        if cols == 0 || free.is_empty() {
            return out;
        }
        let grads: Vec<Vec<f64>> = active
            .iter()
            .map(|&j| self.ineq_grad(j, z))
            .chain(self.eq.iter().map(|(w, _)| w.clone()))
            .collect();
        let a = DMatrix::from_fn(free.len(), cols, |r, c| grads[c][free[r]]);
        let b = DVector::from_fn(free.len(), |r, _| -self.cost[free[r]]);
        let Ok(sol) = a.svd(true, true).solve(&b, 1e-12) else {
            return out;
        };
        for (c, &j) in active.iter().enumerate() {
            let m = sol[c].max(0.0);
            if j < self.quad.len() {
                out.f[j] = m;
            } else {
                out.g[j - self.quad.len()] = m;
            }
        }
        for j in 0..self.eq.len() {
            out.h[j] = sol[active.len() + j];
        }
        out
    }
}

/// Best feasible point over all starts; `Infeasible` when none reaches
/// violation `<= tol`.
pub fn solve_reference(problem: &Problem<f64>, tol: f64) -> OracleSolution {
    solve_reference_seeded(problem, tol, 0)
}

pub fn solve_reference_seeded(problem: &Problem<f64>, tol: f64, seed: u64) -> OracleSolution {
    let flat = Flat::new(problem);
    let mut starts = flat.starts(seed);
    if flat.n <= 3 {
        starts.push(flat.grid());
    }
    let ptol = tol.min(POLISH_TOL);
    let cands: Vec<Vec<f64>> = starts.par_iter().map(|s| flat.local_solve(s, ptol)).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut least_violating = (f64::INFINITY, vec![0.0; flat.n]);
    for z in cands {
        let v = flat.violation(&z);
        if v < least_violating.0 {
            least_violating = (v, z.clone());
        }
        if v <= tol {
            let obj = flat.objective(&z);
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, z));
            }
        }
    }
    match best {
        Some((f_star, z_star)) => OracleSolution {
            multipliers: flat.multipliers(&z_star, tol),
            z_star,
            f_star,
            status: OracleStatus::Optimal,
            tol,
        },
        None => OracleSolution {
            f_star: flat.objective(&least_violating.1),
            z_star: least_violating.1,
            multipliers: Multipliers::default(),
            status: OracleStatus::Infeasible,
            tol,
        },
    }
}

/// Gap between a candidate solution and the oracle optimum.
pub fn compare(solution: &[f64], oracle: &OracleSolution, problem: &Problem<f64>) -> GapReport {
    let flat = Flat::new(problem);
    let objective = flat.objective(solution);
    let shared_tol = 1e-4;
    let shared = solution
        .iter()
        .zip(&oracle.z_star)
        .enumerate()
        .filter(|(_, (a, b))| (*a - *b).abs() <= shared_tol * (1.0 + b.abs()))
        .map(|(k, _)| k)
        .collect();
    GapReport {
        objective,
        objective_oracle: oracle.f_star,
        relative_gap: (objective - oracle.f_star).abs() / (1.0 + oracle.f_star.abs()),
        max_violation: flat.violation(solution).max(0.0),
        distance_inf: solution
            .iter()
            .zip(&oracle.z_star)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs())),
        shared,
        shared_tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{AffineForm, AffineMap, QuadraticConstraint};

    fn af(w: &[f64], o: f64) -> AffineForm<f64> {
        AffineForm::new(w.to_vec(), o)
    }

    #[test]
    fn lp_corner() {
        let p = Problem::new(vec![-1.0, 0.0], vec![1.0, 1.0], vec![], AffineMap::new(vec![]), AffineMap::new(vec![]))
            .unwrap();
        let s = solve_reference(&p, 1e-8);
        assert_eq!(s.status, OracleStatus::Optimal);
        assert!((s.z_star[0] - 1.0).abs() < 1e-8);
        assert!((s.f_star + 1.0).abs() < 1e-8);
    }

    #[test]
    fn parabola() {
        let q = QuadraticConstraint::sum_square(af(&[0.0, -1.0], 0.0), af(&[1.0, 0.0], 0.0));
        let p = Problem::new(vec![1.0, 0.0], vec![1.0, 1.0], vec![q], AffineMap::new(vec![]), AffineMap::new(vec![]))
            .unwrap();
        let s = solve_reference(&p, 1e-7);
        assert_eq!(s.status, OracleStatus::Optimal);
        assert!((s.z_star[0] + 1.0).abs() < 1e-4, "{:?}", s.z_star);
        assert!((s.z_star[1] - 1.0).abs() < 1e-4);
        assert!((s.f_star + 1.0).abs() < 1e-4);
    }

    #[test]
    fn infeasible_equality() {
        let p = Problem::new(
            vec![0.0],
            vec![1.0],
            vec![],
            AffineMap::new(vec![]),
            AffineMap::new(vec![af(&[1.0], -2.0)]),
        )
        .unwrap();
        assert_eq!(solve_reference(&p, 1e-6).status, OracleStatus::Infeasible);
    }

    #[test]
    fn compare_self_is_zero() {
        let p = Problem::new(vec![-1.0, 1.0], vec![1.0, 2.0], vec![], AffineMap::new(vec![]), AffineMap::new(vec![]))
            .unwrap();
        let s = solve_reference(&p, 1e-8);
        let g = compare(&s.z_star, &s, &p);
        assert_eq!(g.relative_gap, 0.0);
        assert_eq!(g.distance_inf, 0.0);
        assert_eq!(g.shared, vec![0, 1]);
        let g = compare(&[1.0, 3.0], &s, &p);
        assert!(g.max_violation > 0.0);
    }
}
