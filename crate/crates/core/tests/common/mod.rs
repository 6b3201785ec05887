#![allow(dead_code)]

use aggcvx::subproblem::{EqTerm, IneqTerm, QuadTerm};
use aggcvx::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> Problem<f64> {
    let path = format!("{}/../../fixtures/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"));
    format::parse_problem(&text).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vec_in(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

pub fn form(r: &mut ChaCha8Rng, n: usize) -> AffineForm<f64> {
    AffineForm::new(vec_in(r, n, -1.0, 1.0), r.gen_range(-0.5..0.5))
}

/// Convex quadratic: either `a + c^2` or a disc-like product form with
/// `b = k - a_lin` so that the two gradients are antiparallel.
pub fn convex_quadratic(r: &mut ChaCha8Rng, n: usize) -> QuadraticConstraint<f64> {
    if r.gen_bool(0.5) {
        QuadraticConstraint::sum_square(form(r, n), form(r, n))
    } else {
        let t = vec_in(r, n, -0.5, 0.5);
        let s = r.gen_range(0.5..2.0);
        let a = AffineForm::new(t.clone(), r.gen_range(0.5..1.5));
        let b = AffineForm::new(t.iter().map(|v| -s * v).collect(), r.gen_range(0.5..1.5));
        QuadraticConstraint::product(a, b, form(r, n))
    }
}

pub fn random_problem(seed: u64) -> Problem<f64> {
    let mut r = rng(seed);
    let n = r.gen_range(1..=6);
    let cost = vec_in(&mut r, n, -1.0, 1.0);
    let bound = vec_in(&mut r, n, 0.5, 2.0);
    let quad = (0..r.gen_range(0..=2)).map(|_| convex_quadratic(&mut r, n)).collect();
    let g = (0..r.gen_range(0..=3)).map(|_| form(&mut r, n)).collect();
    let h = (0..r.gen_range(0..=2)).map(|_| form(&mut r, n)).collect();
    Problem::new(cost, bound, quad, AffineMap::new(g), AffineMap::new(h)).unwrap()
}

pub fn point_in_box(r: &mut ChaCha8Rng, u: &[f64]) -> Vec<f64> {
    u.iter().map(|&b| r.gen_range(-b..=b)).collect()
}

/// Random 1-D or 2-D subblock context with convex constraint terms and a
/// proximal weight at the solver's initial level.
pub fn random_context(seed: u64, m: usize) -> SubblockContext<f64> {
    let mut r = rng(seed);
    let rho = r.gen_range(0.5..2.0);
    let quad = (0..r.gen_range(0..=2))
        .map(|_| {
            let sum = r.gen_bool(0.5);
            let a = vec_in(&mut r, m, -0.5, 0.5);
            let s = r.gen_range(0.5..2.0);
            QuadTerm {
                kind: if sum { QuadraticKind::SumSquare } else { QuadraticKind::ProductForm },
                b: if sum { vec![0.0; m] } else { a.iter().map(|v| -s * v).collect() },
                a,
                c: vec_in(&mut r, m, -0.5, 0.5),
                rest: Accum {
                    a: r.gen_range(-0.5..1.0),
                    b: if sum { 0.0 } else { r.gen_range(0.5..1.0) },
                    c: r.gen_range(-0.3..0.3),
                },
                slack: r.gen_range(0.0..0.5),
                dual: r.gen_range(0.0..1.0),
            }
        })
        .collect();
    let ineq = (0..r.gen_range(0..=2))
        .map(|_| IneqTerm {
            w: vec_in(&mut r, m, -1.0, 1.0),
            rest: r.gen_range(-0.5..0.5),
            slack: r.gen_range(0.0..1.0),
            dual: r.gen_range(0.0..1.0),
        })
        .collect();
    let eq = (0..r.gen_range(0..=1))
        .map(|_| EqTerm {
            w: vec_in(&mut r, m, -1.0, 1.0),
            rest: r.gen_range(-0.5..0.5),
            pslack: r.gen_range(0.0..1.0),
            nslack: r.gen_range(0.0..1.0),
            pdual: r.gen_range(0.0..1.0),
            ndual: r.gen_range(0.0..1.0),
        })
        .collect();
    let bound = vec_in(&mut r, m, 0.5, 1.0);
    let anchor: Vec<f64> = bound.iter().map(|&b| r.gen_range(-b..=b)).collect();
    SubblockContext {
        block: 0,
        sub: 0,
        cost: vec_in(&mut r, m, -1.0, 1.0),
        z: point_in_box(&mut r, &bound),
        bound,
        anchor,
        pxy: vec_in(&mut r, m, 0.0, 1.0),
        nxy: vec_in(&mut r, m, 0.0, 1.0),
        pxmu: vec_in(&mut r, m, 0.0, 1.0),
        nxmu: vec_in(&mut r, m, 0.0, 1.0),
        rho,
        sigma1: if r.gen_bool(0.3) { r.gen_range(0.0..0.5) } else { 0.0 },
        sigma2: 4.0 * (2.0 * rho) * (2.0 * rho),
        quad,
        ineq,
        eq,
    }
}

/// Brute-force minimiser of `ctx.objective` on a uniform grid of spacing `h`
/// over the subvector box.
pub fn grid_argmin(ctx: &SubblockContext<f64>, h: f64) -> (Vec<f64>, f64) {
    let axes: Vec<Vec<f64>> = ctx
        .bound
        .iter()
        .map(|&u| {
            let k = (2.0 * u / h).floor() as usize;
            let mut v: Vec<f64> = (0..=k).map(|i| -u + h * i as f64).collect();
            v.push(u);
            v
        })
        .collect();
    let mut best = (vec![0.0; ctx.dim()], f64::INFINITY);
    let mut x = vec![0.0; ctx.dim()];
    let mut idx = vec![0usize; ctx.dim()];
    loop {
        for (d, &i) in idx.iter().enumerate() {
            x[d] = axes[d][i];
        }
        let v = ctx.objective(&x);
        if v < best.1 {
            best = (x.clone(), v);
        }
        let mut d = 0;
        loop {
            if d == idx.len() {
                return best;
            }
            idx[d] += 1;
            if idx[d] < axes[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Central-difference gradient.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|j| {
            p[j] = x[j] + h;
            let up = f(&p);
            p[j] = x[j] - h;
            let dn = f(&p);
            p[j] = x[j];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
