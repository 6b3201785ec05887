//! The per-(block, subvector) primal update.
//!
//! A [`SubblockContext`] freezes everything the minimand depends on besides the
//! subvector itself: the Gauss-Seidel neighbours enter only through the
//! constant "rest" part of each affine accumulation.

use std::ops::Range;

use crate::config::InnerConfig;
use crate::error::{Error, Result};
use crate::family::PerFamily;
use crate::partition::BlockRows;
use crate::problem::{Accum, Problem, QuadraticKind};
use crate::scalar::{clamp, diff_norm1, diff_norm2_sq, dot, norm2_sq, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadTerm<T> {
    pub kind: QuadraticKind,
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    /// Accumulations from outside the subvector, offsets included.
    pub rest: Accum<T>,
    pub slack: T,
    pub dual: T,
}

impl<T: Real> QuadTerm<T> {
    pub fn accum(&self, x: &[T]) -> Accum<T> {
        Accum {
            a: self.rest.a + dot(&self.a, x),
            b: self.rest.b + dot(&self.b, x),
            c: self.rest.c + dot(&self.c, x),
        }
    }

    pub fn value(&self, acc: Accum<T>) -> T {
        match self.kind {
            QuadraticKind::SumSquare => acc.a + acc.c * acc.c,
            QuadraticKind::ProductForm => acc.c * acc.c - acc.a * acc.b,
        }
    }

    fn grad_into(&self, acc: Accum<T>, scale: T, out: &mut [T]) {
        let two = T::two();
        for (j, o) in out.iter_mut().enumerate() {
            let gj = match self.kind {
                QuadraticKind::SumSquare => self.a[j] + two * acc.c * self.c[j],
                QuadraticKind::ProductForm => {
                    two * acc.c * self.c[j] - acc.b * self.a[j] - acc.a * self.b[j]
                }
            };
            *o += scale * gj;
        }
    }

    fn grad(&self, acc: Accum<T>) -> Vec<T> {
        let mut g = vec![T::zero(); self.a.len()];
        self.grad_into(acc, T::one(), &mut g);
        g
    }

    /// `d^T Hess d`.
    pub fn hess_quad(&self, d: &[T]) -> T {
        let cd = dot(&self.c, d);
        match self.kind {
            QuadraticKind::SumSquare => T::two() * cd * cd,
            QuadraticKind::ProductForm => T::two() * (cd * cd - dot(&self.a, d) * dot(&self.b, d)),
        }
    }

    fn hess_vec(&self, v: &[T], scale: T, out: &mut [T]) {
        let two = T::two();
        let cv = dot(&self.c, v);
        match self.kind {
            QuadraticKind::SumSquare => {
                for (o, &c) in out.iter_mut().zip(&self.c) {
                    *o += scale * two * cv * c;
                }
            }
            QuadraticKind::ProductForm => {
                let av = dot(&self.a, v);
                let bv = dot(&self.b, v);
                for (j, o) in out.iter_mut().enumerate() {
                    *o += scale * (two * cv * self.c[j] - bv * self.a[j] - av * self.b[j]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IneqTerm<T> {
    pub w: Vec<T>,
    pub rest: T,
    pub slack: T,
    pub dual: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqTerm<T> {
    pub w: Vec<T>,
    pub rest: T,
    pub pslack: T,
    pub nslack: T,
    pub pdual: T,
    pub ndual: T,
}

/// Frozen data of the `(block, sub)` update.
#[derive(Debug, Clone, PartialEq)]
pub struct SubblockContext<T> {
    pub block: usize,
    pub sub: usize,
    pub cost: Vec<T>,
    pub bound: Vec<T>,
    /// `X^k` restricted to the subvector; the proximal centre.
    pub anchor: Vec<T>,
    pub z: Vec<T>,
    pub pxy: Vec<T>,
    pub nxy: Vec<T>,
    pub pxmu: Vec<T>,
    pub nxmu: Vec<T>,
    pub rho: T,
    pub sigma1: T,
    pub sigma2: T,
    pub quad: Vec<QuadTerm<T>>,
    pub ineq: Vec<IneqTerm<T>>,
    pub eq: Vec<EqTerm<T>>,
}

fn rest_sum<T: Real>(w: &[T], x: &[T], range: &Range<usize>, offset: T) -> T {
    let mut s = offset;
    for j in (0..range.start).chain(range.end..x.len()) {
        s += w[j] * x[j];
    }
    s
}

/// Per-block arguments shared by all subvectors of one sweep.
pub struct BlockView<'a, T> {
    pub problem: &'a Problem<T>,
    pub rows: &'a BlockRows,
    pub z: &'a [T],
    pub slack: &'a PerFamily<Vec<T>>,
    pub dual: &'a PerFamily<Vec<T>>,
    pub rho: T,
}

impl<T: Real> SubblockContext<T> {
    /// Builds the context from the composite point `x` (already-updated
    /// subvectors before `range`, previous values from `range` on).
    pub fn build(
        view: &BlockView<'_, T>,
        block: usize,
        sub: usize,
        range: Range<usize>,
        x: &[T],
        sigma1: T,
        sigma2: T,
    ) -> Self {
        let p = view.problem;
        let r = range.clone();
        let quad = view
            .rows
            .f
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let q = &p.quadratic[j];
                let product = q.kind == QuadraticKind::ProductForm;
                QuadTerm {
                    kind: q.kind,
                    a: q.a.weights[r.clone()].to_vec(),
                    b: if product {
                        q.b.weights[r.clone()].to_vec()
                    } else {
                        vec![T::zero(); r.len()]
                    },
                    c: q.c.weights[r.clone()].to_vec(),
                    rest: Accum {
                        a: rest_sum(&q.a.weights, x, &r, q.a.offset),
                        b: if product {
                            rest_sum(&q.b.weights, x, &r, q.b.offset)
                        } else {
                            T::zero()
                        },
                        c: rest_sum(&q.c.weights, x, &r, q.c.offset),
                    },
                    slack: view.slack.f[k],
                    dual: view.dual.f[k],
                }
            })
            .collect();
        let ineq = view
            .rows
            .g
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let row = &p.ineq.rows[j];
                IneqTerm {
                    w: row.weights[r.clone()].to_vec(),
                    rest: rest_sum(&row.weights, x, &r, row.offset),
                    slack: view.slack.g[k],
                    dual: view.dual.g[k],
                }
            })
            .collect();
        let eq = view
            .rows
            .h
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let row = &p.eq.rows[j];
                EqTerm {
                    w: row.weights[r.clone()].to_vec(),
                    rest: rest_sum(&row.weights, x, &r, row.offset),
                    pslack: view.slack.ph[k],
                    nslack: view.slack.nh[k],
                    pdual: view.dual.ph[k],
                    ndual: view.dual.nh[k],
                }
            })
            .collect();
        SubblockContext {
            block,
            sub,
            cost: p.cost[r.clone()].to_vec(),
            bound: p.bound[r.clone()].to_vec(),
            anchor: x[r.clone()].to_vec(),
            z: view.z[r.clone()].to_vec(),
            pxy: view.slack.px[r.clone()].to_vec(),
            nxy: view.slack.nx[r.clone()].to_vec(),
            pxmu: view.dual.px[r.clone()].to_vec(),
            nxmu: view.dual.nx[r].to_vec(),
            rho: view.rho,
            sigma1,
            sigma2,
            quad,
            ineq,
            eq,
        }
    }

    pub fn dim(&self) -> usize {
        self.anchor.len()
    }

    /// Augmented-Lagrangian terms that depend on the subvector.
    pub fn lagrangian_part(&self, x: &[T]) -> T {
        let half_rho = self.rho * T::half();
        let mut v = dot(&self.cost, x);
        for j in 0..x.len() {
            let rp = x[j] - self.z[j] + self.pxy[j];
            let rn = self.z[j] - x[j] + self.nxy[j];
            v += self.pxmu[j] * rp + self.nxmu[j] * rn + half_rho * (rp * rp + rn * rn);
        }
        for t in &self.quad {
            let r = t.value(t.accum(x)) + t.slack;
            v += t.dual * r + half_rho * r * r;
        }
        for t in &self.ineq {
            let r = t.rest + dot(&t.w, x) + t.slack;
            v += t.dual * r + half_rho * r * r;
        }
        for t in &self.eq {
            let h = t.rest + dot(&t.w, x);
            let rp = h + t.pslack;
            let rn = -h + t.nslack;
            v += t.pdual * rp + t.ndual * rn + half_rho * (rp * rp + rn * rn);
        }
        v
    }

    /// Smooth part of the minimand: Lagrangian terms plus the quadratic proximal term.
    pub fn smooth_value(&self, x: &[T]) -> T {
        self.lagrangian_part(x) + self.sigma2 * T::half() * diff_norm2_sq(x, &self.anchor)
    }

    /// The full minimand, without the box indicator.
    pub fn objective(&self, x: &[T]) -> T {
        self.smooth_value(x) + self.sigma1 * diff_norm1(x, &self.anchor)
    }

    pub fn smooth_gradient(&self, x: &[T]) -> Vec<T> {
        let rho = self.rho;
        let two = T::two();
        let mut g: Vec<T> = (0..x.len())
            .map(|j| {
                self.cost[j] + self.pxmu[j] - self.nxmu[j]
                    + rho * (two * (x[j] - self.z[j]) + self.pxy[j] - self.nxy[j])
                    + self.sigma2 * (x[j] - self.anchor[j])
            })
            .collect();
        for t in &self.quad {
            let acc = t.accum(x);
            let s = t.dual + rho * (t.value(acc) + t.slack);
            t.grad_into(acc, s, &mut g);
        }
        for t in &self.ineq {
            let s = t.dual + rho * (t.rest + dot(&t.w, x) + t.slack);
            for (o, &w) in g.iter_mut().zip(&t.w) {
                *o += s * w;
            }
        }
        for t in &self.eq {
            let h = t.rest + dot(&t.w, x);
            let s = t.pdual - t.ndual + rho * (two * h + t.pslack - t.nslack);
            for (o, &w) in g.iter_mut().zip(&t.w) {
                *o += s * w;
            }
        }
        g
    }

    /// Hessian-vector product of the smooth part at `x`.
    pub fn hess_vec(&self, x: &[T], v: &[T]) -> Vec<T> {
        let rho = self.rho;
        let mut out: Vec<T> = v.iter().map(|&vj| (self.sigma2 + T::two() * rho) * vj).collect();
        for t in &self.quad {
            let acc = t.accum(x);
            let grad = t.grad(acc);
            let gv = dot(&grad, v);
            for (o, &gj) in out.iter_mut().zip(&grad) {
                *o += rho * gv * gj;
            }
            t.hess_vec(v, t.dual + rho * (t.value(acc) + t.slack), &mut out);
        }
        for t in &self.ineq {
            let wv = rho * dot(&t.w, v);
            for (o, &w) in out.iter_mut().zip(&t.w) {
                *o += wv * w;
            }
        }
        for t in &self.eq {
            let wv = T::two() * rho * dot(&t.w, v);
            for (o, &w) in out.iter_mut().zip(&t.w) {
                *o += wv * w;
            }
        }
        out
    }

    fn curvature_estimate(&self, x: &[T]) -> T {
        let m = x.len();
        let mut v: Vec<T> = (0..m)
            .map(|j| T::one() + T::lit(0.1) * T::from_usize_lossy(j))
            .collect();
        let mut est = self.sigma2 + T::two() * self.rho;
        for _ in 0..20 {
            let nv = norm2_sq(&v).sqrt();
            if nv == T::zero() {
                break;
            }
            for e in v.iter_mut() {
                *e /= nv;
            }
            let hv = self.hess_vec(x, &v);
            let lam = norm2_sq(&hv).sqrt();
            if !lam.is_finite() {
                break;
            }
            est = est.max(lam);
            v = hv;
        }
        est
    }

    /// `(x_hat1, x_hat2)`: explicit first- and second-order estimates of the update.
    pub fn second_order_step(&self) -> (Vec<T>, Vec<T>) {
        let denom = self.sigma2 + T::two() * self.rho;
        let g1 = self.smooth_gradient(&self.anchor);
        let x1: Vec<T> = self
            .anchor
            .iter()
            .zip(&g1)
            .map(|(&a, &g)| a - g / denom)
            .collect();
        let g2 = self.smooth_gradient(&x1);
        // The consensus and proximal terms stay frozen at the anchor.
        let x2 = (0..x1.len())
            .map(|j| {
                let shift = (T::two() * self.rho + self.sigma2) * (x1[j] - self.anchor[j]);
                self.anchor[j] - (g2[j] - shift) / denom
            })
            .collect();
        (x1, x2)
    }
}

/// Soft-threshold `v` towards `center` by `weight`, then clamp to `[-h, h]`.
pub fn prox_l1_box<T: Real>(v: &[T], center: &[T], weight: T, halfwidth: &[T]) -> Vec<T> {
    v.iter()
        .zip(center)
        .zip(halfwidth)
        .map(|((&vj, &cj), &hj)| {
            let d = vj - cj;
            let shrunk = if d > weight {
                vj - weight
            } else if d < -weight {
                vj + weight
            } else {
                cj
            };
            clamp(shrunk, -hj, hj)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InnerStats<T> {
    pub iterations: usize,
    pub residual: T,
    pub converged: bool,
}

pub fn solve_subblock<T: Real>(
    ctx: &SubblockContext<T>,
    inner: &InnerConfig<T>,
) -> Result<(Vec<T>, InnerStats<T>)> {
    let fail = |reason: &str| Error::Inner {
        block: ctx.block,
        subblock: ctx.sub,
        reason: reason.to_string(),
    };
    let tol = inner.tol * (T::one() + norm2_sq(&ctx.anchor).sqrt());
    let mut x: Vec<T> = ctx
        .anchor
        .iter()
        .zip(&ctx.bound)
        .map(|(&a, &h)| clamp(a, -h, h))
        .collect();
    let mut fx = ctx.smooth_value(&x);
    if !fx.is_finite() {
        return Err(fail("non-finite objective at the anchor"));
    }
    let lip = ctx.curvature_estimate(&x);
    let mut step = T::one() / lip;
    let mut stats = InnerStats {
        iterations: 0,
        residual: T::infinity(),
        converged: false,
    };
    let eps = T::epsilon() * T::lit(16.0);
    while stats.iterations < inner.max_iter {
        stats.iterations += 1;
        let g = ctx.smooth_gradient(&x);
        let mut tries = 0;
        let (xn, fxn) = loop {
            let trial: Vec<T> = x.iter().zip(&g).map(|(&a, &b)| a - step * b).collect();
            let xn = prox_l1_box(&trial, &ctx.anchor, step * ctx.sigma1, &ctx.bound);
            let fxn = ctx.smooth_value(&xn);
            let d: Vec<T> = xn.iter().zip(&x).map(|(&a, &b)| a - b).collect();
            let model = fx + dot(&g, &d) + norm2_sq(&d) / (T::two() * step);
            if fxn.is_finite() && fxn <= model + eps * (T::one() + fx.abs()) {
                break (xn, fxn);
            }
            step *= T::half();
            tries += 1;
            if tries > 60 {
                return Err(fail("line search failed"));
            }
        };
        stats.residual = diff_norm2_sq(&xn, &x).sqrt();
        x = xn;
        fx = fxn;
        if stats.residual <= tol {
            stats.converged = true;
            break;
        }
        if tries == 0 {
            step *= T::lit(1.25);
        }
    }
    if !fx.is_finite() {
        return Err(fail("non-finite objective"));
    }
    Ok((x, stats))
}
