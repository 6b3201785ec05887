//! Problem description: linear cost, symmetric box, quadratic and affine constraints.

use std::ops::Range;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::scalar::{dot, Real};

/// `w . z + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm<T> {
    pub weights: Vec<T>,
    pub offset: T,
}

impl<T: Real> AffineForm<T> {
    pub fn new(weights: Vec<T>, offset: T) -> Self {
        AffineForm { weights, offset }
    }

    pub fn zero(n: usize) -> Self {
        AffineForm {
            weights: vec![T::zero(); n],
            offset: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn eval(&self, z: &[T]) -> T {
        dot(&self.weights, z) + self.offset
    }

    /// Contribution of the coordinates in `range`, given only that slice of `z`.
    pub fn partial(&self, range: Range<usize>, z_slice: &[T]) -> T {
        dot(&self.weights[range], z_slice)
    }

    /// `sum |w_j| u_j + |offset|`: an upper bound of `|eval(z)|` over the box.
    pub fn abs_range(&self, u: &[T]) -> T {
        self.weights
            .iter()
            .zip(u)
            .map(|(&w, &b)| w.abs() * b)
            .sum::<T>()
            + self.offset.abs()
    }

    fn is_finite(&self) -> bool {
        self.offset.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuadraticKind {
    /// `a(z) + c(z)^2`
    SumSquare,
    /// `c(z)^2 - a(z) b(z)`
    ProductForm,
}

impl QuadraticKind {
    pub fn key(self) -> &'static str {
        match self {
            QuadraticKind::SumSquare => "sum_square",
            QuadraticKind::ProductForm => "product",
        }
    }
}

/// One quadratic constraint component `F_j(z) <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConstraint<T> {
    pub kind: QuadraticKind,
    pub a: AffineForm<T>,
    /// Ignored for [`QuadraticKind::SumSquare`].
    pub b: AffineForm<T>,
    pub c: AffineForm<T>,
}

/// The three scalar accumulations a constraint value is built from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Accum<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T: Real> std::ops::Add for Accum<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Accum {
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
        }
    }
}

impl<T: Real> QuadraticConstraint<T> {
    pub fn sum_square(a: AffineForm<T>, c: AffineForm<T>) -> Self {
        let n = a.dim();
        QuadraticConstraint {
            kind: QuadraticKind::SumSquare,
            a,
            b: AffineForm::zero(n),
            c,
        }
    }

    pub fn product(a: AffineForm<T>, b: AffineForm<T>, c: AffineForm<T>) -> Self {
        QuadraticConstraint {
            kind: QuadraticKind::ProductForm,
            a,
            b,
            c,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn accumulate(&self, z: &[T]) -> Accum<T> {
        Accum {
            a: self.a.eval(z),
            b: match self.kind {
                QuadraticKind::SumSquare => T::zero(),
                QuadraticKind::ProductForm => self.b.eval(z),
            },
            c: self.c.eval(z),
        }
    }

    /// Partial accumulation over one subvector, without offsets.
    pub fn accumulate_partial(&self, range: Range<usize>, z_slice: &[T]) -> Accum<T> {
        Accum {
            a: self.a.partial(range.clone(), z_slice),
            b: match self.kind {
                QuadraticKind::SumSquare => T::zero(),
                QuadraticKind::ProductForm => self.b.partial(range.clone(), z_slice),
            },
            c: self.c.partial(range, z_slice),
        }
    }

    pub fn value_from(&self, acc: Accum<T>) -> T {
        match self.kind {
            QuadraticKind::SumSquare => acc.a + acc.c * acc.c,
            QuadraticKind::ProductForm => acc.c * acc.c - acc.a * acc.b,
        }
    }

    pub fn eval(&self, z: &[T]) -> T {
        self.value_from(self.accumulate(z))
    }

    /// Gradient restricted to `range`, at the point whose accumulations are `acc`.
    pub fn grad_range_from(&self, acc: Accum<T>, range: Range<usize>, out: &mut [T]) {
        let two = T::two();
        let aw = &self.a.weights[range.clone()];
        let cw = &self.c.weights[range.clone()];
        match self.kind {
            QuadraticKind::SumSquare => {
                for ((o, &a), &c) in out.iter_mut().zip(aw).zip(cw) {
                    *o = a + two * acc.c * c;
                }
            }
            QuadraticKind::ProductForm => {
                let bw = &self.b.weights[range];
                for (((o, &a), &b), &c) in out.iter_mut().zip(aw).zip(bw).zip(cw) {
                    *o = two * acc.c * c - acc.b * a - acc.a * b;
                }
            }
        }
    }

    pub fn grad(&self, z: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim()];
        self.grad_range_from(self.accumulate(z), 0..self.dim(), &mut g);
        g
    }

    /// `d^T Hess d` for a displacement `d` supported on `range`.
    pub fn hess_quad_range(&self, range: Range<usize>, d: &[T]) -> T {
        let two = T::two();
        let cd = dot(&self.c.weights[range.clone()], d);
        match self.kind {
            QuadraticKind::SumSquare => two * cd * cd,
            QuadraticKind::ProductForm => {
                let ad = dot(&self.a.weights[range.clone()], d);
                let bd = dot(&self.b.weights[range], d);
                two * (cd * cd - ad * bd)
            }
        }
    }

    /// Exact PSD test of the constant Hessian on the span of the weight vectors.
    ///
    /// With `V = [a_w b_w c_w]` the Hessian is `V S V^T`; it is PSD iff `S` is
    /// PSD on the range of the Gram matrix `K = V^T V`, i.e. iff `K S K` is PSD.
    pub fn psd_check(&self) -> PsdStatus {
        if self.kind == QuadraticKind::SumSquare {
            return PsdStatus {
                psd: true,
                min_eigenvalue: 0.0,
            };
        }
        let cols: [Vec<f64>; 3] = [
            self.a.weights.iter().map(|v| v.as_f64()).collect(),
            self.b.weights.iter().map(|v| v.as_f64()).collect(),
            self.c.weights.iter().map(|v| v.as_f64()).collect(),
        ];
        let k = Matrix3::from_fn(|r, s| {
            cols[r].iter().zip(&cols[s]).map(|(x, y)| x * y).sum::<f64>()
        });
        let s = Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 2.0);
        let m = k * s * k;
        let m = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m);
        let min = eig.eigenvalues.min();
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        PsdStatus {
            psd: min >= -1e-10 * scale,
            min_eigenvalue: min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdStatus {
    pub psd: bool,
    /// Smallest eigenvalue of the reduced 3x3 matrix (not of the Hessian itself).
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineMap<T> {
    pub rows: Vec<AffineForm<T>>,
}

impl<T: Real> AffineMap<T> {
    pub fn new(rows: Vec<AffineForm<T>>) -> Self {
        AffineMap { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn eval(&self, z: &[T]) -> Vec<T> {
        self.rows.iter().map(|r| r.eval(z)).collect()
    }
}

/// `minimize cost . z  s.t.  F(z) <= 0, G(z) <= 0, H(z) = 0, -u <= z <= u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    pub n: usize,
    pub cost: Vec<T>,
    pub bound: Vec<T>,
    pub quadratic: Vec<QuadraticConstraint<T>>,
    pub ineq: AffineMap<T>,
    pub eq: AffineMap<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintValues<T> {
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub h: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    /// One entry per quadratic constraint.
    pub psd: Vec<PsdStatus>,
    pub bound_positive: bool,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl<T: Real> Problem<T> {
    /// Builds a problem, checking dimensions and finiteness. Convexity is
    /// reported by [`Problem::validate`].
    pub fn new(
        cost: Vec<T>,
        bound: Vec<T>,
        quadratic: Vec<QuadraticConstraint<T>>,
        ineq: AffineMap<T>,
        eq: AffineMap<T>,
    ) -> Result<Self> {
        let n = cost.len();
        if n == 0 {
            return Err(Error::Problem("dimension must be positive".into()));
        }
        check_len("bound", n, bound.len())?;
        for (j, q) in quadratic.iter().enumerate() {
            for (name, form) in [("a", &q.a), ("b", &q.b), ("c", &q.c)] {
                check_len(&format!("quadratic[{j}].{name}"), n, form.dim())?;
                if !form.is_finite() {
                    return Err(Error::Problem(format!("quadratic[{j}].{name} not finite")));
                }
            }
        }
        for (name, map) in [("ineq", &ineq), ("eq", &eq)] {
            for (j, r) in map.rows.iter().enumerate() {
                check_len(&format!("{name}[{j}]"), n, r.dim())?;
                if !r.is_finite() {
                    return Err(Error::Problem(format!("{name}[{j}] not finite")));
                }
            }
        }
        if cost.iter().chain(&bound).any(|v| !v.is_finite()) {
            return Err(Error::Problem("cost and bound must be finite".into()));
        }
        Ok(Problem {
            n,
            cost,
            bound,
            quadratic,
            ineq,
            eq,
        })
    }

    pub fn objective(&self, z: &[T]) -> T {
        dot(&self.cost, z)
    }

    pub fn eval_constraints(&self, z: &[T]) -> Result<ConstraintValues<T>> {
        check_len("point", self.n, z.len())?;
        Ok(ConstraintValues {
            f: self.quadratic.iter().map(|q| q.eval(z)).collect(),
            g: self.ineq.eval(z),
            h: self.eq.eval(z),
        })
    }

    /// One gradient row per quadratic constraint.
    pub fn grad_f(&self, z: &[T]) -> Result<Vec<Vec<T>>> {
        check_len("point", self.n, z.len())?;
        Ok(self.quadratic.iter().map(|q| q.grad(z)).collect())
    }

    /// Largest violation of any constraint or of the box at `z`.
    pub fn max_violation(&self, z: &[T]) -> T {
        let mut v = T::zero();
        for (&zj, &uj) in z.iter().zip(&self.bound) {
            v = v.max(zj.abs() - uj);
        }
        for q in &self.quadratic {
            v = v.max(q.eval(z));
        }
        for r in &self.ineq.rows {
            v = v.max(r.eval(z));
        }
        for r in &self.eq.rows {
            v = v.max(r.eval(z).abs());
        }
        v
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport {
            bound_positive: self.bound.iter().all(|&u| u > T::zero()),
            ..Default::default()
        };
        if !report.bound_positive {
            report.issues.push("box bound u must be positive".into());
        }
        let dims_ok = self.cost.len() == self.n
            && self.bound.len() == self.n
            && self
                .quadratic
                .iter()
                .all(|q| q.a.dim() == self.n && q.b.dim() == self.n && q.c.dim() == self.n)
            && self
                .ineq
                .rows
                .iter()
                .chain(&self.eq.rows)
                .all(|r| r.dim() == self.n);
        if !dims_ok {
            report.issues.push("inconsistent dimensions".into());
            return report;
        }
        for (j, q) in self.quadratic.iter().enumerate() {
            let s = q.psd_check();
            if !s.psd {
                report.issues.push(format!(
                    "quadratic[{j}] ({}) Hessian is not positive semidefinite (reduced min eigenvalue {:.3e})",
                    q.kind.key(),
                    s.min_eigenvalue
                ));
            }
            report.psd.push(s);
        }
        report
    }

    pub fn constraint_count(&self) -> usize {
        self.quadratic.len() + self.ineq.len() + self.eq.len()
    }
}

/// Change of variables `z = center + w` mapping a general box `[l, u]` onto a
/// symmetric one.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxShift<T> {
    pub center: Vec<T>,
    /// `cost . center`, dropped from the shifted objective.
    pub cost_offset: T,
}

impl<T: Real> BoxShift<T> {
    pub fn to_original(&self, w: &[T]) -> Vec<T> {
        w.iter().zip(&self.center).map(|(&a, &b)| a + b).collect()
    }

    pub fn objective_to_original(&self, shifted: T) -> T {
        shifted + self.cost_offset
    }
}

fn shift_form<T: Real>(form: &AffineForm<T>, center: &[T]) -> AffineForm<T> {
    AffineForm {
        weights: form.weights.clone(),
        offset: form.eval(center),
    }
}

/// Builds a symmetric-box problem from data posed over `lower <= z <= upper`.
pub fn shift_to_symmetric<T: Real>(
    cost: Vec<T>,
    lower: &[T],
    upper: &[T],
    quadratic: Vec<QuadraticConstraint<T>>,
    ineq: AffineMap<T>,
    eq: AffineMap<T>,
) -> Result<(Problem<T>, BoxShift<T>)> {
    let n = cost.len();
    check_len("lower", n, lower.len())?;
    check_len("upper", n, upper.len())?;
    let center: Vec<T> = lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| (l + u) * T::half())
        .collect();
    let half: Vec<T> = lower
        .iter()
        .zip(upper)
        .map(|(&l, &u)| (u - l) * T::half())
        .collect();
    for q in &quadratic {
        check_len("quadratic", n, q.dim())?;
    }
    let quadratic = quadratic
        .iter()
        .map(|q| QuadraticConstraint {
            kind: q.kind,
            a: shift_form(&q.a, &center),
            b: shift_form(&q.b, &center),
            c: shift_form(&q.c, &center),
        })
        .collect();
    let ineq = AffineMap::new(ineq.rows.iter().map(|r| shift_form(r, &center)).collect());
    let eq = AffineMap::new(eq.rows.iter().map(|r| shift_form(r, &center)).collect());
    let cost_offset = dot(&cost, &center);
    let p = Problem::new(cost, half, quadratic, ineq, eq)?;
    Ok((
        p,
        BoxShift {
            center,
            cost_offset,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn af(w: &[f64], off: f64) -> AffineForm<f64> {
        AffineForm::new(w.to_vec(), off)
    }

    fn one_quad(q: QuadraticConstraint<f64>) -> Problem<f64> {
        let n = q.dim();
        Problem::new(
            vec![0.0; n],
            vec![1.0; n],
            vec![q],
            AffineMap::default(),
            AffineMap::default(),
        )
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let p = one_quad(QuadraticConstraint::sum_square(af(&[1., 0.], -1.), af(&[0., 1.], 0.)));
        assert_eq!(p.eval_constraints(&[1.0, 0.0]).unwrap().f, vec![0.0]);
        assert_eq!(p.eval_constraints(&[0.0, 1.0]).unwrap().f, vec![0.0]);
        let q = QuadraticConstraint::product(af(&[1., 0.], 0.), af(&[0., 1.], 0.), af(&[0., 0.], 0.5));
        assert_eq!(q.eval(&[1.0, 1.0]), -0.75);
        assert!(p.eval_constraints(&[1.0]).is_err());
    }

    #[test]
    fn grad_examples() {
        let p = one_quad(QuadraticConstraint::sum_square(af(&[1., 0.], -1.), af(&[0., 1.], 0.)));
        assert_eq!(p.grad_f(&[0.0, 0.0]).unwrap(), vec![vec![1.0, 0.0]]);
        assert_eq!(p.grad_f(&[0.0, 1.0]).unwrap(), vec![vec![1.0, 2.0]]);
    }

    // Independent check: build the dense Hessian and take its eigenvalues.
    fn dense_min_eig(q: &QuadraticConstraint<f64>) -> f64 {
        let n = q.dim();
        let h = nalgebra::DMatrix::from_fn(n, n, |r, s| {
            let (a, b, c) = (&q.a.weights, &q.b.weights, &q.c.weights);
            match q.kind {
                QuadraticKind::SumSquare => 2.0 * c[r] * c[s],
                QuadraticKind::ProductForm => 2.0 * c[r] * c[s] - a[r] * b[s] - b[r] * a[s],
            }
        });
        h.symmetric_eigenvalues().min()
    }

    #[test]
    fn psd_examples() {
        let q = QuadraticConstraint::product(af(&[1., 0.], 0.), af(&[0., 1.], 0.), af(&[0., 0.], 0.));
        assert!(dense_min_eig(&q) < -0.99);
        assert!(!q.psd_check().psd);
        let q = QuadraticConstraint::product(af(&[1., 0.], 0.), af(&[1., 0.], 0.), af(&[0., 1.], 1.));
        assert!(dense_min_eig(&q) < -1.99);
        assert!(!q.psd_check().psd);
        // a = e1 + 1/2, b = -e1 + 1/2: c^2 - ab = c^2 + z1^2 - 1/4
        let q = QuadraticConstraint::product(af(&[1., 0.], 0.5), af(&[-1., 0.], 0.5), af(&[0., 1.], 0.));
        assert!(dense_min_eig(&q) >= -1e-12);
        assert!(q.psd_check().psd);
        let q = QuadraticConstraint::sum_square(af(&[3., -1.], 2.), af(&[0.5, 1.], 0.));
        assert!(q.psd_check().psd);
    }

    #[test]
    fn psd_agrees_with_dense_on_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut disagreements = 0;
        for _ in 0..500 {
            let n = rng.gen_range(1..6);
            let mut v = || (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
            let (a, b, c) = (v(), v(), v());
            // Bias toward the convex region: b = -s a for s >= 0 half the time.
            let b = if rng.gen_bool(0.5) {
                let s: f64 = rng.gen_range(0.0..2.0);
                a.iter().map(|x| -s * x).collect()
            } else {
                b
            };
            let q = QuadraticConstraint::product(af(&a, 0.), af(&b, 0.), af(&c, 0.));
            let dense = dense_min_eig(&q);
            if dense.abs() < 1e-8 {
                continue;
            }
            if (dense >= 0.0) != q.psd_check().psd {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
    }

    #[test]
    fn validate_reports_nonconvex_and_bound() {
        let mut p = one_quad(QuadraticConstraint::product(af(&[1., 0.], 0.), af(&[0., 1.], 0.), af(&[0., 0.], 0.)));
        let r = p.validate();
        assert!(!r.is_ok());
        assert!(!r.psd[0].psd);
        p.quadratic.clear();
        p.bound[0] = 0.0;
        let r = p.validate();
        assert!(!r.bound_positive);
        assert!(!r.is_ok());
    }

    #[test]
    fn partial_accumulation_sums_to_full() {
        let q = QuadraticConstraint::product(af(&[1., 2., 3.], 0.5), af(&[-1., 0., 1.], 0.1), af(&[0.3, 0.2, 0.1], -0.2));
        let z = [0.4, -0.3, 0.9];
        let acc = q.accumulate_partial(0..1, &z[0..1]) + q.accumulate_partial(1..3, &z[1..3]);
        let full = q.accumulate(&z);
        assert!((acc.a + 0.5 - full.a).abs() < 1e-15);
        assert!((acc.b + 0.1 - full.b).abs() < 1e-15);
        assert!((acc.c - 0.2 - full.c).abs() < 1e-15);
    }

    #[test]
    fn shift_maps_constraints() {
        let g = AffineMap::new(vec![af(&[1.0, 1.0], -1.0)]);
        let (p, shift) = shift_to_symmetric(
            vec![1.0, -2.0],
            &[0.0, 1.0],
            &[2.0, 3.0],
            vec![],
            g.clone(),
            AffineMap::default(),
        )
        .unwrap();
        assert_eq!(p.bound, vec![1.0, 1.0]);
        let w = [0.25, -0.5];
        let z = shift.to_original(&w);
        assert!((p.ineq.rows[0].eval(&w) - g.rows[0].eval(&z)).abs() < 1e-15);
        let orig = 1.0 * z[0] - 2.0 * z[1];
        assert!((shift.objective_to_original(p.objective(&w)) - orig).abs() < 1e-15);
    }

    #[test]
    fn works_in_f32() {
        let q = QuadraticConstraint::<f32>::sum_square(
            AffineForm::new(vec![1.0, 0.0], -1.0),
            AffineForm::new(vec![0.0, 1.0], 0.0),
        );
        assert_eq!(q.eval(&[0.0, 1.0]), 0.0);
        assert_eq!(q.grad(&[0.0, 1.0]), vec![1.0, 2.0]);
    }
}
