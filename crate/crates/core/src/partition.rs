//! Consensus-block / subvector decomposition, slack bounds and problem scaling.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::family::PerFamily;
use crate::problem::{AffineForm, Problem, QuadraticConstraint, QuadraticKind};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    RoundRobin,
    Contiguous,
}

impl Strategy {
    pub fn key(self) -> &'static str {
        match self {
            Strategy::RoundRobin => "round_robin",
            Strategy::Contiguous => "contiguous",
        }
    }

    pub fn from_key(s: &str) -> Option<Self> {
        match s {
            "round_robin" => Some(Strategy::RoundRobin),
            "contiguous" => Some(Strategy::Contiguous),
            _ => None,
        }
    }
}

/// Constraint rows owned by one block, as indices into the problem lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlockRows {
    pub f: Vec<usize>,
    pub g: Vec<usize>,
    pub h: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusPartition {
    pub blocks: usize,
    pub ranges: Vec<Range<usize>>,
    pub f_assign: Vec<usize>,
    pub g_assign: Vec<usize>,
    pub h_assign: Vec<usize>,
}

fn balanced_ranges(n: usize, m: usize) -> Vec<Range<usize>> {
    let base = n / m;
    let extra = n % m;
    let mut start = 0;
    (0..m)
        .map(|l| {
            let len = base + usize::from(l < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn assign(rows: usize, blocks: usize, strategy: Strategy) -> Vec<usize> {
    match strategy {
        Strategy::RoundRobin => (0..rows).map(|j| j % blocks).collect(),
        Strategy::Contiguous => balanced_ranges(rows, blocks.min(rows.max(1)))
            .into_iter()
            .enumerate()
            .flat_map(|(i, r)| r.map(move |_| i))
            .collect(),
    }
}

impl ConsensusPartition {
    pub fn build<T: Real>(
        problem: &Problem<T>,
        blocks: usize,
        subvectors: usize,
        strategy: Strategy,
    ) -> Result<Self> {
        if blocks == 0 {
            return Err(Error::Partition("need at least one consensus block".into()));
        }
        if subvectors == 0 || subvectors > problem.n {
            return Err(Error::Partition(format!(
                "subvector count {subvectors} must lie in 1..={}",
                problem.n
            )));
        }
        Ok(ConsensusPartition {
            blocks,
            ranges: balanced_ranges(problem.n, subvectors),
            f_assign: assign(problem.quadratic.len(), blocks, strategy),
            g_assign: assign(problem.ineq.len(), blocks, strategy),
            h_assign: assign(problem.eq.len(), blocks, strategy),
        })
    }

    pub fn subvectors(&self) -> usize {
        self.ranges.len()
    }

    pub fn n(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn rows(&self, block: usize) -> BlockRows {
        let pick = |assign: &[usize]| {
            assign
                .iter()
                .enumerate()
                .filter(|(_, &b)| b == block)
                .map(|(j, _)| j)
                .collect()
        };
        BlockRows {
            f: pick(&self.f_assign),
            g: pick(&self.g_assign),
            h: pick(&self.h_assign),
        }
    }

    pub fn all_rows(&self) -> Vec<BlockRows> {
        (0..self.blocks).map(|i| self.rows(i)).collect()
    }
}

/// Per-block slack upper bounds, one vector per family.
pub type SlackBounds<T> = PerFamily<Vec<T>>;

/// Bound on `|F_j|` over the box.
pub fn quadratic_range<T: Real>(q: &QuadraticConstraint<T>, u: &[T]) -> T {
    let c = q.c.abs_range(u);
    match q.kind {
        QuadraticKind::SumSquare => q.a.abs_range(u) + c * c,
        QuadraticKind::ProductForm => q.a.abs_range(u) * q.b.abs_range(u) + c * c,
    }
}

pub fn slack_upper_bounds<T: Real>(
    problem: &Problem<T>,
    partition: &ConsensusPartition,
    eps: T,
) -> Vec<SlackBounds<T>> {
    let u = &problem.bound;
    let px: Vec<T> = u.iter().map(|&b| T::two() * b + eps).collect();
    (0..partition.blocks)
        .map(|i| {
            let rows = partition.rows(i);
            let h: Vec<T> = rows
                .h
                .iter()
                .map(|&j| problem.eq.rows[j].abs_range(u) + eps)
                .collect();
            SlackBounds {
                px: px.clone(),
                nx: px.clone(),
                f: rows
                    .f
                    .iter()
                    .map(|&j| quadratic_range(&problem.quadratic[j], u) + eps)
                    .collect(),
                g: rows
                    .g
                    .iter()
                    .map(|&j| problem.ineq.rows[j].abs_range(u) + eps)
                    .collect(),
                ph: h.clone(),
                nh: h,
            }
        })
        .collect()
}

/// Factors applied by [`scale_problem`]; every constraint row is multiplied by
/// its factor, the cost by `cost`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRecord<T> {
    pub cost: T,
    pub f: Vec<T>,
    pub g: Vec<T>,
    pub h: Vec<T>,
    /// Rows whose range is zero and were left unscaled, as `(family, index)`.
    pub zero_range: Vec<(&'static str, usize)>,
}

impl<T: Real> ScalingRecord<T> {
    pub fn identity(p: &Problem<T>) -> Self {
        ScalingRecord {
            cost: T::one(),
            f: vec![T::one(); p.quadratic.len()],
            g: vec![T::one(); p.ineq.len()],
            h: vec![T::one(); p.eq.len()],
            zero_range: Vec::new(),
        }
    }

    pub fn is_identity(&self) -> bool {
        [self.cost]
            .iter()
            .chain(&self.f)
            .chain(&self.g)
            .chain(&self.h)
            .all(|&s| s == T::one())
    }

    pub fn unscale_objective(&self, scaled: T) -> T {
        scaled / self.cost
    }

    /// Multiplier of a scaled row mapped back to the original row.
    pub fn unscale_multiplier(&self, family: &str, row: usize, mu: T) -> T {
        let s = match family {
            "f" => self.f[row],
            "g" => self.g[row],
            "h" => self.h[row],
            _ => T::one(),
        };
        mu * s / self.cost
    }
}

fn scaled_form<T: Real>(f: &AffineForm<T>, s: T) -> AffineForm<T> {
    AffineForm {
        weights: f.weights.iter().map(|&w| w * s).collect(),
        offset: f.offset * s,
    }
}

fn snap<T: Real>(s: T) -> T {
    if (s - T::one()).abs() <= T::lit(1e-12) {
        T::one()
    } else {
        s
    }
}

/// Rescales rows so affine ranges equal `target`, quadratic ranges `target / 2`
/// and `|cost|_inf |u|_inf = target`.
pub fn scale_problem<T: Real>(problem: &Problem<T>, target: T) -> (Problem<T>, ScalingRecord<T>) {
    let u = &problem.bound;
    let mut rec = ScalingRecord::identity(problem);
    let mut out = problem.clone();

    let cost_range = problem.cost.iter().fold(T::zero(), |m, c| m.max(c.abs()))
        * u.iter().fold(T::zero(), |m, b| m.max(*b));
    if cost_range > T::zero() {
        rec.cost = snap(target / cost_range);
        out.cost = problem.cost.iter().map(|&c| c * rec.cost).collect();
    }

    for (j, row) in problem.ineq.rows.iter().enumerate() {
        let r = row.abs_range(u);
        if r > T::zero() {
            rec.g[j] = snap(target / r);
            out.ineq.rows[j] = scaled_form(row, rec.g[j]);
        } else {
            rec.zero_range.push(("g", j));
        }
    }
    for (j, row) in problem.eq.rows.iter().enumerate() {
        let r = row.abs_range(u);
        if r > T::zero() {
            rec.h[j] = snap(target / r);
            out.eq.rows[j] = scaled_form(row, rec.h[j]);
        } else {
            rec.zero_range.push(("h", j));
        }
    }
    for (j, q) in problem.quadratic.iter().enumerate() {
        let r = quadratic_range(q, u);
        if r > T::zero() {
            let s = snap(target * T::half() / r);
            rec.f[j] = s;
            let root = s.sqrt();
            out.quadratic[j] = match q.kind {
                QuadraticKind::SumSquare => QuadraticConstraint {
                    kind: q.kind,
                    a: scaled_form(&q.a, s),
                    b: q.b.clone(),
                    c: scaled_form(&q.c, root),
                },
                QuadraticKind::ProductForm => QuadraticConstraint {
                    kind: q.kind,
                    a: scaled_form(&q.a, root),
                    b: scaled_form(&q.b, root),
                    c: scaled_form(&q.c, root),
                },
            };
        } else {
            rec.zero_range.push(("f", j));
        }
    }
    (out, rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::AffineMap;

    fn af(w: &[f64], off: f64) -> AffineForm<f64> {
        AffineForm::new(w.to_vec(), off)
    }

    fn problem(n: usize, g_rows: usize) -> Problem<f64> {
        Problem::new(
            vec![1.0; n],
            vec![1.0; n],
            vec![],
            AffineMap::new((0..g_rows).map(|_| af(&vec![1.0; n], 0.0)).collect()),
            AffineMap::default(),
        )
        .unwrap()
    }

    #[test]
    fn balanced_ranges_examples() {
        let p = problem(4, 0);
        let part = ConsensusPartition::build(&p, 1, 2, Strategy::RoundRobin).unwrap();
        assert_eq!(part.ranges, vec![0..2, 2..4]);
        let p = problem(5, 0);
        let part = ConsensusPartition::build(&p, 1, 2, Strategy::RoundRobin).unwrap();
        assert_eq!(part.ranges, vec![0..3, 3..5]);
        assert!(ConsensusPartition::build(&p, 1, 6, Strategy::RoundRobin).is_err());
        assert!(ConsensusPartition::build(&p, 0, 1, Strategy::RoundRobin).is_err());
    }

    #[test]
    fn round_robin_rows() {
        let p = problem(2, 6);
        let part = ConsensusPartition::build(&p, 3, 1, Strategy::RoundRobin).unwrap();
        assert_eq!(part.rows(0).g, vec![0, 3]);
        assert_eq!(part.rows(1).g, vec![1, 4]);
        assert_eq!(part.rows(2).g, vec![2, 5]);
        let part = ConsensusPartition::build(&p, 3, 1, Strategy::Contiguous).unwrap();
        assert_eq!(part.rows(0).g, vec![0, 1]);
        assert_eq!(part.rows(2).g, vec![4, 5]);
    }

    #[test]
    fn slack_bound_examples() {
        let q = QuadraticConstraint::sum_square(af(&[1., 0.], -1.), af(&[0., 1.], 0.));
        let p = Problem::new(
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![q.clone()],
            AffineMap::default(),
            AffineMap::new(vec![af(&[1., -2.], 0.5)]),
        )
        .unwrap();
        let part = ConsensusPartition::build(&p, 1, 1, Strategy::RoundRobin).unwrap();
        let b = &slack_upper_bounds(&p, &part, 0.0)[0];
        assert_eq!(b.px, vec![2.0, 2.0]);
        assert_eq!(b.nx, b.px);
        assert_eq!(b.ph, vec![3.5]);
        assert_eq!(b.nh, vec![3.5]);
        // Corner enumeration: max |a| = 2 and max |c| = 1 over the box.
        let mut amax: f64 = 0.0;
        let mut cmax: f64 = 0.0;
        for s0 in [-1.0, 1.0] {
            for s1 in [-1.0, 1.0] {
                amax = amax.max(q.a.eval(&[s0, s1]).abs());
                cmax = cmax.max(q.c.eval(&[s0, s1]).abs());
            }
        }
        assert_eq!(b.f, vec![amax + cmax * cmax]);
        assert_eq!(b.f, vec![3.0]);
    }

    #[test]
    fn scaling_examples() {
        let p = Problem::new(
            vec![2.0, 0.0],
            vec![1.0, 1.0],
            vec![],
            AffineMap::default(),
            AffineMap::new(vec![af(&[2.0, 1.0], 1.0)]),
        )
        .unwrap();
        let (s, rec) = scale_problem(&p, 1.0);
        assert_eq!(rec.h, vec![0.25]);
        assert_eq!(rec.cost, 0.5);
        let (s2, rec2) = scale_problem(&s, 1.0);
        assert!(rec2.is_identity());
        assert_eq!(s2, s);
        let z = [0.3, -0.7];
        let orig = p.objective(&z);
        let back = rec.unscale_objective(s.objective(&z));
        assert!(((back - orig) / orig).abs() <= 1e-12);
    }

    #[test]
    fn zero_range_rows_flagged() {
        let p = Problem::new(
            vec![1.0],
            vec![1.0],
            vec![],
            AffineMap::new(vec![af(&[0.0], 0.0)]),
            AffineMap::default(),
        )
        .unwrap();
        let (_, rec) = scale_problem(&p, 1.0);
        assert_eq!(rec.zero_range, vec![("g", 0)]);
        assert_eq!(rec.g, vec![1.0]);
    }

    #[test]
    fn quadratic_scaling_hits_half_target() {
        let q = QuadraticConstraint::product(af(&[1., 0.], 0.5), af(&[-1., 0.], 0.5), af(&[0., 2.], 0.));
        let p = Problem::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![q], AffineMap::default(), AffineMap::default()).unwrap();
        let (s, rec) = scale_problem(&p, 1.0);
        assert!((quadratic_range(&s.quadratic[0], &s.bound) - 0.5).abs() < 1e-12);
        let z = [0.2, -0.4];
        assert!((s.quadratic[0].eval(&z) - rec.f[0] * p.quadratic[0].eval(&z)).abs() < 1e-12);
    }
}
