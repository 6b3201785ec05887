//! Iterate types and the prepared per-block data they are checked against.

use crate::family::{Family, PerFamily};
use crate::partition::{BlockRows, ConsensusPartition, SlackBounds};
use crate::problem::Problem;
use crate::scalar::Real;

/// Primal copy, slacks and duals of one consensus block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState<T> {
    pub x: Vec<T>,
    pub slack: PerFamily<Vec<T>>,
    pub dual: PerFamily<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState<T> {
    pub z: Vec<T>,
    pub blocks: Vec<BlockState<T>>,
    pub k: usize,
}

/// Immutable data the iteration runs against.
#[derive(Debug, Clone)]
pub struct Instance<T> {
    pub problem: Problem<T>,
    pub partition: ConsensusPartition,
    pub rows: Vec<BlockRows>,
    pub slack_bounds: Vec<SlackBounds<T>>,
    pub dual_upper: Vec<PerFamily<Vec<T>>>,
    pub rho: Vec<T>,
    pub alpha: Vec<PerFamily<T>>,
    /// Per-block curvature constant of the quadratic constraints.
    pub f_curvature: Vec<T>,
}

impl<T: Real> Instance<T> {
    pub fn blocks(&self) -> usize {
        self.partition.blocks
    }
}

/// Extended-equality residuals of block `i` at `(x, z, slack)`.
pub fn block_residuals<T: Real>(
    problem: &Problem<T>,
    rows: &BlockRows,
    x: &[T],
    z: &[T],
    slack: &PerFamily<Vec<T>>,
) -> PerFamily<Vec<T>> {
    let h: Vec<T> = rows.h.iter().map(|&j| problem.eq.rows[j].eval(x)).collect();
    PerFamily {
        px: x
            .iter()
            .zip(z)
            .zip(&slack.px)
            .map(|((&a, &b), &y)| a - b + y)
            .collect(),
        nx: x
            .iter()
            .zip(z)
            .zip(&slack.nx)
            .map(|((&a, &b), &y)| b - a + y)
            .collect(),
        f: rows
            .f
            .iter()
            .zip(&slack.f)
            .map(|(&j, &y)| problem.quadratic[j].eval(x) + y)
            .collect(),
        g: rows
            .g
            .iter()
            .zip(&slack.g)
            .map(|(&j, &y)| problem.ineq.rows[j].eval(x) + y)
            .collect(),
        ph: h.iter().zip(&slack.ph).map(|(&v, &y)| v + y).collect(),
        nh: h.iter().zip(&slack.nh).map(|(&v, &y)| -v + y).collect(),
    }
}

/// Count of violated state invariants: boxes on X, Z, slacks and duals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InvariantViolations {
    pub primal_box: usize,
    pub slack_box: usize,
    pub dual_box: usize,
}

impl InvariantViolations {
    pub fn total(&self) -> usize {
        self.primal_box + self.slack_box + self.dual_box
    }
}

pub fn check_invariants<T: Real>(inst: &Instance<T>, state: &GlobalState<T>) -> InvariantViolations {
    let mut v = InvariantViolations::default();
    let u = &inst.problem.bound;
    let out_of_box = |x: &[T]| x.iter().zip(u).filter(|(a, b)| a.abs() > **b).count();
    v.primal_box += out_of_box(&state.z);
    for (i, b) in state.blocks.iter().enumerate() {
        v.primal_box += out_of_box(&b.x);
        for fam in Family::ALL {
            let ub = inst.slack_bounds[i].get(fam);
            v.slack_box += b
                .slack
                .get(fam)
                .iter()
                .zip(ub)
                .filter(|(y, u)| !(**y >= T::zero() && **y <= **u))
                .count();
            let du = inst.dual_upper[i].get(fam);
            v.dual_box += b
                .dual
                .get(fam)
                .iter()
                .zip(du)
                .filter(|(m, u)| !(**m >= T::zero() && **m <= **u))
                .count();
        }
    }
    v
}
