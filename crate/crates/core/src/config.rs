//! Solver configuration.

use crate::error::{Error, Result};
use crate::family::{Family, PerFamily};
use crate::partition::Strategy;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Sequential,
    ParallelBlocks,
}

impl ExecutionMode {
    pub fn key(self) -> &'static str {
        match self {
            ExecutionMode::Sequential => "sequential",
            ExecutionMode::ParallelBlocks => "parallel_blocks",
        }
    }

    pub fn from_key(s: &str) -> Option<Self> {
        match s {
            "sequential" => Some(ExecutionMode::Sequential),
            "parallel_blocks" => Some(ExecutionMode::ParallelBlocks),
            _ => None,
        }
    }
}

/// Sign of the bounded dual update.
///
/// `Descent` is the published rule: `mu - alpha r`, applied per component
/// only when it stays in `[0, upper]`. It minimizes the Lagrangian in the
/// duals as well, so on problems with active coupling it settles at a vertex
/// of the dual box instead of a saddle point. `ProjectedAscent` uses
/// `clamp(mu + alpha r, 0, upper)`, the usual multiplier-method direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualDirection {
    #[default]
    Descent,
    ProjectedAscent,
}

impl DualDirection {
    pub fn key(self) -> &'static str {
        match self {
            DualDirection::Descent => "descent",
            DualDirection::ProjectedAscent => "projected_ascent",
        }
    }

    pub fn from_key(s: &str) -> Option<Self> {
        match s {
            "descent" => Some(DualDirection::Descent),
            "projected_ascent" => Some(DualDirection::ProjectedAscent),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerConfig<T> {
    /// Fixed-point tolerance relative to `1 + |X^k|`.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for InnerConfig<T> {
    fn default() -> Self {
        InnerConfig {
            tol: T::lit(1e-8),
            max_iter: 500,
        }
    }
}

/// Every tunable of the solver. Per-block vectors of length one are broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub rho: Vec<T>,
    /// Dual step sizes per family; `None` derives `(lambda + rho/2) / margin`.
    pub dual_steps: PerFamily<Option<Vec<T>>>,
    /// Uniform dual upper bound per family; `None` uses `max(10 mu^0, 1)`.
    pub dual_upper: PerFamily<Option<T>>,
    pub dual_direction: DualDirection,
    pub lambda_z: T,
    /// Initial-dual coefficients as multiples of `rho_i`.
    pub lambda_dual: PerFamily<T>,
    pub gamma_bound: T,
    pub margin: T,
    pub tau0: T,
    pub gamma0: T,
    /// Curvature constant bounding the nonlinearity term; `None` derives it.
    pub f_curvature_bound: Option<T>,
    /// Upper cap for all proximal parameters; `None` means `1e8 rho^2`.
    pub schedule_cap: Option<T>,
    pub tol: T,
    pub max_iter: usize,
    pub inner: InnerConfig<T>,
    pub scale: bool,
    pub target_range: T,
    /// Slack-bound padding; `None` means `0.1 * target_range`.
    pub slack_eps: Option<T>,
    pub strategy: Strategy,
    pub mode: ExecutionMode,
    pub seed: u64,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            rho: vec![T::one()],
            dual_steps: PerFamily::splat(None),
            dual_upper: PerFamily::splat(None),
            dual_direction: DualDirection::Descent,
            lambda_z: T::lit(0.9),
            lambda_dual: PerFamily::from_fn(|f| {
                if f == Family::F {
                    T::half()
                } else {
                    T::one()
                }
            }),
            gamma_bound: T::one(),
            margin: T::lit(4.0),
            tau0: T::zero(),
            gamma0: T::zero(),
            f_curvature_bound: None,
            schedule_cap: None,
            tol: T::lit(1e-6),
            max_iter: 50_000,
            inner: InnerConfig::default(),
            scale: true,
            target_range: T::one(),
            slack_eps: None,
            strategy: Strategy::RoundRobin,
            mode: ExecutionMode::Sequential,
            seed: 0,
        }
    }
}

fn pick<T: Copy>(v: &[T], i: usize) -> T {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn rho_for(&self, block: usize) -> T {
        pick(&self.rho, block)
    }

    pub fn lambda_for(&self, family: Family, block: usize) -> T {
        *self.lambda_dual.get(family) * self.rho_for(block)
    }

    pub fn alpha_for(&self, family: Family, block: usize) -> T {
        match self.dual_steps.get(family) {
            Some(v) => pick(v, block),
            None => (self.lambda_for(family, block) + self.rho_for(block) * T::half()) / self.margin,
        }
    }

    pub fn cap_for(&self, block: usize) -> T {
        let r = self.rho_for(block);
        self.schedule_cap.unwrap_or(T::lit(1e8) * r * r)
    }

    pub fn slack_eps(&self) -> T {
        self.slack_eps.unwrap_or(T::lit(0.1) * self.target_range)
    }

    /// Rejects configurations that break the parameter relations the method needs.
    pub fn validate(&self, blocks: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rho.len() != 1 && self.rho.len() != blocks {
            return bad(format!("rho has {} entries for {blocks} blocks", self.rho.len()));
        }
        if self.rho.iter().any(|&r| !(r > T::zero())) {
            return bad("rho must be positive".into());
        }
        if !(self.lambda_z > T::zero() && self.lambda_z < T::one()) {
            return bad("lambda_z must lie in (0, 1)".into());
        }
        if !(self.gamma_bound >= T::one()) {
            return bad("gamma_bound must be at least 1".into());
        }
        if !(self.margin > T::one()) {
            return bad("margin must exceed 1".into());
        }
        if self.tau0 < T::zero() || self.gamma0 < T::zero() {
            return bad("tau0 and gamma0 must be nonnegative".into());
        }
        if !(self.tol > T::zero()) || !(self.inner.tol > T::zero()) || !(self.target_range > T::zero()) {
            return bad("tolerances and target_range must be positive".into());
        }
        if self.inner.max_iter == 0 {
            return bad("inner.max_iter must be positive".into());
        }
        if self.slack_eps.is_some_and(|e| e < T::zero()) {
            return bad("slack_eps must be nonnegative".into());
        }
        for fam in Family::ALL {
            if *self.lambda_dual.get(fam) < T::zero() {
                return bad(format!("lambda.{fam} must be nonnegative"));
            }
            if let Some(v) = self.dual_steps.get(fam) {
                if v.len() != 1 && v.len() != blocks {
                    return bad(format!("alpha.{fam} has {} entries for {blocks} blocks", v.len()));
                }
            }
            if let Some(u) = self.dual_upper.get(fam) {
                if !(*u > T::zero()) {
                    return bad(format!("dual_upper.{fam} must be positive"));
                }
            }
            for i in 0..blocks {
                let a = self.alpha_for(fam, i);
                if !(a > T::zero()) {
                    return bad(format!("alpha.{fam} must be positive"));
                }
                let lhs = self.lambda_for(fam, i) + self.rho_for(i) * T::half();
                if lhs < self.margin * a * (T::one() - T::lit(1e-12)) {
                    return bad(format!(
                        "block {i}: lambda.{fam} + rho/2 = {lhs} is below margin * alpha = {}",
                        self.margin * a
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SolverConfig::<f64>::default();
        c.validate(3).unwrap();
        assert_eq!(c.alpha_for(Family::G, 0), (1.0 + 0.5) / 4.0);
        assert_eq!(c.alpha_for(Family::F, 0), (0.5 + 0.5) / 4.0);
        assert_eq!(c.cap_for(0), 1e8);
    }

    #[test]
    fn oversized_step_rejected() {
        let mut c = SolverConfig::<f64>::default();
        c.dual_steps.g = Some(vec![1.0]);
        assert!(matches!(c.validate(1), Err(Error::Config(_))));
    }

    #[test]
    fn rho_length_checked() {
        let c = SolverConfig::<f64> {
            rho: vec![1.0, 2.0],
            ..Default::default()
        };
        assert!(c.validate(3).is_err());
        c.validate(2).unwrap();
        assert_eq!(c.rho_for(1), 2.0);
    }
}
