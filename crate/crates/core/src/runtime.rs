//! Simulated N x M process grid: one iteration and the outer loop.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::{DualDirection, ExecutionMode, SolverConfig};
use crate::consensus::{update_slack, update_z_ring, RingInput};
use crate::diagnostics::{certificate, CertificateRecord, PTerms};
use crate::dual::{compute_u, dual_update, init_state, parameter_schedules, prepare, residual_bases, ScheduleState, StepNorms};
use crate::error::{Error, Result};
use crate::family::{Family, PerFamily};
use crate::partition::{scale_problem, ConsensusPartition, ScalingRecord};
use crate::problem::Problem;
use crate::scalar::{diff_norm1, diff_norm2_sq, norm2_sq, Real};
use crate::state::{block_residuals, check_invariants, BlockState, GlobalState, Instance};
use crate::subproblem::{solve_subblock, BlockView, SubblockContext};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessTopology {
    pub blocks: usize,
    pub subvectors: usize,
    pub ring_order: Vec<usize>,
    pub mode: ExecutionMode,
}

impl ProcessTopology {
    pub fn new(blocks: usize, subvectors: usize, mode: ExecutionMode) -> Self {
        ProcessTopology {
            blocks,
            subvectors,
            ring_order: (0..blocks).collect(),
            mode,
        }
    }

    pub fn with_ring_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..self.blocks).collect::<Vec<_>>() {
            return Err(Error::Partition("ring order must be a permutation of the blocks".into()));
        }
        self.ring_order = order;
        Ok(self)
    }
}

/// One row of the iteration log, describing the step `k -> k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace<T> {
    pub k: usize,
    /// Max absolute extended-equality residual per family after the step.
    pub residual: PerFamily<T>,
    /// `max_i |X_i - Z + pXY_i|`.
    pub consensus: T,
    pub cert: CertificateRecord<T>,
    pub p_terms: PTerms<T>,
    /// `U` as accumulated by the solver itself, for cross-checking `cert.u_sum`.
    pub u_solver: T,
    pub sigma1_active: usize,
    pub sigma1_max: T,
    pub capped: usize,
    pub hop_bytes: Vec<usize>,
    pub inner_iterations: usize,
    pub inner_capped: usize,
    /// `max |X^{k+1}_{i,l} - x_hat2|_inf` of the explicit second-order estimate.
    pub second_order_gap: T,
    /// Box violations (primal, slack, dual) of the new state; always 0 unless broken.
    pub invariant_violations: usize,
    /// Log-log slope of the consensus residual over all iterations so far.
    pub slope: f64,
    pub wall: Duration,
}

impl<T: Real> IterationTrace<T> {
    pub fn max_residual(&self) -> T {
        self.residual.iter().fold(T::zero(), |m, (_, &v)| m.max(v))
    }
}

struct SubRecord<T> {
    dx2: T,
    dx1: T,
    u: T,
    iterations: usize,
    converged: bool,
    so_gap: T,
}

struct Sweep<T> {
    x: Vec<T>,
    subs: Vec<SubRecord<T>>,
}

fn sweep_block<T: Real>(
    inst: &Instance<T>,
    state: &GlobalState<T>,
    sched: &ScheduleState<T>,
    config: &SolverConfig<T>,
    i: usize,
) -> Result<Sweep<T>> {
    let b = &state.blocks[i];
    let view = BlockView {
        problem: &inst.problem,
        rows: &inst.rows[i],
        z: &state.z,
        slack: &b.slack,
        dual: &b.dual,
        rho: inst.rho[i],
    };
    let mut x = b.x.clone();
    let mut subs = Vec::with_capacity(inst.partition.subvectors());
    for (l, range) in inst.partition.ranges.iter().enumerate() {
        let ctx = SubblockContext::build(&view, i, l, range.clone(), &x, sched.sigma1[i][l], sched.sigma2[i][l]);
        let (xn, stats) = solve_subblock(&ctx, &config.inner)?;
        let (_, x_hat2) = ctx.second_order_step();
        let so_gap = xn
            .iter()
            .zip(&x_hat2)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        subs.push(SubRecord {
            dx2: diff_norm2_sq(&xn, &ctx.anchor),
            dx1: diff_norm1(&xn, &ctx.anchor),
            u: compute_u(&ctx.quad, ctx.rho, &xn, &ctx.anchor),
            iterations: stats.iterations,
            converged: stats.converged,
            so_gap,
        });
        x[range.clone()].copy_from_slice(&xn);
    }
    Ok(Sweep { x, subs })
}

struct BlockTail<T> {
    block: BlockState<T>,
    dy2: PerFamily<T>,
}

fn finish_block<T: Real>(
    inst: &Instance<T>,
    old: &BlockState<T>,
    x: Vec<T>,
    z: &[T],
    sched: &ScheduleState<T>,
    direction: DualDirection,
    i: usize,
) -> BlockTail<T> {
    let rho = inst.rho[i];
    let base = residual_bases(&inst.problem, &inst.rows[i], &x, z);
    let slack = PerFamily::from_fn(|fam| {
        update_slack(
            fam,
            old.slack.get(fam),
            base.get(fam),
            old.dual.get(fam),
            *sched.gamma[i].get(fam),
            rho,
            inst.slack_bounds[i].get(fam),
        )
    });
    let dy2 = PerFamily::from_fn(|fam| diff_norm2_sq(slack.get(fam), old.slack.get(fam)));
    let r = block_residuals(&inst.problem, &inst.rows[i], &x, z, &slack);
    let dual = PerFamily::from_fn(|fam| {
        dual_update(
            direction,
            old.dual.get(fam),
            r.get(fam),
            *inst.alpha[i].get(fam),
            inst.dual_upper[i].get(fam),
        )
        .0
    });
    BlockTail {
        block: BlockState { x, slack, dual },
        dy2,
    }
}

/// One full pass: primal sweeps, ring, slacks, duals, schedules.
pub fn run_iteration<T: Real>(
    inst: &Instance<T>,
    state: &GlobalState<T>,
    sched: &ScheduleState<T>,
    topo: &ProcessTopology,
    config: &SolverConfig<T>,
) -> Result<(GlobalState<T>, ScheduleState<T>, IterationTrace<T>)> {
    let start = Instant::now();
    let nb = inst.blocks();
    let sweeps: Vec<Sweep<T>> = match topo.mode {
        ExecutionMode::Sequential => (0..nb)
            .map(|i| sweep_block(inst, state, sched, config, i))
            .collect::<Result<_>>()?,
        ExecutionMode::ParallelBlocks => (0..nb)
            .into_par_iter()
            .map(|i| sweep_block(inst, state, sched, config, i))
            .collect::<Result<_>>()?,
    };

    let ring_inputs: Vec<RingInput<'_, T>> = (0..nb)
        .map(|i| {
            let b = &state.blocks[i];
            RingInput {
                x: &sweeps[i].x,
                pxy: &b.slack.px,
                nxy: &b.slack.nx,
                pxmu: &b.dual.px,
                nxmu: &b.dual.nx,
                rho: inst.rho[i],
            }
        })
        .collect();
    let ring = update_z_ring(&ring_inputs, &topo.ring_order, sched.tau, &state.z, &inst.problem.bound)?;
    let z = ring.z;

    let xs: Vec<Vec<T>> = sweeps.iter().map(|s| s.x.clone()).collect();
    let tails: Vec<BlockTail<T>> = match topo.mode {
        ExecutionMode::Sequential => xs
            .into_iter()
            .enumerate()
            .map(|(i, x)| finish_block(inst, &state.blocks[i], x, &z, sched, config.dual_direction, i))
            .collect(),
        ExecutionMode::ParallelBlocks => xs
            .into_par_iter()
            .enumerate()
            .map(|(i, x)| finish_block(inst, &state.blocks[i], x, &z, sched, config.dual_direction, i))
            .collect(),
    };

    let steps = StepNorms {
        dx2: sweeps.iter().map(|s| s.subs.iter().map(|r| r.dx2).collect()).collect(),
        dx1: sweeps.iter().map(|s| s.subs.iter().map(|r| r.dx1).collect()).collect(),
        dz2: diff_norm2_sq(&z, &state.z),
        dy2: tails.iter().map(|t| t.dy2.clone()).collect(),
    };
    let u_now: Vec<Vec<T>> = sweeps.iter().map(|s| s.subs.iter().map(|r| r.u).collect()).collect();
    let next_sched = parameter_schedules(sched, &steps, &u_now, config);

    let next = GlobalState {
        z,
        blocks: tails.into_iter().map(|t| t.block).collect(),
        k: state.k + 1,
    };
    let (cert, p_terms) = certificate(inst, state, &next, sched)?;

    let mut residual = PerFamily::splat(T::zero());
    let mut consensus = T::zero();
    for (i, b) in next.blocks.iter().enumerate() {
        let r = block_residuals(&inst.problem, &inst.rows[i], &b.x, &next.z, &b.slack);
        for fam in Family::ALL {
            let m = r.get(fam).iter().fold(T::zero(), |m, v| m.max(v.abs()));
            let slot = residual.get_mut(fam);
            *slot = slot.max(m);
        }
        consensus = consensus.max(norm2_sq(&r.px).sqrt());
    }
    let sigma1_active = next_sched.sigma1.iter().flatten().filter(|&&s| s > T::zero()).count();
    let sigma1_max = next_sched.sigma1.iter().flatten().fold(T::zero(), |m, &s| m.max(s));
    let subs = sweeps.iter().flat_map(|s| &s.subs);
    let trace = IterationTrace {
        k: state.k,
        residual,
        consensus,
        cert,
        p_terms,
        u_solver: u_now.iter().flatten().copied().sum(),
        sigma1_active,
        sigma1_max,
        capped: next_sched.capped,
        hop_bytes: ring.hop_bytes,
        inner_iterations: subs.clone().map(|r| r.iterations).sum(),
        inner_capped: subs.clone().filter(|r| !r.converged).count(),
        second_order_gap: subs.fold(T::zero(), |m, r| m.max(r.so_gap)),
        invariant_violations: check_invariants(inst, &next).total(),
        slope: f64::NAN,
        wall: start.elapsed(),
    };
    Ok((next, next_sched, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    IterationCap,
    InnerFailure,
}

impl Status {
    pub fn key(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::IterationCap => "iteration_cap",
            Status::InnerFailure => "inner_failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    /// Final common variable.
    pub solution: Vec<T>,
    /// Objective in the units of the problem as given.
    pub objective: T,
    pub traces: Vec<IterationTrace<T>>,
    pub status: Status,
    pub initial_lagrangian: T,
    pub state: GlobalState<T>,
    pub schedule: ScheduleState<T>,
    pub instance: Instance<T>,
    pub scaling: ScalingRecord<T>,
    /// Set when `status` is `InnerFailure`.
    pub failure: Option<Error>,
    /// Iterations whose descent-certificate gap fell below `-(inner tolerance)`.
    pub certificate_warnings: usize,
}

/// Incremental least-squares slope of `log r` on `log k`.
#[derive(Debug, Clone, Copy, Default)]
struct SlopeAcc {
    n: f64,
    sx: f64,
    sy: f64,
    sxx: f64,
    sxy: f64,
}

impl SlopeAcc {
    fn push(&mut self, k: f64, r: f64) {
        if k > 0.0 && r > 0.0 && r.is_finite() {
            let (x, y) = (k.ln(), r.ln());
            self.n += 1.0;
            self.sx += x;
            self.sy += y;
            self.sxx += x * x;
            self.sxy += x * y;
        }
    }

    fn slope(&self) -> f64 {
        let den = self.n * self.sxx - self.sx * self.sx;
        if self.n < 2.0 || den == 0.0 {
            f64::NAN
        } else {
            (self.n * self.sxy - self.sx * self.sy) / den
        }
    }
}

/// Sets up the instance (scaling, partition, bounds, initial state).
pub fn setup<T: Real>(
    problem: &Problem<T>,
    config: &SolverConfig<T>,
    blocks: usize,
    subvectors: usize,
) -> Result<(Instance<T>, ScalingRecord<T>, GlobalState<T>, ScheduleState<T>)> {
    let report = problem.validate();
    if !report.is_ok() {
        return Err(Error::Problem(report.issues.join("; ")));
    }
    config.validate(blocks)?;
    let (scaled, scaling) = if config.scale {
        scale_problem(problem, config.target_range)
    } else {
        (problem.clone(), ScalingRecord::identity(problem))
    };
    let partition = ConsensusPartition::build(&scaled, blocks, subvectors, config.strategy)?;
    let mut inst = prepare(scaled, partition, config)?;
    let (state, sched) = init_state(&mut inst, config)?;
    Ok((inst, scaling, state, sched))
}

/// Iterates until every extended-equality residual is within `config.tol`
/// or the iteration cap is reached.
pub fn run<T: Real>(
    problem: &Problem<T>,
    config: &SolverConfig<T>,
    blocks: usize,
    subvectors: usize,
) -> Result<RunOutput<T>> {
    let (inst, scaling, state, sched) = setup(problem, config, blocks, subvectors)?;
    let topo = ProcessTopology::new(blocks, subvectors, config.mode);
    run_from(inst, scaling, state, sched, &topo, config)
}

pub fn run_from<T: Real>(
    inst: Instance<T>,
    scaling: ScalingRecord<T>,
    mut state: GlobalState<T>,
    mut sched: ScheduleState<T>,
    topo: &ProcessTopology,
    config: &SolverConfig<T>,
) -> Result<RunOutput<T>> {
    let initial_lagrangian = crate::diagnostics::lagrangian_value(&inst, &state);
    let mut traces = Vec::new();
    let mut status = Status::IterationCap;
    let mut failure = None;
    let mut warnings = 0;
    let mut slope = SlopeAcc::default();
    let warn_tol = config.inner.tol * T::lit(10.0) * (T::one() + initial_lagrangian.abs());
    for _ in 0..config.max_iter {
        match run_iteration(&inst, &state, &sched, topo, config) {
            Ok((next, next_sched, mut trace)) => {
                slope.push((trace.k + 1) as f64, trace.consensus.as_f64());
                trace.slope = slope.slope();
                if trace.cert.lemma1_gap < -warn_tol {
                    warnings += 1;
                }
                let done = trace.max_residual() <= config.tol;
                traces.push(trace);
                state = next;
                sched = next_sched;
                if done {
                    status = Status::Converged;
                    break;
                }
            }
            Err(e @ Error::Inner { .. }) => {
                status = Status::InnerFailure;
                failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let objective = scaling.unscale_objective(inst.problem.objective(&state.z));
    Ok(RunOutput {
        solution: state.z.clone(),
        objective,
        traces,
        status,
        initial_lagrangian,
        state,
        schedule: sched,
        instance: inst,
        scaling,
        failure,
        certificate_warnings: warnings,
    })
}
