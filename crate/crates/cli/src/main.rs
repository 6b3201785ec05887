//! Command-line front end: validate, inspect, solve and cross-check problem
//! files.
//!
//! Exit codes: 0 on success (`solve`: converged), 2 when `solve` stops at the
//! iteration cap, 1 on any error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggcvx::diagnostics::kkt_residual;
use aggcvx::format::{parse_config, parse_problem, write_trace};
use aggcvx::oracle::{compare, solve_reference_seeded, OracleSolution, OracleStatus};
use aggcvx::partition::{slack_upper_bounds, ConsensusPartition};
use aggcvx::{run, Problem, RunOutput, SolverConfig, Status};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aggcvx", version, about = "Distributed consensus solver for aggregative convex programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Problem file.
    problem: PathBuf,
    /// Number of consensus blocks.
    #[arg(short = 'N', long, default_value_t = 2)]
    blocks: usize,
    /// Number of subvectors per block.
    #[arg(short = 'M', long, default_value_t = 1)]
    subvectors: usize,
    /// Flat `key = value` solver configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse the problem and check convexity of every quadratic constraint.
    Validate {
        problem: PathBuf,
    },
    /// Show how constraints and coordinates are split over the process grid.
    PartitionInfo(Common),
    /// Run the distributed solver.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Write the iteration trace as a comma-separated table.
        #[arg(short, long)]
        trace: Option<PathBuf>,
    },
    /// Run the single-block reference solver.
    Oracle {
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare a solution (given, or computed by the solver) with the oracle.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated candidate; when absent the solver is run first.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        solution: Option<Vec<f64>>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

type Res<T> = std::result::Result<T, String>;

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_problem(path: &Path) -> Res<Problem<f64>> {
    parse_problem(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_config(c: &Common) -> Res<SolverConfig<f64>> {
    let mut cfg = match &c.config {
        Some(p) => parse_config(&read(p)?, SolverConfig::default()).map_err(|e| format!("{}: {e}", p.display()))?,
        None => SolverConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.10e}")).collect::<Vec<_>>().join(" ")
}

fn validate(path: &Path) -> Res<ExitCode> {
    let p = load_problem(path)?;
    let rep = p.validate();
    println!("dimension {}", p.n);
    println!(
        "constraints quadratic {} ineq {} eq {}",
        p.quadratic.len(),
        p.ineq.len(),
        p.eq.len()
    );
    for (j, s) in rep.psd.iter().enumerate() {
        println!(
            "quadratic[{j}] {} psd {} min_eigenvalue {:.3e}",
            p.quadratic[j].kind.key(),
            s.psd,
            s.min_eigenvalue
        );
    }
    if rep.is_ok() {
        println!("valid");
        Ok(ExitCode::SUCCESS)
    } else {
        for issue in &rep.issues {
            eprintln!("invalid: {issue}");
        }
        Ok(ExitCode::from(1))
    }
}

fn partition_info(c: &Common) -> Res<ExitCode> {
    let p = load_problem(&c.problem)?;
    let cfg = load_config(c)?;
    let part = ConsensusPartition::build(&p, c.blocks, c.subvectors, cfg.strategy).map_err(|e| e.to_string())?;
    let bounds = slack_upper_bounds(&p, &part, cfg.slack_eps());
    println!("blocks {} subvectors {} strategy {}", part.blocks, part.subvectors(), cfg.strategy.key());
    for (l, r) in part.ranges.iter().enumerate() {
        println!("subvector {l} coordinates {}..{}", r.start, r.end);
    }
    for i in 0..part.blocks {
        let rows = part.rows(i);
        println!("block {i} F {:?} G {:?} H {:?}", rows.f, rows.g, rows.h);
        println!("  slack bounds F {} G {} H {}", fmt_vec(&bounds[i].f), fmt_vec(&bounds[i].g), fmt_vec(&bounds[i].ph));
    }
    Ok(ExitCode::SUCCESS)
}

fn solve_problem(c: &Common) -> Res<(Problem<f64>, RunOutput<f64>)> {
    let p = load_problem(&c.problem)?;
    let cfg = load_config(c)?;
    let out = run(&p, &cfg, c.blocks, c.subvectors).map_err(|e| e.to_string())?;
    Ok((p, out))
}

fn solve(c: &Common, trace: Option<&Path>) -> Res<ExitCode> {
    let (_, out) = solve_problem(c)?;
    if let Some(path) = trace {
        fs::write(path, write_trace(&out.traces)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    let last = out.traces.last();
    println!("status {}", out.status.key());
    println!("iterations {}", out.traces.len());
    println!("objective {:.10e}", out.objective);
    println!("max_residual {:.3e}", last.map_or(f64::NAN, |t| t.max_residual()));
    println!("z {}", fmt_vec(&out.solution));
    let kkt = kkt_residual(&out.instance, &out.state);
    println!("kkt_max {:.3e}", kkt.max());
    if out.certificate_warnings > 0 {
        eprintln!("warning: descent certificate violated beyond inner tolerance at {} iterations", out.certificate_warnings);
    }
    match out.status {
        Status::Converged => Ok(ExitCode::SUCCESS),
        Status::IterationCap => Ok(ExitCode::from(2)),
        Status::InnerFailure => Err(out.failure.map_or_else(|| "inner solve failed".into(), |e| e.to_string())),
    }
}

fn print_oracle(o: &OracleSolution) {
    println!("status {}", if o.status == OracleStatus::Optimal { "optimal" } else { "infeasible" });
    println!("objective {:.10e}", o.f_star);
    println!("z {}", fmt_vec(&o.z_star));
    println!("multipliers F {}", fmt_vec(&o.multipliers.f));
    println!("multipliers G {}", fmt_vec(&o.multipliers.g));
    println!("multipliers H {}", fmt_vec(&o.multipliers.h));
}

fn oracle(path: &Path, tol: f64, seed: u64) -> Res<ExitCode> {
    let p = load_problem(path)?;
    let o = solve_reference_seeded(&p, tol, seed);
    print_oracle(&o);
    Ok(if o.status == OracleStatus::Optimal { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn compare_cmd(c: &Common, solution: Option<&[f64]>, tol: f64) -> Res<ExitCode> {
    let (p, z) = match solution {
        Some(z) => {
            let p = load_problem(&c.problem)?;
            if z.len() != p.n {
                return Err(format!("solution has {} entries, problem dimension is {}", z.len(), p.n));
            }
            (p, z.to_vec())
        }
        None => {
            let (p, out) = solve_problem(c)?;
            println!("solver_status {}", out.status.key());
            (p, out.solution)
        }
    };
    let o = solve_reference_seeded(&p, tol, load_config(c)?.seed);
    if o.status != OracleStatus::Optimal {
        return Err("oracle found no feasible point".into());
    }
    println!("{}", compare(&z, &o, &p));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Validate { problem } => validate(problem),
        Cmd::PartitionInfo(c) => partition_info(c),
        Cmd::Solve { common, trace } => solve(common, trace.as_deref()),
        Cmd::Oracle { problem, tol, seed } => oracle(problem, *tol, *seed),
        Cmd::Compare { common, solution, tol } => compare_cmd(common, solution.as_deref(), *tol),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
