mod common;

use aggcvx::diagnostics::*;
use aggcvx::dual::dual_update;
use aggcvx::oracle::{solve_reference, solve_reference_seeded, OracleStatus};
use aggcvx::runtime::{run_iteration, setup};
use aggcvx::state::block_residuals;
use aggcvx::*;
use common::*;

fn unscaled() -> SolverConfig<f64> {
    SolverConfig { scale: false, ..Default::default() }
}

#[test]
fn dual_term_equals_substituted_form() {
    for direction in [DualDirection::Descent, DualDirection::ProjectedAscent] {
        let p = fixture("lp");
        let cfg = SolverConfig { dual_direction: direction, ..Default::default() };
        let (inst, _, mut state, mut sched) = setup(&p, &cfg, 2, 2).unwrap();
        let topo = ProcessTopology::new(2, inst.partition.subvectors(), cfg.mode);
        for _ in 0..40 {
            let (next, next_sched, trace) = run_iteration(&inst, &state, &sched, &topo, &cfg).unwrap();
            let eff: Vec<PerFamily<Vec<f64>>> = (0..2)
                .map(|i| {
                    let b = &next.blocks[i];
                    let r = block_residuals(&inst.problem, &inst.rows[i], &b.x, &next.z, &b.slack);
                    PerFamily::from_fn(|fam| {
                        let (mu, e) = dual_update(
                            direction,
                            state.blocks[i].dual.get(fam),
                            r.get(fam),
                            *inst.alpha[i].get(fam),
                            inst.dual_upper[i].get(fam),
                        );
                        assert_eq!(&mu, b.dual.get(fam));
                        e
                    })
                })
                .collect();
            let d = dual_decrease_substituted(&inst, &next, &eff);
            assert!((d - trace.cert.d).abs() <= 1e-10 * (1.0 + d.abs()), "{d} vs {}", trace.cert.d);
            state = next;
            sched = next_sched;
        }
    }
}

#[test]
fn lagrangian_groups_add_up() {
    let p = fixture("quadratic");
    let cfg = SolverConfig::<f64> { max_iter: 30, ..Default::default() };
    let out = run(&p, &cfg, 2, 3).unwrap();
    let parts = lagrangian_parts(&out.instance, &out.state);
    let total = lagrangian_value(&out.instance, &out.state);
    assert!((parts.total() - total).abs() <= 1e-12 * (1.0 + total.abs()));
    assert!(parts.penalty >= 0.0);
    assert_eq!(out.traces.last().unwrap().cert.l_k1, total);
}

#[test]
fn descent_certificate_holds_on_small_random_runs() {
    let mut checked = 0;
    for seed in 0..12u64 {
        let p = random_problem(300 + seed);
        let mut cfg = SolverConfig::<f64> { max_iter: 300, ..Default::default() };
        cfg.inner.tol = 1e-11;
        cfg.inner.max_iter = 20_000;
        let Ok(out) = run(&p, &cfg, 2, p.n.min(2)) else { continue };
        for t in &out.traces {
            assert!(t.cert.lemma1_gap >= -1e-9, "seed {seed} k {}: {:e}", t.k, t.cert.lemma1_gap);
            assert!(t.p_terms.all_nonnegative());
            assert_eq!(t.invariant_violations, 0);
        }
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn kkt_at_oracle_optimum_is_small() {
    for (name, m) in [("lp", 2), ("quadratic", 3), ("box_lp", 1)] {
        let p = fixture(name);
        let tol = 1e-8;
        let o = solve_reference(&p, tol);
        assert_eq!(o.status, OracleStatus::Optimal);
        let cfg = unscaled();
        let (inst, _, _, _) = setup(&p, &cfg, 2, m).unwrap();
        let st = state_from_multipliers(&inst, &o.z_star, &o.multipliers.f, &o.multipliers.g, &o.multipliers.h);
        let k = kkt_residual(&inst, &st);
        assert!(k.max() <= 10.0 * tol, "{name}: {k:?}");
    }
}

#[test]
fn kkt_flags_non_optimal_points() {
    let p = fixture("lp");
    let cfg = unscaled();
    let (inst, _, _, _) = setup(&p, &cfg, 2, 2).unwrap();
    let o = solve_reference(&p, 1e-8);
    let mut r = rng(5);
    let mut flagged = 0;
    for _ in 0..20 {
        let z = point_in_box(&mut r, &p.bound);
        if z.iter().zip(&o.z_star).all(|(a, b)| (a - b).abs() < 0.05) {
            continue;
        }
        let st = state_from_multipliers(&inst, &z, &o.multipliers.f, &o.multipliers.g, &o.multipliers.h);
        if kkt_residual(&inst, &st).max() > 0.01 {
            flagged += 1;
        }
    }
    assert_eq!(flagged, 20);
}

#[test]
fn box_lp_corner_is_stationary() {
    let p = fixture("box_lp");
    let cfg = unscaled();
    let (inst, _, _, _) = setup(&p, &cfg, 1, 1).unwrap();
    let st = state_from_multipliers(&inst, &[1.0, 1.0], &[], &[], &[]);
    let k = kkt_residual(&inst, &st);
    assert_eq!(k.stationarity(), 0.0);
    assert_eq!(k.max(), 0.0);
}

#[test]
fn oracle_is_seed_stable() {
    for name in ["lp", "quadratic"] {
        let p = fixture(name);
        let tol = 1e-8;
        let a = solve_reference_seeded(&p, tol, 1);
        let b = solve_reference_seeded(&p, tol, 99);
        assert!((a.f_star - b.f_star).abs() <= 2.0 * tol, "{name}: {} vs {}", a.f_star, b.f_star);
    }
}

#[test]
fn rate_estimate_needs_fifty_rows() {
    let p = fixture("box_lp");
    let out = run(&p, &SolverConfig::<f64> { max_iter: 10, ..Default::default() }, 2, 1).unwrap();
    assert!(matches!(rate_estimate(&out.traces, 0.5), Err(Error::TraceTooShort { .. })));
}
