use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn aggcvx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggcvx")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key).map(|v| v.trim().parse().unwrap()))
        .unwrap_or_else(|| panic!("no `{key}` in:\n{out}"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aggcvx-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn validate_accepts_convex_fixtures() {
    for f in ["lp.txt", "quadratic.txt", "box_lp.txt"] {
        let o = aggcvx(&["validate", fixture(f).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{f}: {}", stderr(&o));
        assert!(stdout(&o).contains("valid"));
    }
}

#[test]
fn validate_names_the_psd_failure() {
    let o = aggcvx(&["validate", fixture("nonconvex.txt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("quadratic[0]"));
    assert!(stderr(&o).contains("not positive semidefinite"));
}

#[test]
fn solve_box_lp_with_ascent_config() {
    let o = aggcvx(&[
        "solve",
        fixture("box_lp.txt").to_str().unwrap(),
        "-N",
        "2",
        "--config",
        fixture("ascent.cfg").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("status converged"));
    assert!((field(&out, "objective") + 2.0).abs() <= 1e-4);
}

#[test]
fn solve_box_lp_with_default_config_hits_the_cap() {
    // The published bounded dual-descent rule stalls at the opposite corner.
    let o = aggcvx(&["solve", fixture("box_lp.txt").to_str().unwrap(), "-N", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("status iteration_cap"));
}

#[test]
fn trace_is_deterministic_with_increasing_rows() {
    let a = tmp("a.csv");
    let b = tmp("b.csv");
    let cfg = tmp("short.cfg");
    std::fs::write(&cfg, "max_iter = 400\nmode = sequential\n").unwrap();
    for path in [&a, &b] {
        let o = aggcvx(&[
            "solve",
            fixture("lp.txt").to_str().unwrap(),
            "-N",
            "2",
            "-M",
            "2",
            "--seed",
            "7",
            "--config",
            cfg.to_str().unwrap(),
            "--trace",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(2));
    }
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());
    let text = String::from_utf8(ta).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "k,lagrangian,res_px,res_nx,res_f,res_g,res_ph,res_nh,consensus,d,p,sigma1_l1,u_sum,j,lemma1_gap,sigma1_active,capped,slope"
    );
    let ks: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ks.len(), 400);
    assert!(ks.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn compare_prints_gap_report() {
    let o = aggcvx(&["compare", fixture("lp.txt").to_str().unwrap(), "--solution", "0.5,0.5,0,-0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for key in ["objective", "oracle", "relative_gap", "max_violation", "distance_inf", "shared"] {
        assert!(out.contains(key), "{key} missing:\n{out}");
    }
    assert!(field(&out, "relative_gap") < 1e-8);
}

#[test]
fn oracle_reports_infeasible() {
    let p = tmp("infeasible.txt");
    std::fs::write(&p, "dimension 1\ncost 0\nbound 1\neq 1 | -2\n").unwrap();
    let o = aggcvx(&["oracle", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("status infeasible"));
}

#[test]
fn partition_info_lists_blocks() {
    let o = aggcvx(&["partition-info", fixture("lp.txt").to_str().unwrap(), "-N", "2", "-M", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("block 0"));
    assert!(out.contains("block 1"));
    assert!(out.contains("subvector 1"));
}

#[test]
fn errors_exit_one() {
    let bad_cfg = tmp("bad.cfg");
    std::fs::write(&bad_cfg, "rhoo = 1\n").unwrap();
    let o = aggcvx(&["solve", fixture("lp.txt").to_str().unwrap(), "--config", bad_cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown key"));

    let bad = tmp("bad.txt");
    std::fs::write(&bad, "dimension 1\ndimension 1\ncost 1\nbound 1\n").unwrap();
    let o = aggcvx(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"));

    let o = aggcvx(&["solve", "/nonexistent/problem.txt"]);
    assert_eq!(o.status.code(), Some(1));
}
