use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vpflow::commands::{CHECKS_FILE, LEAVES_FILE, OUTCOME_FILE, SNAPSHOT_FILE, STABILITY_FILE, SWEEP_FILE, TRAJECTORY_FILE};
use vpflow::grid::max_abs;
use vpflow::io::{parse_leaf_csv, parse_sweep_csv, read_trajectory, FieldFile, OutcomeSummary};

fn vpflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpflow")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn text(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn key<'a>(body: &'a str, k: &str) -> &'a str {
    body.lines()
        .find_map(|l| l.strip_prefix(&format!("{k}=")))
        .unwrap_or_else(|| panic!("no {k} in {body}"))
}

#[test]
fn foliate_fuchsian_leaves() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fol");
    let args = ["foliate", "--nx", "16", "--ny", "16", "--r-min", "-2", "--r-max", "2", "--r-count", "9", "--out", out.to_str().unwrap()];
    let o = vpflow(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = text(&out, LEAVES_FILE);
    let rows = parse_leaf_csv(&first).unwrap();
    assert_eq!(rows.len(), 9);
    for row in &rows {
        assert!((row.h_direct - 2.0 * row.r.tanh()).abs() < 1e-12);
        assert!((row.h_formula.unwrap() - row.h_direct).abs() < 1e-12);
        let area = 4.0 * std::f64::consts::PI.powi(2) * row.r.cosh().powi(2);
        assert!((row.area - area).abs() < 1e-9 * area);
    }
    assert_eq!(code(&vpflow(&args)), 0);
    assert_eq!(first, text(&out, LEAVES_FILE));
}

#[test]
fn foliate_zero_trace_area_is_least_at_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fol");
    let o = vpflow(&[
        "foliate", "--gen", "fourier-bump", "--amp", "0.4", "--seed", "11", "--zero-mean-trace", "--nx", "24", "--ny", "24",
        "--r-min", "-1", "--r-max", "1", "--r-count", "21", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_leaf_csv(&text(&out, LEAVES_FILE)).unwrap();
    let best = rows.iter().min_by(|a, b| a.area.total_cmp(&b.area)).unwrap();
    assert!(best.r.abs() < 1e-12, "area minimised at r={}", best.r);
    assert!(rows.iter().all(|r| r.mu_max < 1.0 && r.mu_min > -1.0));
}

#[test]
fn flow_then_check_and_stability() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = vpflow(&["flow", "--nx", "32", "--ny", "32", "--r", "0.6", "--perturb", "0.1", "--eps-converge", "1e-7", "--record-every", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = OutcomeSummary::parse(&text(&out, OUTCOME_FILE)).unwrap();
    assert_eq!(summary.status.to_string(), "converged");
    let c = summary.c_limit.unwrap();
    assert!(summary.max_volume_drift < 1e-6);
    let hist = read_trajectory(&out.join(TRAJECTORY_FILE)).unwrap();
    assert!(hist.len() > 10);
    assert!((hist.last().unwrap().h - c).abs() < 1e-14);

    // the sine perturbation already leaves the zero-width band of a Fuchsian chart
    let o = vpflow(&["check", "--run", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    let checks = text(&out, CHECKS_FILE);
    assert_eq!(checks.lines().count(), 6);
    for line in checks.lines() {
        let expected = if line.starts_with("check=height-band") { "status=fail" } else { "status=pass" };
        assert!(line.contains(expected), "{checks}");
    }
    let o = vpflow(&["check", "--run", out.to_str().unwrap(), "--checks", "volume-drift,eq-h"]);
    assert_eq!(code(&o), 0);
    assert_eq!(text(&out, CHECKS_FILE).lines().count(), 2);

    let stab = tmp.path().join("stab");
    let o = vpflow(&["stability", "--run", out.to_str().unwrap(), "--out", stab.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let body = text(&stab, STABILITY_FILE);
    assert_eq!(key(&body, "operator"), "hyperbolic");
    assert_eq!(key(&body, "strictly_stable"), "true");
    let lambda: f64 = key(&body, "lambda_min").parse().unwrap();
    assert!(lambda > 0.0 && lambda < 3.0);
    assert_eq!(key(&body, "rate_check"), "pass");
}

#[test]
fn stationary_leaf_and_unfinished_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let leaf = tmp.path().join("leaf");
    let o = vpflow(&["flow", "--nx", "8", "--ny", "8", "--r", "1", "--out", leaf.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = OutcomeSummary::parse(&text(&leaf, OUTCOME_FILE)).unwrap();
    assert_eq!(s.steps, 0);
    assert!((s.c_limit.unwrap() - 2.0 * 1.0_f64.tanh()).abs() < 1e-12);

    let short = tmp.path().join("short");
    let o = vpflow(&["flow", "--nx", "8", "--ny", "8", "--perturb", "0.1", "--t-max", "0.01", "--out", short.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(OutcomeSummary::parse(&text(&short, OUTCOME_FILE)).unwrap().status.to_string(), "t_max_reached");
}

#[test]
fn resume_matches_straight_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let common = ["--nx", "16", "--ny", "16", "--r", "0.3", "--perturb", "0.1", "--dt-init", "0.01", "--record-every", "3", "--checkpoint-every", "2"];
    let run = |dir: &Path, extra: &[&str]| {
        let mut args = vec!["flow"];
        args.extend_from_slice(&common);
        args.extend_from_slice(&["--out", dir.to_str().unwrap()]);
        args.extend_from_slice(extra);
        vpflow(&args)
    };
    assert_eq!(code(&run(&a, &["--t-max", "0.6"])), 2);
    assert_eq!(code(&run(&b, &["--t-max", "0.3"])), 2);
    let o = vpflow(&["flow", "--resume", "--t-max", "0.6", "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let (sa, sb) = (FieldFile::read(&a.join(SNAPSHOT_FILE)).unwrap(), FieldFile::read(&b.join(SNAPSHOT_FILE)).unwrap());
    assert!((sa.scalar("t").unwrap() - sb.scalar("t").unwrap()).abs() < 1e-12);
    assert!(max_abs(&(sa.field("u").unwrap() - sb.field("u").unwrap())) < 1e-13);
    let (ha, hb) = (read_trajectory(&a.join(TRAJECTORY_FILE)).unwrap(), read_trajectory(&b.join(TRAJECTORY_FILE)).unwrap());
    assert!(hb.windows(2).all(|w| w[1].t > w[0].t));
    assert!((ha.last().unwrap().area - hb.last().unwrap().area).abs() < 1e-12);
}

#[test]
fn check_reports_missing_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = vpflow(&["check", "--run", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("config.txt"));
    let o = vpflow(&["flow", "--resume", "--out", tmp.path().join("nothing").to_str().unwrap()]);
    assert_eq!(code(&o), 5);
}

#[test]
fn coarse_implicit_steps_fail_the_volume_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("coarse");
    let o = vpflow(&[
        "flow", "--nx", "16", "--ny", "16", "--r", "0.5", "--perturb", "0.3", "--scheme", "semi-implicit", "--dt-init", "0.5",
        "--t-max", "5", "--out", out.to_str().unwrap(),
    ]);
    assert!(matches!(code(&o), 0 | 2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = vpflow(&["check", "--run", out.to_str().unwrap(), "--checks", "volume-drift,area-monotone"]);
    assert_eq!(code(&o), 1);
    let checks = text(&out, CHECKS_FILE);
    assert!(checks.lines().next().unwrap().contains("check=volume-drift status=fail"), "{checks}");
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let out = tmp.path().join("fol");
    fs::write(&cfg, format!("# leaves\nnx=8\nny=8\nr=0.25\nout={}\n", out.display())).unwrap();
    let o = vpflow(&["foliate", "--config", cfg.to_str().unwrap(), "--r", "-0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_leaf_csv(&text(&out, LEAVES_FILE)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].r, -0.5);
    fs::write(&cfg, "nx=8\nwidth=3\n").unwrap();
    assert_eq!(code(&vpflow(&["foliate", "--config", cfg.to_str().unwrap()])), 4);
}

#[test]
fn invalid_inputs_exit_with_input_error() {
    assert_eq!(code(&vpflow(&["foliate", "--gen", "sphere"])), 4);
    assert_eq!(code(&vpflow(&["foliate", "--nx", "0"])), 4);
    assert_eq!(code(&vpflow(&["flow", "--cfl-safety", "2"])), 4);
    assert_eq!(code(&vpflow(&["foliate", "--gen", "constant-lambda", "--lam1", "1.5"])), 4);
}

#[test]
fn sweeps_land_in_their_bands() {
    let tmp = tempfile::tempdir().unwrap();
    for (name, gen) in [("fuchsian", &["--gen", "fuchsian"][..]), ("bump", &["--gen", "fourier-bump", "--amp", "0.3", "--seed", "2"][..])] {
        let out = tmp.path().join(name);
        let mut args = vec!["sweep", "--nx", "12", "--ny", "12", "--r-min", "-1", "--r-max", "1", "--r-count", "3", "--perturb", "0.05", "--eps-converge", "1e-6", "--jobs", "2", "--out", out.to_str().unwrap()];
        args.extend_from_slice(gen);
        let o = vpflow(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let rows = parse_sweep_csv(&text(&out, SWEEP_FILE)).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.windows(2).all(|w| w[0].r < w[1].r));
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row.status, "converged");
            let c = row.c.unwrap();
            assert!(c >= row.lower - 1e-2 && c <= row.upper + 1e-2, "{name}: {row:?}");
            assert!(row.lambda_min.unwrap() > 0.0);
            assert!(out.join(format!("row_{k:03}")).join(OUTCOME_FILE).is_file());
        }
        let cs: Vec<f64> = rows.iter().map(|r| r.c.unwrap()).collect();
        assert!(cs[0] < cs[1] && cs[1] < cs[2]);
    }
}
