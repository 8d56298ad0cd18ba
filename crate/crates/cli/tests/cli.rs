use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use flowdmd::io::{write_rasters, RasterMeta, ARROW_HEADER};
use flowdmd::testdata::{advection_snapshots, AdvectionSpec};
use flowdmd::SnapshotSet;
use nalgebra::DMatrix;
use tempfile::TempDir;

fn flowdmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowdmd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = flowdmd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn advection_rasters(dir: &Path) -> PathBuf {
    let spec = AdvectionSpec::new(20);
    let set = advection_snapshots(&spec, 0.0, 0.1, 21).unwrap();
    let path = dir.join("adv.txt");
    write_rasters(&set, &path, &RasterMeta::default()).unwrap();
    path
}

fn metric(toml: &str, key: &str) -> f64 {
    toml.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .parse()
        .unwrap()
}

#[test]
fn stationary_data_gives_empty_arrow_file() {
    let tmp = TempDir::new().unwrap();
    let spec = AdvectionSpec::new(6);
    let grid = spec.grid().unwrap();
    let col: Vec<f64> = (0..36).map(|i| 1.0 + (i % 5) as f64).collect();
    let data = DMatrix::from_fn(36, 4, |i, _| col[i]);
    let set = SnapshotSet::new(data, 0.0, 0.5, Some(grid)).unwrap();
    let input = tmp.path().join("still.txt");
    write_rasters(&set, &input, &RasterMeta::default()).unwrap();
    let out = tmp.path().join("run");
    ok(&["flows", s(&input), "--vmax", "0.5", "--rank", "1", "--out", s(&out)]);
    let arrows = fs::read_to_string(out.join("arrows.txt")).unwrap();
    assert_eq!(arrows.trim_end(), ARROW_HEADER);
    let metrics = fs::read_to_string(out.join("metrics.toml")).unwrap();
    assert_eq!(metric(&metrics, "moved_mass"), 0.0);
}

#[test]
fn flows_are_deterministic_and_arrows_match_metrics() {
    let tmp = TempDir::new().unwrap();
    let input = advection_rasters(tmp.path());
    let run = |name: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "flows", s(&input), "--vmax", "0.8", "--rank", "10", "--aggregate", "2",
            "--reservoir", "auto", "--out", s(&out),
        ]);
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["plans.txt", "arrows.txt", "velocity.txt", "metrics.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"flows\""));
    assert!(manifest.contains("reservoir = \"auto\""));

    let arrows = fs::read_to_string(a.join("arrows.txt")).unwrap();
    let total: f64 = arrows
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(11).unwrap().parse::<f64>().unwrap())
        .sum();
    let metrics = fs::read_to_string(a.join("metrics.toml")).unwrap();
    let moved = metric(&metrics, "moved_mass");
    assert!(moved > 0.0);
    assert!((total - moved).abs() <= 1e-9 * moved, "{total} vs {moved}");

    let report = ok(&["errors", "--kind", "plan", s(&a), s(&b)]);
    assert!(report.contains("E 0e0"), "{report}");
}

#[test]
fn fit_reconstruct_and_dmd_error() {
    let tmp = TempDir::new().unwrap();
    let input = advection_rasters(tmp.path());
    let fitted = tmp.path().join("fit");
    ok(&["fit", s(&input), "--rank", "10", "--out", s(&fitted)]);
    let model = fitted.join("model.fdmd");
    assert!(model.exists());
    let report = fs::read_to_string(fitted.join("fit_report.txt")).unwrap();
    assert!(report.contains("rank 10"));
    assert!(report.contains("# index sigma cumulative_energy"));

    let recon = tmp.path().join("recon");
    ok(&["reconstruct", s(&model), "--dt-fine", "0.1", "--window", "0:1.5", "--out", s(&recon)]);
    let manifest = fs::read_to_string(recon.join("rasters.txt")).unwrap();
    assert!(manifest.contains("frame_count = 16"));

    let text = ok(&["errors", "--kind", "dmd", s(&input), s(&model)]);
    let e: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("E "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(e.is_finite() && e < 0.1, "{text}");

    // A model file is accepted as flow input.
    let out = tmp.path().join("from_model");
    ok(&["flows", s(&model), "--vmax", "0.8", "--reservoir", "auto", "--out", s(&out)]);
    assert!(out.join("plans.txt").exists());
}

#[test]
fn presence_error_report() {
    let tmp = TempDir::new().unwrap();
    let input = advection_rasters(tmp.path());
    let out = tmp.path().join("err");
    let text = ok(&["errors", "--kind", "presence", s(&input), "--rank", "4", "--out", s(&out)]);
    assert!(text.starts_with("kind presence"));
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), text);
    assert!(out.join("manifest.toml").exists());
}

#[test]
fn failures_exit_nonzero_with_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.txt");
    let out = flowdmd(&["fit", s(&missing), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(10));

    let out = flowdmd(&["fit", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = tmp.path().join("bad.txt");
    fs::write(&bad, "format = flowdmd-raster-1\nn_rows = two\n").unwrap();
    let out = flowdmd(&["fit", s(&bad), "--out", s(&tmp.path().join("y"))]);
    assert_eq!(out.status.code(), Some(11));

    let input = advection_rasters(tmp.path());
    let out = flowdmd(&[
        "flows", s(&input), "--vmax", "0.8", "--mode", "global", "--budget", "100",
        "--out", s(&tmp.path().join("z")),
    ]);
    assert_eq!(out.status.code(), Some(21));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("budget") && err.contains("hint"), "{err}");

    let out = flowdmd(&["errors", "--kind", "dmd", s(&input)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_local_step_suggests_reservoir() {
    let tmp = TempDir::new().unwrap();
    let grid = flowdmd::GridSpec::new(6, 6, 1.0, 1.0, [0.0, 0.0]).unwrap();
    // Mass jumps between opposite corners, farther than one cell per step.
    let mut data = DMatrix::zeros(36, 3);
    data[(0, 0)] = 1.0;
    data[(35, 1)] = 1.0;
    data[(0, 2)] = 1.0;
    let set = SnapshotSet::new(data, 0.0, 1.0, Some(grid)).unwrap();
    let input = tmp.path().join("jump.txt");
    write_rasters(&set, &input, &RasterMeta::default()).unwrap();

    let args = |dir: &Path, extra: &[&'static str]| {
        let mut v = vec!["flows".to_string(), s(&input).into(), "--vmax".into(), "0.5".into()];
        v.extend(["--rank", "2", "--out"].map(String::from));
        v.push(s(dir).into());
        v.extend(extra.iter().map(|x| x.to_string()));
        v
    };
    let strict = args(&tmp.path().join("strict"), &[]);
    let strict: Vec<&str> = strict.iter().map(String::as_str).collect();
    let out = flowdmd(&strict);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(21), "{err}");
    assert!(err.contains("--reservoir auto"), "{err}");

    let dir = tmp.path().join("auto");
    let relaxed = args(&dir, &["--reservoir", "auto"]);
    let relaxed: Vec<&str> = relaxed.iter().map(String::as_str).collect();
    ok(&relaxed);
    let metrics = fs::read_to_string(dir.join("metrics.toml")).unwrap();
    assert_eq!(metric(&metrics, "reservoir_steps"), 2.0);
    assert!((metric(&metrics, "unrouted_mass") - 2.0).abs() < 1e-9);
}
