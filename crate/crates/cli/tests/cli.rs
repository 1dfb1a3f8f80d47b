use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entinav::edm::PUBLISHED_MATRIX;
use entinav::io::read_matrix;
use entinav::scenarios::parse_report;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entinav"))
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    workspace().join("crates/core/scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn fit_edm_recovers_published_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/synthetic_points.csv");
    let out = run(&["fit-edm", "--scenario", data.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    ok(&out);
    let m = read_matrix(std::io::BufReader::new(std::fs::File::open(dir.path().join("matrix.txt")).unwrap())).unwrap();
    for r in 0..4 {
        for c in 0..4 {
            assert!((m[r][c] - PUBLISHED_MATRIX[r][c]).abs() <= 1e-6, "entry ({r},{c}) = {}", m[r][c]);
        }
    }
}

#[test]
fn intervene_avoids_intrusions() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "intervene",
        "--scenario",
        scenario("canonical_intervention.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--no-timing",
    ]);
    ok(&out);
    let report = parse_report(&std::fs::read_to_string(dir.path().join("report.txt")).unwrap()).unwrap();
    assert!(report.intrusions_avoided.unwrap() >= 2, "{report:?}");
    assert!(dir.path().join("trajectories.tsv").exists());
    assert!(dir.path().join("baseline_trajectories.tsv").exists());
}

#[test]
fn simulate_with_same_seed_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "simulate",
            "--scenario",
            scenario("iitf1_analogue.toml").to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            dir.path().to_str().unwrap(),
            "--no-timing",
        ]);
        ok(&out);
    }
    for file in ["trajectories.tsv", "report.txt"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn validation_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "mode = \"surveillance\"\n[world]\nbounds = [-5.0, -5.0, 5.0, 5.0]\n[robots]\ncount = 1\nstarts = [[0.0, 0.0]]\ngoals = [[1.0, 0.0]]\n[robots.params]\nneighbor_dist = 5.0\nradius = 0.7\npref_speed = 3.0\ngroup_cohesion = 0.5\n",
    )
    .unwrap();
    let out = run(&["surveil", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("robots.params.pref_speed"), "{err}");

    let out = run(&[
        "intervene",
        "--scenario",
        scenario("canonical_intervention.toml").to_str().unwrap(),
        "--s-min",
        "1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_1_and_runtime_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let missing = run(&["simulate", "--scenario", "/definitely/not/here.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn bad_thread_setting_is_rejected() {
    let out = bin()
        .env("ENTINAV_THREADS", "many")
        .args(["simulate", "--scenario", scenario("circle8.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn predict_and_export_read_emitted_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&run(&["simulate", "--scenario", scenario("iitf1_analogue.toml").to_str().unwrap(), "--out", d, "--no-timing"]));
    let traj = dir.path().join("trajectories.tsv");

    let pred_dir = dir.path().join("pred");
    ok(&run(&["predict", "--scenario", traj.to_str().unwrap(), "--out", pred_dir.to_str().unwrap()]));
    let pred = entinav::io::read_trajectories(std::io::BufReader::new(std::fs::File::open(pred_dir.join("prediction.tsv")).unwrap())).unwrap();
    assert_eq!(pred.len(), 15);
    assert!(pred.iter().all(|t| t.samples.len() == 30));

    let plot_dir = dir.path().join("plot");
    ok(&run(&["export-plot-data", "--scenario", traj.to_str().unwrap(), "--out", plot_dir.to_str().unwrap()]));
    let table = std::fs::read_to_string(plot_dir.join("plot_data.tsv")).unwrap();
    let mut lines = table.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split('\t').count(), 1 + 2 * 18);
    assert_eq!(lines.count(), 451);
}

#[test]
fn study_stats_reports_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("responses.csv");
    let mut text = String::from(entinav::io::RESPONSES_HEADER);
    text.push('\n');
    let labels = [
        "neighbor_dist,min",
        "neighbor_dist,max",
        "radius,min",
        "radius,max",
        "pref_speed,min",
        "pref_speed,max",
        "group_cohesion,min",
        "group_cohesion,max",
    ];
    for p in 1..=6 {
        for (i, label) in labels.iter().enumerate() {
            let x = ((p + i) % 5) as i32 - 2;
            text.push_str(&format!("{p},{},{label},{x},{},{x},{}\n", i + 1, -x, -x));
        }
    }
    std::fs::write(&csv, text).unwrap();
    let out = run(&["study-stats", "--scenario", csv.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    ok(&out);
    let report = std::fs::read_to_string(dir.path().join("study_stats.txt")).unwrap();
    let alpha_line = report.lines().find(|l| l.starts_with("cronbach_alpha")).unwrap();
    let alpha: f64 = alpha_line.split('\t').nth(1).unwrap().parse().unwrap();
    assert!((alpha - 1.0).abs() < 1e-9, "{report}");
    assert!(report.contains("reversed\tcreepiness,unnerving"), "{report}");
}
