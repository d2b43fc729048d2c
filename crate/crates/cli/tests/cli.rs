use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fidreg::cloud::{Point, PointCloud};
use fidreg::{io, se3_ominus, Pose};
use serde_json::Value;

fn fidreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fidreg")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fidreg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    fidreg(args).status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate_wall(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--preset", "wall", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_register_eval_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let sim = t.path().join("sim");
    // the map in the same directory must not be taken for a scan
    simulate_wall(&sim, &["--map-spacing", "0.05"]);
    for f in ["scan_000.ply", "scan_001.ply", "ground_truth.json", "scene.json", "map.ply"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let (poses, report, merged, det) =
        (t.path().join("poses.txt"), t.path().join("report.json"), t.path().join("merged.ply"), t.path().join("det.jsonl"));
    ok(&[
        "register",
        "--scans",
        p(&sim),
        "--marker-size",
        "0.5",
        "--out",
        p(&poses),
        "--report",
        p(&report),
        "--merged",
        p(&merged),
        "--detections",
        p(&det),
    ]);
    let est = io::read_poses(&poses).unwrap();
    let gt: Value = serde_json::from_str(&fs::read_to_string(sim.join("ground_truth.json")).unwrap()).unwrap();
    let truth: Vec<Pose> = serde_json::from_value(gt["poses"].clone()).unwrap();
    let rel = truth[0].inverse() * truth[1];
    assert!(se3_ominus(&est[1].unwrap(), &rel).norm() < 0.02);
    assert!(se3_ominus(&est[0].unwrap(), &Pose::identity()).norm() < 1e-6);

    let rep: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["final_cost"].as_f64().unwrap() <= rep["initial_cost"].as_f64().unwrap());
    assert_eq!(rep["markers"].as_array().unwrap().len(), 3);
    assert_eq!(rep["e_pp"].as_array().unwrap().len(), 6);
    assert!(rep["unreachable"].as_array().unwrap().is_empty());
    assert_eq!(fs::read_to_string(&det).unwrap().lines().count(), 6);
    let scans: usize = (0..2).map(|i| io::read_ply(&sim.join(format!("scan_{i:03}.ply"))).unwrap().len()).sum();
    assert_eq!(io::read_ply(&merged).unwrap().len(), scans);

    let (eval, plots) = (t.path().join("eval.json"), t.path().join("plots"));
    let table = ok(&["eval", "--poses", p(&poses), "--truth", p(&sim.join("ground_truth.json")), "--report", p(&eval), "--plots", p(&plots)]);
    assert!(table.contains("RMSE_T"));
    let ev: Value = serde_json::from_str(&fs::read_to_string(&eval).unwrap()).unwrap();
    assert!(ev["rmse_t"].as_f64().unwrap() < 0.02);
    assert_eq!(ev["registration_recall"].as_f64(), Some(1.0));
    let recall = ev["recall"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&recall));
    let overlap = ev["overlap"][0]["rate"].as_f64().unwrap();
    assert!(overlap > 0.5 && overlap <= 1.0);
    assert!(plots.join("trajectory.svg").exists() && plots.join("error_histogram.svg").exists());
}

#[test]
fn outputs_are_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    simulate_wall(&a, &["--seed", "9"]);
    simulate_wall(&b, &["--seed", "9"]);
    for f in ["scan_000.ply", "scan_001.ply", "ground_truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let run = |name: &str| {
        let (poses, report) = (t.path().join(format!("{name}.txt")), t.path().join(format!("{name}.json")));
        ok(&["register", "--scans", p(&a), "--marker-size", "0.5", "--out", p(&poses), "--report", p(&report)]);
        (fs::read(poses).unwrap(), fs::read(report).unwrap())
    };
    assert_eq!(run("r1"), run("r2"));
}

#[test]
fn detect_and_locate_map() {
    let t = tempfile::tempdir().unwrap();
    let sim = t.path().join("sim");
    simulate_wall(&sim, &["--map-spacing", "0.01"]);
    let det = t.path().join("det.jsonl");
    ok(&["detect", "--scans", p(&sim.join("scan_000.ply")), "--marker-size", "0.5", "--out", p(&det)]);
    let ids: Vec<u64> = fs::read_to_string(&det)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].as_u64().unwrap())
        .collect();
    assert_eq!(ids.len(), 3);

    let (loc, cands) = (t.path().join("loc.jsonl"), t.path().join("cands"));
    let out = ok(&[
        "locate-map",
        "--map",
        p(&sim.join("map.ply")),
        "--marker-size",
        "0.5",
        "--out",
        p(&loc),
        "--dump-candidates",
        p(&cands),
    ]);
    assert!(out.contains("[4, 17, 31]"), "{out}");
    let recs: Vec<Value> = fs::read_to_string(&loc).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r["lambda"].is_number() && r["corners_3d"].as_array().unwrap().len() == 4));
    let c: Vec<Value> = serde_json::from_str(&fs::read_to_string(cands.join("candidates.json")).unwrap()).unwrap();
    assert!(c.len() >= 3);
    assert!(c.iter().filter_map(|c| c["image"].as_str()).all(|f| cands.join(f).exists()));
}

#[test]
fn config_file_is_applied() {
    let t = tempfile::tempdir().unwrap();
    let sim = t.path().join("sim");
    simulate_wall(&sim, &[]);
    let cfg = t.path().join("settings.conf");
    fs::write(&cfg, "# anchor the second scan\nanchor = 1\nsecond_graph = false\n").unwrap();
    let (poses, report) = (t.path().join("poses.txt"), t.path().join("report.json"));
    ok(&["register", "--config", p(&cfg), "--scans", p(&sim), "--marker-size", "0.5", "--out", p(&poses), "--report", p(&report)]);
    let rep: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["anchor"], 1);
    assert_eq!(rep["iterations"], 0);
    assert_eq!(io::read_poses(&poses).unwrap()[1], Some(Pose::identity()));
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("x.txt");
    // validation errors
    assert_eq!(code(&["register", "--scans", "/nonexistent.ply", "--marker-size", "0.5", "--out", p(&out)]), 2);
    assert_eq!(code(&["detect", "--scans", "a.ply", "--marker-size", "0", "--out", p(&out)]), 2);
    assert_eq!(code(&["simulate", "--out", p(&out)]), 2);
    let bad = t.path().join("bad.conf");
    fs::write(&bad, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&["simulate", "--preset", "wall", "--config", p(&bad), "--out", p(&t.path().join("s"))]), 2);

    // pipeline errors: two scans of a bare wall have no markers
    let bare: PointCloud = (0..40).flat_map(|i| (0..40).map(move |j| Point::new(3.0, i as f64 * 0.02, j as f64 * 0.02, 80.0))).collect();
    let (s0, s1) = (t.path().join("s0.ply"), t.path().join("s1.ply"));
    io::write_ply(&s0, &bare).unwrap();
    io::write_ply(&s1, &bare).unwrap();
    assert_eq!(code(&["register", "--scans", p(&s0), p(&s1), "--marker-size", "0.5", "--out", p(&out)]), 3);
}

#[test]
fn strict_rejects_disconnected_scans() {
    let t = tempfile::tempdir().unwrap();
    let sim = t.path().join("sim");
    simulate_wall(&sim, &[]);
    let bare: PointCloud = (0..40).flat_map(|i| (0..40).map(move |j| Point::new(3.0, i as f64 * 0.02, j as f64 * 0.02, 80.0))).collect();
    let extra = t.path().join("bare.ply");
    io::write_ply(&extra, &bare).unwrap();
    let out = t.path().join("poses.txt");
    let (s0, s1) = (sim.join("scan_000.ply"), sim.join("scan_001.ply"));
    let scans = [p(&s0), p(&s1), p(&extra)];
    let mut args = vec!["register", "--scans"];
    args.extend_from_slice(&scans);
    args.extend_from_slice(&["--marker-size", "0.5", "--out", p(&out)]);
    let stdout = ok(&args);
    assert!(stdout.contains("unreachable scans: [2]"));
    assert_eq!(io::read_poses(&out).unwrap().len(), 2);
    args.push("--strict");
    assert_eq!(code(&args), 3);
}
