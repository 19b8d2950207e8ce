use std::path::Path;
use std::process::{Command, Output};

use orsense::metrics::CSV_HEADER;
use orsense::scene::GroundTruthScene;
use orsense::trace::Trace;

fn orsense(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orsense")).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gen_run_snapshot_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = orsense(&["gen", "--seed", "3", "--size", "large", "--obstacles", "6", "-o", "scene.toml"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let gt = GroundTruthScene::load(d.join("scene.toml")).unwrap();
    assert_eq!(gt.objects.len(), 7);
    assert_eq!(gt.seed, 3);

    let o = orsense(&["gen", "--seed", "3", "--size", "large", "--obstacles", "6"], d);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), std::fs::read_to_string(d.join("scene.toml")).unwrap());

    let o = orsense(&["run", "--scene", "scene.toml", "--seed", "1", "--trace", "t.jsonl", "--snapshot", "end.png"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["seed"], 1);
    assert!(d.join("end.png").exists());
    let trace = Trace::load(d.join("t.jsonl")).unwrap();
    let views = trace.viewpoint_count();
    assert!(views > 0);

    let o = orsense(&["snapshot", "t.jsonl", "--step", "1", "-o", "one.png"], d);
    assert_eq!(code(&o), 0);
    let o = orsense(&["snapshot", "scene.toml", "-o", "gt.png"], d);
    assert_eq!(code(&o), 0);
    let img = image::open(d.join("gt.png")).unwrap();
    assert_eq!(img.width(), 50 * orsense::snapshot::CELL_PIXELS);

    let bad = (views + 1).to_string();
    let o = orsense(&["snapshot", "t.jsonl", "--step", &bad, "-o", "x.png"], d);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
    assert!(!d.join("x.png").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&orsense(&["frobnicate"], d)), 1);
    assert_eq!(code(&orsense(&["run", "--mode", "XYZ"], d)), 1);
    assert_eq!(code(&orsense(&["gen", "--branching", "0"], d)), 1);
    assert_eq!(code(&orsense(&["run", "--scene", "missing.toml"], d)), 2);
    std::fs::write(d.join("broken.toml"), "grid = 3").unwrap();
    assert_eq!(code(&orsense(&["run", "--scene", "broken.toml"], d)), 2);
    assert_eq!(code(&orsense(&["--help"], d)), 0);
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.toml"), "[generator]\nvoxel_size = 0.025\n").unwrap();
    let o = orsense(&["gen", "--config", "c.toml"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let coarse: toml::Value = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let o = orsense(&["gen", "--config", "c.toml", "--voxel-size", "0.02"], d);
    let fine: toml::Value = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_ne!(coarse["grid"], fine["grid"]);
}

#[test]
fn small_bench_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = orsense(&["bench", "--seeds", "2", "--modes", "MAS/OR,IAS/OR", "--workers", "2", "--out", "b"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("b/metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(std::fs::read_dir(d.join("b/traces")).unwrap().count(), 4);
    assert!(d.join("b/traces/s000_MAS_OR.jsonl").exists());
    let results = std::fs::read_to_string(d.join("b/results.jsonl")).unwrap();
    assert_eq!(results.lines().count(), 4);
    assert!(d.join("b/manifest.toml").exists() && d.join("b/config.toml").exists());

    // The written manifest and config reproduce the run.
    let o2 = orsense(&["bench", "--manifest", "b/manifest.toml", "--config", "b/config.toml", "--out", "c"], d);
    assert_eq!(code(&o2), 0);
    for t in std::fs::read_dir(d.join("b/traces")).unwrap() {
        let name = t.unwrap().file_name();
        let a = std::fs::read(d.join("b/traces").join(&name)).unwrap();
        let b = std::fs::read(d.join("c/traces").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?}");
    }
}
