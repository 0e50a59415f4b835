use std::path::Path;
use std::process::Command;

fn explore() -> Command {
    Command::new(env!("CARGO_BIN_EXE_explore"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const EMPTY_ROOM: &str = "profile = fast\nworld_width = 8\nworld_height = 8\nobstacles_min = 0\nobstacles_max = 0\nstart_x = 4\nstart_y = 4\n";

#[test]
fn world_gen_then_show() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = dir.path().join("w.pgm");
    let out = explore().args(["world", "gen", "--seed", "3", "--out"]).arg(&pgm).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = explore().args(["world", "show", "--scale", "10"]).arg(&pgm).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().next().unwrap().chars().all(|c| c == '#'));
    assert!(text.contains("200 x 200 cells"));
}

#[test]
fn run_exports_artifacts_and_exits_zero_on_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "room.cfg", &format!("{EMPTY_ROOM}planner = frontier-astar\n"));
    let out_dir = dir.path().join("out");
    let out = explore().args(["run", "--seed", "1", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["entropy.csv", "path.csv", "cycles.csv", "map_final.pgm"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn budget_exhaustion_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "short.cfg", &format!("{EMPTY_ROOM}planner = nbv-greedy\ntime_budget = 1\n"));
    let out = explore().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("budget"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "planner = teleport\n");
    let out = explore().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("teleport"));
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "b.cfg", &format!("{EMPTY_ROOM}planners = frontier-greedy, nbv-greedy\n"));
    let out_dir = dir.path().join("bench");
    let out = explore()
        .args(["bench", "--seeds", "0..2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = std::fs::read_to_string(out_dir.join("bench_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 4);
    assert!(out_dir.join("bench_summary.csv").exists());
}
