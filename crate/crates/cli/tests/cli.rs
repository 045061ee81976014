use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn spinewalk(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinewalk")).args(args).env("SPINEWALK_OUT", out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn csv_rows(p: impl AsRef<Path>) -> usize {
    read(p).lines().count() - 1
}

#[test]
fn simulate_writes_log_and_summary_deterministically() {
    let out = tempfile::tempdir().unwrap();
    let args = ["simulate", "--gait", "walk", "--strategy", "fixed", "--vx", "0.3", "--duration", "3", "--seed", "4"];
    let a = spinewalk(out.path(), &[&args[..], &["--output", "a"]].concat());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = spinewalk(out.path(), &[&args[..], &["--output", "b"]].concat());
    assert_eq!(code(&b), 0);
    let summary: serde_json::Value = serde_json::from_str(&read(out.path().join("a/summary.json"))).unwrap();
    assert_eq!(summary["stable"], true);
    assert!(summary["cot"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["gait"], "walk");
    let log_a = std::fs::read(out.path().join("a/log.csv")).unwrap();
    assert_eq!(log_a, std::fs::read(out.path().join("b/log.csv")).unwrap());
    assert_eq!(read(out.path().join("a/summary.json")), read(out.path().join("b/summary.json")));
}

#[test]
fn config_file_with_missing_model_fails_cleanly() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("exp.toml");
    std::fs::write(&cfg, "model = \"missing.toml\"\ngait = \"walk\"\noutput = \"run\"\n").unwrap();
    let o = spinewalk(out.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.path().join("run").exists());
    let o = spinewalk(out.path(), &["simulate", "--gait", "gallop"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn config_file_drives_simulate() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("exp.toml");
    let model = repo().join("configs/model.toml");
    std::fs::write(
        &cfg,
        format!("model = {:?}\ngait = \"trot\"\nstrategy = \"time_opt\"\nduration = 3.0\noutput = \"trot\"\n[command]\nvx = 0.6\n", model),
    )
    .unwrap();
    let o = spinewalk(out.path(), &["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&read(out.path().join("trot/summary.json"))).unwrap();
    assert_eq!(summary["strategy"], "time_opt");
    assert_eq!(summary["command"]["vx"], 0.6);
}

#[test]
fn sweep_writes_curves_and_transition() {
    let out = tempfile::tempdir().unwrap();
    let o = spinewalk(
        out.path(),
        &["sweep", "--gaits", "walk,trot", "--strategies", "fixed", "--velocities", "0.2,0.3,0.4", "--duration", "3", "--output", "s"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.path().join("s");
    assert_eq!(csv_rows(dir.join("cot_walk_fixed.csv")), 3);
    assert_eq!(csv_rows(dir.join("cot_trot_fixed.csv")), 3);
    // A fixed spine draws no power, so both curves agree.
    assert_eq!(read(dir.join("curve_walk_fixed.csv")), read(dir.join("curve_walk_fixed_nospine.csv")));
    let t: serde_json::Value = serde_json::from_str(&read(dir.join("transition_fixed.json"))).unwrap();
    assert_eq!(t["strategy"], "fixed");
    assert!(t["velocity"].is_f64() || t["error"].is_string());
}

#[test]
fn transition_on_fixture_curves() {
    let out = tempfile::tempdir().unwrap();
    let f = repo().join("fixtures/transition");
    let o = spinewalk(
        out.path(),
        &["transition", "--walk", f.join("walk_fixed.csv").to_str().unwrap(), "--trot", f.join("trot_fixed.csv").to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value = serde_json::from_str(&read(out.path().join("transition/transition.json"))).unwrap();
    assert!((t["velocity"].as_f64().unwrap() - 0.2415).abs() < 1e-3);
    assert_eq!(t["trot_cheaper_above"], true);

    let same = f.join("walk_fixed.csv");
    let o = spinewalk(out.path(), &["transition", "--walk", same.to_str().unwrap(), "--trot", same.to_str().unwrap()]);
    assert_eq!(code(&o), 6);
    let o = spinewalk(out.path(), &["transition", "--walk", "/nonexistent.csv", "--trot", same.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn hildebrand_from_a_simulated_log() {
    let out = tempfile::tempdir().unwrap();
    let o = spinewalk(out.path(), &["simulate", "--gait", "trot", "--strategy", "fixed", "--duration", "3", "--output", "run"]);
    assert_eq!(code(&o), 0);
    let log = out.path().join("run/log.csv");
    let o = spinewalk(out.path(), &["hildebrand", "--log", log.to_str().unwrap(), "--bins", "12", "--cell", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = std::fs::read(out.path().join("hildebrand/hildebrand.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n48 36\n255\n"));
    assert!(read(out.path().join("hildebrand/hildebrand.svg")).starts_with("<svg"));
    let j: serde_json::Value = serde_json::from_str(&read(out.path().join("hildebrand/hildebrand.json"))).unwrap();
    let c = j["consistency"].as_f64().unwrap();
    assert!((0.0..0.5).contains(&c), "consistency {c}");
    let o = spinewalk(out.path(), &["hildebrand", "--log", log.to_str().unwrap(), "--bins", "4"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn optimize_small_grid() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "duration = 2.5\n[grid]\nstrategy = \"time_opt\"\ngait = \"walk\"\n[[grid.axis]]\nname = \"c3\"\nmin = 4.0\nmax = 8.0\nsteps = 2\n",
    )
    .unwrap();
    let o = spinewalk(out.path(), &["optimize", "--config", cfg.to_str().unwrap(), "--output", "opt"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out.path().join("opt");
    assert_eq!(csv_rows(dir.join("candidates.csv")), 2);
    let preset = read(dir.join("preset.toml"));
    assert!(preset.contains("[time_opt.walk]"), "{preset}");
    let top: serde_json::Value = serde_json::from_str(&read(dir.join("top.json"))).unwrap();
    assert_eq!(top.as_array().unwrap().len(), 2);

    std::fs::write(&cfg, "[grid]\nstrategy = \"time_opt\"\ngait = \"walk\"\n[[grid.axis]]\nname = \"c9\"\nmin = 0.0\nmax = 1.0\nsteps = 2\n")
        .unwrap();
    let o = spinewalk(out.path(), &["optimize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn score_fixture_report() {
    let out = tempfile::tempdir().unwrap();
    let votes = repo().join("fixtures/study/votes.csv");
    let run = |dir: &str| spinewalk(out.path(), &["score", "--votes", votes.to_str().unwrap(), "--output", dir]);
    assert_eq!(code(&run("a")), 0);
    assert_eq!(code(&run("b")), 0);
    for f in ["report.json", "breakdown.csv", "dropped.txt"] {
        assert_eq!(read(out.path().join("a").join(f)), read(out.path().join("b").join(f)), "{f}");
    }
    assert_eq!(read(out.path().join("a/dropped.txt")), "p50\n");
    let r: serde_json::Value = serde_json::from_str(&read(out.path().join("a/report.json"))).unwrap();
    assert!((r["interact_match_rate"].as_f64().unwrap() - 0.9773).abs() < 1e-4);
    assert_eq!(r["kept_records"], 882);
    // 4 pooled rows plus 4 per gait.
    assert_eq!(csv_rows(out.path().join("a/breakdown.csv")), 16);
}

#[test]
fn score_rejects_empty_and_malformed_votes() {
    let out = tempfile::tempdir().unwrap();
    let empty = out.path().join("empty.csv");
    std::fs::write(&empty, "participant,video,gait,shown_1,shown_2,shown_3,most_natural,least_natural,most_interact\n").unwrap();
    assert_eq!(code(&spinewalk(out.path(), &["score", "--votes", empty.to_str().unwrap()])), 6);
    let bad = out.path().join("bad.csv");
    std::fs::write(
        &bad,
        "participant,video,gait,shown_1,shown_2,shown_3,most_natural,least_natural,most_interact\np1,v1,walk,fixed,stiffness,time_opt,time_real,fixed,fixed\n",
    )
    .unwrap();
    let o = spinewalk(out.path(), &["score", "--votes", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!out.path().join("study").exists());
}
