use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lobsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobsim")).args(args).current_dir(cwd).output().expect("run lobsim")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A short TWAP scenario: 200 lots over 200 s, then 200 s of decay.
const SMALL_TWAP: &str = r#"
name = "small_twap"
seeds = [0, 1, 2, 3]
warmup_seconds = 50.0
trading_seconds = 400.0

[twap]
side = "buy"
quantity = 200
horizon = 200.0
window = 50.0
period = 1.0

[twap.start]
policy = "fixed"
at = 0.0
"#;

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_impact_and_report() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("small.toml"), SMALL_TWAP).unwrap();

    let o = lobsim(&["simulate", "--config", "small.toml", "--seeds", "0,1", "--out", "sim", "--quiet"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let sim = d.path().join("sim");
    for f in ["stats.csv", "episodes.csv", "summary.csv", "manifest.json", "config.toml", "events/seed_0.jsonl", "events/seed_1.jsonl"] {
        assert!(sim.join(f).is_file(), "{f} missing");
    }
    let stats = fs::read_to_string(sim.join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 3, "header plus one twap row per seed");

    let o = lobsim(&["impact", "--config", "small.toml", "--out", "imp", "--no-events", "--bins", "10", "--quiet"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let imp = d.path().join("imp");
    for f in ["impact_curve.csv", "decay.csv", "impact_fit.json"] {
        assert!(imp.join(f).is_file(), "{f} missing");
    }
    assert!(!imp.join("events").exists());
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("impact exponent"), "{out}");

    // report: deterministic, and plots carry the table data
    let o = lobsim(&["report", "--from", "imp", "--out", "r1"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lobsim(&["report", "--from", "imp", "--out", "r2"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let r1 = read_dir_sorted(&d.path().join("r1"));
    assert_eq!(r1, read_dir_sorted(&d.path().join("r2")));
    let names: Vec<&str> = r1.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["decay.svg", "impact_curve.svg", "report.md"]);
    let curve_rows = fs::read_to_string(imp.join("impact_curve.csv")).unwrap().lines().count() - 1;
    let svg = String::from_utf8(r1[1].1.clone()).unwrap();
    assert_eq!(svg.matches("<circle").count(), curve_rows);
    let md = String::from_utf8(r1[2].1.clone()).unwrap();
    assert!(md.contains("## Impact") && md.contains("## Summary"));
}

#[test]
fn report_validates_schema() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("impact_curve.csv"), "q,impct,extra\n1,0.1,2\n").unwrap();
    fs::write(d.path().join("decay.csv"), "z,impact,normalized\n1.1,0.2,abc\n").unwrap();
    let o = lobsim(&["report", "--from", "."], d.path());
    assert_eq!(o.status.code(), Some(5));
    let e = stderr(&o);
    assert!(e.starts_with("error[schema]"), "{e}");
    assert!(e.contains("impact_curve.csv: missing columns impact"), "{e}");
    assert!(e.contains("impact_curve.csv: unexpected columns impct, extra"), "{e}");
    assert!(e.contains("decay.csv: column `normalized` has non-numeric value `abc`"), "{e}");
    assert!(!d.path().join("report").exists(), "nothing written on validation failure");
}

#[test]
fn report_on_empty_dir() {
    let d = tempfile::tempdir().unwrap();
    let o = lobsim(&["report", "--from", "."], d.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("nothing to report"));
    assert!(!d.path().join("report").exists());
}

#[test]
fn error_categories() {
    let d = tempfile::tempdir().unwrap();
    let o = lobsim(&["simulate", "--bogus"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[usage]"));

    let o = lobsim(&["simulate", "--config", "missing.toml"], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[config]"));

    fs::write(d.path().join("bad.toml"), "name = 3\n").unwrap();
    let o = lobsim(&["simulate", "--config", "bad.toml"], d.path());
    assert_eq!(o.status.code(), Some(3));

    fs::write(d.path().join("small.toml"), SMALL_TWAP).unwrap();
    fs::write(d.path().join("afile"), "").unwrap();
    let o = lobsim(&["simulate", "--config", "small.toml", "--out", "afile/sub"], d.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[io]"));

    let o = lobsim(&["evaluate", "--checkpoint", "none.ckpt"], d.path());
    assert_eq!(o.status.code(), Some(3));

    let o = lobsim(&["simulate", "--config", "small.toml", "--seeds", "5..5"], d.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_evaluate() {
    let d = tempfile::tempdir().unwrap();
    let cfg = r#"
name = "tiny_frl"
seeds = [0]
warmup_seconds = 20.0
trading_seconds = 60.0

[hawkes]
volume_scale = 10.0

[rl]
mode = "frl"
period = 0.5

[twap]
side = "mixed"
quantity = 30
horizon = 30.0
window = 10.0
period = 1.0

[twap.start]
policy = "fixed"
at = 10.0

[training]
checkpoint_every = 2

[training.ppo]
episodes_per_update = 2
minibatch = 64
"#;
    fs::write(d.path().join("tiny.toml"), cfg).unwrap();
    let o = lobsim(&["train", "--config", "tiny.toml", "--episodes", "4", "--out", "tr", "--quiet"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let tr = d.path().join("tr");
    for f in ["policy.ckpt", "checkpoints/policy_ep00002.ckpt", "checkpoints/policy_ep00004.ckpt", "training_log.csv", "episode_returns.csv", "training.json"] {
        assert!(tr.join(f).is_file(), "{f} missing");
    }
    let o = lobsim(&["evaluate", "--config", "tiny.toml", "--checkpoint", "tr/policy.ckpt", "--episodes", "2", "--out", "ev", "--quiet"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(d.path().join("ev/sharpe_table.csv")).unwrap();
    let cells: Vec<String> = table.lines().skip(1).map(|l| l.split(',').take(2).collect::<Vec<_>>().join("/")).collect();
    assert_eq!(cells, ["before/buy", "before/sell", "during/buy", "during/sell"]);
    let o = lobsim(&["report", "--from", "ev"], d.path());
    assert!(o.status.success(), "{}", stderr(&o));

    // a rho-blind configuration rejects the rho-aware checkpoint
    let blind = cfg.replace("mode = \"frl\"", "mode = \"url\"");
    fs::write(d.path().join("blind.toml"), blind).unwrap();
    let o = lobsim(&["evaluate", "--config", "blind.toml", "--checkpoint", "tr/policy.ckpt", "--episodes", "1", "--out", "ev2"], d.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
