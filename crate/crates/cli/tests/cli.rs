use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rhirl::config::RunConfig;

fn rhirl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rhirl"))
        .args(args)
        .env_remove("RHIRL_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Small double-integrator run rooted in `dir`.
fn small_config(dir: &Path, env: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"env = "{env}"
seed = 3
horizon = 12

[controller]
horizon = 4
samples = 8

[trainer]
episodes = 2
batch_size = 4
eval_every = 1

[demo]
count = 3
sanity_floor = -1e12

[eval]
episodes = 2
bound_horizons = [6, 12]
bound_episodes = 2
ablation_horizons = [2, 4]
ablation_budget = 2000
ablation_eval_points = 2

[paths]
demos = "{d}/demos.bin"
checkpoints = "{d}/ckpt.json"
reports = "{d}/reports"
{extra}
"#,
        d = dir.display()
    );
    let path = dir.join(format!("{env}.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert_eq!(n, 3);
}

#[test]
fn unknown_environment_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "moon-lander", "");
    let out = rhirl(&["gen-demos", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn missing_config_and_bad_flags_exit_2() {
    assert_eq!(code(&rhirl(&["train", "--config", "/nonexistent/x.toml"])), 2);
    assert_eq!(code(&rhirl(&["train", "--bogus"])), 2);
}

#[test]
fn sanity_floor_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "pendulum", "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("sanity_floor = -1e12", "sanity_floor = 0.0");
    fs::write(&cfg, text).unwrap();
    let out = rhirl(&["gen-demos", "--config", s(&cfg)]);
    assert_eq!(code(&out), 3);
    assert!(!dir.path().join("demos.bin").exists());
}

#[test]
fn foreign_demos_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let pend = small_config(dir.path(), "pendulum", "");
    ok(rhirl(&["gen-demos", "--config", s(&pend)]));
    let cart = small_config(dir.path(), "cartpole-swingup", "");
    let out = rhirl(&[
        "train",
        "--config",
        s(&cart),
        "--demos",
        s(&dir.path().join("demos.bin")),
    ]);
    assert_eq!(code(&out), 4);
    assert!(!dir.path().join("ckpt.json").exists());
}

#[test]
fn zero_episodes_writes_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "double-integrator", "");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("[trainer]\nepisodes = 2", "[trainer]\nepisodes = 0");
    fs::write(&cfg, text).unwrap();
    ok(rhirl(&["gen-demos", "--config", s(&cfg)]));
    ok(rhirl(&["train", "--config", s(&cfg)]));
    let ckpt = rhirl::trainer::Checkpoint::load(&dir.path().join("ckpt.json")).unwrap();
    assert_eq!(ckpt.episode, 0);
    assert_eq!(ckpt.env_steps, 0);
}

fn run_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg = small_config(dir, "double-integrator", "");
    ok(rhirl(&["gen-demos", "--config", s(&cfg)]));
    ok(rhirl(&["train", "--config", s(&cfg)]));
    ok(rhirl(&["eval", "--config", s(&cfg)]));
    ok(rhirl(&["eval-transfer", "--config", s(&cfg)]));
    ok(rhirl(&["check-bound", "--config", s(&cfg)]));
    ok(rhirl(&["ablate-k", "--config", s(&cfg)]));
    let mut files = vec![
        ("demos.bin".to_string(), fs::read(dir.join("demos.bin")).unwrap()),
        (
            "demos.bin.json".to_string(),
            fs::read(dir.join("demos.bin.json")).unwrap(),
        ),
        ("ckpt.json".to_string(), fs::read(dir.join("ckpt.json")).unwrap()),
    ];
    let mut reports: Vec<_> = fs::read_dir(dir.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    reports.sort();
    for p in reports {
        files.push((
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).unwrap(),
        ));
    }
    files
}

#[test]
fn every_command_reruns_byte_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = run_all(a.path());
    let fb = run_all(b.path());
    let names: Vec<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "metrics.csv",
        "metrics.jsonl",
        "eval.csv",
        "eval.json",
        "transfer.csv",
        "transfer.json",
        "bound.csv",
        "bound.json",
        "ablation.json",
        "ablation_k2.csv",
        "ablation_k4.csv",
    ] {
        assert!(names.contains(&expected), "missing {expected}: {names:?}");
    }
    assert_eq!(fa.len(), fb.len());
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        let (da, db) = (
            String::from_utf8_lossy(da).replace(s(a.path()), ""),
            String::from_utf8_lossy(db).replace(s(b.path()), ""),
        );
        assert!(da == db, "{na} differs between reruns");
    }
}

#[test]
fn eval_emits_one_row_per_noise_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "double-integrator", "");
    ok(rhirl(&["gen-demos", "--config", s(&cfg)]));
    ok(rhirl(&["train", "--config", s(&cfg)]));
    ok(rhirl(&["eval", "--config", s(&cfg)]));
    let csv = fs::read_to_string(dir.path().join("reports/eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "double-integrator", "");
    ok(rhirl(&["gen-demos", "--config", s(&cfg)]));
    let full = dir.path().join("full.json");
    ok(rhirl(&["train", "--config", s(&cfg), "--out", s(&full)]));

    let one = small_config(dir.path(), "double-integrator", "");
    let text = fs::read_to_string(&one)
        .unwrap()
        .replace("[trainer]\nepisodes = 2", "[trainer]\nepisodes = 1");
    let one_path = dir.path().join("one.toml");
    fs::write(&one_path, text).unwrap();
    let half = dir.path().join("half.json");
    ok(rhirl(&["train", "--config", s(&one_path), "--out", s(&half)]));
    let resumed = dir.path().join("resumed.json");
    ok(rhirl(&[
        "train",
        "--config",
        s(&cfg),
        "--resume",
        s(&half),
        "--out",
        s(&resumed),
    ]));

    assert_eq!(fs::read(&full).unwrap(), fs::read(&resumed).unwrap());
}

#[test]
fn seed_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "double-integrator", "");
    let gen = |seed: &str, out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_rhirl"))
            .args(["gen-demos", "--config", s(&cfg), "--out", s(out)])
            .env("RHIRL_SEED", seed)
            .output()
            .unwrap();
        ok(o);
        fs::read(out).unwrap()
    };
    let a = gen("3", &dir.path().join("a.bin"));
    let b = gen("4", &dir.path().join("b.bin"));
    ok(rhirl(&["gen-demos", "--config", s(&cfg)]));
    assert_eq!(a, fs::read(dir.path().join("demos.bin")).unwrap());
    assert_ne!(a, b);
    let bad = Command::new(env!("CARGO_BIN_EXE_rhirl"))
        .args(["gen-demos", "--config", s(&cfg)])
        .env("RHIRL_SEED", "minus one")
        .output()
        .unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn diverging_training_exits_5_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "double-integrator", "");
    let text = fs::read_to_string(&cfg).unwrap().replace(
        "[trainer]\nepisodes = 2",
        "[trainer]\nepisodes = 50\noptimizer = \"sgd\"\nlr = 1e150",
    );
    fs::write(&cfg, text).unwrap();
    ok(rhirl(&["gen-demos", "--config", s(&cfg)]));
    let out = rhirl(&["train", "--config", s(&cfg)]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("episode"));
    let ckpt = rhirl::trainer::Checkpoint::load(&dir.path().join("ckpt.json")).unwrap();
    assert!(ckpt.params().unwrap().as_flat().iter().all(|v| v.is_finite()));
}
