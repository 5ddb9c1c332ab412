use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 5
out_dir = "run"

[generation]
n_classes = 6

[suite]
train_plans = 2
heldout_plans = 1

[model]
d_i = 4
d_s = 4
d_n = 4
d_e = 4
d_o = 4
d_z = 8
d_g = 8
lstm_hidden = 8
it_channels = 2
fe_hidden = 4
appearance_dim = 4

[env]
max_steps = 10

[train]
workers = 1
total_episodes = 6
checkpoint_every = 3

[eval]
starts_per_pair = 1

[ablation]
variants = ["no_et"]
seeds = [1]
"#;

fn mtnav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtnav"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    dir
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_eval_trace_pipeline() {
    let dir = setup();
    let d = dir.path();
    let run = d.join("run");

    let o = mtnav(d, &["gen-maps", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run.join("plans.txt").is_file());

    let o = mtnav(d, &["train", "--config", "run.toml", "--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run.join("final.ckpt").is_file());
    assert!(run.join("train_log.jsonl").is_file());
    assert_eq!(fs::read_dir(run.join("checkpoints")).unwrap().count(), 2);
    let resolved = fs::read_to_string(run.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("workers = 2"));

    let o = mtnav(d, &["eval", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(report.starts_with("subset"));
    assert_eq!(String::from_utf8_lossy(&o.stdout), report);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert!(json["all"]["sr"].is_number());
    assert!(run.join("traces.jsonl").is_file());

    let o = mtnav(d, &["trace", "--config", "run.toml", "--episode", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(run.join("trace_0000.jsonl").is_file());

    let o = mtnav(d, &["train", "--config", "run.toml", "--out", "resumed", "--checkpoint", "run/checkpoints/ckpt_000003.bin"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("resumed/final.ckpt").is_file());
}

#[test]
fn eval_twice_gives_identical_reports() {
    let dir = setup();
    let d = dir.path();
    assert!(mtnav(d, &["train", "--config", "run.toml"]).status.success());
    assert!(mtnav(d, &["eval", "--config", "run.toml", "--out", "run"]).status.success());
    let first = fs::read(d.join("run/report.json")).unwrap();
    let traces = fs::read(d.join("run/traces.jsonl")).unwrap();
    assert!(mtnav(d, &["eval", "--config", "run.toml"]).status.success());
    assert_eq!(fs::read(d.join("run/report.json")).unwrap(), first);
    assert_eq!(fs::read(d.join("run/traces.jsonl")).unwrap(), traces);
}

#[test]
fn ablate_with_one_toggle_reports_two_variants() {
    let dir = setup();
    let o = mtnav(dir.path(), &["ablate", "--config", "run.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("run/ablation.txt")).unwrap();
    let variants: Vec<&str> = table.lines().filter(|l| l.contains(" mean ")).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(variants, ["base", "no_et"]);
}

#[test]
fn missing_checkpoint_is_a_validation_error() {
    let dir = setup();
    let o = mtnav(dir.path(), &["eval", "--config", "run.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));
}

#[test]
fn bad_configs_exit_with_one() {
    let dir = setup();
    let d = dir.path();
    let o = mtnav(d, &["train", "--config", "absent.toml"]);
    assert_eq!(o.status.code(), Some(1));

    fs::write(d.join("bad.toml"), "[train]\nworkerz = 3\n").unwrap();
    let o = mtnav(d, &["train", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("train.workerz"));

    let o = mtnav(d, &["train", "--config", "run.toml", "--workers", "0"]);
    assert_eq!(o.status.code(), Some(1));

    let o = mtnav(d, &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn io_failures_exit_with_two() {
    let dir = setup();
    let d = dir.path();
    fs::write(d.join("blocker"), b"a file, not a directory").unwrap();
    let o = mtnav(d, &["train", "--config", "run.toml", "--out", "blocker"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    fs::write(d.join("empty.ckpt"), b"").unwrap();
    let o = mtnav(d, &["eval", "--config", "run.toml", "--checkpoint", "empty.ckpt"]);
    assert_eq!(o.status.code(), Some(1), "malformed checkpoints are input errors");
}
