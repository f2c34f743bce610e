use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[datagen]
episodes_per_cell = 1
motion = "stationary"
obstacle_count = 0

[datagen.grid]
heights = [1.0]
v_max = [1.0]

[datagen.grid.base]
mask_w = 12
mask_h = 12

[train]
steps = 3
seq_len = 6
burn_in = 2
batch_size = 2
head_hidden = 8
cql_samples = 2
checkpoint_every = 2

[train.context]
k = 3
d_z = 4
hidden = 8
aux_hidden = 8

[eval]
heights = [1.0]
speeds = [0.5]
episodes_per_cell = 1
"#;

fn ctxtrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxtrack"))
        .args(args)
        .current_dir(dir)
        .env("CTXTRACK_OUT", dir.join("out"))
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&ctxtrack(d, &[])), 2);
    assert_eq!(code(&ctxtrack(d, &["frobnicate"])), 2);
    assert_eq!(code(&ctxtrack(d, &["train"])), 2);
    assert_eq!(code(&ctxtrack(d, &["--jobs", "0", "selftest"])), 2);
    assert_eq!(code(&ctxtrack(d, &["ablate", "--data", "x.bin"])), 2);
    assert_eq!(code(&ctxtrack(d, &["train", "--data", "x.bin", "--ablate", "no_wheels"])), 2);
    let help = ctxtrack(d, &["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("Exit codes"));
}

#[test]
fn bad_inputs_map_to_their_exit_codes() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(&ctxtrack(d, &["--config", "missing.toml", "selftest"])), 3);
    std::fs::write(d.join("bad.toml"), "[train]\nsteps = \"many\"\n").unwrap();
    assert_eq!(code(&ctxtrack(d, &["--config", "bad.toml", "--dump-config"])), 3);
    std::fs::write(d.join("typo.toml"), "[train]\nstepz = 3\n").unwrap();
    assert_eq!(code(&ctxtrack(d, &["--config", "typo.toml", "--dump-config"])), 3);
    assert_eq!(code(&ctxtrack(d, &["train", "--data", "missing.bin"])), 7);
    std::fs::write(d.join("junk.bin"), b"not a dataset").unwrap();
    assert_eq!(code(&ctxtrack(d, &["train", "--data", "junk.bin"])), 4);
    std::fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    assert_eq!(code(&ctxtrack(d, &["eval", "--ckpt", "junk.ckpt"])), 5);
}

#[test]
fn dump_config_layers_file_and_flags() {
    let dir = setup();
    let out = ctxtrack(dir.path(), &["--config", "small.toml", "--dump-config", "train", "--data", "x.bin", "--steps", "7"]);
    assert_eq!(code(&out), 0);
    let v: toml::Table = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(v["train"]["steps"].as_integer(), Some(7));
    assert_eq!(v["train"]["batch_size"].as_integer(), Some(2));
    assert_eq!(v["train"]["gamma"].as_float(), Some(0.99));
    assert!(!dir.path().join("out").exists(), "--dump-config must not write outputs");
}

#[test]
fn pipeline_writes_its_artifacts_and_repeats_exactly() {
    let dir = setup();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let o = ctxtrack(d, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    ok(&["--config", "small.toml", "gen-data", "--out", "data.bin"]);
    assert!(d.join("data.bin.manifest.toml").exists());
    ok(&["--config", "small.toml", "train", "--data", "data.bin"]);
    let run = d.join("out/train");
    for f in ["train_log.csv", "checkpoint.ckpt", "checkpoint_000002.ckpt", "run.toml"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,L_D,L_actor,L_reward,L_height,L_cons,alpha\n"));
    assert_eq!(log.lines().count(), 4);

    let manifest: toml::Table = toml::from_str(&std::fs::read_to_string(run.join("run.toml")).unwrap()).unwrap();
    assert_eq!(manifest["command"].as_array().unwrap()[2].as_str(), Some("train"));
    assert!(manifest["dataset_sha256"].as_str().is_some_and(|s| s.len() == 64));

    ok(&["--config", "small.toml", "eval", "--ckpt", "out/train/checkpoint.ckpt", "--traces", "--export-context"]);
    let eval = d.join("out/eval");
    let grid = std::fs::read_to_string(eval.join("grid.csv")).unwrap();
    assert!(grid.starts_with("height,speed,episodes,AR,EL,SR\n"));
    assert!(eval.join("table.txt").exists());
    assert!(eval.join("context/h1_v0.5.csv").exists());
    assert!(std::fs::read_dir(eval.join("traces")).unwrap().count() >= 1);

    // repeating from the manifest reproduces the training log byte for byte
    ok(&["--config", "out/train/run.toml", "train", "--data", "data.bin", "--out", "again"]);
    assert_eq!(std::fs::read(d.join("again/train_log.csv")).unwrap(), log.as_bytes());
    assert_eq!(
        std::fs::read(d.join("again/checkpoint.ckpt")).unwrap(),
        std::fs::read(run.join("checkpoint.ckpt")).unwrap()
    );

    ok(&["--config", "small.toml", "baseline", "--type", "pid", "--out", "pid"]);
    assert!(d.join("pid/grid.csv").exists());
}

#[test]
fn selftest_passes() {
    let dir = setup();
    let o = ctxtrack(dir.path(), &["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}
