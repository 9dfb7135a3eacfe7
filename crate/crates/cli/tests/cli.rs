use std::path::Path;
use std::process::{Command, Output};

use beamseq_cli::RunConfig;
use beamseq_core::dataset::Dataset;
use beamseq_core::scene::BsId;

fn beamseq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beamseq")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = beamseq(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, config: &RunConfig) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, config.to_toml()).unwrap();
    path.to_str().unwrap().to_string()
}

fn body(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

fn short_toy(epochs: usize) -> RunConfig {
    let mut c = RunConfig::toy();
    c.train.max_epochs = epochs;
    c.train.patience = epochs;
    c
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&beamseq(dir.path(), &["gen", "--bogus"])), 1);
    assert_eq!(code(&beamseq(dir.path(), &["frobnicate"])), 1);
    let cfg = write_config(dir.path(), &RunConfig::toy());
    assert_eq!(code(&beamseq(dir.path(), &["gen", "--toy", "--config", &cfg])), 1);

    std::fs::write(dir.path().join("typo.toml"), "seed = 1\n[train]\nmax_epoch = 3\n").unwrap();
    let out = beamseq(dir.path(), &["gen", "--config", "typo.toml"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_epoch"));

    let mut late = RunConfig::toy();
    late.eval.delays = vec![10];
    let cfg = write_config(dir.path(), &late);
    assert_eq!(code(&beamseq(dir.path(), &["gen", "--config", &cfg])), 1);
    assert_eq!(code(&beamseq(dir.path(), &["gen", "--config", "missing.toml"])), 1);
    assert_eq!(code(&beamseq(dir.path(), &["--help"])), 0);
}

#[test]
fn missing_artifacts_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = beamseq(dir.path(), &["train", "--toy"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(code(&beamseq(dir.path(), &["eval", "--toy"])), 2);
    assert_eq!(code(&beamseq(dir.path(), &["validate", "--toy"])), 2);
}

#[test]
fn gen_is_deterministic_and_records_the_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::toy();
    config.mbs_source = true;
    let cfg = write_config(dir.path(), &config);
    let census = ok(dir.path(), &["gen", "--config", &cfg, "--out", "a"]);
    assert!(census.contains("dropped trajectories") && census.contains("beams used"), "{census}");
    ok(dir.path(), &["gen", "--config", &cfg, "--out", "b"]);
    for name in ["config.toml", "scene.toml", "grid.bmgr", "dataset_rsu0.bmsq", "dataset_mbs.bmsq", "labels_rsu0.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs between identical runs");
    }
    let rsu = Dataset::load(&dir.path().join("a/dataset_rsu0.bmsq")).unwrap();
    assert_eq!((rsu.input_len, rsu.output_len, rsu.num_features, rsu.num_beams), (10, 10, 32, 256));
    let mbs = Dataset::load(&dir.path().join("a/dataset_mbs.bmsq")).unwrap();
    assert_eq!(mbs.num_features, 128);
    assert_eq!(mbs.meta.dataset.source, BsId::Mbs);

    ok(dir.path(), &["gen", "--config", &cfg, "--out", "c", "--seed", "7"]);
    let other = std::fs::read(dir.path().join("c/dataset_rsu0.bmsq")).unwrap();
    assert_ne!(other, std::fs::read(dir.path().join("a/dataset_rsu0.bmsq")).unwrap());
}

#[test]
fn default_dataset_header_has_paper_dimensions() {
    let config = RunConfig::default().finalize(None).unwrap();
    assert_eq!((config.dataset.input_len, config.dataset.output_len, config.dataset.num_beams), (50, 50, 256));
}

#[test]
fn toy_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "--toy"]);
    let log = ok(dir.path(), &["train", "--toy"]);
    assert!(log.contains("seq2seq_rsu0 epoch 500"));
    let run = dir.path().join("run");

    let history = body(&run.join("history_seq2seq_rsu0.csv"));
    assert_eq!(history[0], "epoch,train_loss,val_loss,train_acc,val_acc,clip_events");
    assert_eq!(history.len() - 1, 500);
    let final_acc: f64 = history.last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!(final_acc >= 0.99, "train accuracy {final_acc}");

    let summary = ok(dir.path(), &["eval", "--toy"]);
    assert!(summary.contains("P(loss<0.1)") && summary.contains("seq2seq_rsu0"), "{summary}");
    ok(dir.path(), &["sweep", "--toy"]);
    let report = ok(dir.path(), &["validate", "--toy"]);
    assert!(report.contains("delay_sweep.csv"), "{report}");

    let sweep = body(&run.join("delay_sweep.csv"));
    let genie_rows: Vec<&String> = sweep.iter().filter(|l| l.starts_with("genie,")).collect();
    assert_eq!(genie_rows.len(), RunConfig::toy().eval.delays.len());

    let hash = RunConfig::toy().finalize(None).unwrap().hash();
    for name in ["records.csv", "summary.csv", "summary.txt", "cdf_genie.csv", "delay_sweep.csv", "history_ffn_rsu0.csv", "config.toml"] {
        let text = std::fs::read_to_string(run.join(name)).unwrap();
        assert!(text.contains(&format!("config_hash = {hash}")) && text.contains("seed = 42"), "{name}");
    }
}

#[test]
fn validate_rejects_tampered_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short_toy(2));
    for cmd in ["gen", "train", "eval"] {
        ok(dir.path(), &[cmd, "--config", &cfg]);
    }
    let path = dir.path().join("run/records.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let header = text.lines().find(|l| l.starts_with("trajectory_id")).unwrap();
    let col = header.split(',').position(|c| c == "norm_loss").unwrap();
    let tampered: String = text
        .lines()
        .map(|l| {
            if l.starts_with('#') || l == header {
                return format!("{l}\n");
            }
            let mut f: Vec<&str> = l.split(',').collect();
            f[col] = "1.5";
            format!("{}\n", f.join(","))
        })
        .collect();
    std::fs::write(&path, tampered).unwrap();
    let out = beamseq(dir.path(), &["validate", "--config", &cfg]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_scheme_is_reported_and_the_rest_still_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short_toy(2));
    ok(dir.path(), &["gen", "--config", &cfg]);
    ok(dir.path(), &["train", "--config", &cfg]);
    std::fs::remove_file(dir.path().join("run/ffn_rsu0.bmck")).unwrap();
    let out = beamseq(dir.path(), &["eval", "--config", &cfg]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping ffn"));
    let summary = body(&dir.path().join("run/summary.csv"));
    let schemes: Vec<&str> = summary[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(schemes, ["seq2seq_rsu0", "location_0m", "location_1m", "genie"]);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = write_config(dir.path(), &short_toy(4));
    ok(dir.path(), &["gen", "--config", &full, "--out", "full"]);
    ok(dir.path(), &["train", "--config", &full, "--out", "full"]);

    ok(dir.path(), &["gen", "--config", &full, "--out", "split"]);
    let first = dir.path().join("first.toml");
    std::fs::write(&first, short_toy(2).to_toml()).unwrap();
    ok(dir.path(), &["train", "--config", first.to_str().unwrap(), "--out", "split"]);
    let log = ok(dir.path(), &["train", "--config", &full, "--out", "split", "--resume"]);
    assert!(log.contains("resuming after epoch 2"), "{log}");

    for name in ["history_seq2seq_rsu0.csv", "history_ffn_rsu0.csv"] {
        assert_eq!(body(&dir.path().join("full").join(name)), body(&dir.path().join("split").join(name)), "{name}");
    }
    for name in ["seq2seq_rsu0.bmck", "ffn_rsu0.bmck"] {
        let a = std::fs::read(dir.path().join("full").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("split").join(name)).unwrap();
        assert!(a == b, "{name} differs after resuming");
    }
}

#[test]
fn resume_rejects_a_different_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &short_toy(1));
    ok(dir.path(), &["gen", "--config", &cfg]);
    ok(dir.path(), &["train", "--config", &cfg]);
    ok(dir.path(), &["gen", "--config", &cfg, "--seed", "3"]);
    let out = beamseq(dir.path(), &["train", "--config", &cfg, "--seed", "3", "--resume"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}
