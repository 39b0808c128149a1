use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_mvlatent");

const SMALL: &[&str] = &[
    "synth.n=120",
    "synth.d=16",
    "vae.max_epochs=15",
    "vae.encoder_hidden=16,8",
    "vae.decoder_hidden=8,16",
    "rf.n_estimators=15",
    "grid.n_estimators=10",
    "grid.max_depth=none,4",
    "grid.max_features=sqrt",
    "grid.min_samples_split=2",
    "grid.min_samples_leaf=1",
];

fn mvlatent(cwd: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(cwd).env("RUST_LOG", "warn").args(args);
    for s in SMALL {
        cmd.args(["--set", s]);
    }
    cmd.output().expect("binary runs")
}

fn listing(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

fn without_timing(text: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    v.to_string()
}

#[test]
fn every_subcommand_writes_only_inside_out_dir() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    for args in [
        &["synth", "--seed", "3", "--out-dir", "out"][..],
        &["run", "--seed", "3", "--out-dir", "out"],
        &["train-vae", "--seed", "3", "--out-dir", "out"],
        &["embed", "--seed", "3", "--out-dir", "out"],
        &["grid-search", "--seed", "3", "--out-dir", "out", "--features", "flair"],
        &["report", "--out-dir", "out"],
    ] {
        let out = mvlatent(w, args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(listing(w), BTreeSet::from(["out".to_string()]));
    let files = listing(&w.join("out"));
    for f in [
        "t1gd.csv",
        "flair.csv",
        "clinical.csv",
        "synth_truth.json",
        "metrics.json",
        "auc_bar.svg",
        "latent_scatter_mvvae-latent.svg",
        "roc_mvvae-latent.csv",
        "cv_early-fusion-tuned.csv",
        "vae_checkpoint.json",
        "vae_history.json",
        "embeddings.csv",
        "cv_flair.csv",
        "grid_best_flair.json",
    ] {
        assert!(files.contains(f), "missing {f} in {files:?}");
    }
}

#[test]
fn repeated_runs_match_apart_from_timing() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    for d in ["a", "b"] {
        let out = mvlatent(w, &["run", "--seed", "8", "--out-dir", d]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (w.join("a"), w.join("b"));
    assert_eq!(listing(&a), listing(&b));
    for f in listing(&a) {
        let (x, y) = (fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap());
        if f == "metrics.json" {
            let (x, y) = (String::from_utf8(x).unwrap(), String::from_utf8(y).unwrap());
            assert_eq!(without_timing(&x), without_timing(&y));
        } else {
            assert!(x == y, "{f} differs");
        }
    }
}

#[test]
fn single_class_cohort_is_a_data_error() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    assert!(mvlatent(w, &["synth", "--seed", "1", "--out-dir", "data"]).status.success());
    let clinical = fs::read_to_string(w.join("data/clinical.csv")).unwrap();
    let mut lines = clinical.lines();
    let mut rewritten = vec![lines.next().unwrap().to_string()];
    for line in lines {
        let id = line.split(',').next().unwrap();
        rewritten.push(format!("{id},methylated"));
    }
    fs::write(w.join("data/clinical.csv"), rewritten.join("\n") + "\n").unwrap();
    fs::write(
        w.join("files.conf"),
        "seed = 1\ndata.t1gd = data/t1gd.csv\ndata.flair = data/flair.csv\ndata.clinical = data/clinical.csv\n",
    )
    .unwrap();
    let out = Command::new(BIN)
        .current_dir(w)
        .args(["--config", "files.conf", "run", "--out-dir", "out"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_problems_exit_with_two() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();

    let out = mvlatent(w, &["report", "--out-dir", "nowhere"]);
    assert_eq!(out.status.code(), Some(2));

    let out = mvlatent(w, &["run", "--seed", "1", "--set", "vae.leraning_rate=0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("vae.leraning_rate"));

    let out = mvlatent(w, &["--config", "absent.conf", "run", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(w.join("noseed.conf"), "synth.n = 50\n").unwrap();
    let out = mvlatent(w, &["--config", "noseed.conf", "run"]);
    assert_eq!(out.status.code(), Some(2));

    let out = mvlatent(w, &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(listing(w).iter().all(|f| f.ends_with(".conf")), "{:?}", listing(w));
}
