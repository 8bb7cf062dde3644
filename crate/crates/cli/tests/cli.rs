use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = "years = 2\ndepths = 6\ntrain_years = 1\nepochs = 4\nae_epochs = 2\nmc_samples = 10\npadding = 2\n";

fn pga(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pga"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = pga(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn json(p: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.conf"), SMALL).unwrap();
        Self { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path().join(name)
    }

    fn run(&self, args: &[&str]) {
        ok(self.path(), args)
    }

    /// Data, encoder and one checkpoint per model.
    fn trained(models: &[&str]) -> Self {
        let w = Self::new();
        w.run(&[
            "generate-data",
            "--config",
            "small.conf",
            "--out",
            "data.csv",
        ]);
        w.run(&[
            "pretrain-encoder",
            "--config",
            "small.conf",
            "--data",
            "data.csv",
            "--out",
            "enc.ckpt",
        ]);
        for m in models {
            let out = format!("{m}.ckpt");
            w.run(&[
                "train",
                "--config",
                "small.conf",
                "--data",
                "data.csv",
                "--encoder",
                "enc.ckpt",
                "--model",
                m,
                "--out",
                &out,
            ]);
        }
        w
    }

    fn evaluate(&self, model: &str, out: &str) {
        let ckpt = format!("{model}.ckpt");
        self.run(&[
            "evaluate",
            "--config",
            "small.conf",
            "--data",
            "data.csv",
            "--encoder",
            "enc.ckpt",
            "--checkpoint",
            &ckpt,
            "--out",
            out,
        ]);
    }
}

#[test]
fn generate_data_is_byte_identical() {
    let w = Workspace::new();
    for out in ["a.csv", "b.csv"] {
        w.run(&[
            "generate-data",
            "--years",
            "5",
            "--depths",
            "28",
            "--seed",
            "7",
            "--out",
            out,
        ]);
    }
    let a = std::fs::read(w.file("a.csv")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, std::fs::read(w.file("b.csv")).unwrap());
    let m = json(w.file("a.csv.manifest.json"));
    assert_eq!(m["seeds"]["data"], 7);
    assert_eq!(m["command"], "generate-data");
}

#[test]
fn pga_evaluation_is_consistent_and_comparable_with_lstm() {
    let w = Workspace::trained(&["pga", "lstm"]);
    w.evaluate("pga", "pga.json");
    w.evaluate("lstm", "lstm.json");
    let pga = json(w.file("pga.json"));
    let lstm = json(w.file("lstm.json"));
    assert_eq!(pga["pooled"]["violations"]["violations"], 0);
    assert_eq!(pga["pooled"]["inconsistency_per_sample"]["mean"], 0.0);
    assert_eq!(pga["pooled"]["inconsistency_mean"]["mean"], 0.0);
    for key in ["n_test_dates", "n_observations", "n_samples"] {
        assert_eq!(pga[key], lstm[key], "{key}");
    }
    assert!(lstm["pooled"]["violations"]["violations"].as_u64().unwrap() > 0);

    w.run(&[
        "report",
        "--metrics",
        "pga.json",
        "--metrics",
        "lstm.json",
        "--out",
        "table.md",
    ]);
    let table = std::fs::read_to_string(w.file("table.md")).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.contains("| pga | 1 |"));
}

#[test]
fn outputs_are_reproducible_from_their_manifest() {
    let w = Workspace::trained(&["pga"]);
    w.evaluate("pga", "first.json");
    let manifest = json(w.file("first.json.manifest.json"));
    std::fs::write(
        w.file("snapshot.conf"),
        manifest["config"].as_str().unwrap(),
    )
    .unwrap();
    w.run(&[
        "evaluate",
        "--config",
        "snapshot.conf",
        "--data",
        "data.csv",
        "--encoder",
        "enc.ckpt",
        "--checkpoint",
        "pga.ckpt",
        "--out",
        "second.json",
    ]);
    assert_eq!(
        std::fs::read(w.file("first.json")).unwrap(),
        std::fs::read(w.file("second.json")).unwrap()
    );
    let again = json(w.file("second.json.manifest.json"));
    assert_eq!(
        manifest["outputs"][0]["sha256"],
        again["outputs"][0]["sha256"]
    );
    assert_eq!(manifest["inputs"], again["inputs"]);
}

#[test]
fn retraining_reproduces_the_checkpoint() {
    let w = Workspace::trained(&["lstm"]);
    w.run(&[
        "train",
        "--config",
        "small.conf",
        "--data",
        "data.csv",
        "--encoder",
        "enc.ckpt",
        "--model",
        "lstm",
        "--out",
        "again.ckpt",
    ]);
    assert_eq!(
        std::fs::read(w.file("lstm.ckpt")).unwrap(),
        std::fs::read(w.file("again.ckpt")).unwrap()
    );
}

#[test]
fn sample_and_calibrate_write_their_files() {
    let w = Workspace::trained(&["pga"]);
    w.run(&[
        "sample",
        "--config",
        "small.conf",
        "--data",
        "data.csv",
        "--encoder",
        "enc.ckpt",
        "--checkpoint",
        "pga.ckpt",
        "--out",
        "s.json",
    ]);
    let samples = json(w.file("s.json"));
    assert_eq!(samples["model"], "pga");
    assert_eq!(samples["sets"][0]["n_samples"], 10);
    let profiles = std::fs::read_to_string(w.file("s.json.profiles.csv")).unwrap();
    assert!(profiles.starts_with("date,depth_m,mean,lower,upper,observed\n"));

    w.run(&[
        "calibrate",
        "--config",
        "small.conf",
        "--data",
        "data.csv",
        "--samples",
        "s.json",
        "--out",
        "cal.csv",
    ]);
    let cal = std::fs::read_to_string(w.file("cal.csv")).unwrap();
    // header plus x = 0..=100
    assert_eq!(cal.lines().count(), 102);
    let outputs = json(w.file("cal.csv.manifest.json"))["outputs"].clone();
    assert_eq!(outputs.as_array().unwrap().len(), 1);
}

#[test]
fn usage_errors_exit_with_one() {
    let w = Workspace::new();
    assert_eq!(code(&pga(w.path(), &["train", "--bogus"])), 1);
    assert_eq!(code(&pga(w.path(), &["frobnicate"])), 1);
    let out = pga(
        w.path(),
        &["generate-data", "--epochs", "lots", "--out", "x.csv"],
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
    let out = pga(
        w.path(),
        &[
            "generate-data",
            "--config",
            "missing.conf",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(code(&out), 1);
    assert_eq!(code(&pga(w.path(), &["--help"])), 0);
}

#[test]
fn missing_or_mismatched_inputs_exit_with_two() {
    let w = Workspace::trained(&["pga"]);
    let out = pga(
        w.path(),
        &[
            "evaluate",
            "--config",
            "small.conf",
            "--data",
            "data.csv",
            "--encoder",
            "enc.ckpt",
            "--checkpoint",
            "absent.ckpt",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.ckpt"));

    // an encoder checkpoint where a model checkpoint belongs
    let out = pga(
        w.path(),
        &[
            "evaluate",
            "--config",
            "small.conf",
            "--data",
            "data.csv",
            "--encoder",
            "enc.ckpt",
            "--checkpoint",
            "enc.ckpt",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(code(&out), 2);

    std::fs::write(w.file("broken.csv"), "date,depth\n2020-01-01,zero\n").unwrap();
    let out = pga(
        w.path(),
        &[
            "pretrain-encoder",
            "--config",
            "small.conf",
            "--data",
            "broken.csv",
            "--out",
            "e",
        ],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn divergence_exits_with_three_and_keeps_last_good_parameters() {
    let w = Workspace::trained(&[]);
    let out = pga(
        w.path(),
        &[
            "train",
            "--config",
            "small.conf",
            "--learning-rate",
            "1e300",
            "--data",
            "data.csv",
            "--encoder",
            "enc.ckpt",
            "--model",
            "lstm",
            "--out",
            "bad.ckpt",
        ],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(w.file("bad.ckpt.last-good").exists());
    assert!(!w.file("bad.ckpt").exists());
}
