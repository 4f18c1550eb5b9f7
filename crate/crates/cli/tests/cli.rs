use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ldc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ldc"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ldc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two Gaussian-ish blobs per class over 6 features, label in the last column.
fn write_split(path: &Path, rows: usize, offset: usize) {
    let mut s = String::new();
    for r in 0..rows {
        let label = r % 3;
        let vals: Vec<String> = (0..6)
            .map(|j| {
                let noise = ((r + offset) * 37 + j * 11) % 17;
                (label as f64 * 10.0 + (j % 2) as f64 * 3.0 + noise as f64 * 0.5).to_string()
            })
            .collect();
        writeln!(s, "{},{label}", vals.join(",")).unwrap();
    }
    fs::write(path, s).unwrap();
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        write_split(&dir.path().join("train.csv"), 90, 0);
        write_split(&dir.path().join("test.csv"), 30, 5);
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn data_args(&self) -> Vec<String> {
        vec![
            "--dataset".into(),
            "custom".into(),
            "--train-files".into(),
            self.s("train.csv"),
            "--test-files".into(),
            self.s("test.csv"),
            "--levels".into(),
            "8".into(),
        ]
    }

    fn run(&self, cmd: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec![cmd.into()];
        args.extend(self.data_args());
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ldc(&refs)
    }
}

const SMALL: [&str; 6] = ["--dim", "16", "--epochs", "3", "--batch-size", "16"];

#[test]
fn train_export_infer_round_trip() {
    let fx = Fixture::new();
    let out = fx.s("run");
    let mut args = SMALL.to_vec();
    args.extend(["--norm", "batch", "--out", &out]);
    let o = fx.run("train", &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(summary["mean_accuracy"].as_f64().unwrap() >= 0.0);
    for f in ["model.json", "report.json", "epochs.csv", "summary.json"] {
        assert!(fx.path("run").join(f).exists(), "{f}");
    }

    let model = fx.path("run").join("model.json");
    let packed = fx.s("m.ldcv");
    let o = ldc(&["export", "--model", model.to_str().unwrap(), "--out", &packed]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let info: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(info["estimate"]["cdc"].as_u64().unwrap() > 0);

    fs::write(fx.path("sample.csv"), "0,1,2,3,4,5\n7,7,7,7,7,7\n").unwrap();
    let o = ldc(&["infer", "--model", &packed, "--input", &fx.s("sample.csv")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 2);
    for line in &lines {
        let (label, z) = line.split_once(' ').unwrap();
        let label: usize = label.parse().unwrap();
        let z: Vec<i32> = z.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(z.len(), 3);
        assert!(label < 3 && z.iter().all(|v| *v <= z[label]));
    }
    assert_eq!(
        stdout(&ldc(&["infer", "--model", &packed, "--input", &fx.s("sample.csv")])),
        lines.join("\n") + "\n"
    );

    let o = fx.run("robustness", &["--model", &packed, "--rates", "0,0.5", "--seeds", "2", "--out", &fx.s("rob")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(fx.path("rob").join("robustness.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let o = fx.run("bench", &["--model", &packed, "--repeats", "1"]);
    assert!(o.status.success());
    let bench: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(bench["samples"].as_u64(), Some(30));

    let o = fx.run("snapshot", &["--model", model.to_str().unwrap(), "--sample", "0", "--out", &fx.s("snap")]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fx.path("snap").join("snapshot_feature_grad.csv").exists());
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let fx = Fixture::new();
    for name in ["a", "b"] {
        let out = fx.s(name);
        let mut args = SMALL.to_vec();
        args.extend(["--seed", "3", "--out", &out]);
        assert!(fx.run("train", &args).status.success());
    }
    for f in ["model.json", "report.json", "epochs.csv"] {
        assert_eq!(fs::read(fx.path("a").join(f)).unwrap(), fs::read(fx.path("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn teacher_then_distill_and_sweep() {
    let fx = Fixture::new();
    let tdir = fx.s("teacher");
    let o = fx.run("distill-teacher", &["--epochs", "2", "--members", "2", "--out", &tdir]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let logits = fx.path("teacher").join("teacher_logits.bin");
    assert_eq!(fs::metadata(&logits).unwrap().len(), 16 + 90 * 3 * 4);

    let mut args = SMALL.to_vec();
    let l = logits.to_string_lossy().into_owned();
    let sweep = fx.s("sweep");
    args.extend(["--loss", "kd_kl", "--teacher-logits", &l, "--grid", "temperature", "--values", "1,4", "--out", &sweep]);
    let o = fx.run("sweep", &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(fx.path("sweep").join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("grid,value,accuracy,mean_entropy_correct,mean_entropy_wrong"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn configuration_errors_exit_one() {
    let fx = Fixture::new();
    let out = fx.s("x");
    let o = fx.run("train", &["--loss", "kd_kl", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("teacher"));
    let o = fx.run("train", &["--dim", "10", "--value-dim", "3", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let o = fx.run("train", &["--norm", "group", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(ldc(&[]).status.code(), Some(1));
    assert_eq!(ldc(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let fx = Fixture::new();
    let out = fx.s("x");
    let o = ldc(&["train", "--dataset", "custom", "--train-files", "/nonexistent/a.csv", "--test-files", "/nonexistent/b.csv", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));

    fs::write(fx.path("bad.ldcv"), b"LDCV\x01").unwrap();
    fs::write(fx.path("s.csv"), "1,2\n").unwrap();
    let o = ldc(&["infer", "--model", &fx.s("bad.ldcv"), "--input", &fx.s("s.csv")]);
    assert_eq!(o.status.code(), Some(2));

    let o = ldc(&["train", "--dataset", "isolet", "--data-dir", "/nonexistent", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
}
