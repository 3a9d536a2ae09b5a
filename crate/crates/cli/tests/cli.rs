use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_friendrisk"));
    c.env("FRIENDRISK_LOG", "warn");
    c
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/example").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn ingest_reports_counts() {
    let o = bin()
        .args(["ingest", "--network"])
        .arg(example("network.json"))
        .arg("--labels")
        .arg(example("labels.csv"))
        .output()
        .unwrap();
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("0 errors"), "{out}");
    assert!(out.contains("labels 8"), "{out}");
}

#[test]
fn ingest_rejects_bad_labels_with_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    let text = fs::read_to_string(example("labels.csv")).unwrap();
    fs::write(&labels, text.replacen(",1\n", ",4\n", 1)).unwrap();
    let o = bin().args(["ingest", "--network"]).arg(example("network.json")).arg("--labels").arg(&labels).output().unwrap();
    assert!(!o.status.success());
    let out = stdout(&o);
    assert!(out.contains("line 2") && out.contains("`4`"), "{out}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("1 validation errors"));
}

#[test]
fn pipeline_runs_on_the_example() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["network.json", "labels.csv", "config.toml"] {
        fs::copy(example(name), dir.path().join(name)).unwrap();
    }
    let out_dir = dir.path().join("run");
    let o = bin()
        .arg("pipeline")
        .arg("--config")
        .arg(dir.path().join("config.toml"))
        .arg("--output")
        .arg(&out_dir)
        .args(["--grid", "friend_ks=1..2", "stranger_ks=2"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("wrote 7 artifacts"), "{out}");
    assert!(out.contains("cross-validation"), "{out}");
    assert!(out_dir.join("manifest.json").is_file());

    let o = bin()
        .arg("label")
        .arg("--config")
        .arg(dir.path().join("config.toml"))
        .args(["--threshold-x", "0.7", "--threshold-y", "0.5"])
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("invalid thresholds"));
}

#[test]
fn synth_writes_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.toml");
    fs::write(&cfg, "n_users = 5\n").unwrap();
    let out = dir.path().join("data");
    let o = bin().arg("synth").arg("--config").arg(&cfg).arg("--out").arg(&out).args(["--seed", "3"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["network.json", "labels.csv", "label_values.csv", "truth.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let o = bin().args(["ingest", "--network"]).arg(out.join("network.json")).arg("--labels").arg(out.join("labels.csv")).output().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).contains("0 errors"));
}
