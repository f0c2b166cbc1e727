use std::path::Path;
use std::process::{Command, Output};

fn qdtn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdtn"))
        .args(args)
        .current_dir(cwd)
        .env("QDTN_THREADS", "2")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn letters_transform_train_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    let o = qdtn(&["gen-letters", "--out", "letters", "--letters", "FGJ"], d);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(d.join("letters/F_inv.png").exists());
    assert!(d.join("letters/manifest.json").exists());

    let o = qdtn(
        &[
            "transform-image",
            "--input",
            "letters/G.png",
            "--qubits",
            "3",
            "--out",
            "g.json",
            "--cache",
            "cache",
        ],
        d,
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let rho = qdtn::formats::read_density(&d.join("g.json")).unwrap();
    assert_eq!(rho.n_qubits(), 3);
    assert_eq!(std::fs::read_dir(d.join("cache")).unwrap().count(), 1);

    let o = qdtn(
        &[
            "train-classifier",
            "--kind",
            "letters-3q",
            "--manifest",
            "letters/manifest.json",
            "--epochs",
            "3",
            "--out",
            "runs",
        ],
        d,
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    let run_dir = stdout
        .lines()
        .find_map(|l| l.strip_prefix("artifacts: "))
        .unwrap()
        .trim()
        .to_string();
    let run = d.join(&run_dir);
    for f in [
        "config.json",
        "summary.json",
        "network.json",
        "classifier_epochs.csv",
        "classifier_aggregate.csv",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(run.join("classifier_aggregate.csv")).unwrap();
    assert!(csv.starts_with("# config {"));

    let net = run.join("network.json");
    let o = qdtn(
        &[
            "evaluate",
            "--network",
            net.to_str().unwrap(),
            "--manifest",
            "letters/manifest.json",
            "--qubits",
            "3",
        ],
        d,
    );
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.contains('\t')).count(), 6);
    assert!(out.contains("percent correct:"));
}

#[test]
fn errors_are_json_on_stderr() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qdtn(
        &[
            "transform-image",
            "--input",
            "missing.png",
            "--qubits",
            "3",
            "--out",
            "x.json",
        ],
        tmp.path(),
    );
    assert!(!o.status.success());
    let v: serde_json::Value = serde_json::from_str(text(&o.stderr).trim()).unwrap();
    assert!(v["error"].is_string());

    let o = qdtn(&["train-classifier", "--kind", "birds-cats"], tmp.path());
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("manifest"));
}

#[test]
fn gradcheck_run_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut cfg = qdtn::config::ExperimentConfig::preset(qdtn::config::ExperimentKind::Gradcheck);
    cfg.gradcheck.n_networks = 2;
    cfg.gradcheck.n_steps = 40;
    std::fs::write(d.join("cfg.json"), cfg.to_json()).unwrap();
    let o = qdtn(&["run", "--config", "cfg.json", "--out", "runs"], d);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let dir = d.join("runs").join(format!("gradcheck-{}", cfg.hash()));
    let csv = std::fs::read_to_string(dir.join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 8);
}
