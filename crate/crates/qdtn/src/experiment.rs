//! Experiment dispatch and artifact writing.

use std::path::{Path, PathBuf};

use anyhow::Context;
use qdtn_core::classifier::{best_percent, new_classifier, ClassifierReport};
use qdtn_core::{
    evaluate, run_product_gan, train_binary, ClassLabel, DensityMatrix, EpochReport, LabeledState,
    QuantumNetwork,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{CorpusConfig, ExperimentConfig, ExperimentKind};
use crate::formats::{num, read_json, write_json, write_jsonl, ConfigCsv, DensityJson};
use crate::gradcheck::run_gradcheck;
use crate::letters::{letter_images, LetterCorpusSpec, ManifestEntry};
use crate::transform::{file_to_state, image_to_state, StateCache};

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: serde_json::Value,
    /// False when a self-check inside the experiment failed.
    pub passed: bool,
}

/// `<out_root>/<kind>-<config hash>`.
pub fn artifact_dir(cfg: &ExperimentConfig, out_root: &Path) -> PathBuf {
    out_root.join(format!("{}-{}", cfg.kind, cfg.hash()))
}

pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> anyhow::Result<RunOutcome> {
    let dir = artifact_dir(cfg, out_root);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_json(&dir.join("config.json"), cfg)?;
    let (summary, passed) = match cfg.kind {
        ExperimentKind::GanProduct => (run_gan(cfg, &dir)?, true),
        ExperimentKind::Gradcheck => run_gradcheck_experiment(cfg, &dir)?,
        _ => (run_classifier(cfg, &dir)?, true),
    };
    let summary = json!({ "config_hash": cfg.hash(), "kind": cfg.kind, "passed": passed, "config": cfg, "result": summary });
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(RunOutcome {
        dir,
        summary,
        passed,
    })
}

fn epoch_csv(path: &Path, cfg_json: &str, reports: &[EpochReport]) -> anyhow::Result<()> {
    let mut w = ConfigCsv::create(
        path,
        cfg_json,
        &[
            "epoch",
            "rms_before",
            "rms_after",
            "lambda",
            "retries",
            "accepted",
        ],
    )?;
    for r in reports {
        w.row([
            r.epoch.to_string(),
            num(r.rms_before),
            num(r.rms_after),
            num(r.lambda),
            r.retries.to_string(),
            r.accepted.to_string(),
        ])?;
    }
    w.finish()
}

fn run_gan(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<serde_json::Value> {
    let cj = cfg.to_json();
    let run = run_product_gan(&cfg.gan)?;
    epoch_csv(&dir.join("stage1.csv"), &cj, &run.stage1)?;
    epoch_csv(&dir.join("stage3.csv"), &cj, &run.stage3)?;
    let mut w = ConfigCsv::create(
        &dir.join("stage2.csv"),
        &cj,
        &["epoch", "mean_rms", "max_rms"],
    )?;
    for (e, row) in run.stage2.per_real_rms.iter().enumerate() {
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        w.row([
            e.to_string(),
            num(mean),
            num(row.iter().copied().fold(0.0, f64::max)),
        ])?;
    }
    w.finish()?;
    gan_metrics_csv(&dir.join("gan_metrics.csv"), &cj, &run.metrics)?;
    write_jsonl(
        &dir.join("fakes_before.jsonl"),
        run.fakes_before.iter().map(DensityJson::from),
    )?;
    write_jsonl(
        &dir.join("fakes_after.jsonl"),
        run.fakes_after.iter().map(DensityJson::from),
    )?;
    write_jsonl(
        &dir.join("reals.jsonl"),
        run.reals.iter().map(DensityJson::from),
    )?;
    write_json(&dir.join("generator.json"), &run.generator)?;
    write_json(&dir.join("discriminator.json"), &run.discriminator)?;
    write_json(&dir.join("style_net.json"), &run.style_net)?;
    let first = run.metrics.first();
    let last = run.metrics.last();
    Ok(json!({
        "stage1_final_rms": run.stage1.last().map(|r| r.rms_after),
        "stage3_real_pct": first.map(|m| m.real_pct),
        "fake_pct_initial": first.map(|m| m.fake_pct),
        "fake_pct_final": last.map(|m| m.fake_pct),
        "real_pct_remeasured_final": last.map(|m| m.real_pct_remeasured),
        "gan_epochs": run.metrics.len().saturating_sub(1),
    }))
}

pub fn gan_metrics_csv(
    path: &Path,
    cfg_json: &str,
    metrics: &[qdtn_core::GanMetrics],
) -> anyhow::Result<()> {
    let mut w = ConfigCsv::create(
        path,
        cfg_json,
        &[
            "epoch",
            "real_xx",
            "real_yy",
            "real_zz",
            "fake_xx",
            "fake_yy",
            "fake_zz",
            "real_pct",
            "fake_pct",
            "real_pct_remeasured",
        ],
    )?;
    for m in metrics {
        let mut row = vec![m.epoch.to_string()];
        row.extend(m.real_plane_pct.iter().map(|&x| num(x)));
        row.extend(m.fake_plane_pct.iter().map(|&x| num(x)));
        row.extend([num(m.real_pct), num(m.fake_pct), num(m.real_pct_remeasured)]);
        w.row(row)?;
    }
    w.finish()
}

fn run_gradcheck_experiment(
    cfg: &ExperimentConfig,
    dir: &Path,
) -> anyhow::Result<(serde_json::Value, bool)> {
    let s = run_gradcheck(&cfg.gradcheck)?;
    let mut w = ConfigCsv::create(
        &dir.join("gradcheck.csv"),
        &cfg.to_json(),
        &["network", "lindblad", "objective", "relative_error"],
    )?;
    for r in &s.rows {
        w.row([
            r.network.to_string(),
            r.lindblad.to_string(),
            r.objective.clone(),
            num(r.relative_error),
        ])?;
    }
    w.finish()?;
    Ok((
        json!({ "max_unitary": s.max_unitary, "max_lindblad": s.max_lindblad }),
        s.passed,
    ))
}

/// Labelled states plus the raw label string of each.
pub struct Corpus {
    pub states: Vec<LabeledState>,
    pub labels: Vec<String>,
}

fn class_of(label: &str, corpus: &CorpusConfig) -> ClassLabel {
    if corpus.low_labels.iter().any(|l| l == label) {
        ClassLabel::A
    } else {
        ClassLabel::B
    }
}

pub fn load_manifest(path: &Path) -> anyhow::Result<Vec<ManifestEntry>> {
    read_json(path)
}

/// Builds the labelled corpus from a manifest if one is configured, else by
/// rendering the configured letters.
pub fn build_corpus(corpus: &CorpusConfig) -> anyhow::Result<Corpus> {
    let n = corpus.qubits;
    let items: Vec<(String, String, DensityMatrix)> = match &corpus.manifest {
        Some(path) => {
            let base = path.parent().unwrap_or(Path::new("."));
            let cache = corpus.cache_dir.as_ref().map(StateCache::new);
            load_manifest(path)?
                .par_iter()
                .map(|e| {
                    let p = base.join(&e.path);
                    let rho = file_to_state(&p, n, cache.as_ref())
                        .with_context(|| format!("transforming {}", p.display()))?;
                    let id = e.path.file_stem().map_or_else(
                        || e.path.display().to_string(),
                        |s| s.to_string_lossy().into_owned(),
                    );
                    Ok((id, e.label.clone(), rho))
                })
                .collect::<anyhow::Result<_>>()?
        }
        None => {
            let spec = LetterCorpusSpec {
                letters: corpus.letters.clone(),
                size: corpus.render_size,
                inverted: true,
            };
            letter_images(&spec)?
                .par_iter()
                .map(|li| {
                    Ok((
                        li.id.clone(),
                        li.label.to_string(),
                        image_to_state(&li.image, n)?,
                    ))
                })
                .collect::<anyhow::Result<_>>()?
        }
    };
    anyhow::ensure!(!items.is_empty(), "corpus is empty");
    let states: Vec<LabeledState> = items
        .iter()
        .map(|(id, label, rho)| LabeledState {
            id: id.clone(),
            label: class_of(label, corpus),
            state: rho.clone(),
        })
        .collect();
    let has = |c| states.iter().any(|s| s.label == c);
    anyhow::ensure!(
        has(ClassLabel::A) && has(ClassLabel::B),
        "corpus needs examples of both classes"
    );
    Ok(Corpus {
        states,
        labels: items.into_iter().map(|(_, l, _)| l).collect(),
    })
}

/// Moves the last `ceil(frac · count)` examples of each class into a
/// second corpus, leaving at least one per class for training.
pub fn split_holdout(corpus: Corpus, frac: f64) -> anyhow::Result<(Corpus, Corpus)> {
    anyhow::ensure!(
        (0.0..1.0).contains(&frac),
        "holdout fraction {frac} is outside [0, 1)"
    );
    let mut held = vec![false; corpus.states.len()];
    for class in [ClassLabel::A, ClassLabel::B] {
        let idx: Vec<usize> = (0..corpus.states.len())
            .filter(|&i| corpus.states[i].label == class)
            .collect();
        let k = ((frac * idx.len() as f64).ceil() as usize).min(idx.len().saturating_sub(1));
        for &i in &idx[idx.len() - k..] {
            held[i] = true;
        }
    }
    let mut train = Corpus {
        states: Vec::new(),
        labels: Vec::new(),
    };
    let mut test = Corpus {
        states: Vec::new(),
        labels: Vec::new(),
    };
    for ((s, l), h) in corpus.states.into_iter().zip(corpus.labels).zip(held) {
        let dst = if h { &mut test } else { &mut train };
        dst.states.push(s);
        dst.labels.push(l);
    }
    Ok((train, test))
}

#[derive(Serialize)]
struct ClassifierSummary {
    examples: usize,
    qubits: usize,
    epochs_run: usize,
    initial_percent: f64,
    final_percent: f64,
    best_percent: f64,
    holdout_examples: usize,
    holdout_percent: Option<f64>,
}

fn class_name(c: ClassLabel) -> &'static str {
    match c {
        ClassLabel::A => "low",
        ClassLabel::B => "high",
    }
}

pub fn classifier_csvs(
    dir: &Path,
    cfg_json: &str,
    labels: &[String],
    reports: &[ClassifierReport],
) -> anyhow::Result<()> {
    let mut w = ConfigCsv::create(
        &dir.join("classifier_epochs.csv"),
        cfg_json,
        &[
            "epoch",
            "example_id",
            "label",
            "class",
            "output",
            "tier",
            "verdict",
            "correct",
        ],
    )?;
    for r in reports {
        for (row, label) in r.rows.iter().zip(labels) {
            w.row([
                r.epoch.to_string(),
                row.id.clone(),
                label.clone(),
                class_name(row.label).to_string(),
                num(row.output),
                format!("{:?}", row.tier),
                class_name(row.verdict).to_string(),
                row.correct.to_string(),
            ])?;
        }
    }
    w.finish()?;
    let mut w = ConfigCsv::create(
        &dir.join("classifier_aggregate.csv"),
        cfg_json,
        &[
            "epoch",
            "percent_correct",
            "loss",
            "rms_before",
            "rms_after",
            "lambda",
            "accepted",
        ],
    )?;
    for r in reports {
        let (rb, ra, lam, acc) = match &r.lm {
            Some(lm) => (
                num(lm.rms_before),
                num(lm.rms_after),
                num(lm.lambda),
                lm.accepted.to_string(),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        w.row([
            r.epoch.to_string(),
            num(r.percent_correct),
            num(r.loss),
            rb,
            ra,
            lam,
            acc,
        ])?;
    }
    w.finish()
}

fn run_classifier(cfg: &ExperimentConfig, dir: &Path) -> anyhow::Result<serde_json::Value> {
    anyhow::ensure!(
        cfg.corpus.manifest.is_some()
            || !matches!(
                cfg.kind,
                ExperimentKind::BirdsCats | ExperimentKind::DogsCats
            ),
        "{} needs corpus.manifest pointing at a user-supplied image folder",
        cfg.kind
    );
    let (corpus, held) = split_holdout(build_corpus(&cfg.corpus)?, cfg.corpus.holdout)?;
    let mut net = new_classifier(cfg.corpus.qubits, &cfg.classifier);
    let reports = train_binary(&mut net, &corpus.states, &cfg.classifier)?;
    classifier_csvs(dir, &cfg.to_json(), &corpus.labels, &reports)?;
    write_json(&dir.join("network.json"), &net)?;
    let last = reports.last().expect("initial report");
    let holdout_percent = if held.states.is_empty() {
        None
    } else {
        let r = evaluate(&net, &cfg.classifier.geometry, &held.states, last.epoch)?;
        let hd = dir.join("holdout");
        std::fs::create_dir_all(&hd)?;
        classifier_csvs(&hd, &cfg.to_json(), &held.labels, std::slice::from_ref(&r))?;
        Some(r.percent_correct)
    };
    Ok(serde_json::to_value(ClassifierSummary {
        examples: corpus.states.len(),
        qubits: cfg.corpus.qubits,
        epochs_run: last.epoch,
        initial_percent: reports[0].percent_correct,
        final_percent: last.percent_correct,
        best_percent: best_percent(&reports),
        holdout_examples: held.states.len(),
        holdout_percent,
    })?)
}

/// Scores a saved network on a corpus without training.
pub fn evaluate_saved(
    network: &Path,
    corpus: &CorpusConfig,
    geometry: &qdtn_core::SeparatorGeometry,
) -> anyhow::Result<ClassifierReport> {
    let net: QuantumNetwork = read_json(network)?;
    anyhow::ensure!(
        net.n_qubits() == corpus.qubits,
        "network has {} qubits, corpus {}",
        net.n_qubits(),
        corpus.qubits
    );
    let c = build_corpus(corpus)?;
    Ok(evaluate(&net, geometry, &c.states, 0)?)
}
