//! Binary classifier on a single `Z⊗…⊗Z` correlation with the damping
//! channel switched on, trained with an error discounted by how far each
//! output already sits on its side of the separator.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::Propagator;
use crate::error::{CoreError, CoreResult};
use crate::lm::{EpochReport, LmConfig, LmState};
use crate::network::{NetworkConfig, QuantumNetwork};
use crate::objective::{Example, Objective};
use crate::qgan::{map_examples_indexed, rebuilt_batch_epoch};
use crate::state::{pauli_correlation, DensityMatrix, MeasureOperator, RandomSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    /// Trained toward the low target.
    A,
    /// Trained toward the high target.
    B,
}

/// How far an output is from its own target, in discount tiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    AtTarget,
    Margin,
    Outside,
}

impl Tier {
    pub fn multiplier(self) -> f64 {
        match self {
            Tier::AtTarget => 0.01,
            Tier::Margin => 0.2,
            Tier::Outside => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparatorGeometry {
    pub separator: f64,
    pub low_target: f64,
    pub high_target: f64,
}

impl Default for SeparatorGeometry {
    fn default() -> Self {
        Self {
            separator: 0.25,
            low_target: 0.05,
            high_target: 0.6,
        }
    }
}

impl SeparatorGeometry {
    pub fn validate(&self) -> CoreResult<()> {
        if self.low_target < self.separator && self.separator < self.high_target {
            Ok(())
        } else {
            Err(CoreError::InvalidArgument(
                "targets must straddle the separator".into(),
            ))
        }
    }

    /// Margin line on the low side, a quarter of the way to the target.
    pub fn low_margin(&self) -> f64 {
        self.separator - 0.25 * (self.separator - self.low_target)
    }

    pub fn high_margin(&self) -> f64 {
        self.separator + 0.25 * (self.high_target - self.separator)
    }

    pub fn target(&self, label: ClassLabel) -> f64 {
        match label {
            ClassLabel::A => self.low_target,
            ClassLabel::B => self.high_target,
        }
    }

    pub fn verdict(&self, output: f64) -> ClassLabel {
        if output >= self.separator {
            ClassLabel::B
        } else {
            ClassLabel::A
        }
    }

    pub fn tier(&self, output: f64, label: ClassLabel) -> Tier {
        match label {
            ClassLabel::A if output <= self.low_target => Tier::AtTarget,
            ClassLabel::A if output <= self.low_margin() => Tier::Margin,
            ClassLabel::B if output >= self.high_target => Tier::AtTarget,
            ClassLabel::B if output >= self.high_margin() => Tier::Margin,
            _ => Tier::Outside,
        }
    }

    /// `multiplier · ½(output − target)²`.
    pub fn discounted_error(&self, output: f64, label: ClassLabel) -> f64 {
        let e = output - self.target(label);
        self.tier(output, label).multiplier() * 0.5 * e * e
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledState {
    pub id: String,
    pub label: ClassLabel,
    pub state: DensityMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRow {
    pub id: String,
    pub label: ClassLabel,
    pub output: f64,
    pub tier: Tier,
    pub verdict: ClassLabel,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub rows: Vec<ClassifierRow>,
    pub percent_correct: f64,
    /// Mean discounted error.
    pub loss: f64,
    /// The LM epoch that produced this network, absent for epoch 0.
    pub lm: Option<EpochReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub network: NetworkConfig,
    pub geometry: SeparatorGeometry,
    pub init_scale: f64,
    pub epochs: usize,
    /// Stop as soon as every training example is classified correctly.
    pub stop_when_perfect: bool,
    pub lm: LmConfig,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig {
                lindblad: true,
                ..NetworkConfig::default()
            },
            geometry: SeparatorGeometry::default(),
            init_scale: 0.5,
            epochs: 100,
            stop_when_perfect: true,
            lm: LmConfig::default(),
            seed: 7,
        }
    }
}

/// Network with random Hamiltonian coefficients and zero decay.
pub fn new_classifier(n_qubits: usize, cfg: &ClassifierConfig) -> QuantumNetwork {
    let mut rng = RandomSource::with_stream(cfg.seed, 30);
    QuantumNetwork::random(n_qubits, cfg.network, cfg.init_scale, &mut rng)
}

/// `tr(Z⊗…⊗Z ρ(t_f))²`.
pub fn classifier_output(
    prop: &Propagator,
    measure: &MeasureOperator,
    rho: &DensityMatrix,
) -> CoreResult<f64> {
    let c = pauli_correlation(measure, &prop.final_state(rho)?)?;
    Ok(c * c)
}

pub fn evaluate(
    net: &QuantumNetwork,
    geo: &SeparatorGeometry,
    corpus: &[LabeledState],
    epoch: usize,
) -> CoreResult<ClassifierReport> {
    if corpus.is_empty() {
        return Err(CoreError::InvalidArgument("empty corpus".into()));
    }
    let prop = Propagator::new(net);
    let measure = MeasureOperator::z_string(net.n_qubits());
    let idx: Vec<usize> = (0..corpus.len()).collect();
    let outputs = map_examples_indexed(&idx, |i| {
        classifier_output(&prop, &measure, &corpus[i].state)
    })?;
    let mut rows = Vec::with_capacity(corpus.len());
    let mut loss = 0.0;
    for (ex, &output) in corpus.iter().zip(&outputs) {
        let verdict = geo.verdict(output);
        loss += geo.discounted_error(output, ex.label);
        rows.push(ClassifierRow {
            id: ex.id.clone(),
            label: ex.label,
            output,
            tier: geo.tier(output, ex.label),
            verdict,
            correct: verdict == ex.label,
        });
    }
    let n = rows.len() as f64;
    let correct = rows.iter().filter(|r| r.correct).count() as f64;
    Ok(ClassifierReport {
        epoch,
        rows,
        percent_correct: 100.0 * correct / n,
        loss: loss / n,
        lm: None,
    })
}

/// Measure objectives weighted by each example's current tier.
pub fn classifier_batch(
    n_qubits: usize,
    geo: &SeparatorGeometry,
    corpus: &[LabeledState],
    report: &ClassifierReport,
) -> Vec<Example> {
    corpus
        .iter()
        .zip(&report.rows)
        .map(|(ex, row)| {
            let obj = Objective::measure(MeasureOperator::z_string(n_qubits), geo.target(ex.label))
                .with_weight(row.tier.multiplier());
            Example::new(ex.state.clone(), obj)
        })
        .collect()
}

/// Trains `net` on `corpus`; the returned reports start with the untrained
/// network and hold one entry per epoch run.
pub fn train_binary(
    net: &mut QuantumNetwork,
    corpus: &[LabeledState],
    cfg: &ClassifierConfig,
) -> CoreResult<Vec<ClassifierReport>> {
    cfg.geometry.validate()?;
    let n = net.n_qubits();
    if let Some(bad) = corpus.iter().find(|e| e.state.n_qubits() != n) {
        return Err(CoreError::WrongQubitCount {
            expected: n,
            found: bad.state.n_qubits(),
        });
    }
    let mut state = LmState::new(net.parameter_count(), &cfg.lm);
    let mut reports = Vec::with_capacity(cfg.epochs + 1);
    reports.push(evaluate(net, &cfg.geometry, corpus, 0)?);
    for epoch in 1..=cfg.epochs {
        let last = reports.last().expect("non-empty");
        if cfg.stop_when_perfect && last.percent_correct >= 100.0 {
            break;
        }
        let examples = classifier_batch(n, &cfg.geometry, corpus, last);
        let lm = rebuilt_batch_epoch(net, examples, &mut state, &cfg.lm)?;
        let mut r = evaluate(net, &cfg.geometry, corpus, epoch)?;
        r.lm = Some(lm);
        reports.push(r);
    }
    Ok(reports)
}

/// Highest training accuracy across a run.
pub fn best_percent(reports: &[ClassifierReport]) -> f64 {
    reports
        .iter()
        .map(|r| r.percent_correct)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{random_product_state, DensityMatrix};
    use alloc::format;

    #[test]
    fn geometry_examples() {
        let g = SeparatorGeometry::default();
        assert!((g.low_margin() - 0.2).abs() < 1e-15);
        assert!((g.high_margin() - 0.3375).abs() < 1e-15);
        assert_eq!(g.tier(0.05, ClassLabel::A), Tier::AtTarget);
        assert_eq!(g.tier(0.2, ClassLabel::A), Tier::Margin);
        assert_eq!(g.tier(0.21, ClassLabel::A), Tier::Outside);
        assert_eq!(g.tier(0.9, ClassLabel::A), Tier::Outside);
        assert_eq!(g.tier(0.6, ClassLabel::B), Tier::AtTarget);
        assert_eq!(g.tier(0.3375, ClassLabel::B), Tier::Margin);
        assert_eq!(g.tier(0.3, ClassLabel::B), Tier::Outside);
        assert_eq!(g.verdict(0.25), ClassLabel::B);
        assert_eq!(g.verdict(0.2499), ClassLabel::A);
        assert!((g.discounted_error(0.0, ClassLabel::A) - 0.01 * 0.5 * 0.0025).abs() < 1e-18);
        assert!((g.discounted_error(0.4, ClassLabel::B) - 0.2 * 0.5 * 0.04).abs() < 1e-15);
        assert!((g.discounted_error(0.3, ClassLabel::A) - 0.5 * 0.0625).abs() < 1e-15);
        let bad = SeparatorGeometry {
            separator: 0.7,
            ..g
        };
        assert!(bad.validate().is_err());
    }

    fn toy_corpus() -> Vec<LabeledState> {
        let mut rng = RandomSource::seeded(12);
        (0..8)
            .map(|i| {
                let label = if i % 2 == 0 {
                    ClassLabel::A
                } else {
                    ClassLabel::B
                };
                let state = if label == ClassLabel::B {
                    DensityMatrix::basis(2, if i % 4 == 1 { 0 } else { 3 })
                } else {
                    random_product_state(&mut rng).to_density()
                };
                LabeledState {
                    id: format!("s{i}"),
                    label,
                    state,
                }
            })
            .collect()
    }

    #[test]
    fn training_separates_a_toy_set() {
        let cfg = ClassifierConfig {
            network: NetworkConfig {
                n_steps: 100,
                lindblad: true,
                ..NetworkConfig::default()
            },
            epochs: 40,
            init_scale: 0.2,
            ..ClassifierConfig::default()
        };
        let corpus = toy_corpus();
        let mut net = new_classifier(2, &cfg);
        let reports = train_binary(&mut net, &corpus, &cfg).unwrap();
        assert_eq!(reports[0].epoch, 0);
        assert!(reports[0].lm.is_none());
        let last = reports.last().unwrap();
        assert_eq!(best_percent(&reports), 100.0);
        for r in &last.rows {
            assert_eq!(r.correct, r.verdict == r.label);
        }
    }

    #[test]
    fn batch_weights_follow_tiers() {
        let g = SeparatorGeometry::default();
        let corpus = toy_corpus();
        let net = QuantumNetwork::zeros(
            2,
            NetworkConfig {
                n_steps: 10,
                ..NetworkConfig::default()
            },
        );
        let report = evaluate(&net, &g, &corpus, 0).unwrap();
        let batch = classifier_batch(2, &g, &corpus, &report);
        for (ex, row) in batch.iter().zip(&report.rows) {
            assert_eq!(ex.objective.weight, row.tier.multiplier());
        }
        let bad = vec![LabeledState {
            id: "x".into(),
            label: ClassLabel::A,
            state: DensityMatrix::basis(3, 0),
        }];
        let mut net2 = net.clone();
        assert!(matches!(
            train_binary(&mut net2, &bad, &ClassifierConfig::default()),
            Err(CoreError::WrongQubitCount { .. })
        ));
    }
}
