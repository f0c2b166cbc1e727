use std::fmt;
use std::path::{Path, PathBuf};

use qdtn_core::{ClassifierConfig, GanConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gradcheck::GradcheckConfig;
use crate::letters::{default_letters, INVERTED};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum ExperimentKind {
    #[serde(rename = "gan-product")]
    #[value(name = "gan-product")]
    GanProduct,
    #[serde(rename = "letters-3q")]
    #[value(name = "letters-3q")]
    Letters3q,
    #[serde(rename = "letters-4q")]
    #[value(name = "letters-4q")]
    Letters4q,
    #[serde(rename = "birds-cats")]
    #[value(name = "birds-cats")]
    BirdsCats,
    #[serde(rename = "dogs-cats")]
    #[value(name = "dogs-cats")]
    DogsCats,
    #[serde(rename = "gradcheck")]
    #[value(name = "gradcheck")]
    Gradcheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::GanProduct => "gan-product",
            Self::Letters3q => "letters-3q",
            Self::Letters4q => "letters-4q",
            Self::BirdsCats => "birds-cats",
            Self::DogsCats => "dogs-cats",
            Self::Gradcheck => "gradcheck",
        }
    }

    pub fn is_classifier(self) -> bool {
        matches!(
            self,
            Self::Letters3q | Self::Letters4q | Self::BirdsCats | Self::DogsCats
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where classifier images come from and how they are labelled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    /// Letters to render when no manifest is given.
    pub letters: Vec<char>,
    pub render_size: usize,
    /// `[{path, label}]` JSON; paths relative to the manifest.
    pub manifest: Option<PathBuf>,
    /// Labels trained toward the low target; everything else goes high.
    pub low_labels: Vec<String>,
    pub qubits: usize,
    pub cache_dir: Option<PathBuf>,
    /// Fraction of each class kept out of training and scored afterwards.
    pub holdout: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            letters: default_letters(6),
            render_size: 64,
            manifest: None,
            low_labels: vec![INVERTED.to_string()],
            qubits: 3,
            cache_dir: None,
            holdout: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub gan: GanConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
}

impl ExperimentConfig {
    /// Defaults for each experiment kind.
    pub fn preset(kind: ExperimentKind) -> Self {
        let classifier = ClassifierConfig {
            epochs: 200,
            ..ClassifierConfig::default()
        };
        let corpus = match kind {
            ExperimentKind::Letters4q => CorpusConfig {
                letters: default_letters(12),
                qubits: 4,
                ..CorpusConfig::default()
            },
            ExperimentKind::BirdsCats => CorpusConfig {
                letters: vec![],
                qubits: 4,
                low_labels: vec!["bird".into()],
                ..CorpusConfig::default()
            },
            ExperimentKind::DogsCats => CorpusConfig {
                letters: vec![],
                qubits: 4,
                low_labels: vec!["dog".into()],
                ..CorpusConfig::default()
            },
            _ => CorpusConfig::default(),
        };
        Self {
            kind,
            gan: GanConfig::default(),
            classifier,
            corpus,
            gradcheck: GradcheckConfig::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))[..16].to_string()
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        crate::formats::read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_hash() {
        let c = ExperimentConfig::preset(ExperimentKind::Letters4q);
        let back: ExperimentConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.corpus.letters.len(), 12);
        let mut d = c.clone();
        d.classifier.seed += 1;
        assert_ne!(d.hash(), c.hash());
        let minimal: ExperimentConfig = serde_json::from_str(r#"{"kind":"gradcheck"}"#).unwrap();
        assert_eq!(minimal.kind, ExperimentKind::Gradcheck);
        assert_eq!(minimal.gradcheck.n_networks, 20);
    }
}
