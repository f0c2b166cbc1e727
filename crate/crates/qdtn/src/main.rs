use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qdtn::config::{CorpusConfig, ExperimentConfig, ExperimentKind};
use qdtn::experiment::{evaluate_saved, run_experiment};
use qdtn::formats::write_density;
use qdtn::letters::{default_letters, gen_letter_corpus, LetterCorpusSpec};
use qdtn::transform::{file_to_state, StateCache};

#[derive(Parser)]
#[command(
    name = "qdtn",
    version,
    about = "Quantum dynamic tensor network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render letters and their inversions to PNG plus manifest.json.
    GenLetters {
        #[arg(long)]
        out: PathBuf,
        /// Explicit letters, e.g. "FGJ"; defaults to the first --count flip-asymmetric letters.
        #[arg(long)]
        letters: Option<String>,
        #[arg(long, default_value_t = 15)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Transform one PNG/JPEG into a density matrix JSON file.
    TransformImage {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        qubits: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run the product-state GAN.
    TrainGan {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long)]
        gan_epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a binary image classifier.
    TrainClassifier {
        #[arg(long, value_enum, default_value_t = ExperimentKind::Letters3q)]
        kind: ExperimentKind,
        #[command(flatten)]
        common: RunArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of each class held out of training and scored afterwards.
        #[arg(long)]
        holdout: Option<f64>,
    },
    /// Score a saved classifier network on a corpus.
    Evaluate {
        #[arg(long)]
        network: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        qubits: usize,
    },
    /// Compare adjoint gradients with finite differences.
    Gradcheck {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long)]
        networks: Option<usize>,
    },
    /// Run an experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Base config; the subcommand's kind and flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct CorpusArgs {
    /// Manifest of `[{path, label}]`; letters are rendered when absent.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Label trained toward the low target (repeatable).
    #[arg(long = "low-label")]
    low_labels: Vec<String>,
    #[arg(long)]
    letters: Option<String>,
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl CorpusArgs {
    fn apply(&self, c: &mut CorpusConfig) {
        if let Some(m) = &self.manifest {
            c.manifest = Some(m.clone());
        }
        if !self.low_labels.is_empty() {
            c.low_labels = self.low_labels.clone();
        }
        if let Some(l) = &self.letters {
            c.letters = l.chars().collect();
        }
        if let Some(d) = &self.cache {
            c.cache_dir = Some(d.clone());
        }
    }
}

fn base_config(kind: ExperimentKind, path: &Option<PathBuf>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::preset(kind),
    };
    cfg.kind = kind;
    Ok(cfg)
}

fn report(outcome: qdtn::RunOutcome) -> anyhow::Result<ExitCode> {
    println!(
        "{}",
        serde_json::to_string_pretty(&outcome.summary["result"])?
    );
    println!("artifacts: {}", outcome.dir.display());
    Ok(if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    qdtn::init_threads()?;
    match cli.command {
        Command::GenLetters {
            out,
            letters,
            count,
            size,
        } => {
            let letters = letters.map_or_else(|| default_letters(count), |s| s.chars().collect());
            let m = gen_letter_corpus(
                &LetterCorpusSpec {
                    letters,
                    size,
                    inverted: true,
                },
                &out,
            )?;
            println!("wrote {} images to {}", m.len(), out.display());
        }
        Command::TransformImage {
            input,
            qubits,
            out,
            cache,
        } => {
            let cache = cache.map(StateCache::new);
            let rho = file_to_state(&input, qubits, cache.as_ref())?;
            write_density(&out, &rho)?;
            println!("wrote {}-qubit state to {}", qubits, out.display());
        }
        Command::TrainGan {
            common,
            gan_epochs,
            seed,
        } => {
            let mut cfg = base_config(ExperimentKind::GanProduct, &common.config)?;
            if let Some(e) = gan_epochs {
                cfg.gan.gan_epochs = e;
            }
            if let Some(s) = seed {
                cfg.gan.seed = s;
            }
            return report(run_experiment(&cfg, &common.out)?);
        }
        Command::TrainClassifier {
            kind,
            common,
            corpus,
            epochs,
            seed,
            holdout,
        } => {
            anyhow::ensure!(
                kind.is_classifier(),
                "{kind} is not a classifier experiment"
            );
            let mut cfg = base_config(kind, &common.config)?;
            corpus.apply(&mut cfg.corpus);
            if let Some(e) = epochs {
                cfg.classifier.epochs = e;
            }
            if let Some(s) = seed {
                cfg.classifier.seed = s;
            }
            if let Some(h) = holdout {
                cfg.corpus.holdout = h;
            }
            return report(run_experiment(&cfg, &common.out)?);
        }
        Command::Evaluate {
            network,
            corpus,
            qubits,
        } => {
            let mut c = CorpusConfig {
                qubits,
                ..CorpusConfig::default()
            };
            corpus.apply(&mut c);
            let r = evaluate_saved(&network, &c, &Default::default())?;
            for row in &r.rows {
                println!(
                    "{}\t{:.6}\t{:?}\t{}",
                    row.id, row.output, row.tier, row.correct
                );
            }
            println!("percent correct: {}", r.percent_correct);
        }
        Command::Gradcheck { common, networks } => {
            let mut cfg = base_config(ExperimentKind::Gradcheck, &common.config)?;
            if let Some(n) = networks {
                cfg.gradcheck.n_networks = n;
            }
            return report(run_experiment(&cfg, &common.out)?);
        }
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            return report(run_experiment(&cfg, &out)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string(), "causes": chain })
            );
            ExitCode::FAILURE
        }
    }
}
