//! File formats, image ingestion, the rendered letter corpus and the
//! experiment runner behind the `qdtn` command.

pub mod config;
pub mod experiment;
pub mod formats;
pub mod gradcheck;
pub mod imaging;
pub mod letters;
pub mod transform;

pub use config::{CorpusConfig, ExperimentConfig, ExperimentKind};
pub use experiment::{artifact_dir, build_corpus, run_experiment, RunOutcome};
pub use transform::{dft2, idft2, image_to_state};

/// Caps the global worker pool from `QDTN_THREADS`; unset or invalid
/// values leave the default.
pub fn init_threads() -> anyhow::Result<()> {
    if let Some(n) = std::env::var("QDTN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()?;
        }
    }
    Ok(())
}
