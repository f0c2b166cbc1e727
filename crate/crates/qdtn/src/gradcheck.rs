//! Adjoint gradients against central finite differences on random 2-qubit
//! networks.

use qdtn_core::objective::{example_gradient, finite_difference_gradient, normwise_relative_error};
use qdtn_core::{
    validate_density, CoreResult, DensityMatrix, Example, MeasureOperator, NetworkConfig,
    Objective, Propagator, QuantumNetwork, RandomSource,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub n_networks: usize,
    pub n_steps: usize,
    pub n_harmonics: usize,
    pub init_scale: f64,
    /// Mean decay rate when the damping channel is on.
    pub decay: f64,
    pub fd_step: f64,
    /// Failure threshold without damping.
    pub tolerance: f64,
    pub tolerance_lindblad: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            n_networks: 20,
            n_steps: 200,
            n_harmonics: 3,
            init_scale: 1.0,
            decay: 0.6,
            fd_step: 1e-6,
            tolerance: 1e-6,
            tolerance_lindblad: 1e-4,
            seed: 99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub network: usize,
    pub lindblad: bool,
    pub objective: String,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub rows: Vec<GradcheckRow>,
    pub max_unitary: f64,
    pub max_lindblad: f64,
    pub passed: bool,
}

fn mixed_state(rng: &mut RandomSource) -> CoreResult<DensityMatrix> {
    let p = rng.uniform(0.2, 0.8);
    let a = rng.haar_state(2).to_density();
    let b = rng.haar_state(2).to_density();
    let mut m = a.matrix().scale_real(p);
    m += &b.matrix().scale_real(1.0 - p);
    validate_density(m)
}

fn network(cfg: &GradcheckConfig, lindblad: bool, rng: &mut RandomSource) -> QuantumNetwork {
    let nc = NetworkConfig {
        n_harmonics: cfg.n_harmonics,
        n_steps: cfg.n_steps,
        lindblad,
        ..NetworkConfig::default()
    };
    let mut net = QuantumNetwork::random(2, nc, cfg.init_scale, rng);
    let decay = net.decay_mut();
    let mut c = decay.coefficients();
    c[0] = cfg.decay;
    // Small harmonics keep Γ(t) away from its clamp.
    for x in &mut c[1..] {
        *x = 0.02 * rng.gaussian();
    }
    decay.set_coefficients(&c);
    net
}

fn check_one(cfg: &GradcheckConfig, index: usize) -> CoreResult<Vec<GradcheckRow>> {
    let mut rows = Vec::new();
    for lindblad in [false, true] {
        let mut rng = RandomSource::with_stream(cfg.seed, 2 * index as u64 + lindblad as u64);
        let net = network(cfg, lindblad, &mut rng);
        let examples = [
            (
                "target-state",
                Example::new(
                    mixed_state(&mut rng)?,
                    Objective::target_state(mixed_state(&mut rng)?),
                ),
            ),
            (
                "measure",
                Example::new(
                    mixed_state(&mut rng)?,
                    Objective::measure(MeasureOperator::zz(), 0.3),
                ),
            ),
        ];
        let prop = Propagator::new(&net);
        for (name, ex) in examples {
            let adj = example_gradient(&prop, &ex)?.gradient;
            let fd = finite_difference_gradient(&net, &ex, cfg.fd_step)?;
            rows.push(GradcheckRow {
                network: index,
                lindblad,
                objective: name.to_string(),
                relative_error: normwise_relative_error(&adj, &fd),
            });
        }
    }
    Ok(rows)
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> CoreResult<GradcheckSummary> {
    let per: Vec<Vec<GradcheckRow>> = (0..cfg.n_networks)
        .into_par_iter()
        .map(|i| check_one(cfg, i))
        .collect::<CoreResult<_>>()?;
    let rows: Vec<GradcheckRow> = per.into_iter().flatten().collect();
    let max_of = |l: bool| {
        rows.iter()
            .filter(|r| r.lindblad == l)
            .map(|r| r.relative_error)
            .fold(0.0, f64::max)
    };
    let max_unitary = max_of(false);
    let max_lindblad = max_of(true);
    Ok(GradcheckSummary {
        passed: max_unitary <= cfg.tolerance && max_lindblad <= cfg.tolerance_lindblad,
        rows,
        max_unitary,
        max_lindblad,
    })
}
