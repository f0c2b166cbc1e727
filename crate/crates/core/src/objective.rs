//! Per-example losses, their state gradients, and batched evaluation.

use alloc::vec::Vec;

use crate::dynamics::{final_costate_measure, final_costate_target, GradientVector, Propagator};
use crate::error::{CoreError, CoreResult};
use crate::linalg::ComplexMatrix;
use crate::network::QuantumNetwork;
use crate::state::{pauli_correlation, DensityMatrix, MeasureOperator};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// What a single example is trained toward.
#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveKind {
    /// `‖T − ρ(t_f)‖²_F`
    TargetState(DensityMatrix),
    /// `½ (tr(Mρ(t_f))² − target)²`
    MeasureTarget {
        measure: MeasureOperator,
        target: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub kind: ObjectiveKind,
    /// Multiplies both the loss and its gradient.
    pub weight: f64,
}

impl Objective {
    pub fn target_state(t: DensityMatrix) -> Self {
        Self {
            kind: ObjectiveKind::TargetState(t),
            weight: 1.0,
        }
    }

    pub fn measure(measure: MeasureOperator, target: f64) -> Self {
        Self {
            kind: ObjectiveKind::MeasureTarget { measure, target },
            weight: 1.0,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn loss(&self, rho_f: &DensityMatrix) -> CoreResult<f64> {
        let raw = match &self.kind {
            ObjectiveKind::TargetState(t) => {
                if t.dim() != rho_f.dim() {
                    return Err(CoreError::DimensionMismatch {
                        expected: t.dim(),
                        found: rho_f.dim(),
                    });
                }
                (t.matrix() - rho_f.matrix()).frobenius_norm_sqr()
            }
            ObjectiveKind::MeasureTarget { measure, target } => {
                let c = pauli_correlation(measure, rho_f)?;
                0.5 * (c * c - target).powi(2)
            }
        };
        Ok(self.weight * raw)
    }

    /// Final-time costate in the form the trainer propagates backward.
    pub fn costate(&self, rho_f: &DensityMatrix) -> CoreResult<ComplexMatrix> {
        match &self.kind {
            ObjectiveKind::TargetState(t) => final_costate_target(t, rho_f),
            ObjectiveKind::MeasureTarget { measure, target } => {
                final_costate_measure(measure, rho_f, *target)
            }
        }
    }

    /// Factor relating [`Self::costate`] to `∂loss/∂ρ(t_f)` before weighting.
    pub fn costate_scale(&self) -> f64 {
        match self.kind {
            ObjectiveKind::TargetState(_) => -2.0,
            ObjectiveKind::MeasureTarget { .. } => 1.0,
        }
    }

    /// `∂loss/∂ρ(t_f)` under the real inner product `Re tr(X†Y)`.
    pub fn state_gradient(&self, rho_f: &DensityMatrix) -> CoreResult<ComplexMatrix> {
        Ok(self
            .costate(rho_f)?
            .scale_real(self.costate_scale() * self.weight))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: DensityMatrix,
    pub objective: Objective,
}

impl Example {
    pub fn new(input: DensityMatrix, objective: Objective) -> Self {
        Self { input, objective }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    examples: Vec<Example>,
}

impl Batch {
    pub fn new(examples: Vec<Example>) -> CoreResult<Self> {
        if examples.is_empty() {
            return Err(CoreError::InvalidArgument("batch must not be empty".into()));
        }
        Ok(Self { examples })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Per-example loss gradients and losses.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianStack {
    pub rows: Vec<GradientVector>,
    pub losses: Vec<f64>,
}

impl JacobianStack {
    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }

    pub fn mean_gradient(&self) -> GradientVector {
        let n = self.rows.len() as f64;
        let mut g = alloc::vec![0.0; self.rows.first().map_or(0, Vec::len)];
        for row in &self.rows {
            for (a, b) in g.iter_mut().zip(row) {
                *a += b;
            }
        }
        g.iter_mut().for_each(|x| *x /= n);
        g
    }
}

/// Loss and parameter gradient of one example, plus the loss gradient with
/// respect to the example's input state.
pub struct ExampleGradient {
    pub loss: f64,
    pub gradient: GradientVector,
    pub input_gradient: ComplexMatrix,
}

pub fn example_gradient(prop: &Propagator, example: &Example) -> CoreResult<ExampleGradient> {
    let fwd = prop.forward(&example.input)?;
    let rho_f = fwd.final_state();
    let loss = example.objective.loss(rho_f)?;
    let gf = example.objective.state_gradient(rho_f)?;
    let (input_gradient, gradient) = prop.pullback_and_gradient(&fwd, &gf)?;
    Ok(ExampleGradient {
        loss,
        gradient,
        input_gradient,
    })
}

pub fn example_loss(prop: &Propagator, example: &Example) -> CoreResult<f64> {
    example.objective.loss(&prop.final_state(&example.input)?)
}

#[cfg(feature = "std")]
pub(crate) fn map_examples<T: Send>(
    examples: &[Example],
    f: impl Fn(&Example) -> CoreResult<T> + Sync + Send,
) -> CoreResult<Vec<T>> {
    use rayon::prelude::*;
    examples.par_iter().map(f).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn map_examples<T: Send>(
    examples: &[Example],
    f: impl Fn(&Example) -> CoreResult<T> + Sync + Send,
) -> CoreResult<Vec<T>> {
    examples.iter().map(f).collect()
}

/// Mean of per-example losses.
pub fn batch_loss(net: &QuantumNetwork, batch: &Batch) -> CoreResult<f64> {
    let prop = Propagator::new(net);
    let losses = map_examples(batch.examples(), |e| example_loss(&prop, e))?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Root of the mean loss.
pub fn batch_rms(net: &QuantumNetwork, batch: &Batch) -> CoreResult<f64> {
    Ok(batch_loss(net, batch)?.sqrt())
}

pub fn batch_jacobian(net: &QuantumNetwork, batch: &Batch) -> CoreResult<JacobianStack> {
    let prop = Propagator::new(net);
    let parts = map_examples(batch.examples(), |e| example_gradient(&prop, e))?;
    let (rows, losses) = parts.into_iter().map(|p| (p.gradient, p.loss)).unzip();
    Ok(JacobianStack { rows, losses })
}

/// Central finite differences of the discretized loss; test and CLI oracle.
pub fn finite_difference_gradient(
    net: &QuantumNetwork,
    example: &Example,
    step: f64,
) -> CoreResult<GradientVector> {
    let w = net.parameter_vector();
    let mut out = Vec::with_capacity(w.len());
    let mut probe = net.clone();
    for i in 0..w.len() {
        let mut wp = w.clone();
        wp[i] += step;
        probe.set_parameter_vector(&wp)?;
        let lp = example_loss(&Propagator::new(&probe), example)?;
        wp[i] -= 2.0 * step;
        probe.set_parameter_vector(&wp)?;
        let lm = example_loss(&Propagator::new(&probe), example)?;
        out.push((lp - lm) / (2.0 * step));
    }
    Ok(out)
}

/// `max_i |a_i − b_i| / max_i |b_i|`, with `b` the reference.
pub fn normwise_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;
    use crate::state::{flat_state, validate_density, RandomSource};
    use crate::C64;

    fn mixed(n: usize, rng: &mut RandomSource) -> DensityMatrix {
        let a = rng.haar_state(n).to_density();
        let b = rng.haar_state(n).to_density();
        let mut m = a.matrix().scale_real(0.6);
        m.axpy(C64::new(0.4, 0.0), b.matrix());
        validate_density(m).unwrap()
    }

    #[test]
    fn loss_examples() {
        let net = QuantumNetwork::zeros(1, NetworkConfig::default());
        let rho0 = DensityMatrix::basis(1, 1);
        let same = Batch::new(vec![Example::new(
            rho0.clone(),
            Objective::target_state(rho0.clone()),
        )])
        .unwrap();
        assert_eq!(batch_loss(&net, &same).unwrap(), 0.0);
        let flip = Batch::new(vec![Example::new(
            rho0,
            Objective::target_state(DensityMatrix::basis(1, 0)),
        )])
        .unwrap();
        assert_eq!(batch_loss(&net, &flip).unwrap(), 2.0);
        assert!(Batch::new(vec![]).is_err());
    }

    #[test]
    fn state_gradient_matches_finite_differences() {
        let mut rng = RandomSource::seeded(3);
        let rho = mixed(2, &mut rng);
        let objectives = [
            Objective::target_state(mixed(2, &mut rng)),
            Objective::measure(MeasureOperator::zz(), 0.3),
            Objective::measure(MeasureOperator::xx(), 0.6).with_weight(0.2),
        ];
        for obj in &objectives {
            let g = obj.state_gradient(&rho).unwrap();
            // Perturb along random Hermitian directions.
            for _ in 0..5 {
                let e = ComplexMatrix::from_fn(4, |_, _| C64::new(rng.gaussian(), rng.gaussian()))
                    .hermitian_part();
                let h = 1e-6;
                let mut p = rho.matrix().clone();
                p.axpy(C64::new(h, 0.0), &e);
                let mut m = rho.matrix().clone();
                m.axpy(C64::new(-h, 0.0), &e);
                let lp = obj.loss(&DensityMatrix::new_unchecked(p)).unwrap();
                let lm = obj.loss(&DensityMatrix::new_unchecked(m)).unwrap();
                let fd = (lp - lm) / (2.0 * h);
                let an = g.inner(&e).re;
                assert!((fd - an).abs() <= 1e-7 * (1.0 + an.abs()), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let mut rng = RandomSource::seeded(11);
        for lindblad in [false, true] {
            let cfg = NetworkConfig {
                lindblad,
                n_steps: 60,
                ..Default::default()
            };
            let mut net = QuantumNetwork::random(2, cfg, 1.0, &mut rng);
            net.decay_mut().a0 = 0.6;
            let ex = Example::new(
                mixed(2, &mut rng),
                Objective::target_state(mixed(2, &mut rng)),
            );
            let g = example_gradient(&Propagator::new(&net), &ex)
                .unwrap()
                .gradient;
            let fd = finite_difference_gradient(&net, &ex, 1e-6).unwrap();
            let err = normwise_relative_error(&g, &fd);
            assert!(err < 1e-6, "lindblad={lindblad} err={err}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = RandomSource::seeded(12);
        for lindblad in [false, true] {
            let cfg = NetworkConfig {
                n_steps: 40,
                lindblad,
                ..Default::default()
            };
            let mut net = QuantumNetwork::random(2, cfg, 1.0, &mut rng);
            net.decay_mut().a0 = 0.4;
            let prop = Propagator::new(&net);
            let ex = Example::new(
                flat_state(2),
                Objective::measure(MeasureOperator::yy(), 0.6),
            );
            let g0 = example_gradient(&prop, &ex).unwrap().input_gradient;
            let e = ComplexMatrix::from_fn(4, |_, _| C64::new(rng.gaussian(), rng.gaussian()))
                .hermitian_part();
            let h = 1e-6;
            let loss_at = |s: f64| {
                let mut m = ex.input.matrix().clone();
                m.axpy(C64::new(s, 0.0), &e);
                let out = DensityMatrix::new_unchecked(prop.evolve_matrix(&m));
                ex.objective.loss(&out).unwrap()
            };
            let fd = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let an = g0.inner(&e).re;
            assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{fd} vs {an}");
        }
    }
}
