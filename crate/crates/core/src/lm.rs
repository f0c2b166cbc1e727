//! Levenberg–Marquardt training with a rank-structured Hessian and `DᵀD`
//! damping.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dynamics::GradientVector;
use crate::error::{CoreError, CoreResult};
use crate::network::QuantumNetwork;
use crate::objective::{batch_jacobian, batch_loss, Batch, JacobianStack};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Damping {
    /// `Λ·diag(DᵀD)`
    ScaledDiagonal,
    /// `Λ·I`
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub eta: f64,
    pub max_retries: usize,
    /// Relative RMS increase tolerated for an uphill step.
    pub uphill_tolerance: f64,
    pub dtd_floor: f64,
    pub damping: Damping,
    /// Mean losses at or below this are treated as converged.
    pub degenerate_loss: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            lambda_init: 1e-2,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_min: 1e-12,
            lambda_max: 1e12,
            eta: 1.0,
            max_retries: 8,
            uphill_tolerance: 1e-3,
            dtd_floor: 1e-6,
            damping: Damping::ScaledDiagonal,
            degenerate_loss: 1e-14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmState {
    pub lambda: f64,
    pub eta: f64,
    pub dtd_diag: Vec<f64>,
    pub epoch: usize,
    pub last_rms: f64,
    /// Norm of the last accepted update; bounds uphill steps.
    pub last_step_norm: f64,
}

impl LmState {
    pub fn new(n_params: usize, cfg: &LmConfig) -> Self {
        Self {
            lambda: cfg.lambda_init,
            eta: cfg.eta,
            dtd_diag: vec![cfg.dtd_floor; n_params],
            epoch: 0,
            last_rms: f64::NAN,
            last_step_norm: f64::INFINITY,
        }
    }

    fn clamp_lambda(&mut self, cfg: &LmConfig) {
        self.lambda = self.lambda.clamp(cfg.lambda_min, cfg.lambda_max);
    }

    /// Elementwise max with `diag`, never below the floor.
    pub fn absorb_diagonal(&mut self, diag: &[f64], cfg: &LmConfig) {
        for (d, &h) in self.dtd_diag.iter_mut().zip(diag) {
            *d = d.max(h).max(cfg.dtd_floor);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub rms_before: f64,
    pub rms_after: f64,
    /// Damping after the epoch's final accept/reject decision.
    pub lambda: f64,
    /// Damping used by each attempted step.
    pub lambda_trace: Vec<f64>,
    pub retries: usize,
    pub accepted: bool,
}

/// `mean(g gᵀ) / mean_loss`
pub fn assemble_hessian(j: &JacobianStack, mean_loss: f64) -> CoreResult<DMatrix<f64>> {
    if !(mean_loss > 1e-14) {
        return Err(CoreError::DegenerateLoss(mean_loss));
    }
    let n = j.rows.first().map_or(0, Vec::len);
    let mut h = DMatrix::<f64>::zeros(n, n);
    for g in &j.rows {
        if g.len() != n {
            return Err(CoreError::ParameterLength {
                expected: n,
                found: g.len(),
            });
        }
        let v = DVector::from_column_slice(g);
        h.ger(1.0, &v, &v, 1.0);
    }
    h /= j.rows.len() as f64 * mean_loss;
    Ok(h)
}

const JITTER_ATTEMPTS: usize = 12;

/// Solves `(H + Λ·D) δ = grad` and returns `−η·δ`.
pub fn lm_step(
    state: &LmState,
    hess: &DMatrix<f64>,
    grad: &[f64],
    cfg: &LmConfig,
) -> CoreResult<GradientVector> {
    let n = grad.len();
    if hess.nrows() != n || hess.ncols() != n {
        return Err(CoreError::ParameterLength {
            expected: hess.nrows(),
            found: n,
        });
    }
    let mut a = hess.clone();
    for i in 0..n {
        let d = match cfg.damping {
            Damping::ScaledDiagonal => state.dtd_diag[i],
            Damping::Identity => 1.0,
        };
        a[(i, i)] += state.lambda * d;
    }
    let b = DVector::from_column_slice(grad);
    let scale = (0..n)
        .map(|i| a[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut jitter = 0.0;
    for attempt in 0..=JITTER_ATTEMPTS {
        let mut m = a.clone();
        if jitter > 0.0 {
            for i in 0..n {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = m.cholesky() {
            let x = chol.solve(&b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x.iter().map(|v| -state.eta * v).collect());
            }
        }
        jitter = scale * 1e-14 * 10f64.powi(attempt as i32);
    }
    Err(CoreError::SingularSystem {
        attempts: JITTER_ATTEMPTS,
    })
}

/// A parameterized least-squares problem that one LM epoch can act on.
pub trait LmProblem {
    fn parameters(&self) -> Vec<f64>;
    fn set_parameters(&mut self, w: &[f64]) -> CoreResult<()>;
    /// Per-example gradients and losses at the current parameters.
    fn jacobian(&self) -> CoreResult<JacobianStack>;
    /// Mean loss at the current parameters.
    fn mean_loss(&self) -> CoreResult<f64>;
}

/// A network trained on a fixed batch.
pub struct NetworkProblem<'a> {
    pub net: &'a mut QuantumNetwork,
    pub batch: &'a Batch,
}

impl LmProblem for NetworkProblem<'_> {
    fn parameters(&self) -> Vec<f64> {
        self.net.parameter_vector()
    }

    fn set_parameters(&mut self, w: &[f64]) -> CoreResult<()> {
        self.net.set_parameter_vector(w)
    }

    fn jacobian(&self) -> CoreResult<JacobianStack> {
        batch_jacobian(self.net, self.batch)
    }

    fn mean_loss(&self) -> CoreResult<f64> {
        batch_loss(self.net, self.batch)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One epoch that reports a rejected epoch instead of failing.
///
/// Errors only on degenerate loss, singular systems or propagation failure;
/// parameters are left unchanged unless a step is accepted.
pub fn try_epoch<P: LmProblem>(
    p: &mut P,
    state: &mut LmState,
    cfg: &LmConfig,
) -> CoreResult<EpochReport> {
    let jac = p.jacobian()?;
    let mean_loss = jac.mean_loss();
    if mean_loss <= cfg.degenerate_loss {
        return Err(CoreError::DegenerateLoss(mean_loss));
    }
    let rms_before = mean_loss.sqrt();
    let hess = assemble_hessian(&jac, mean_loss)?;
    let grad = jac.mean_gradient();
    state.clamp_lambda(cfg);

    let w0 = p.parameters();
    let mut lambda_trace = Vec::new();
    let mut retries = 0;
    loop {
        lambda_trace.push(state.lambda);
        let delta = lm_step(state, &hess, &grad, cfg)?;
        let step_norm = norm(&delta);
        let w: Vec<f64> = w0.iter().zip(&delta).map(|(a, b)| a + b).collect();
        p.set_parameters(&w)?;
        let trial = p.mean_loss();
        let rms_after = match trial {
            Ok(l) if l.is_finite() => l.sqrt(),
            // An unstable trial point counts as a rejected step.
            Ok(_) | Err(CoreError::StepUnstable { .. }) => f64::INFINITY,
            Err(e) => {
                p.set_parameters(&w0)?;
                return Err(e);
            }
        };
        let downhill = rms_after < rms_before;
        let uphill_ok = rms_after <= rms_before * (1.0 + cfg.uphill_tolerance)
            && step_norm < state.last_step_norm;
        if downhill || uphill_ok {
            state.lambda /= cfg.lambda_down;
            state.clamp_lambda(cfg);
            let diag: Vec<f64> = (0..hess.nrows()).map(|i| hess[(i, i)]).collect();
            state.absorb_diagonal(&diag, cfg);
            state.epoch += 1;
            state.last_rms = rms_after;
            state.last_step_norm = step_norm;
            return Ok(EpochReport {
                epoch: state.epoch,
                rms_before,
                rms_after,
                lambda: state.lambda,
                lambda_trace,
                retries,
                accepted: true,
            });
        }
        p.set_parameters(&w0)?;
        state.lambda *= cfg.lambda_up;
        state.clamp_lambda(cfg);
        if retries == cfg.max_retries {
            state.epoch += 1;
            state.last_rms = rms_before;
            return Ok(EpochReport {
                epoch: state.epoch,
                rms_before,
                rms_after: rms_before,
                lambda: state.lambda,
                lambda_trace,
                retries,
                accepted: false,
            });
        }
        retries += 1;
    }
}

/// One epoch of the six-step procedure; a fully rejected epoch is an error.
pub fn lm_epoch<P: LmProblem>(
    p: &mut P,
    state: &mut LmState,
    cfg: &LmConfig,
) -> CoreResult<EpochReport> {
    let report = try_epoch(p, state, cfg)?;
    if report.accepted {
        Ok(report)
    } else {
        Err(CoreError::NoAcceptableStep {
            retries: report.retries,
            lambda: state.lambda,
        })
    }
}

pub fn run_epoch(
    net: &mut QuantumNetwork,
    batch: &Batch,
    state: &mut LmState,
    cfg: &LmConfig,
) -> CoreResult<EpochReport> {
    lm_epoch(&mut NetworkProblem { net, batch }, state, cfg)
}

/// Rate of the gradient-descent mode: the LM step with a zero Hessian, `Λ = 1`
/// and unit `DᵀD`.
pub const GD_DEFAULT_RATE: f64 = 1.0;

/// Plain gradient descent `W ← W − rate·∇L`; every step is accepted.
pub fn gd_epoch<P: LmProblem>(p: &mut P, rate: f64, epoch: usize) -> CoreResult<EpochReport> {
    let jac = p.jacobian()?;
    let mean_loss = jac.mean_loss();
    let grad = jac.mean_gradient();
    let w: Vec<f64> = p
        .parameters()
        .iter()
        .zip(&grad)
        .map(|(a, g)| a - rate * g)
        .collect();
    p.set_parameters(&w)?;
    let after = p.mean_loss()?;
    Ok(EpochReport {
        epoch,
        rms_before: mean_loss.sqrt(),
        rms_after: after.sqrt(),
        lambda: 0.0,
        lambda_trace: Vec::new(),
        retries: 0,
        accepted: true,
    })
}

/// Runs LM epochs until the RMS falls to `rms_goal`, the loss degenerates,
/// or `max_epochs` epochs have run. Rejected epochs are reported, not fatal.
pub fn train<P: LmProblem>(
    p: &mut P,
    state: &mut LmState,
    cfg: &LmConfig,
    max_epochs: usize,
    rms_goal: f64,
) -> CoreResult<Vec<EpochReport>> {
    let mut out = Vec::new();
    for _ in 0..max_epochs {
        match try_epoch(p, state, cfg) {
            Ok(r) => {
                let done = r.rms_after <= rms_goal;
                out.push(r);
                if done {
                    break;
                }
            }
            Err(CoreError::DegenerateLoss(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;
    use crate::objective::{Example, Objective};
    use crate::state::DensityMatrix;
    use approx::assert_abs_diff_eq;

    fn stack(rows: Vec<Vec<f64>>) -> JacobianStack {
        let losses = vec![1.0; rows.len()];
        JacobianStack { rows, losses }
    }

    #[test]
    fn hessian_examples() {
        let h = assemble_hessian(&stack(vec![vec![1.0, 0.0, 0.0]]), 1.0).unwrap();
        assert_eq!(h[(0, 0)], 1.0);
        assert_eq!(h.iter().filter(|&&x| x != 0.0).count(), 1);
        let g = vec![0.3, -1.2, 2.0];
        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
        let a = assemble_hessian(&stack(vec![g.clone()]), 0.7).unwrap();
        let b = assemble_hessian(&stack(vec![g, neg]), 0.7).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            assemble_hessian(&stack(vec![vec![1.0]]), 0.0),
            Err(CoreError::DegenerateLoss(_))
        ));
    }

    #[test]
    fn step_limits() {
        let cfg = LmConfig::default();
        let g = vec![0.5, -2.0];
        let mut st = LmState::new(2, &cfg);
        st.lambda = 1.0;
        st.dtd_diag = vec![1.0, 1.0];
        let d = lm_step(&st, &DMatrix::zeros(2, 2), &g, &cfg).unwrap();
        assert_eq!(d, vec![-0.5, 2.0]);
        st.lambda = 1e-12;
        let d = lm_step(&st, &DMatrix::identity(2, 2), &g, &cfg).unwrap();
        assert_abs_diff_eq!(d[0], -0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(d[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn quadratic_minimum_in_one_step() {
        // f(w) = ½ (w − w*)ᵀ A (w − w*)
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let w_star = [0.7, -1.3];
        let w = [2.0, 0.5];
        let r = DVector::from_column_slice(&[w[0] - w_star[0], w[1] - w_star[1]]);
        let grad: Vec<f64> = (&a * r).iter().copied().collect();
        let cfg = LmConfig::default();
        let mut st = LmState::new(2, &cfg);
        st.lambda = 1e-12;
        let d = lm_step(&st, &a, &grad, &cfg).unwrap();
        for i in 0..2 {
            assert!((w[i] + d[i] - w_star[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn huge_damping_follows_negative_gradient() {
        let cfg = LmConfig::default();
        let mut st = LmState::new(3, &cfg);
        st.lambda = 1e9;
        let hess = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 4.0]);
        let g = vec![1.0, -0.4, 0.25];
        let d = lm_step(&st, &hess, &g, &cfg).unwrap();
        let cos = -d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / (norm(&d) * norm(&g));
        assert!(cos >= 0.9998);
    }

    fn transfer_problem() -> (QuantumNetwork, Batch) {
        let cfg = NetworkConfig {
            n_harmonics: 1,
            n_steps: 50,
            ..Default::default()
        };
        let mut net = QuantumNetwork::zeros(1, cfg);
        net.tunneling_mut(0).a0 = 0.2;
        let batch = Batch::new(vec![Example::new(
            DensityMatrix::basis(1, 0),
            Objective::target_state(DensityMatrix::basis(1, 1)),
        )])
        .unwrap();
        (net, batch)
    }

    #[test]
    fn rms_decreases_over_accepted_epochs() {
        let (mut net, batch) = transfer_problem();
        let cfg = LmConfig::default();
        let mut st = LmState::new(net.parameter_count(), &cfg);
        let mut accepted = Vec::new();
        while accepted.len() < 5 {
            let r = try_epoch(
                &mut NetworkProblem {
                    net: &mut net,
                    batch: &batch,
                },
                &mut st,
                &cfg,
            )
            .unwrap();
            if r.accepted {
                accepted.push(r.rms_after);
            }
        }
        assert!(accepted.windows(2).all(|w| w[1] < w[0]), "{accepted:?}");
    }

    #[test]
    fn degenerate_loss_leaves_parameters() {
        let cfg_net = NetworkConfig {
            n_steps: 10,
            ..Default::default()
        };
        let mut net = QuantumNetwork::zeros(1, cfg_net);
        let rho = DensityMatrix::basis(1, 0);
        let batch = Batch::new(vec![Example::new(
            rho.clone(),
            Objective::target_state(rho),
        )])
        .unwrap();
        let before = net.parameter_vector();
        let cfg = LmConfig::default();
        let mut st = LmState::new(net.parameter_count(), &cfg);
        assert!(matches!(
            run_epoch(&mut net, &batch, &mut st, &cfg),
            Err(CoreError::DegenerateLoss(_))
        ));
        assert_eq!(net.parameter_vector(), before);
    }

    #[test]
    fn large_eta_forces_retries_with_growing_lambda() {
        let (mut net, batch) = transfer_problem();
        // Near the optimum every oversized step is uphill.
        net.tunneling_mut(0).a0 = core::f64::consts::FRAC_PI_2 - 0.02;
        let cfg = LmConfig {
            eta: 1e4,
            ..Default::default()
        };
        let mut st = LmState::new(net.parameter_count(), &cfg);
        st.last_step_norm = 0.0;
        let r = try_epoch(
            &mut NetworkProblem {
                net: &mut net,
                batch: &batch,
            },
            &mut st,
            &cfg,
        )
        .unwrap();
        assert!(r.retries >= 1);
        for w in r.lambda_trace.windows(2) {
            assert_abs_diff_eq!(w[1] / w[0], 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn dtd_is_monotone_and_floored() {
        let (mut net, batch) = transfer_problem();
        let cfg = LmConfig::default();
        let mut st = LmState::new(net.parameter_count(), &cfg);
        let mut prev = st.dtd_diag.clone();
        for _ in 0..6 {
            let _ = try_epoch(
                &mut NetworkProblem {
                    net: &mut net,
                    batch: &batch,
                },
                &mut st,
                &cfg,
            );
            assert!(st
                .dtd_diag
                .iter()
                .zip(&prev)
                .all(|(a, b)| a >= b && *a >= 1e-6));
            prev = st.dtd_diag.clone();
        }
    }
}
