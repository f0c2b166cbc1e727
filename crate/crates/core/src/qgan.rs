//! Product-state quantum GAN: a styled generator network, a classical style
//! network, a three-plane discriminator, the initial training stages and
//! the minimax loop.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::dynamics::Propagator;
use crate::error::{CoreError, CoreResult};
use crate::lm::{train, try_epoch, EpochReport, LmConfig, LmProblem, LmState, NetworkProblem};
use crate::network::{NetworkConfig, QuantumNetwork};
use crate::objective::{Batch, Example, JacobianStack, Objective};
use crate::state::{
    flat_state, pauli_correlation, random_entangled_state, random_product_state, DensityMatrix,
    MeasureOperator, RandomSource,
};

pub const STYLE_INPUT_DIM: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Real,
    Fake,
}

/// Three Pauli-correlation planes with their thresholds and training targets.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorHead {
    pub measures: [MeasureOperator; 3],
    pub thresholds: [f64; 3],
    pub real_target: f64,
    pub fake_target: f64,
}

impl DiscriminatorHead {
    pub fn new(thresholds: [f64; 3], real_target: f64, fake_target: f64) -> Self {
        Self {
            measures: [
                MeasureOperator::xx(),
                MeasureOperator::yy(),
                MeasureOperator::zz(),
            ],
            thresholds,
            real_target,
            fake_target,
        }
    }

    /// Real iff every output is below its threshold.
    pub fn verdict(&self, outputs: &[f64; 3]) -> Verdict {
        if outputs.iter().zip(&self.thresholds).all(|(o, t)| o < t) {
            Verdict::Real
        } else {
            Verdict::Fake
        }
    }

    /// `tr(M_k ρ)²` for each plane.
    pub fn outputs(&self, rho: &DensityMatrix) -> CoreResult<[f64; 3]> {
        let mut out = [0.0; 3];
        for (o, m) in out.iter_mut().zip(&self.measures) {
            let c = pauli_correlation(m, rho)?;
            *o = c * c;
        }
        Ok(out)
    }
}

impl Default for DiscriminatorHead {
    fn default() -> Self {
        Self::new([0.25; 3], 0.05, 0.6)
    }
}

pub fn discriminate_with(
    head: &DiscriminatorHead,
    disc: &Propagator,
    rho_in: &DensityMatrix,
) -> CoreResult<([f64; 3], Verdict)> {
    if rho_in.n_qubits() != 2 {
        return Err(CoreError::WrongQubitCount {
            expected: 2,
            found: rho_in.n_qubits(),
        });
    }
    let out = head.outputs(&disc.final_state(rho_in)?)?;
    Ok((out, head.verdict(&out)))
}

pub fn discriminate(
    head: &DiscriminatorHead,
    disc: &QuantumNetwork,
    rho_in: &DensityMatrix,
) -> CoreResult<([f64; 3], Verdict)> {
    discriminate_with(head, &Propagator::new(disc), rho_in)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleNetConfig {
    pub hidden: usize,
    pub rate: f64,
    pub momentum: f64,
    /// Standard deviation of the output layer's initial weights.
    pub init_scale: f64,
    /// Update after every example instead of once per epoch.
    pub online: bool,
}

impl Default for StyleNetConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            rate: 1e-2,
            momentum: 0.9,
            init_scale: 0.1,
            online: false,
        }
    }
}

/// `6 → hidden (tanh) → output` multilayer perceptron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleNet {
    hidden: usize,
    output_dim: usize,
    /// `[W1 (hidden×6) | b1 | W2 (output×hidden) | b2]`, row-major.
    params: Vec<f64>,
    velocity: Vec<f64>,
}

impl StyleNet {
    pub fn new(output_dim: usize, cfg: &StyleNetConfig, rng: &mut RandomSource) -> Self {
        let h = cfg.hidden;
        let mut params = Vec::with_capacity(h * STYLE_INPUT_DIM + h + output_dim * h + output_dim);
        let s1 = 1.0 / (STYLE_INPUT_DIM as f64).sqrt();
        for _ in 0..h * STYLE_INPUT_DIM {
            params.push(s1 * rng.gaussian());
        }
        params.extend(core::iter::repeat_n(0.0, h));
        let s2 = cfg.init_scale / (h as f64).sqrt();
        for _ in 0..output_dim * h {
            params.push(s2 * rng.gaussian());
        }
        params.extend(core::iter::repeat_n(0.0, output_dim));
        let velocity = vec![0.0; params.len()];
        Self {
            hidden: h,
            output_dim,
            params,
            velocity,
        }
    }

    /// A net whose output is identically zero.
    pub fn zeroed(output_dim: usize, cfg: &StyleNetConfig) -> Self {
        let h = cfg.hidden;
        let n = h * STYLE_INPUT_DIM + h + output_dim * h + output_dim;
        Self {
            hidden: h,
            output_dim,
            params: vec![0.0; n],
            velocity: vec![0.0; n],
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> CoreResult<()> {
        if p.len() != self.params.len() {
            return Err(CoreError::ParameterLength {
                expected: self.params.len(),
                found: p.len(),
            });
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * STYLE_INPUT_DIM;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.output_dim * self.hidden;
        (b1, w2, b2)
    }

    fn hidden_activations(&self, z: &[f64]) -> Vec<f64> {
        let (b1, _, _) = self.offsets();
        (0..self.hidden)
            .map(|j| {
                let row = &self.params[j * STYLE_INPUT_DIM..(j + 1) * STYLE_INPUT_DIM];
                let s: f64 =
                    row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.params[b1 + j];
                s.tanh()
            })
            .collect()
    }

    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        let (_, w2, b2) = self.offsets();
        let a = self.hidden_activations(z);
        (0..self.output_dim)
            .map(|o| {
                let row = &self.params[w2 + o * self.hidden..w2 + (o + 1) * self.hidden];
                row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>() + self.params[b2 + o]
            })
            .collect()
    }

    /// Gradient of `⟨d_out, forward(z)⟩` with respect to the weights.
    pub fn backward(&self, z: &[f64], d_out: &[f64]) -> Vec<f64> {
        let (b1, w2, b2) = self.offsets();
        let a = self.hidden_activations(z);
        let mut g = vec![0.0; self.params.len()];
        let mut d_a = vec![0.0; self.hidden];
        for o in 0..self.output_dim {
            let d = d_out[o];
            g[b2 + o] = d;
            for j in 0..self.hidden {
                g[w2 + o * self.hidden + j] = d * a[j];
                d_a[j] += d * self.params[w2 + o * self.hidden + j];
            }
        }
        for j in 0..self.hidden {
            let d_pre = d_a[j] * (1.0 - a[j] * a[j]);
            g[b1 + j] = d_pre;
            for i in 0..STYLE_INPUT_DIM {
                g[j * STYLE_INPUT_DIM + i] = d_pre * z[i];
            }
        }
        g
    }

    /// `v ← μv − rate·grad`, `W ← W + v`.
    pub fn momentum_step(&mut self, grad: &[f64], cfg: &StyleNetConfig) {
        for ((w, v), g) in self.params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = cfg.momentum * *v - cfg.rate * g;
            *w += *v;
        }
    }
}

/// Common generator network plus an additive shift of its `K`, `ε`, `ζ`
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct StyledGenerator {
    pub common: QuantumNetwork,
    pub style_delta: Vec<f64>,
}

impl StyledGenerator {
    pub fn network(&self) -> CoreResult<QuantumNetwork> {
        styled_network(&self.common, &self.style_delta)
    }
}

/// Number of coefficients a style vector shifts (every schedule but `Γ`).
pub fn style_parameter_count(net: &QuantumNetwork) -> usize {
    net.decay_offset()
}

fn styled_network(common: &QuantumNetwork, delta: &[f64]) -> CoreResult<QuantumNetwork> {
    let n = style_parameter_count(common);
    if delta.len() != n {
        return Err(CoreError::ParameterLength {
            expected: n,
            found: delta.len(),
        });
    }
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(common.clone());
    }
    let mut w = common.parameter_vector();
    for (a, d) in w.iter_mut().zip(delta) {
        *a += d;
    }
    common.with_parameters(&w)
}

pub fn generate(g: &StyledGenerator) -> CoreResult<DensityMatrix> {
    Propagator::new(&g.network()?).final_state(&flat_state(2))
}

/// Latent vectors drawn i.i.d. from `uniform(−1, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomPool {
    pub vectors: Vec<Vec<f64>>,
}

impl RandomPool {
    pub fn draw(size: usize, rng: &mut RandomSource) -> Self {
        Self {
            vectors: (0..size)
                .map(|_| {
                    (0..STYLE_INPUT_DIM)
                        .map(|_| rng.uniform(-1.0, 1.0))
                        .collect()
                })
                .collect(),
        }
    }

    /// Real and fake pools from independent streams of one seed.
    pub fn disjoint_pair(real: usize, fake: usize, seed: u64) -> (Self, Self) {
        let r = Self::draw(real, &mut RandomSource::with_stream(seed, 1));
        let mut f = Self::draw(fake, &mut RandomSource::with_stream(seed, 2));
        // Continuous draws never collide in practice; redraw if one does.
        let mut extra = RandomSource::with_stream(seed, 3);
        for v in &mut f.vectors {
            while r.vectors.contains(v) {
                *v = (0..STYLE_INPUT_DIM)
                    .map(|_| extra.uniform(-1.0, 1.0))
                    .collect();
            }
        }
        (r, f)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Percent-correct summary of one evaluation of reals and generated fakes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanMetrics {
    pub epoch: usize,
    /// Per plane (XX, YY, ZZ): percent of reals below threshold.
    pub real_plane_pct: [f64; 3],
    /// Per plane: percent of fakes at or above threshold.
    pub fake_plane_pct: [f64; 3],
    /// Reals classified real by all three planes.
    pub real_pct: f64,
    /// Fakes flagged by at least one plane.
    pub fake_pct: f64,
    /// `real_pct` evaluated against the current discriminator; the loop
    /// never trains on reals, so `real_pct` itself is carried unchanged.
    pub real_pct_remeasured: f64,
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Per-plane and aggregate percentages for reals and fakes.
pub fn score(
    head: &DiscriminatorHead,
    real_outputs: &[[f64; 3]],
    fake_outputs: &[[f64; 3]],
) -> ([f64; 3], f64, [f64; 3], f64) {
    let mut rp = [0.0; 3];
    let mut fp = [0.0; 3];
    for k in 0..3 {
        rp[k] = pct(
            real_outputs
                .iter()
                .filter(|o| o[k] < head.thresholds[k])
                .count(),
            real_outputs.len(),
        );
        fp[k] = pct(
            fake_outputs
                .iter()
                .filter(|o| o[k] >= head.thresholds[k])
                .count(),
            fake_outputs.len(),
        );
    }
    let ra = pct(
        real_outputs
            .iter()
            .filter(|o| head.verdict(o) == Verdict::Real)
            .count(),
        real_outputs.len(),
    );
    let fa = pct(
        fake_outputs
            .iter()
            .filter(|o| head.verdict(o) == Verdict::Fake)
            .count(),
        fake_outputs.len(),
    );
    (rp, ra, fp, fa)
}

fn outputs_for(
    head: &DiscriminatorHead,
    disc: &Propagator,
    states: &[DensityMatrix],
) -> CoreResult<Vec<[f64; 3]>> {
    let idx: Vec<usize> = (0..states.len()).collect();
    map_examples_indexed(&idx, |i| {
        discriminate_with(head, disc, &states[i]).map(|(o, _)| o)
    })
}

/// Stage 1: fit the common generator to the reals as a whole.
pub fn train_generator_common(
    g: &mut QuantumNetwork,
    reals: &[DensityMatrix],
    lm: &LmConfig,
    epochs: usize,
) -> CoreResult<Vec<EpochReport>> {
    let batch = Batch::new(
        reals
            .iter()
            .map(|r| Example::new(flat_state(2), Objective::target_state(r.clone())))
            .collect(),
    )?;
    let mut state = LmState::new(g.parameter_count(), lm);
    train(
        &mut NetworkProblem {
            net: g,
            batch: &batch,
        },
        &mut state,
        lm,
        epochs,
        0.0,
    )
}

/// Per-epoch RMS error of every real during style training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleReport {
    /// `per_real_rms[e][i]`: RMS of real `i` before epoch `e`; the last row is
    /// after the final epoch.
    pub per_real_rms: Vec<Vec<f64>>,
}

fn style_losses_and_grads(
    common: &QuantumNetwork,
    net: &StyleNet,
    pool: &RandomPool,
    reals: &[DensityMatrix],
    with_grad: bool,
) -> CoreResult<Vec<(f64, Vec<f64>)>> {
    let n_style = style_parameter_count(common);
    let order: Vec<usize> = (0..reals.len()).collect();
    let per = map_examples_indexed(&order, |i| {
        let z = &pool.vectors[i];
        let delta = net.forward(z);
        let gen = styled_network(common, &delta)?;
        let prop = Propagator::new(&gen);
        let ex = Example::new(flat_state(2), Objective::target_state(reals[i].clone()));
        if with_grad {
            let eg = crate::objective::example_gradient(&prop, &ex)?;
            Ok((eg.loss, net.backward(z, &eg.gradient[..n_style])))
        } else {
            Ok((crate::objective::example_loss(&prop, &ex)?, Vec::new()))
        }
    })?;
    Ok(per)
}

#[cfg(feature = "std")]
pub(crate) fn map_examples_indexed<T: Send>(
    idx: &[usize],
    f: impl Fn(usize) -> CoreResult<T> + Sync + Send,
) -> CoreResult<Vec<T>> {
    use rayon::prelude::*;
    idx.par_iter().map(|&i| f(i)).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn map_examples_indexed<T: Send>(
    idx: &[usize],
    f: impl Fn(usize) -> CoreResult<T> + Sync + Send,
) -> CoreResult<Vec<T>> {
    idx.iter().map(|&i| f(i)).collect()
}

/// Stage 2: train the style network so `z_i` reproduces `real_i`.
pub fn train_styles(
    common: &QuantumNetwork,
    net: &mut StyleNet,
    pool: &RandomPool,
    reals: &[DensityMatrix],
    cfg: &StyleNetConfig,
    epochs: usize,
) -> CoreResult<StyleReport> {
    if pool.len() != reals.len() {
        return Err(CoreError::DimensionMismatch {
            expected: reals.len(),
            found: pool.len(),
        });
    }
    if net.output_dim() != style_parameter_count(common) {
        return Err(CoreError::ParameterLength {
            expected: style_parameter_count(common),
            found: net.output_dim(),
        });
    }
    let mut per_real_rms = Vec::with_capacity(epochs + 1);
    let n_style = style_parameter_count(common);
    for _ in 0..epochs {
        if cfg.online {
            let before = style_losses_and_grads(common, net, pool, reals, false)?;
            per_real_rms.push(before.iter().map(|(l, _)| l.sqrt()).collect());
            for (z, real) in pool.vectors.iter().zip(reals) {
                let gen = styled_network(common, &net.forward(z))?;
                let ex = Example::new(flat_state(2), Objective::target_state(real.clone()));
                let eg = crate::objective::example_gradient(&Propagator::new(&gen), &ex)?;
                let g = net.backward(z, &eg.gradient[..n_style]);
                net.momentum_step(&g, cfg);
            }
            continue;
        }
        let per = style_losses_and_grads(common, net, pool, reals, true)?;
        per_real_rms.push(per.iter().map(|(l, _)| l.sqrt()).collect());
        let mut grad = vec![0.0; net.params().len()];
        for (_, g) in &per {
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let n = per.len() as f64;
        grad.iter_mut().for_each(|x| *x /= n);
        net.momentum_step(&grad, cfg);
    }
    let last = style_losses_and_grads(common, net, pool, reals, false)?;
    per_real_rms.push(last.iter().map(|(l, _)| l.sqrt()).collect());
    Ok(StyleReport { per_real_rms })
}

/// Stage 3 batch: every (real, plane) pair whose plane is at or above
/// threshold, plus an entangled example whose planes all stay below.
fn initial_disc_batch(
    head: &DiscriminatorHead,
    disc: &Propagator,
    reals: &[DensityMatrix],
    fakes: &[DensityMatrix],
) -> CoreResult<Vec<Example>> {
    let mut ex = Vec::new();
    for (r, o) in reals.iter().zip(outputs_for(head, disc, reals)?) {
        for k in 0..3 {
            if o[k] >= head.thresholds[k] {
                ex.push(Example::new(
                    r.clone(),
                    Objective::measure(head.measures[k].clone(), head.real_target),
                ));
            }
        }
    }
    ex.extend(fake_side_examples(
        head,
        fakes,
        &outputs_for(head, disc, fakes)?,
    ));
    Ok(ex)
}

/// Undetected fakes push their strongest plane toward the fake target.
fn fake_side_examples(
    head: &DiscriminatorHead,
    fakes: &[DensityMatrix],
    outputs: &[[f64; 3]],
) -> Vec<Example> {
    fakes
        .iter()
        .zip(outputs)
        .filter(|(_, o)| head.verdict(o) == Verdict::Real)
        .map(|(f, o)| {
            let k = argmax_rel(o, &head.thresholds);
            Example::new(
                f.clone(),
                Objective::measure(head.measures[k].clone(), head.fake_target),
            )
        })
        .collect()
}

/// Plane closest to (or furthest past) its threshold; first wins ties.
fn argmax_rel(o: &[f64; 3], t: &[f64; 3]) -> usize {
    let mut best = 0;
    for k in 1..3 {
        if o[k] / t[k] > o[best] / t[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn empty_report(epoch: usize, lambda: f64) -> EpochReport {
    EpochReport {
        epoch,
        rms_before: 0.0,
        rms_after: 0.0,
        lambda,
        lambda_trace: Vec::new(),
        retries: 0,
        accepted: false,
    }
}

/// One LM epoch on a batch rebuilt from the current network; an empty
/// batch is a no-op epoch.
pub(crate) fn rebuilt_batch_epoch(
    net: &mut QuantumNetwork,
    examples: Vec<Example>,
    state: &mut LmState,
    lm: &LmConfig,
) -> CoreResult<EpochReport> {
    if examples.is_empty() {
        state.epoch += 1;
        return Ok(empty_report(state.epoch, state.lambda));
    }
    let batch = Batch::new(examples)?;
    match try_epoch(&mut NetworkProblem { net, batch: &batch }, state, lm) {
        Err(CoreError::DegenerateLoss(_)) => {
            state.epoch += 1;
            Ok(empty_report(state.epoch, state.lambda))
        }
        other => other,
    }
}

/// Stage 3: train the discriminator so every real sits inside all three
/// planes. `fakes` optionally adds known non-product states on the fake side.
pub fn train_discriminator_initial(
    d: &mut QuantumNetwork,
    head: &DiscriminatorHead,
    reals: &[DensityMatrix],
    fakes: &[DensityMatrix],
    lm: &LmConfig,
    epochs: usize,
) -> CoreResult<Vec<EpochReport>> {
    let mut state = LmState::new(d.parameter_count(), lm);
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let examples = initial_disc_batch(head, &Propagator::new(d), reals, fakes)?;
        out.push(rebuilt_batch_epoch(d, examples, &mut state, lm)?);
    }
    Ok(out)
}

/// Generator-side problem of the minimax loop: the loss of each fake is the
/// discriminator error on the planes that detect it, and the gradient is
/// chained through the discriminator into the generator.
pub struct GeneratorProblem<'a> {
    pub common: &'a mut QuantumNetwork,
    pub deltas: Vec<Vec<f64>>,
    pub disc: &'a Propagator,
    /// Objectives on the discriminator output, per fake.
    pub objectives: Vec<Vec<Objective>>,
}

/// Loss, generator-parameter gradient and generated state for one fake.
pub fn chained_gradient(
    common: &QuantumNetwork,
    delta: &[f64],
    disc: &Propagator,
    objectives: &[Objective],
) -> CoreResult<(f64, Vec<f64>)> {
    let gen = styled_network(common, delta)?;
    let gp = Propagator::new(&gen);
    let g_fwd = gp.forward(&flat_state(2))?;
    let d_fwd = disc.forward(g_fwd.final_state())?;
    let rho_d = d_fwd.final_state();
    let mut loss = 0.0;
    let mut gf = crate::linalg::ComplexMatrix::zeros(rho_d.dim());
    for o in objectives {
        loss += o.loss(rho_d)?;
        gf += &o.state_gradient(rho_d)?;
    }
    let lam0 = disc.pullback(&d_fwd, &gf)?;
    let (_, grad) = gp.pullback_and_gradient(&g_fwd, &lam0)?;
    Ok((loss, grad))
}

fn chained_loss(
    common: &QuantumNetwork,
    delta: &[f64],
    disc: &Propagator,
    objectives: &[Objective],
) -> CoreResult<f64> {
    let rho_g = Propagator::new(&styled_network(common, delta)?).final_state(&flat_state(2))?;
    let rho_d = disc.final_state(&rho_g)?;
    objectives.iter().map(|o| o.loss(&rho_d)).sum()
}

impl LmProblem for GeneratorProblem<'_> {
    fn parameters(&self) -> Vec<f64> {
        self.common.parameter_vector()
    }

    fn set_parameters(&mut self, w: &[f64]) -> CoreResult<()> {
        self.common.set_parameter_vector(w)
    }

    fn jacobian(&self) -> CoreResult<JacobianStack> {
        let idx: Vec<usize> = (0..self.deltas.len()).collect();
        let parts = map_examples_indexed(&idx, |i| {
            chained_gradient(self.common, &self.deltas[i], self.disc, &self.objectives[i])
        })?;
        let (losses, rows) = parts.into_iter().unzip();
        Ok(JacobianStack { rows, losses })
    }

    fn mean_loss(&self) -> CoreResult<f64> {
        let idx: Vec<usize> = (0..self.deltas.len()).collect();
        let l = map_examples_indexed(&idx, |i| {
            chained_loss(self.common, &self.deltas[i], self.disc, &self.objectives[i])
        })?;
        Ok(l.iter().sum::<f64>() / l.len() as f64)
    }
}

/// Generator-side objectives: every detecting plane is pushed back toward
/// the real target.
fn generator_objectives(head: &DiscriminatorHead, o: &[f64; 3]) -> Vec<Objective> {
    (0..3)
        .filter(|&k| o[k] >= head.thresholds[k])
        .map(|k| Objective::measure(head.measures[k].clone(), head.real_target))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub n_reals: usize,
    pub n_fakes: usize,
    /// Minimum concurrence of the entangled states used as stage-3 fakes.
    pub fake_concurrence_min: f64,
    /// Whether stage 3 also trains on the entangled states.
    pub stage3_entangled_fakes: bool,
    pub network: NetworkConfig,
    pub generator_init_scale: f64,
    pub discriminator_init_scale: f64,
    pub thresholds: [f64; 3],
    pub real_target: f64,
    pub fake_target: f64,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage3_epochs: usize,
    pub gan_epochs: usize,
    pub disc_epochs_per_gan: usize,
    pub gen_epochs_per_gan: usize,
    pub lm: LmConfig,
    /// LM settings for both minimax phases.
    pub gan_lm: LmConfig,
    pub style: StyleNetConfig,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            n_reals: 80,
            n_fakes: 80,
            fake_concurrence_min: 0.3,
            stage3_entangled_fakes: false,
            network: NetworkConfig::default(),
            generator_init_scale: 0.5,
            discriminator_init_scale: 0.5,
            thresholds: [0.25; 3],
            real_target: 0.05,
            fake_target: 0.6,
            stage1_epochs: 40,
            stage2_epochs: 600,
            stage3_epochs: 60,
            gan_epochs: 50,
            disc_epochs_per_gan: 1,
            gen_epochs_per_gan: 1,
            lm: LmConfig::default(),
            gan_lm: LmConfig {
                eta: 0.1,
                ..LmConfig::default()
            },
            style: StyleNetConfig::default(),
            seed: 2024,
        }
    }
}

impl GanConfig {
    pub fn head(&self) -> DiscriminatorHead {
        DiscriminatorHead::new(self.thresholds, self.real_target, self.fake_target)
    }
}

/// Everything the product-state GAN run produces.
#[derive(Clone, Debug)]
pub struct GanRun {
    pub reals: Vec<DensityMatrix>,
    pub entangled: Vec<DensityMatrix>,
    pub stage1: Vec<EpochReport>,
    pub stage2: StyleReport,
    pub stage3: Vec<EpochReport>,
    pub metrics: Vec<GanMetrics>,
    pub fakes_before: Vec<DensityMatrix>,
    pub fakes_after: Vec<DensityMatrix>,
    pub generator: QuantumNetwork,
    pub discriminator: QuantumNetwork,
    pub style_net: StyleNet,
}

/// Mutable GAN players.
pub struct GanPlayers<'a> {
    pub common: &'a mut QuantumNetwork,
    pub style_net: &'a mut StyleNet,
    pub disc: &'a mut QuantumNetwork,
}

pub fn generate_fakes(
    common: &QuantumNetwork,
    net: &StyleNet,
    pool: &RandomPool,
) -> CoreResult<Vec<DensityMatrix>> {
    let idx: Vec<usize> = (0..pool.len()).collect();
    map_examples_indexed(&idx, |i| {
        let g = StyledGenerator {
            common: common.clone(),
            style_delta: net.forward(&pool.vectors[i]),
        };
        generate(&g)
    })
}

/// Minimax loop. `real_pct` in every row is the value passed in; the
/// re-measured value is reported alongside.
pub fn gan_loop(
    players: GanPlayers<'_>,
    head: &DiscriminatorHead,
    fake_pool: &RandomPool,
    reals: &[DensityMatrix],
    cfg: &GanConfig,
) -> CoreResult<Vec<GanMetrics>> {
    let GanPlayers {
        common,
        style_net,
        disc,
    } = players;
    let measure = |common: &QuantumNetwork,
                   net: &StyleNet,
                   disc: &QuantumNetwork|
     -> CoreResult<(Vec<DensityMatrix>, Vec<[f64; 3]>, Vec<[f64; 3]>)> {
        let dp = Propagator::new(disc);
        let fakes = generate_fakes(common, net, fake_pool)?;
        let fo = outputs_for(head, &dp, &fakes)?;
        let ro = outputs_for(head, &dp, reals)?;
        Ok((fakes, fo, ro))
    };
    let (_, fo, ro) = measure(common, style_net, disc)?;
    let (rp, ra, fp, fa) = score(head, &ro, &fo);
    let mut metrics = vec![GanMetrics {
        epoch: 0,
        real_plane_pct: rp,
        fake_plane_pct: fp,
        real_pct: ra,
        fake_pct: fa,
        real_pct_remeasured: ra,
    }];
    let static_real = (rp, ra);

    let mut d_state = LmState::new(disc.parameter_count(), &cfg.gan_lm);
    let mut g_state = LmState::new(common.parameter_count(), &cfg.gan_lm);
    let n_style = style_parameter_count(common);
    for epoch in 1..=cfg.gan_epochs {
        // (a) discriminator on the current fakes.
        for _ in 0..cfg.disc_epochs_per_gan {
            let dp = Propagator::new(disc);
            let fakes = generate_fakes(common, style_net, fake_pool)?;
            let fo = outputs_for(head, &dp, &fakes)?;
            rebuilt_batch_epoch(
                disc,
                fake_side_examples(head, &fakes, &fo),
                &mut d_state,
                &cfg.gan_lm,
            )?;
        }
        // (b) generator common parameters by LM, style network by momentum
        // descent, both on the reversed discriminator error.
        for _ in 0..cfg.gen_epochs_per_gan {
            let dp = Propagator::new(disc);
            let deltas: Vec<Vec<f64>> = fake_pool
                .vectors
                .iter()
                .map(|z| style_net.forward(z))
                .collect();
            let fakes = generate_fakes(common, style_net, fake_pool)?;
            let fo = outputs_for(head, &dp, &fakes)?;
            let objectives: Vec<Vec<Objective>> =
                fo.iter().map(|o| generator_objectives(head, o)).collect();
            let active: Vec<usize> = (0..objectives.len())
                .filter(|&i| !objectives[i].is_empty())
                .collect();
            if active.is_empty() {
                continue;
            }
            let mut gp = GeneratorProblem {
                common,
                deltas: active.iter().map(|&i| deltas[i].clone()).collect(),
                disc: &dp,
                objectives: active.iter().map(|&i| objectives[i].clone()).collect(),
            };
            match try_epoch(&mut gp, &mut g_state, &cfg.gan_lm) {
                Ok(_) | Err(CoreError::DegenerateLoss(_)) => {}
                Err(e) => return Err(e),
            }
            let common_now: &QuantumNetwork = gp.common;
            let grads = map_examples_indexed(&active, |i| {
                let (_, g) = chained_gradient(common_now, &deltas[i], &dp, &objectives[i])?;
                Ok(style_net.backward(&fake_pool.vectors[i], &g[..n_style]))
            })?;
            let mut grad = vec![0.0; style_net.params().len()];
            for g in &grads {
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let n = fake_pool.len() as f64;
            grad.iter_mut().for_each(|x| *x /= n);
            style_net.momentum_step(&grad, &cfg.style);
        }
        let (_, fo, ro) = measure(common, style_net, disc)?;
        let (_, ra_now, fp, fa) = score(head, &ro, &fo);
        metrics.push(GanMetrics {
            epoch,
            real_plane_pct: static_real.0,
            fake_plane_pct: fp,
            real_pct: static_real.1,
            fake_pct: fa,
            real_pct_remeasured: ra_now,
        });
    }
    Ok(metrics)
}

/// Product-state reals and entangled states from independent streams.
pub fn gan_datasets(cfg: &GanConfig) -> CoreResult<(Vec<DensityMatrix>, Vec<DensityMatrix>)> {
    let mut rr = RandomSource::with_stream(cfg.seed, 10);
    let reals = (0..cfg.n_reals)
        .map(|_| random_product_state(&mut rr).to_density())
        .collect();
    let mut fr = RandomSource::with_stream(cfg.seed, 11);
    let ent = (0..cfg.n_fakes)
        .map(|_| random_entangled_state(&mut fr, cfg.fake_concurrence_min).map(|p| p.to_density()))
        .collect::<CoreResult<Vec<_>>>()?;
    Ok((reals, ent))
}

/// Stages 1–3 followed by the minimax loop.
pub fn run_product_gan(cfg: &GanConfig) -> CoreResult<GanRun> {
    let (reals, entangled) = gan_datasets(cfg)?;
    let net_cfg = NetworkConfig {
        lindblad: false,
        ..cfg.network
    };
    let mut init = RandomSource::with_stream(cfg.seed, 20);
    let mut common = QuantumNetwork::random(2, net_cfg, cfg.generator_init_scale, &mut init);
    let mut disc = QuantumNetwork::random(2, net_cfg, cfg.discriminator_init_scale, &mut init);
    let head = cfg.head();

    let stage1 = train_generator_common(&mut common, &reals, &cfg.lm, cfg.stage1_epochs)?;

    let (real_pool, fake_pool) = RandomPool::disjoint_pair(cfg.n_reals, cfg.n_fakes, cfg.seed);
    let mut style_net = StyleNet::new(
        style_parameter_count(&common),
        &cfg.style,
        &mut RandomSource::with_stream(cfg.seed, 21),
    );
    let stage2 = train_styles(
        &common,
        &mut style_net,
        &real_pool,
        &reals,
        &cfg.style,
        cfg.stage2_epochs,
    )?;

    let stage3_fakes: &[DensityMatrix] = if cfg.stage3_entangled_fakes {
        &entangled
    } else {
        &[]
    };
    let stage3 = train_discriminator_initial(
        &mut disc,
        &head,
        &reals,
        stage3_fakes,
        &cfg.lm,
        cfg.stage3_epochs,
    )?;

    let fakes_before = generate_fakes(&common, &style_net, &fake_pool)?;
    let metrics = gan_loop(
        GanPlayers {
            common: &mut common,
            style_net: &mut style_net,
            disc: &mut disc,
        },
        &head,
        &fake_pool,
        &reals,
        cfg,
    )?;
    let fakes_after = generate_fakes(&common, &style_net, &fake_pool)?;
    Ok(GanRun {
        reals,
        entangled,
        stage1,
        stage2,
        stage3,
        metrics,
        fakes_before,
        fakes_after,
        generator: common,
        discriminator: disc,
        style_net,
    })
}
