//! Trainable time-dependent Hamiltonians.
//!
//! A [`QuantumNetwork`] on `n` qubits is
//!
//! ```text
//! H(t) = Σ_i K_i(t) X_i + Σ_i ε_i(t) Z_i + Σ_{i<j} ζ_ij(t) Z_i Z_j
//! ```
//!
//! with an optional per-qubit amplitude-damping dissipator of strength
//! `Γ(t) ≥ 0`. Every coefficient function is a truncated Fourier series over
//! one period `[0, t_f]`, and the Fourier coefficients are the weights.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use crate::linalg::{ComplexMatrix, C64};
use crate::state::RandomSource;

/// Truncated Fourier series `a0 + Σ_k a_k cos(2πkt/T) + b_k sin(2πkt/T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchedule {
    pub a0: f64,
    pub cos_coeffs: Vec<f64>,
    pub sin_coeffs: Vec<f64>,
    pub period: f64,
}

impl ParameterSchedule {
    pub fn zero(n_harmonics: usize, period: f64) -> Self {
        Self {
            a0: 0.0,
            cos_coeffs: vec![0.0; n_harmonics],
            sin_coeffs: vec![0.0; n_harmonics],
            period,
        }
    }

    pub fn constant(value: f64, n_harmonics: usize, period: f64) -> Self {
        Self {
            a0: value,
            ..Self::zero(n_harmonics, period)
        }
    }

    pub fn n_harmonics(&self) -> usize {
        self.cos_coeffs.len()
    }

    /// `1 + 2·n_harmonics`
    pub fn coefficient_count(&self) -> usize {
        1 + 2 * self.n_harmonics()
    }

    pub fn value(&self, t: f64) -> f64 {
        let w = 2.0 * PI * t / self.period;
        let mut v = self.a0;
        for (k, (a, b)) in self.cos_coeffs.iter().zip(&self.sin_coeffs).enumerate() {
            let phase = w * (k + 1) as f64;
            v += a * phase.cos() + b * phase.sin();
        }
        v
    }

    /// Writes `∂value(t)/∂c` for every coefficient `c`, in
    /// `[a0, a1..an, b1..bn]` order.
    pub fn basis_values(&self, t: f64, out: &mut [f64]) {
        fourier_basis(self.n_harmonics(), self.period, t, out);
    }

    /// Coefficients in `[a0, a1..an, b1..bn]` order.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.coefficient_count());
        v.push(self.a0);
        v.extend_from_slice(&self.cos_coeffs);
        v.extend_from_slice(&self.sin_coeffs);
        v
    }

    pub fn set_coefficients(&mut self, c: &[f64]) {
        let n = self.n_harmonics();
        assert_eq!(c.len(), 1 + 2 * n);
        self.a0 = c[0];
        self.cos_coeffs.copy_from_slice(&c[1..=n]);
        self.sin_coeffs.copy_from_slice(&c[n + 1..]);
    }
}

pub(crate) fn fourier_basis(n_harmonics: usize, period: f64, t: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), 1 + 2 * n_harmonics);
    let w = 2.0 * PI * t / period;
    out[0] = 1.0;
    for k in 0..n_harmonics {
        let phase = w * (k + 1) as f64;
        out[1 + k] = phase.cos();
        out[1 + n_harmonics + k] = phase.sin();
    }
}

/// Role of a schedule inside the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Tunneling(usize),
    Bias(usize),
    Coupling(usize, usize),
    Decay,
}

/// Hamiltonian operator multiplied by a schedule. Qubit 0 is the most
/// significant bit of the basis index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliTerm {
    X(usize),
    Z(usize),
    ZZ(usize, usize),
}

impl PauliTerm {
    /// Diagonal entry `⟨a|P|a⟩` for the diagonal terms.
    #[inline]
    pub(crate) fn diag_sign(self, n_qubits: usize, a: usize) -> f64 {
        match self {
            PauliTerm::X(_) => 0.0,
            PauliTerm::Z(q) => z_sign(n_qubits, q, a),
            PauliTerm::ZZ(i, j) => z_sign(n_qubits, i, a) * z_sign(n_qubits, j, a),
        }
    }

    pub fn matrix(self, n_qubits: usize) -> ComplexMatrix {
        let dim = 1usize << n_qubits;
        match self {
            PauliTerm::X(q) => {
                let m = qubit_mask(n_qubits, q);
                ComplexMatrix::from_fn(dim, |a, b| {
                    if b == a ^ m {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
            }
            _ => {
                let d: Vec<C64> = (0..dim)
                    .map(|a| C64::new(self.diag_sign(n_qubits, a), 0.0))
                    .collect();
                ComplexMatrix::from_diagonal(&d)
            }
        }
    }
}

#[inline]
pub(crate) fn qubit_mask(n_qubits: usize, q: usize) -> usize {
    1usize << (n_qubits - 1 - q)
}

#[inline]
pub(crate) fn z_sign(n_qubits: usize, q: usize, a: usize) -> f64 {
    if a & qubit_mask(n_qubits, q) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Time discretization and Fourier truncation shared by every schedule of a
/// network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub n_harmonics: usize,
    pub final_time: f64,
    pub n_steps: usize,
    pub lindblad: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_harmonics: 3,
            final_time: 1.0,
            n_steps: 200,
            lindblad: false,
        }
    }
}

/// The trainable network: qubit count, all coefficient schedules, and the
/// time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantumNetwork {
    n_qubits: usize,
    config: NetworkConfig,
    tunneling: Vec<ParameterSchedule>,
    bias: Vec<ParameterSchedule>,
    /// Pair-indexed in lexicographic `(i, j)`, `i < j` order.
    coupling: Vec<ParameterSchedule>,
    decay: ParameterSchedule,
}

/// Hamiltonian at a single instant in the compact form used by the
/// integrators: transverse coefficients plus the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct HamiltonianTerms {
    pub x: Vec<f64>,
    pub diag: Vec<f64>,
}

impl HamiltonianTerms {
    pub fn to_matrix(&self) -> ComplexMatrix {
        let n = self.x.len();
        let dim = self.diag.len();
        let mut h = ComplexMatrix::zeros(dim);
        for a in 0..dim {
            h[(a, a)] = C64::new(self.diag[a], 0.0);
            for (q, &k) in self.x.iter().enumerate() {
                h[(a, a ^ qubit_mask(n, q))] += C64::new(k, 0.0);
            }
        }
        h
    }
}

pub(crate) fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    // Pairs before row i: Σ_{r<i} (n-1-r)
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl QuantumNetwork {
    /// Network with every coefficient zero.
    pub fn zeros(n_qubits: usize, config: NetworkConfig) -> Self {
        assert!(n_qubits >= 1, "network needs at least one qubit");
        assert!(config.n_steps >= 1 && config.final_time > 0.0);
        let s = || ParameterSchedule::zero(config.n_harmonics, config.final_time);
        let pairs = n_qubits * (n_qubits - 1) / 2;
        Self {
            n_qubits,
            config,
            tunneling: (0..n_qubits).map(|_| s()).collect(),
            bias: (0..n_qubits).map(|_| s()).collect(),
            coupling: (0..pairs).map(|_| s()).collect(),
            decay: s(),
        }
    }

    /// Hamiltonian coefficients drawn i.i.d. from `N(0, scale²)`; the decay
    /// schedule stays zero.
    pub fn random(
        n_qubits: usize,
        config: NetworkConfig,
        scale: f64,
        rng: &mut RandomSource,
    ) -> Self {
        let mut net = Self::zeros(n_qubits, config);
        let mut w = net.parameter_vector();
        let decay_start = net.decay_offset();
        for x in &mut w[..decay_start] {
            *x = scale * rng.gaussian();
        }
        net.set_parameter_vector(&w).expect("length preserved");
        net
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn final_time(&self) -> f64 {
        self.config.final_time
    }

    pub fn n_steps(&self) -> usize {
        self.config.n_steps
    }

    pub fn step_size(&self) -> f64 {
        self.config.final_time / self.config.n_steps as f64
    }

    pub fn lindblad_enabled(&self) -> bool {
        self.config.lindblad
    }

    pub fn set_lindblad(&mut self, enabled: bool) {
        self.config.lindblad = enabled;
    }

    pub fn n_harmonics(&self) -> usize {
        self.config.n_harmonics
    }

    pub fn coefficients_per_schedule(&self) -> usize {
        1 + 2 * self.config.n_harmonics
    }

    pub fn tunneling(&self, q: usize) -> &ParameterSchedule {
        &self.tunneling[q]
    }

    pub fn tunneling_mut(&mut self, q: usize) -> &mut ParameterSchedule {
        &mut self.tunneling[q]
    }

    pub fn bias(&self, q: usize) -> &ParameterSchedule {
        &self.bias[q]
    }

    pub fn bias_mut(&mut self, q: usize) -> &mut ParameterSchedule {
        &mut self.bias[q]
    }

    pub fn coupling(&self, i: usize, j: usize) -> &ParameterSchedule {
        &self.coupling[pair_index(self.n_qubits, i, j)]
    }

    pub fn coupling_mut(&mut self, i: usize, j: usize) -> &mut ParameterSchedule {
        let k = pair_index(self.n_qubits, i, j);
        &mut self.coupling[k]
    }

    pub fn decay(&self) -> &ParameterSchedule {
        &self.decay
    }

    pub fn decay_mut(&mut self) -> &mut ParameterSchedule {
        &mut self.decay
    }

    /// Schedule kinds in parameter-vector order.
    pub fn schedule_kinds(&self) -> Vec<ScheduleKind> {
        let n = self.n_qubits;
        let mut kinds = Vec::with_capacity(self.schedule_count());
        kinds.extend((0..n).map(ScheduleKind::Tunneling));
        kinds.extend((0..n).map(ScheduleKind::Bias));
        for i in 0..n {
            for j in i + 1..n {
                kinds.push(ScheduleKind::Coupling(i, j));
            }
        }
        kinds.push(ScheduleKind::Decay);
        kinds
    }

    /// Hamiltonian terms in parameter-vector order (decay excluded).
    pub fn hamiltonian_terms(&self) -> Vec<PauliTerm> {
        self.schedule_kinds()
            .into_iter()
            .filter_map(|k| match k {
                ScheduleKind::Tunneling(q) => Some(PauliTerm::X(q)),
                ScheduleKind::Bias(q) => Some(PauliTerm::Z(q)),
                ScheduleKind::Coupling(i, j) => Some(PauliTerm::ZZ(i, j)),
                ScheduleKind::Decay => None,
            })
            .collect()
    }

    pub fn schedule_count(&self) -> usize {
        2 * self.n_qubits + self.coupling.len() + 1
    }

    pub fn parameter_count(&self) -> usize {
        self.schedule_count() * self.coefficients_per_schedule()
    }

    /// Index of the first decay coefficient; everything before it belongs to
    /// the Hamiltonian.
    pub fn decay_offset(&self) -> usize {
        (self.schedule_count() - 1) * self.coefficients_per_schedule()
    }

    fn schedules(&self) -> impl Iterator<Item = &ParameterSchedule> {
        self.tunneling
            .iter()
            .chain(&self.bias)
            .chain(&self.coupling)
            .chain(core::iter::once(&self.decay))
    }

    fn schedules_mut(&mut self) -> impl Iterator<Item = &mut ParameterSchedule> {
        self.tunneling
            .iter_mut()
            .chain(self.bias.iter_mut())
            .chain(self.coupling.iter_mut())
            .chain(core::iter::once(&mut self.decay))
    }

    /// `[K₁..K_n | ε₁..ε_n | ζ pairs | Γ]`, each schedule as
    /// `[a0, a1..a_nF, b1..b_nF]`.
    pub fn parameter_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.parameter_count());
        for s in self.schedules() {
            v.extend(s.coefficients());
        }
        v
    }

    pub fn set_parameter_vector(&mut self, w: &[f64]) -> CoreResult<()> {
        let expected = self.parameter_count();
        if w.len() != expected {
            return Err(CoreError::ParameterLength {
                expected,
                found: w.len(),
            });
        }
        let per = self.coefficients_per_schedule();
        for (s, chunk) in self.schedules_mut().zip(w.chunks(per)) {
            s.set_coefficients(chunk);
        }
        Ok(())
    }

    /// Copy of `self` with the given parameter vector.
    pub fn with_parameters(&self, w: &[f64]) -> CoreResult<Self> {
        let mut out = self.clone();
        out.set_parameter_vector(w)?;
        Ok(out)
    }

    /// Raw (unclamped) decay value at `t`.
    pub fn decay_raw(&self, t: f64) -> f64 {
        self.decay.value(t)
    }

    /// `Γ(t) = max(value, 0)`.
    pub fn decay_rate(&self, t: f64) -> f64 {
        self.decay.value(t).max(0.0)
    }

    pub(crate) fn terms_at(&self, t: f64) -> HamiltonianTerms {
        let n = self.n_qubits;
        let dim = self.dim();
        let x: Vec<f64> = self.tunneling.iter().map(|s| s.value(t)).collect();
        let eps: Vec<f64> = self.bias.iter().map(|s| s.value(t)).collect();
        let zeta: Vec<f64> = self.coupling.iter().map(|s| s.value(t)).collect();
        let mut diag = vec![0.0; dim];
        for (a, d) in diag.iter_mut().enumerate() {
            let mut v = 0.0;
            for (q, e) in eps.iter().enumerate() {
                v += e * z_sign(n, q, a);
            }
            let mut k = 0;
            for i in 0..n {
                let zi = z_sign(n, i, a);
                for j in i + 1..n {
                    v += zeta[k] * zi * z_sign(n, j, a);
                    k += 1;
                }
            }
            *d = v;
        }
        HamiltonianTerms { x, diag }
    }
}

/// `H(t)` as a dense matrix. The ½ Σ_{i≠j} coupling sum is evaluated as a
/// single sum over pairs `i < j`.
pub fn build_hamiltonian(net: &QuantumNetwork, t: f64) -> ComplexMatrix {
    net.terms_at(t).to_matrix()
}
