//! Quantum states: density matrices, pure states, Pauli measures and the
//! random state generators used to build the product/entangled datasets.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[cfg(not(feature = "std"))]
use num_traits::Float;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, CoreResult};
use crate::linalg::{kron, kron_vec, ComplexMatrix, C64, I, ONE, ZERO};

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;
/// PSD floor used for states stored along an integrated trajectory.
pub const RELAXED_PSD_TOL: f64 = 1e-8;

/// Single-qubit Pauli matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> ComplexMatrix {
        let rows = match self {
            Pauli::I => [[ONE, ZERO], [ZERO, ONE]],
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -I], [I, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        };
        ComplexMatrix::from_fn(2, |i, j| rows[i][j])
    }
}

/// Kronecker product of single-qubit Paulis, first factor = qubit 0
/// (most significant bit of the basis index).
pub fn pauli_string(ops: &[Pauli]) -> ComplexMatrix {
    let mut iter = ops.iter();
    let first = iter.next().expect("empty Pauli string").matrix();
    iter.fold(first, |acc, p| kron(&acc, &p.matrix()))
}

/// Which correlation a [`MeasureOperator`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureLabel {
    XX,
    YY,
    ZZ,
    /// `Z ⊗ … ⊗ Z` on the given number of qubits.
    ZString(usize),
}

impl fmt::Display for MeasureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureLabel::XX => f.write_str("XX"),
            MeasureLabel::YY => f.write_str("YY"),
            MeasureLabel::ZZ => f.write_str("ZZ"),
            MeasureLabel::ZString(n) => write!(f, "Z^{n}"),
        }
    }
}

/// Hermitian Pauli-string observable whose correlation `tr(Mρ)` is a network
/// output.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureOperator {
    label: MeasureLabel,
    mat: ComplexMatrix,
}

impl MeasureOperator {
    pub fn xx() -> Self {
        Self {
            label: MeasureLabel::XX,
            mat: pauli_string(&[Pauli::X, Pauli::X]),
        }
    }

    pub fn yy() -> Self {
        Self {
            label: MeasureLabel::YY,
            mat: pauli_string(&[Pauli::Y, Pauli::Y]),
        }
    }

    pub fn zz() -> Self {
        Self {
            label: MeasureLabel::ZZ,
            mat: pauli_string(&[Pauli::Z, Pauli::Z]),
        }
    }

    /// `Z ⊗ … ⊗ Z` on `n` qubits.
    pub fn z_string(n: usize) -> Self {
        assert!(n >= 1);
        Self {
            label: MeasureLabel::ZString(n),
            mat: pauli_string(&vec![Pauli::Z; n]),
        }
    }

    pub fn from_label(label: MeasureLabel) -> Self {
        match label {
            MeasureLabel::XX => Self::xx(),
            MeasureLabel::YY => Self::yy(),
            MeasureLabel::ZZ => Self::zz(),
            MeasureLabel::ZString(n) => Self::z_string(n),
        }
    }

    pub fn label(&self) -> MeasureLabel {
        self.label
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }
}

/// Validated density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    mat: ComplexMatrix,
}

/// Tolerances applied by [`validate_density_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub psd: f64,
}

impl Default for DensityTolerance {
    fn default() -> Self {
        Self {
            hermitian: HERMITIAN_TOL,
            trace: TRACE_TOL,
            psd: PSD_TOL,
        }
    }
}

impl DensityTolerance {
    pub fn relaxed() -> Self {
        Self {
            psd: RELAXED_PSD_TOL,
            ..Self::default()
        }
    }
}

pub(crate) fn qubits_for_dim(dim: usize) -> CoreResult<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(CoreError::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// Checks the three density-matrix invariants with the default tolerances.
pub fn validate_density(mat: ComplexMatrix) -> CoreResult<DensityMatrix> {
    validate_density_with(mat, DensityTolerance::default())
}

pub fn validate_density_with(
    mat: ComplexMatrix,
    tol: DensityTolerance,
) -> CoreResult<DensityMatrix> {
    let n_qubits = qubits_for_dim(mat.dim())?;
    if !mat.is_finite() {
        return Err(CoreError::NotHermitian {
            defect: f64::INFINITY,
        });
    }
    let defect = mat.hermiticity_defect();
    if defect > tol.hermitian {
        return Err(CoreError::NotHermitian { defect });
    }
    let deviation = (mat.trace() - ONE).norm();
    if deviation > tol.trace {
        return Err(CoreError::TraceNotOne { deviation });
    }
    let min_eigenvalue = mat.hermitian_eigenvalues()[0];
    if min_eigenvalue < -tol.psd {
        return Err(CoreError::NotPsd { min_eigenvalue });
    }
    Ok(DensityMatrix { n_qubits, mat })
}

impl DensityMatrix {
    /// Wraps a matrix known to satisfy the invariants by construction.
    pub(crate) fn new_unchecked(mat: ComplexMatrix) -> Self {
        let n_qubits = mat.dim().trailing_zeros() as usize;
        debug_assert_eq!(1usize << n_qubits, mat.dim());
        Self { n_qubits, mat }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        Self::new_unchecked(ComplexMatrix::outer(&psi.amplitudes, &psi.amplitudes))
    }

    /// Computational basis state `|index⟩⟨index|`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let dim = 1usize << n_qubits;
        assert!(index < dim);
        let mut m = ComplexMatrix::zeros(dim);
        m[(index, index)] = ONE;
        Self::new_unchecked(m)
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self::new_unchecked(ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    /// `tr(ρ²)`
    pub fn purity(&self) -> f64 {
        self.mat.frobenius_norm_sqr()
    }

    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        (&self.mat - &other.mat).frobenius_norm()
    }
}

/// `|+⟩⟨+|^⊗n`, every entry `1/2^n`.
pub fn flat_state(n: usize) -> DensityMatrix {
    assert!(n >= 1, "flat_state needs at least one qubit");
    let dim = 1usize << n;
    let v = C64::new(1.0 / dim as f64, 0.0);
    DensityMatrix::new_unchecked(ComplexMatrix::from_fn(dim, |_, _| v))
}

/// `tr(M ρ)`; the imaginary part is checked against the Hermitian tolerance
/// and dropped.
pub fn pauli_correlation(m: &MeasureOperator, rho: &DensityMatrix) -> CoreResult<f64> {
    if m.dim() != rho.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: m.dim(),
            found: rho.dim(),
        });
    }
    let t = trace_product(m.matrix(), rho.matrix());
    if t.im.abs() > HERMITIAN_TOL * rho.dim() as f64 {
        return Err(CoreError::NotHermitian { defect: t.im.abs() });
    }
    Ok(t.re)
}

/// `tr(A B)` without forming the product.
pub(crate) fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    let n = a.dim();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Normalized state vector on `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// Accepts an amplitude vector of unit norm (within 1e-12).
    pub fn new(amplitudes: Vec<C64>) -> CoreResult<Self> {
        let n_qubits = qubits_for_dim(amplitudes.len())?;
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidArgument(alloc::format!(
                "state norm {norm} is not 1"
            )));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(amplitudes: Vec<C64>) -> CoreResult<Self> {
        let n_qubits = qubits_for_dim(amplitudes.len())?;
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(CoreError::ZeroMatrix);
        }
        Ok(Self {
            n_qubits,
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_pure(self)
    }
}

/// Pure-state concurrence `2|a₀₀a₁₁ − a₀₁a₁₀|`.
pub fn concurrence_pure(psi: &PureState) -> CoreResult<f64> {
    if psi.n_qubits != 2 {
        return Err(CoreError::WrongQubitCount {
            expected: 2,
            found: psi.n_qubits,
        });
    }
    let a = &psi.amplitudes;
    Ok(2.0 * (a[0] * a[3] - a[1] * a[2]).norm())
}

/// Seedable randomness shared by every stochastic routine in the crate.
#[derive(Clone, Debug)]
pub struct RandomSource(ChaCha8Rng);

impl RandomSource {
    pub fn seeded(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent stream for the same seed; different `stream` values never
    /// overlap.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.random::<f64>()
    }

    fn complex_gaussian(&mut self) -> C64 {
        let re = self.gaussian();
        let im = self.gaussian();
        C64::new(re, im)
    }

    /// Haar-uniform pure state on `n` qubits.
    pub fn haar_state(&mut self, n: usize) -> PureState {
        let dim = 1usize << n;
        loop {
            let amps: Vec<C64> = (0..dim).map(|_| self.complex_gaussian()).collect();
            if let Ok(s) = PureState::normalized(amps) {
                return s;
            }
        }
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// `|a⟩ ⊗ |b⟩` with both factors Haar-uniform single-qubit states.
pub fn random_product_state(rng: &mut RandomSource) -> PureState {
    let a = rng.haar_state(1);
    let b = rng.haar_state(1);
    let amps = kron_vec(&a.amplitudes, &b.amplitudes);
    // Product of two unit vectors; renormalize to absorb round-off.
    PureState::normalized(amps).expect("product of unit vectors is nonzero")
}

/// Haar-uniform two-qubit state rejection-sampled until its concurrence is at
/// least `c_min`.
pub fn random_entangled_state(rng: &mut RandomSource, c_min: f64) -> CoreResult<PureState> {
    if !(c_min > 0.0 && c_min <= 1.0) {
        return Err(CoreError::InvalidArgument(alloc::format!(
            "c_min {c_min} outside (0, 1]"
        )));
    }
    loop {
        let psi = rng.haar_state(2);
        if concurrence_pure(&psi)? >= c_min {
            return Ok(psi);
        }
    }
}
