//! Forward master-equation integration, backward costate integration and
//! parameter-gradient assembly.
//!
//! The backward pass is the exact adjoint of the forward discretization:
//! for the unitary integrator every step is `ρ ← U_k ρ U_k†` with
//! `U_k = exp(−i H(t_k + Δt/2) Δt)`, and for the dissipative integrator every
//! step is one classical RK4 step of
//!
//! ```text
//! dρ/dt = −i[H(t), ρ] + Γ(t) Σ_q (σ⁻_q ρ σ⁺_q − ½{σ⁺_q σ⁻_q, ρ})
//! ```
//!
//! Costates are pulled back through the transpose of each step in reverse
//! order, so [`assemble_gradient`] returns the derivative of the discretized
//! map to round-off.
//!
//! Gradient convention: given a final costate `γ_f`, the assembled vector is
//! `∂/∂w Re tr(γ_f† ρ(t_f))` with `γ_f` held fixed. A loss whose derivative
//! with respect to the final state is `c·γ_f` therefore has gradient `c`
//! times the assembled vector; see [`Objective`](crate::objective::Objective).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{CoreError, CoreResult};
use crate::linalg::{ComplexMatrix, C64, I, ZERO};
use crate::network::{fourier_basis, qubit_mask, HamiltonianTerms, PauliTerm, QuantumNetwork};
use crate::state::{
    trace_product, validate_density_with, DensityMatrix, DensityTolerance, MeasureOperator,
    RELAXED_PSD_TOL,
};

/// Per-qubit lowering/raising operators of the amplitude-damping dissipator.
/// `σ⁻ = |0⟩⟨1|` on the addressed qubit, identity elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladConfig {
    pub lowering: Vec<ComplexMatrix>,
    pub raising: Vec<ComplexMatrix>,
}

impl LindbladConfig {
    pub fn new(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let lowering: Vec<ComplexMatrix> = (0..n_qubits)
            .map(|q| {
                let m = qubit_mask(n_qubits, q);
                ComplexMatrix::from_fn(dim, |a, b| {
                    if a & m == 0 && b == a | m {
                        C64::new(1.0, 0.0)
                    } else {
                        ZERO
                    }
                })
            })
            .collect();
        let raising = lowering.iter().map(ComplexMatrix::adjoint).collect();
        Self { lowering, raising }
    }

    /// `Σ_q σ⁻ρσ⁺ − ½{σ⁺σ⁻, ρ}` with dense products; reference form for the
    /// structured kernels used by the integrator.
    pub fn dissipator(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(rho.dim());
        for (l, r) in self.lowering.iter().zip(&self.raising) {
            out += &l.matmul(rho).matmul(r);
            out -= &r.matmul(l).anticommutator(rho).scale_real(0.5);
        }
        out
    }

    /// Hilbert–Schmidt adjoint of [`Self::dissipator`]:
    /// `Σ_q σ⁺γσ⁻ − ½{σ⁺σ⁻, γ}`.
    pub fn adjoint_dissipator(&self, gamma: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(gamma.dim());
        for (l, r) in self.lowering.iter().zip(&self.raising) {
            out += &r.matmul(gamma).matmul(l);
            out -= &r.matmul(l).anticommutator(gamma).scale_real(0.5);
        }
        out
    }
}

/// States on the uniform grid, `states[0]` is the initial condition.
#[derive(Clone, Debug, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl StateTrajectory {
    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Costates on the same grid, `costates[n_steps]` is the final condition.
#[derive(Clone, Debug, PartialEq)]
pub struct CostateTrajectory {
    pub times: Vec<f64>,
    pub costates: Vec<ComplexMatrix>,
}

impl CostateTrajectory {
    /// Costate at `t = 0`: the loss gradient with respect to the initial
    /// state (up to the objective's scale factor).
    pub fn initial(&self) -> &ComplexMatrix {
        &self.costates[0]
    }
}

/// Gradient entries in parameter-vector order.
pub type GradientVector = Vec<f64>;

/// `γ_f = T − ρ(t_f)`
pub fn final_costate_target(
    target: &DensityMatrix,
    rho_f: &DensityMatrix,
) -> CoreResult<ComplexMatrix> {
    if target.dim() != rho_f.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: target.dim(),
            found: rho_f.dim(),
        });
    }
    Ok(target.matrix() - rho_f.matrix())
}

/// `γ_f = 2(tr(Mρ)² − target)·tr(Mρ)·M`
pub fn final_costate_measure(
    m: &MeasureOperator,
    rho_f: &DensityMatrix,
    target: f64,
) -> CoreResult<ComplexMatrix> {
    let c = crate::state::pauli_correlation(m, rho_f)?;
    Ok(m.matrix().scale_real(2.0 * (c * c - target) * c))
}

struct UnitaryStep {
    t_mid: f64,
    evals: Vec<f64>,
    evecs: ComplexMatrix,
    u: ComplexMatrix,
    u_adj: ComplexMatrix,
}

struct RkStep {
    /// Stage times `t, t + h/2, t + h`.
    t: [f64; 3],
    h: [HamiltonianTerms; 3],
    /// Clamped decay rate at each stage time.
    gamma: [f64; 3],
    /// Whether the clamp is inactive (raw value ≥ 0).
    gamma_active: [bool; 3],
}

enum Stepper {
    Unitary(Vec<UnitaryStep>),
    RungeKutta(Vec<RkStep>),
}

/// A network compiled for repeated propagation: per-step propagators or
/// stage Hamiltonians are evaluated once and shared by every example.
pub struct Propagator {
    n_qubits: usize,
    dim: usize,
    step: f64,
    times: Vec<f64>,
    n_harmonics: usize,
    period: f64,
    terms: Vec<PauliTerm>,
    stepper: Stepper,
}

impl Propagator {
    pub fn new(net: &QuantumNetwork) -> Self {
        let n = net.n_steps();
        let h = net.step_size();
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let stepper = if net.lindblad_enabled() {
            Stepper::RungeKutta(
                (0..n)
                    .map(|k| {
                        let t0 = times[k];
                        let t = [t0, t0 + 0.5 * h, t0 + h];
                        let raw = t.map(|s| net.decay_raw(s));
                        RkStep {
                            t,
                            h: t.map(|s| net.terms_at(s)),
                            gamma: raw.map(|g| g.max(0.0)),
                            gamma_active: raw.map(|g| g >= 0.0),
                        }
                    })
                    .collect(),
            )
        } else {
            Stepper::Unitary(
                (0..n)
                    .map(|k| {
                        let t_mid = times[k] + 0.5 * h;
                        let hm = net.terms_at(t_mid).to_matrix();
                        let (evals, evecs) = hm.hermitian_eigen();
                        let phases: Vec<C64> = evals
                            .iter()
                            .map(|&e| C64::from_polar(1.0, -h * e))
                            .collect();
                        let mut scaled = evecs.clone();
                        for i in 0..scaled.dim() {
                            for (j, p) in phases.iter().enumerate() {
                                scaled[(i, j)] *= p;
                            }
                        }
                        let u = scaled.matmul(&evecs.adjoint());
                        let u_adj = u.adjoint();
                        UnitaryStep {
                            t_mid,
                            evals,
                            evecs,
                            u,
                            u_adj,
                        }
                    })
                    .collect(),
            )
        };
        Self {
            n_qubits: net.n_qubits(),
            dim: net.dim(),
            step: h,
            times,
            n_harmonics: net.n_harmonics(),
            period: net.final_time(),
            terms: net.hamiltonian_terms(),
            stepper,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn parameter_count(&self) -> usize {
        (self.terms.len() + 1) * (1 + 2 * self.n_harmonics)
    }

    fn check_input(&self, rho0: &DensityMatrix) -> CoreResult<()> {
        if rho0.dim() != self.dim {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim,
                found: rho0.dim(),
            });
        }
        Ok(())
    }

    fn advance(&self, k: usize, rho: &ComplexMatrix) -> ComplexMatrix {
        match &self.stepper {
            Stepper::Unitary(steps) => {
                let s = &steps[k];
                s.u.matmul(rho).matmul(&s.u_adj)
            }
            Stepper::RungeKutta(steps) => rk4_forward(self.n_qubits, self.step, &steps[k], rho).0,
        }
    }

    /// Applies the discrete map to an arbitrary matrix without validation.
    pub fn evolve_matrix(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = m.clone();
        for k in 0..self.n_steps() {
            out = self.advance(k, &out);
        }
        out
    }

    /// Integrates to `t_f`, storing every grid state.
    pub fn forward(&self, rho0: &DensityMatrix) -> CoreResult<StateTrajectory> {
        self.check_input(rho0)?;
        let mut states = Vec::with_capacity(self.times.len());
        states.push(rho0.clone());
        let mut rho = rho0.matrix().clone();
        for k in 0..self.n_steps() {
            rho = self.advance(k, &rho);
            check_step(k + 1, &rho)?;
            states.push(DensityMatrix::new_unchecked(rho.clone()));
        }
        validate_density_with(rho, DensityTolerance::relaxed()).map_err(|e| {
            CoreError::StepUnstable {
                step: self.n_steps(),
                reason: format!("{e}"),
            }
        })?;
        Ok(StateTrajectory {
            times: self.times.clone(),
            states,
        })
    }

    /// Final state only; used when no gradient is needed.
    pub fn final_state(&self, rho0: &DensityMatrix) -> CoreResult<DensityMatrix> {
        self.check_input(rho0)?;
        let mut rho = rho0.matrix().clone();
        for k in 0..self.n_steps() {
            rho = self.advance(k, &rho);
            check_step(k + 1, &rho)?;
        }
        validate_density_with(rho, DensityTolerance::relaxed()).map_err(|e| {
            CoreError::StepUnstable {
                step: self.n_steps(),
                reason: format!("{e}"),
            }
        })
    }

    fn check_grid(&self, times: &[f64]) -> CoreResult<()> {
        if times.len() != self.times.len() || times.iter().zip(&self.times).any(|(a, b)| a != b) {
            return Err(CoreError::GridMismatch);
        }
        Ok(())
    }

    /// Pulls `gamma_f` back to `t = 0`, storing every grid costate.
    pub fn backward(
        &self,
        fwd: &StateTrajectory,
        gamma_f: &ComplexMatrix,
    ) -> CoreResult<CostateTrajectory> {
        self.check_grid(&fwd.times)?;
        let mut costates = vec![ComplexMatrix::zeros(self.dim); self.times.len()];
        costates[self.n_steps()] = gamma_f.clone();
        let mut lam = gamma_f.clone();
        for k in (0..self.n_steps()).rev() {
            lam = self.pull_back(k, fwd.states[k].matrix(), &lam, None);
            if !lam.is_finite() {
                return Err(CoreError::StepUnstable {
                    step: k,
                    reason: "non-finite costate".into(),
                });
            }
            costates[k] = lam.clone();
        }
        Ok(CostateTrajectory {
            times: self.times.clone(),
            costates,
        })
    }

    /// Gradient from stored forward and backward trajectories.
    pub fn gradient(
        &self,
        fwd: &StateTrajectory,
        bwd: &CostateTrajectory,
    ) -> CoreResult<GradientVector> {
        self.check_grid(&fwd.times)?;
        self.check_grid(&bwd.times)?;
        let mut grad = vec![0.0; self.parameter_count()];
        for k in (0..self.n_steps()).rev() {
            self.pull_back(
                k,
                fwd.states[k].matrix(),
                &bwd.costates[k + 1],
                Some(&mut grad),
            );
        }
        Ok(grad)
    }

    /// Costate at `t = 0` without parameter sensitivities.
    pub fn pullback(
        &self,
        fwd: &StateTrajectory,
        gamma_f: &ComplexMatrix,
    ) -> CoreResult<ComplexMatrix> {
        self.check_grid(&fwd.times)?;
        let mut lam = gamma_f.clone();
        for k in (0..self.n_steps()).rev() {
            lam = self.pull_back(k, fwd.states[k].matrix(), &lam, None);
        }
        if !lam.is_finite() {
            return Err(CoreError::StepUnstable {
                step: 0,
                reason: "non-finite costate".into(),
            });
        }
        Ok(lam)
    }

    /// Fused backward pass: returns the costate at `t = 0` and the gradient
    /// without storing the costate trajectory.
    pub fn pullback_and_gradient(
        &self,
        fwd: &StateTrajectory,
        gamma_f: &ComplexMatrix,
    ) -> CoreResult<(ComplexMatrix, GradientVector)> {
        self.check_grid(&fwd.times)?;
        let mut grad = vec![0.0; self.parameter_count()];
        let mut lam = gamma_f.clone();
        for k in (0..self.n_steps()).rev() {
            lam = self.pull_back(k, fwd.states[k].matrix(), &lam, Some(&mut grad));
        }
        if !lam.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(CoreError::StepUnstable {
                step: 0,
                reason: "non-finite costate".into(),
            });
        }
        Ok((lam, grad))
    }

    /// Transpose of step `k` applied to `lam_next`; accumulates the step's
    /// parameter sensitivities into `grad` when given.
    fn pull_back(
        &self,
        k: usize,
        rho_k: &ComplexMatrix,
        lam_next: &ComplexMatrix,
        grad: Option<&mut [f64]>,
    ) -> ComplexMatrix {
        match &self.stepper {
            Stepper::Unitary(steps) => {
                let s = &steps[k];
                if let Some(grad) = grad {
                    self.unitary_sensitivity(s, rho_k, lam_next, grad);
                }
                s.u_adj.matmul(lam_next).matmul(&s.u)
            }
            Stepper::RungeKutta(steps) => self.rk4_reverse(&steps[k], rho_k, lam_next, grad),
        }
    }

    fn unitary_sensitivity(
        &self,
        s: &UnitaryStep,
        rho: &ComplexMatrix,
        lam: &ComplexMatrix,
        grad: &mut [f64],
    ) {
        let d = self.dim;
        let h = self.step;
        // Re tr(γ'†(dU ρ U† + U ρ dU†)) = Re tr(dU · ρ U† S), S = γ' + γ'†.
        let mut sym = lam.clone();
        sym += &lam.adjoint();
        let q = rho.matmul(&s.u_adj).matmul(&sym);
        let v_adj = s.evecs.adjoint();
        let b = v_adj.matmul(&q).matmul(&s.evecs);
        // dU = V (Φ ∘ V†EV) V† with the divided differences of exp(−ihλ).
        let mut c_t = ComplexMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let (li, lj) = (s.evals[i], s.evals[j]);
                let x = 0.5 * h * (li - lj);
                let sinc = if x.abs() < 1e-8 {
                    1.0 - x * x / 6.0
                } else {
                    x.sin() / x
                };
                let phi = C64::from_polar(1.0, -0.5 * h * (li + lj)) * C64::new(0.0, -h * sinc);
                // C_ij = Φ_ij B_ji, stored transposed.
                c_t[(j, i)] = phi * b[(j, i)];
            }
        }
        let g = s.evecs.matmul(&c_t).matmul(&v_adj);
        let per = 1 + 2 * self.n_harmonics;
        let mut basis = vec![0.0; per];
        fourier_basis(self.n_harmonics, self.period, s.t_mid, &mut basis);
        for (w, term) in self.terms.iter().enumerate() {
            let sens = trace_term(self.n_qubits, *term, &g).re;
            for (c, b) in basis.iter().enumerate() {
                grad[w * per + c] += b * sens;
            }
        }
    }

    fn rk4_reverse(
        &self,
        st: &RkStep,
        rho: &ComplexMatrix,
        lam_next: &ComplexMatrix,
        grad: Option<&mut [f64]>,
    ) -> ComplexMatrix {
        let n = self.n_qubits;
        let h = self.step;
        let (_, stages) = rk4_forward(n, h, st, rho);
        let stage_ix = [0usize, 1, 1, 2];

        let mut kb = [
            lam_next.scale_real(h / 6.0),
            lam_next.scale_real(h / 3.0),
            lam_next.scale_real(h / 3.0),
            lam_next.scale_real(h / 6.0),
        ];
        let mut lam = lam_next.clone();

        // Stage j input is s_j = ρ + c_j h k_{j-1}; walk stages backwards.
        let coupling = [0.0, 0.5 * h, 0.5 * h, h];
        for j in (0..4).rev() {
            let ti = stage_ix[j];
            let sb = apply_generator_adjoint(n, &st.h[ti], st.gamma[ti], &kb[j]);
            lam += &sb;
            if j > 0 {
                let (head, tail) = kb.split_at_mut(j);
                let _ = tail;
                head[j - 1].axpy(C64::new(coupling[j], 0.0), &sb);
            }
        }

        if let Some(grad) = grad {
            let per = 1 + 2 * self.n_harmonics;
            let mut basis = vec![0.0; per];
            let n_terms = self.terms.len();
            for j in 0..4 {
                let ti = stage_ix[j];
                fourier_basis(self.n_harmonics, self.period, st.t[ti], &mut basis);
                let s = &stages[j];
                let kbar = &kb[j];
                let diag_w = commutator_diag_weights(kbar, s);
                for (w, term) in self.terms.iter().enumerate() {
                    // Re⟨k̄, −i[P, s]⟩ = Im tr(k̄† [P, s])
                    let sens = overlap_commutator(n, *term, kbar, s, &diag_w).im;
                    for (c, b) in basis.iter().enumerate() {
                        grad[w * per + c] += b * sens;
                    }
                }
                if st.gamma_active[ti] {
                    let sens = overlap_dissipator(n, kbar, s);
                    for (c, b) in basis.iter().enumerate() {
                        grad[n_terms * per + c] += b * sens;
                    }
                }
            }
        }
        lam
    }
}

fn check_step(step: usize, rho: &ComplexMatrix) -> CoreResult<()> {
    if !rho.is_finite() {
        return Err(CoreError::StepUnstable {
            step,
            reason: "non-finite entries".into(),
        });
    }
    let tr = (rho.trace() - C64::new(1.0, 0.0)).norm();
    if tr > 1e-9 {
        return Err(CoreError::StepUnstable {
            step,
            reason: format!("trace drift {tr:e}"),
        });
    }
    let herm = rho.hermiticity_defect();
    if herm > 1e-10 {
        return Err(CoreError::StepUnstable {
            step,
            reason: format!("hermiticity defect {herm:e}"),
        });
    }
    // tr ρ² ≤ 1 for every density matrix, so only a purity overshoot needs
    // the eigenvalue check.
    let purity = rho.frobenius_norm_sqr();
    if purity > 1.0 + 1e-12 {
        let min = rho
            .hermitian_part()
            .hermitian_eigenvalues()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min < -RELAXED_PSD_TOL {
            return Err(CoreError::StepUnstable {
                step,
                reason: format!("min eigenvalue {min:e}, purity {purity}"),
            });
        }
    }
    Ok(())
}

/// One RK4 step; returns the new state and the four stage inputs.
fn rk4_forward(
    n: usize,
    h: f64,
    st: &RkStep,
    rho: &ComplexMatrix,
) -> (ComplexMatrix, [ComplexMatrix; 4]) {
    let s1 = rho.clone();
    let k1 = apply_generator(n, &st.h[0], st.gamma[0], &s1);
    let mut s2 = rho.clone();
    s2.axpy(C64::new(0.5 * h, 0.0), &k1);
    let k2 = apply_generator(n, &st.h[1], st.gamma[1], &s2);
    let mut s3 = rho.clone();
    s3.axpy(C64::new(0.5 * h, 0.0), &k2);
    let k3 = apply_generator(n, &st.h[1], st.gamma[1], &s3);
    let mut s4 = rho.clone();
    s4.axpy(C64::new(h, 0.0), &k3);
    let k4 = apply_generator(n, &st.h[2], st.gamma[2], &s4);
    let mut out = rho.clone();
    out.axpy(C64::new(h / 6.0, 0.0), &k1);
    out.axpy(C64::new(h / 3.0, 0.0), &k2);
    out.axpy(C64::new(h / 3.0, 0.0), &k3);
    out.axpy(C64::new(h / 6.0, 0.0), &k4);
    (out, [s1, s2, s3, s4])
}

/// `[H, s]` from the compact Hamiltonian form.
fn hamiltonian_commutator(n: usize, terms: &HamiltonianTerms, s: &ComplexMatrix) -> ComplexMatrix {
    let dim = s.dim();
    let mut out = ComplexMatrix::zeros(dim);
    let src = s.as_slice();
    let dst = out.as_mut_slice();
    for a in 0..dim {
        let da = terms.diag[a];
        for b in 0..dim {
            dst[a * dim + b] = src[a * dim + b] * (da - terms.diag[b]);
        }
    }
    for (q, &kq) in terms.x.iter().enumerate() {
        if kq == 0.0 {
            continue;
        }
        let m = qubit_mask(n, q);
        for a in 0..dim {
            for b in 0..dim {
                dst[a * dim + b] += (src[(a ^ m) * dim + b] - src[a * dim + (b ^ m)]) * kq;
            }
        }
    }
    out
}

/// `Σ_q σ⁻ρσ⁺ − ½{σ⁺σ⁻, ρ}` using the bit structure of `σ⁻ = |0⟩⟨1|`.
fn dissipator(n: usize, s: &ComplexMatrix) -> ComplexMatrix {
    let dim = s.dim();
    let mut out = ComplexMatrix::zeros(dim);
    let src = s.as_slice();
    let dst = out.as_mut_slice();
    for q in 0..n {
        let m = qubit_mask(n, q);
        for a in 0..dim {
            let na = (a & m != 0) as u8 as f64;
            for b in 0..dim {
                let nb = (b & m != 0) as u8 as f64;
                let mut v = -0.5 * (na + nb) * src[a * dim + b];
                if a & m == 0 && b & m == 0 {
                    v += src[(a | m) * dim + (b | m)];
                }
                dst[a * dim + b] += v;
            }
        }
    }
    out
}

/// `Σ_q σ⁺γσ⁻ − ½{σ⁺σ⁻, γ}`
fn adjoint_dissipator(n: usize, g: &ComplexMatrix) -> ComplexMatrix {
    let dim = g.dim();
    let mut out = ComplexMatrix::zeros(dim);
    let src = g.as_slice();
    let dst = out.as_mut_slice();
    for q in 0..n {
        let m = qubit_mask(n, q);
        for a in 0..dim {
            let na = (a & m != 0) as u8 as f64;
            for b in 0..dim {
                let nb = (b & m != 0) as u8 as f64;
                let mut v = -0.5 * (na + nb) * src[a * dim + b];
                if a & m != 0 && b & m != 0 {
                    v += src[(a ^ m) * dim + (b ^ m)];
                }
                dst[a * dim + b] += v;
            }
        }
    }
    out
}

/// `−i[H, s] + Γ D(s)`
fn apply_generator(
    n: usize,
    terms: &HamiltonianTerms,
    gamma: f64,
    s: &ComplexMatrix,
) -> ComplexMatrix {
    let mut out = hamiltonian_commutator(n, terms, s).scale(-I);
    if gamma != 0.0 {
        out.axpy(C64::new(gamma, 0.0), &dissipator(n, s));
    }
    out
}

/// Adjoint generator `+i[H, γ] + Γ D†(γ)`.
fn apply_generator_adjoint(
    n: usize,
    terms: &HamiltonianTerms,
    gamma: f64,
    g: &ComplexMatrix,
) -> ComplexMatrix {
    let mut out = hamiltonian_commutator(n, terms, g).scale(I);
    if gamma != 0.0 {
        out.axpy(C64::new(gamma, 0.0), &adjoint_dissipator(n, g));
    }
    out
}

/// Row-minus-column sums of `conj(k̄) ∘ s`, shared by every diagonal term.
fn commutator_diag_weights(kbar: &ComplexMatrix, s: &ComplexMatrix) -> Vec<C64> {
    let dim = s.dim();
    let kb = kbar.as_slice();
    let sv = s.as_slice();
    let mut r = vec![ZERO; dim];
    for a in 0..dim {
        for b in 0..dim {
            let w = kb[a * dim + b].conj() * sv[a * dim + b];
            r[a] += w;
            r[b] -= w;
        }
    }
    r
}

/// `tr(k̄† [P, s])`
fn overlap_commutator(
    n: usize,
    term: PauliTerm,
    kbar: &ComplexMatrix,
    s: &ComplexMatrix,
    diag_w: &[C64],
) -> C64 {
    let dim = s.dim();
    match term {
        PauliTerm::X(q) => {
            let m = qubit_mask(n, q);
            let kb = kbar.as_slice();
            let sv = s.as_slice();
            let mut acc = ZERO;
            for a in 0..dim {
                for b in 0..dim {
                    acc += kb[a * dim + b].conj() * (sv[(a ^ m) * dim + b] - sv[a * dim + (b ^ m)]);
                }
            }
            acc
        }
        _ => (0..dim).map(|a| diag_w[a] * term.diag_sign(n, a)).sum(),
    }
}

/// `Re tr(k̄† D(s))`
fn overlap_dissipator(n: usize, kbar: &ComplexMatrix, s: &ComplexMatrix) -> f64 {
    kbar.inner(&dissipator(n, s)).re
}

/// `tr(P G)`
fn trace_term(n: usize, term: PauliTerm, g: &ComplexMatrix) -> C64 {
    let dim = g.dim();
    match term {
        PauliTerm::X(q) => {
            let m = qubit_mask(n, q);
            (0..dim).map(|a| g[(a ^ m, a)]).sum()
        }
        _ => (0..dim).map(|a| g[(a, a)] * term.diag_sign(n, a)).sum(),
    }
}

/// Integrates `rho0` forward through `net` on its uniform grid.
pub fn propagate_forward(
    net: &QuantumNetwork,
    rho0: &DensityMatrix,
) -> CoreResult<StateTrajectory> {
    Propagator::new(net).forward(rho0)
}

/// Integrates the costate backward from `gamma_f` along `fwd`.
pub fn propagate_costate(
    net: &QuantumNetwork,
    fwd: &StateTrajectory,
    gamma_f: &ComplexMatrix,
) -> CoreResult<CostateTrajectory> {
    if gamma_f.dim() != net.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: net.dim(),
            found: gamma_f.dim(),
        });
    }
    Propagator::new(net).backward(fwd, gamma_f)
}

/// `∂/∂w Re tr(γ_f† ρ(t_f))` for every Fourier coefficient `w`.
pub fn assemble_gradient(
    net: &QuantumNetwork,
    fwd: &StateTrajectory,
    bwd: &CostateTrajectory,
) -> CoreResult<GradientVector> {
    Propagator::new(net).gradient(fwd, bwd)
}

/// Exposes `tr(A B)` for callers that compare against the dense form.
pub fn trace_of_product(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    trace_product(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;
    use crate::state::{flat_state, validate_density, Pauli, RandomSource};
    use approx::assert_abs_diff_eq;

    fn random_density(n: usize, rng: &mut RandomSource) -> DensityMatrix {
        // Mixture of two Haar states.
        let a = rng.haar_state(n).to_density();
        let b = rng.haar_state(n).to_density();
        let p = rng.uniform(0.2, 0.8);
        let mut m = a.matrix().scale_real(p);
        m.axpy(C64::new(1.0 - p, 0.0), b.matrix());
        validate_density(m).unwrap()
    }

    fn random_hermitian(dim: usize, rng: &mut RandomSource) -> ComplexMatrix {
        let m = ComplexMatrix::from_fn(dim, |_, _| C64::new(rng.gaussian(), rng.gaussian()));
        m.hermitian_part()
    }

    #[test]
    fn structured_kernels_match_dense_forms() {
        let mut rng = RandomSource::seeded(1);
        let n = 3;
        let mut net = QuantumNetwork::random(n, NetworkConfig::default(), 1.0, &mut rng);
        net.decay_mut().a0 = 0.7;
        let s = ComplexMatrix::from_fn(8, |_, _| C64::new(rng.gaussian(), rng.gaussian()));
        let terms = net.terms_at(0.3);
        let h = terms.to_matrix();
        assert!(hamiltonian_commutator(n, &terms, &s).max_abs_diff(&h.commutator(&s)) < 1e-12);
        let lind = LindbladConfig::new(n);
        assert!(dissipator(n, &s).max_abs_diff(&lind.dissipator(&s)) < 1e-13);
        assert!(adjoint_dissipator(n, &s).max_abs_diff(&lind.adjoint_dissipator(&s)) < 1e-13);
        // ⟨x, D y⟩ = ⟨D† x, y⟩
        let x = ComplexMatrix::from_fn(8, |_, _| C64::new(rng.gaussian(), rng.gaussian()));
        let lhs = x.inner(&lind.dissipator(&s));
        let rhs = lind.adjoint_dissipator(&x).inner(&s);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn lowering_operators_number_is_diagonal_projector() {
        let lind = LindbladConfig::new(2);
        for (l, r) in lind.lowering.iter().zip(&lind.raising) {
            let num = r.matmul(l);
            for i in 0..4 {
                for j in 0..4 {
                    let v = num[(i, j)];
                    if i == j {
                        assert!(v == C64::new(0.0, 0.0) || v == C64::new(1.0, 0.0));
                    } else {
                        assert_eq!(v, ZERO);
                    }
                }
            }
        }
    }

    #[test]
    fn zero_network_is_identity() {
        let net = QuantumNetwork::zeros(2, NetworkConfig::default());
        let rho0 = flat_state(2);
        let traj = propagate_forward(&net, &rho0).unwrap();
        assert_eq!(traj.states.len(), 201);
        for s in &traj.states {
            assert_eq!(s, &rho0);
        }
        let gamma_f = random_hermitian(4, &mut RandomSource::seeded(2));
        let bwd = propagate_costate(&net, &traj, &gamma_f).unwrap();
        for g in &bwd.costates {
            assert_eq!(g, &gamma_f);
        }
    }

    #[test]
    fn rabi_oscillation() {
        for &k in &[0.3, 1.0, 2.5] {
            let mut net = QuantumNetwork::zeros(
                1,
                NetworkConfig {
                    final_time: 1.7,
                    ..Default::default()
                },
            );
            net.tunneling_mut(0).a0 = k;
            let traj = propagate_forward(&net, &DensityMatrix::basis(1, 0)).unwrap();
            let z = crate::state::trace_product(&Pauli::Z.matrix(), traj.final_state().matrix()).re;
            assert_abs_diff_eq!(z, (2.0 * k * 1.7).cos(), epsilon = 1e-6);
        }
    }

    #[test]
    fn amplitude_damping_relaxes_to_ground() {
        let cfg = NetworkConfig {
            final_time: 5.0,
            n_steps: 400,
            lindblad: true,
            ..Default::default()
        };
        let mut net = QuantumNetwork::zeros(1, cfg);
        let gamma = 2.0;
        net.decay_mut().a0 = gamma;
        let traj = propagate_forward(&net, &DensityMatrix::basis(1, 1)).unwrap();
        let z = Pauli::Z.matrix();
        let mut prev = -1.0 - 1e-12;
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let zt = crate::state::trace_product(&z, s.matrix()).re;
            // ⟨Z⟩(t) = 1 − 2 e^{−Γt}
            assert_abs_diff_eq!(zt, 1.0 - 2.0 * (-gamma * t).exp(), epsilon = 1e-7);
            assert!(zt >= prev);
            prev = zt;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn trajectories_stay_valid_and_costates_hermitian() {
        let mut rng = RandomSource::seeded(7);
        for lindblad in [false, true] {
            let cfg = NetworkConfig {
                lindblad,
                ..Default::default()
            };
            let mut net = QuantumNetwork::random(2, cfg, 2.0, &mut rng);
            net.decay_mut().a0 = 0.8;
            let rho0 = random_density(2, &mut rng);
            let traj = propagate_forward(&net, &rho0).unwrap();
            for s in &traj.states {
                validate_density_with(s.matrix().clone(), DensityTolerance::relaxed()).unwrap();
            }
            let bwd = propagate_costate(&net, &traj, &random_hermitian(4, &mut rng)).unwrap();
            for g in &bwd.costates {
                assert!(g.hermiticity_defect() < 1e-10);
            }
        }
    }

    #[test]
    fn unitary_pairing_is_conserved() {
        let mut rng = RandomSource::seeded(8);
        let net = QuantumNetwork::random(2, NetworkConfig::default(), 1.5, &mut rng);
        let traj = propagate_forward(&net, &random_density(2, &mut rng)).unwrap();
        let bwd = propagate_costate(&net, &traj, &random_hermitian(4, &mut rng)).unwrap();
        let pair: Vec<C64> = traj
            .states
            .iter()
            .zip(&bwd.costates)
            .map(|(r, g)| g.inner(r.matrix()))
            .collect();
        for p in &pair {
            assert!((p - pair[0]).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_costate_gives_zero_gradient() {
        let mut rng = RandomSource::seeded(9);
        let net = QuantumNetwork::random(2, NetworkConfig::default(), 1.0, &mut rng);
        let traj = propagate_forward(&net, &flat_state(2)).unwrap();
        let bwd = propagate_costate(&net, &traj, &ComplexMatrix::zeros(4)).unwrap();
        let g = assemble_gradient(&net, &traj, &bwd).unwrap();
        assert_eq!(g.len(), net.parameter_count());
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fused_backward_matches_stored_pass() {
        let mut rng = RandomSource::seeded(10);
        for lindblad in [false, true] {
            let mut net = QuantumNetwork::random(
                2,
                NetworkConfig {
                    lindblad,
                    ..Default::default()
                },
                1.0,
                &mut rng,
            );
            net.decay_mut().a0 = 0.5;
            let prop = Propagator::new(&net);
            let traj = prop.forward(&flat_state(2)).unwrap();
            let gf = random_hermitian(4, &mut rng);
            let bwd = prop.backward(&traj, &gf).unwrap();
            let g1 = prop.gradient(&traj, &bwd).unwrap();
            let (lam0, g2) = prop.pullback_and_gradient(&traj, &gf).unwrap();
            assert_eq!(g1, g2);
            assert_eq!(&lam0, bwd.initial());
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let net = QuantumNetwork::zeros(1, NetworkConfig::default());
        let other = QuantumNetwork::zeros(
            1,
            NetworkConfig {
                n_steps: 50,
                ..Default::default()
            },
        );
        let traj = propagate_forward(&other, &flat_state(1)).unwrap();
        assert_eq!(
            propagate_costate(&net, &traj, &ComplexMatrix::zeros(2)).unwrap_err(),
            CoreError::GridMismatch
        );
    }

    #[test]
    fn measure_costate_examples() {
        let zz = MeasureOperator::zz();
        let rho = DensityMatrix::basis(2, 0);
        assert_eq!(
            final_costate_measure(&zz, &rho, 1.0).unwrap(),
            ComplexMatrix::zeros(4)
        );
        assert_eq!(
            final_costate_measure(&zz, &rho, 0.0).unwrap(),
            zz.matrix().scale_real(2.0)
        );
        let g =
            final_costate_target(&DensityMatrix::basis(1, 0), &DensityMatrix::basis(1, 1)).unwrap();
        assert_eq!(
            g,
            ComplexMatrix::from_diagonal(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)])
        );
    }
}
