//! Quantum dynamic tensor networks: density-matrix dynamics under
//! time-dependent Ising Hamiltonians with optional amplitude damping, exact
//! adjoint gradients, Levenberg–Marquardt training, a small quantum GAN and
//! an image-to-density-matrix transform.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classifier;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod lm;
pub mod network;
pub mod objective;
pub mod qgan;
pub mod spectral;
pub mod state;

pub use classifier::{
    evaluate, train_binary, ClassLabel, ClassifierConfig, ClassifierReport, LabeledState,
    SeparatorGeometry, Tier,
};
pub use dynamics::{
    assemble_gradient, final_costate_measure, final_costate_target, propagate_costate,
    propagate_forward, CostateTrajectory, GradientVector, LindbladConfig, Propagator,
    StateTrajectory,
};
pub use error::{CoreError, CoreResult};
pub use linalg::{kron, kron_vec, ComplexMatrix, C64};
pub use lm::{
    assemble_hessian, lm_step, run_epoch, Damping, EpochReport, LmConfig, LmProblem, LmState,
};
pub use network::{
    build_hamiltonian, NetworkConfig, ParameterSchedule, PauliTerm, QuantumNetwork, ScheduleKind,
};
pub use objective::{
    batch_loss, batch_rms, Batch, Example, JacobianStack, Objective, ObjectiveKind,
};
pub use qgan::{run_product_gan, DiscriminatorHead, GanConfig, GanMetrics, GanRun, Verdict};
pub use spectral::{downsample, hermitize, to_density, GrayImage, HermitizedMatrix};
pub use state::{
    concurrence_pure, flat_state, pauli_correlation, pauli_string, random_entangled_state,
    random_product_state, validate_density, validate_density_with, DensityMatrix, DensityTolerance,
    MeasureLabel, MeasureOperator, Pauli, PureState, RandomSource,
};
