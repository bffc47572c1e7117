//! Pathwise simulation of one-dimensional Lévy-driven SDEs with drift,
//! `dX = a(X) dt + dZ`, and of their Marcus counterparts
//! `dX = a(X) dt + σ(X) ⋄ dZ`.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`. Driver paths come from [`PathSampler`],
//! solvers live in [`flow_engine`], [`marcus`] and [`transforms`], Monte
//! Carlo statistics in [`diagnostics`], and [`scenario`] runs the built-in
//! experiments in parallel with bit-reproducible output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod flow_engine;
pub mod levy_spec;
pub mod marcus;
pub(crate) mod ode;
pub mod path_sampler;
pub mod quad;
pub mod rng;
pub mod scalar;
pub mod scenario;
pub mod transforms;

pub use diagnostics::{
    detect_atoms, deterministic_skeleton, drift_jump_events, kde, lattice_concentration, two_sample_ks, AtomReport,
    KdeResult, KsResult,
};
pub use error::{Error, Result};
pub use flow_engine::{
    flow_derivative_exponential, flow_derivative_variational, jump_time_derivative, solve_random_ode, Trajectory,
};
pub use levy_spec::{kallenberg_b_profile, Atom, KallenbergProfile};
pub use marcus::{jump_flow_phi, marcus_solve};
pub use path_sampler::{decompose_first_jump, resample_first_jump_time, sample_path, Jump};
pub use rng::RngStream;
pub use scalar::Real;
pub use transforms::{doss_sussman_solve, phi_inverse_psi, proportional_solution, unit_diffusion_transform};

pub type JumpMeasureSpec = levy_spec::JumpMeasureSpec<f64>;
pub type LevyTriplet = levy_spec::LevyTriplet<f64>;
pub type LevyPath = path_sampler::LevyPath<f64>;
pub type PathSampler = path_sampler::PathSampler<f64>;
pub type PathDecomposition = path_sampler::PathDecomposition<f64>;
pub type ScalarField = field::ScalarField<f64>;
pub type DiffusionField = field::DiffusionField<f64>;
pub type FlowSolution = flow_engine::FlowSolution<f64>;
pub type MarcusTrajectory = marcus::MarcusTrajectory<f64>;
pub type Diffeomorphism = transforms::Diffeomorphism<f64>;
pub type DossSussman = transforms::DossSussman<f64>;
pub type SampleBatch = diagnostics::SampleBatch<f64>;
