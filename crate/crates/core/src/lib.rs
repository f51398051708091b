//! Principal eigenvalues of nonlocal diffusion operators with
//! deformation kernels.
//!
//! The operator under study is
//!
//! ```text
//! T(u)(x) = -∫ K(x,y) (u(y) - u(x)) dy,   K(x,y) = psi(y - a(x)) + psi(x - a(y)),
//! ```
//!
//! where `psi` is a bounded nonnegative profile supported in the unit ball
//! and `a` is a diffeomorphism (linear maps `a(x) = Ax` being the key
//! special case). The crate provides:
//!
//! - kernel evaluation and exact auxiliary quantities ([`kernel`], [`profile`], [`map`]),
//! - midpoint discretization of the Dirichlet-constrained operator on balls ([`grid`], [`operator`]),
//! - the principal eigenpair, Rayleigh quotients and radius sweeps ([`spectra`]),
//! - analytic lower/upper bounds and the closed-form eigenvalue for linear maps ([`bounds`]),
//! - near-extremal test-function families certifying those bounds ([`witness`]),
//! - forward-Euler evolution with L² decay-rate fits ([`evolution`]).
//!
//! Eigenvalues are reported in two conventions: `lambda_T`, the smallest
//! eigenvalue of the discrete operator T, and the variational value
//! `lambda1 = 2 lambda_T` attached to the energy quotient
//! `∬K(x,y)(u~(x)-u~(y))² / ∫u²`. All analytic bounds live in the
//! `lambda1` convention, and every result record carries both.

pub mod bounds;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod map;
pub mod operator;
pub mod profile;
pub mod quad;
pub mod rng;
pub mod spectra;
pub mod witness;

pub use bounds::{
    closed_form_linear, finite_radius_bound, lower_bound_thm2, upper_bound_candidate,
    upper_bound_sup, BoundReport, FiniteRadiusBound, LowerBoundCase,
};
pub use error::{Error, Result};
pub use evolution::{fit_decay_rate, simulate, stability_limit, DecayFit, Trajectory};
pub use grid::{Grid, DEFAULT_MAX_NODES};
pub use kernel::DeformationKernel;
pub use linalg::Mat;
pub use map::{DiffeoMap, JordanBlock, JordanData, LinearMap, MapSpec};
pub use operator::DiscreteOperator;
pub use profile::{Profile, ProfileShape};
pub use rng::Rng;
pub use spectra::{
    rayleigh_quotient, smallest_eigenpair, sweep_radius, ConvergenceTable, LimitMethod,
    SpacingRule, SpectralResult, SweepConfig, SweepRow,
};
pub use witness::{
    composed_witness, expansive_geometric_witness, jordan_rotation_witness, jordan_shear_witness,
    power_law_witness, BoxIndicator, Candidate, EstimationMethod, OverlapReport, QuadraticBump,
    WitnessFunction,
};
