//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("profile must have a positive amplitude (and hence positive mass)")]
    DegenerateProfile,

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is singular or too ill-conditioned to invert")]
    SingularMatrix,

    #[error("spacing {spacing} is too coarse for radius {radius}")]
    SpacingTooCoarse { spacing: f64, radius: f64 },

    #[error("requested {requested} exceeds the configured cap of {cap}")]
    MemoryCapExceeded { requested: usize, cap: usize },

    #[error("quadrature did not converge")]
    QuadratureNonConvergence,

    #[error("matrix is not expansive and neither is its inverse")]
    NonExpansive,

    #[error("iterates of the base point collide; no ball radius separates the images")]
    IterateCollision,

    #[error("input vector is identically zero")]
    ZeroVector,

    #[error("vector length {got} does not match expected length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fit window holds {got} records, need at least {need}")]
    WindowTooShort { need: usize, got: usize },

    #[error("map is not homogeneous of degree one")]
    NotHomogeneous,

    #[error("candidate function carries no gradient data")]
    MissingGradient,

    #[error("time step {dt} exceeds 0.9 of the stability limit {limit}")]
    UnstableTimeStep { dt: f64, limit: f64 },

    #[error("state became non-finite at step {step}")]
    NonFiniteState { step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
