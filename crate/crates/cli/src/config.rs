//! Config document parsing and validation. One JSON document describes
//! the problem (dimension, profile, map) plus one section per task;
//! command-line flags override the overlapping keys.

use nldiff_core::{
    DeformationKernel, DiffeoMap, JordanBlock, LinearMap, Mat, MapSpec, Profile, ProfileShape,
};
use serde::Deserialize;
use std::path::PathBuf;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemCfg,
    #[serde(default)]
    pub eigen: Option<EigenCfg>,
    #[serde(default)]
    pub sweep: Option<SweepCfg>,
    #[serde(default)]
    pub bounds: Option<BoundsCfg>,
    #[serde(default)]
    pub witness: Option<WitnessCfg>,
    #[serde(default)]
    pub evolve: Option<EvolveCfg>,
    #[serde(default)]
    pub output: Option<OutputCfg>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_nodes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemCfg {
    pub dimension: usize,
    pub profile: ProfileCfg,
    pub map: MapCfg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileCfg {
    pub shape: ProfileShape,
    /// Total mass ∫psi; defaults to 1 when neither key is given.
    #[serde(default)]
    pub mass: Option<f64>,
    /// Raw amplitude in front of the base shape (alternative to `mass`).
    #[serde(default)]
    pub amplitude: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapCfg {
    /// a(x) = Ax with the matrix rows in row-major decimal text.
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        jordan: Option<JordanCfg>,
    },
    /// a(x) = alpha x + beta sin x (one-dimensional).
    ScaledSine { alpha: f64, beta: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JordanCfg {
    pub transform: Vec<Vec<f64>>,
    pub blocks: Vec<JordanBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenCfg {
    pub radius: f64,
    pub spacing: f64,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub maxiter: Option<usize>,
    #[serde(default)]
    pub dump_matrix: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingCfg {
    Fixed(f64),
    Proportional(f64),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepCfg {
    pub radii: Vec<f64>,
    pub spacing: SpacingCfg,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub maxiter: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CandidateCfg {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Bump,
    PowerLaw { alphas: Vec<f64>, sigma: f64, eps: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteRadiusCfg {
    pub radius: f64,
    pub delta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsCfg {
    #[serde(default)]
    pub candidate: Option<CandidateCfg>,
    #[serde(default)]
    pub finite_radius: Option<FiniteRadiusCfg>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum WitnessCfg {
    PowerLaw {
        alphas: Vec<f64>,
        sigma: f64,
        eps: f64,
    },
    ExpansiveGeometric {
        /// Defaults to the problem map's matrix when omitted.
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        sigma: f64,
        #[serde(default)]
        samples: Option<u64>,
        #[serde(default)]
        j_max: Option<u32>,
    },
    JordanShear {
        k: usize,
        lambda: f64,
        dimension: usize,
        #[serde(default)]
        samples: Option<u64>,
    },
    JordanRotation {
        k: usize,
        theta: f64,
        dimension: usize,
        #[serde(default)]
        samples: Option<u64>,
    },
    Composed {
        transform: Vec<Vec<f64>>,
        blocks: Vec<WitnessCfg>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    Random,
    Eigenmode,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveCfg {
    pub radius: f64,
    pub spacing: f64,
    pub t_end: f64,
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    #[serde(default = "default_window_fraction")]
    pub window_fraction: f64,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub maxiter: Option<usize>,
}

fn default_dt_factor() -> f64 {
    0.5
}

fn default_record_every() -> usize {
    1
}

fn default_initial() -> InitialData {
    InitialData::Random
}

fn default_window_fraction() -> f64 {
    0.4
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl ConfigFile {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("cannot parse config: {e}")))
    }
}

pub fn build_profile(problem: &ProblemCfg) -> Result<Profile, CliError> {
    let p = &problem.profile;
    let d = problem.dimension;
    let profile = match (p.mass, p.amplitude) {
        (Some(_), Some(_)) => {
            return Err(CliError::Validation(
                "profile: give either mass or amplitude, not both".into(),
            ))
        }
        (Some(m), None) => Profile::with_mass(p.shape, d, m),
        (None, Some(a)) => Profile::new(p.shape, d, a),
        (None, None) => Profile::normalized(p.shape, d),
    };
    profile.map_err(CliError::from_core)
}

pub fn build_map(problem: &ProblemCfg) -> Result<MapSpec, CliError> {
    let d = problem.dimension;
    let map = match &problem.map {
        MapCfg::Linear { matrix, jordan } => {
            if matrix.len() != d {
                return Err(CliError::Validation(format!(
                    "map matrix is {}x{} but the problem dimension is {d}",
                    matrix.len(),
                    matrix.first().map_or(0, Vec::len)
                )));
            }
            let mut lin = LinearMap::new(matrix).map_err(CliError::from_core)?;
            if let Some(j) = jordan {
                let c = Mat::from_rows(&j.transform).map_err(CliError::from_core)?;
                lin = lin.with_jordan(c, j.blocks.clone()).map_err(CliError::from_core)?;
            }
            MapSpec::Linear(lin)
        }
        MapCfg::ScaledSine { alpha, beta } => {
            if d != 1 {
                return Err(CliError::Validation(
                    "the scaled-sine map is one-dimensional".into(),
                ));
            }
            MapSpec::Diffeo(DiffeoMap::scaled_sine(*alpha, *beta).map_err(CliError::from_core)?)
        }
    };
    // Spot-check declared data before any heavy computation.
    map.validate(64, 0xD1FF).map_err(CliError::from_core)?;
    Ok(map)
}

pub fn build_kernel(problem: &ProblemCfg) -> Result<DeformationKernel, CliError> {
    let profile = build_profile(problem)?;
    let map = build_map(problem)?;
    DeformationKernel::new(profile, map).map_err(CliError::from_core)
}
