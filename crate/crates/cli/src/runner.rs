//! Task execution: builds the kernel and grid from the validated config,
//! dispatches to the library, and writes results atomically (temp file
//! plus rename), so a crashed run never leaves a half-written output.

use crate::config::*;
use crate::CliError;
use nldiff_core as core;
use nldiff_core::{Candidate, DiscreteOperator, Grid, LinearMap, Mat, Rng};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

pub struct Settings {
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_nodes: usize,
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Validation(format!("cannot move output into place: {e}")))?;
    Ok(())
}

fn emit(settings: &Settings, contents: &str) -> Result<(), CliError> {
    match &settings.output {
        Some(path) => write_atomic(path, contents),
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(settings: &Settings, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("serialization failed: {e}")))?;
    emit(settings, &text)
}

fn require_json(settings: &Settings, task: &str) -> Result<(), CliError> {
    if settings.format == Some(OutputFormat::Csv) {
        return Err(CliError::Validation(format!(
            "the {task} task has no CSV schema; use json"
        )));
    }
    Ok(())
}

fn maxiter_or(m: Option<usize>) -> usize {
    m.unwrap_or(400_000)
}

fn build_operator(
    cfg: &ConfigFile,
    settings: &Settings,
    radius: f64,
    spacing: f64,
) -> Result<(core::DeformationKernel, DiscreteOperator), CliError> {
    let kernel = build_kernel(&cfg.problem)?;
    let grid = Grid::build(cfg.problem.dimension, radius, spacing, kernel.map(), settings.max_nodes)
        .map_err(CliError::from_core)?;
    let op = DiscreteOperator::assemble(grid, &kernel, settings.jobs).map_err(CliError::from_core)?;
    Ok((kernel, op))
}

pub fn run_eigen(cfg: &ConfigFile, settings: &Settings) -> Result<(), CliError> {
    require_json(settings, "eigen")?;
    let e = cfg
        .eigen
        .as_ref()
        .ok_or_else(|| CliError::Validation("config has no eigen section".into()))?;
    let tol = e.tol.unwrap_or(settings.tol);
    if !(tol > 0.0) {
        return Err(CliError::Validation("tolerance must be positive".into()));
    }
    let (kernel, op) = build_operator(cfg, settings, e.radius, e.spacing)?;
    if let Some(dump) = &e.dump_matrix {
        let mut buf = Vec::new();
        op.write_triplets(&mut buf)
            .map_err(|err| CliError::Validation(format!("matrix dump failed: {err}")))?;
        write_atomic(dump, &String::from_utf8_lossy(&buf))?;
    }
    let res = core::smallest_eigenpair(&op, tol, maxiter_or(e.maxiter)).map_err(CliError::from_core)?;
    let bounds = core::bounds::report(&kernel, None).map_err(CliError::from_core)?;
    let doc = json!({
        "lambda1": res.lambda1,
        "lambda_T": res.lambda_t,
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "near_degenerate": res.near_degenerate,
        "psi_mass": kernel.psi_mass(),
        "radius": e.radius,
        "spacing": e.spacing,
        "interior_nodes": op.n(),
        "bounds": bounds,
    });
    emit_json(settings, &doc)?;
    if !res.converged {
        return Err(CliError::Numerical(format!(
            "eigensolver did not converge within {} iterations (residual {:.3e})",
            res.iterations, res.residual
        )));
    }
    Ok(())
}

pub fn run_sweep(cfg: &ConfigFile, settings: &Settings) -> Result<(), CliError> {
    let s = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Validation("config has no sweep section".into()))?;
    let rule = match s.spacing {
        SpacingCfg::Fixed(h) => core::SpacingRule::Fixed(h),
        SpacingCfg::Proportional(q) => core::SpacingRule::Proportional(q),
    };
    let sweep_cfg = core::SweepConfig {
        tol: s.tol.unwrap_or(settings.tol),
        maxiter: maxiter_or(s.maxiter),
        max_nodes: settings.max_nodes,
        jobs: settings.jobs,
    };
    let kernel = build_kernel(&cfg.problem)?;
    let table = core::sweep_radius(&kernel, &s.radii, rule, &sweep_cfg).map_err(CliError::from_core)?;
    match settings.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Csv => emit(settings, &table.to_csv())?,
        OutputFormat::Json => emit_json(settings, &table)?,
    }
    if let Some(row) = table.rows.iter().find(|r| !r.converged) {
        return Err(CliError::Numerical(format!(
            "eigensolver did not converge at R = {}",
            row.radius
        )));
    }
    Ok(())
}

fn build_candidate(c: &CandidateCfg) -> Result<Box<dyn Candidate>, CliError> {
    match c {
        CandidateCfg::Box { lo, hi } => Ok(Box::new(
            core::BoxIndicator::new(lo.clone(), hi.clone()).map_err(CliError::from_core)?,
        )),
        CandidateCfg::Bump => Ok(Box::new(core::QuadraticBump::new(1))),
        CandidateCfg::PowerLaw { alphas, sigma, eps } => {
            let (w, _) = core::power_law_witness(alphas, *sigma, *eps).map_err(CliError::from_core)?;
            Ok(Box::new(w))
        }
    }
}

fn build_candidate_for_dim(c: &CandidateCfg, dim: usize) -> Result<Box<dyn Candidate>, CliError> {
    let cand: Box<dyn Candidate> = match c {
        CandidateCfg::Bump => Box::new(core::QuadraticBump::new(dim)),
        _ => build_candidate(c)?,
    };
    if cand.dim() != dim {
        return Err(CliError::Validation(format!(
            "candidate dimension {} does not match problem dimension {dim}",
            cand.dim()
        )));
    }
    Ok(cand)
}

pub fn run_bounds(cfg: &ConfigFile, settings: &Settings) -> Result<(), CliError> {
    require_json(settings, "bounds")?;
    let b = cfg
        .bounds
        .as_ref()
        .ok_or_else(|| CliError::Validation("config has no bounds section".into()))?;
    let kernel = build_kernel(&cfg.problem)?;
    let candidate = match &b.candidate {
        Some(c) => Some(build_candidate_for_dim(c, cfg.problem.dimension)?),
        None => None,
    };
    let report = core::bounds::report(&kernel, candidate.as_deref()).map_err(CliError::from_core)?;
    let finite = match (&b.finite_radius, &candidate) {
        (Some(fr), Some(c)) => Some(
            core::finite_radius_bound(&kernel, c.as_ref(), fr.radius, fr.delta)
                .map_err(CliError::from_core)?,
        ),
        (Some(_), None) => {
            return Err(CliError::Validation(
                "finite_radius needs a candidate function".into(),
            ))
        }
        _ => None,
    };
    let mut doc = serde_json::to_value(&report)
        .map_err(|e| CliError::Validation(format!("serialization failed: {e}")))?;
    doc["finite_radius"] = match finite {
        Some(f) => serde_json::to_value(&f)
            .map_err(|e| CliError::Validation(format!("serialization failed: {e}")))?,
        None => serde_json::Value::Null,
    };
    emit_json(settings, &doc)
}

fn build_witness(
    w: &WitnessCfg,
    cfg: &ConfigFile,
    settings: &Settings,
) -> Result<(core::WitnessFunction, core::OverlapReport), CliError> {
    match w {
        WitnessCfg::PowerLaw { alphas, sigma, eps } => {
            core::power_law_witness(alphas, *sigma, *eps).map_err(CliError::from_core)
        }
        WitnessCfg::ExpansiveGeometric { matrix, sigma, samples, j_max } => {
            let lin = match matrix {
                Some(rows) => LinearMap::new(rows).map_err(CliError::from_core)?,
                None => match build_map(&cfg.problem)? {
                    core::MapSpec::Linear(l) => l,
                    core::MapSpec::Diffeo(_) => {
                        return Err(CliError::Validation(
                            "the geometric witness needs a linear map".into(),
                        ))
                    }
                },
            };
            core::expansive_geometric_witness(
                &lin,
                *sigma,
                samples.unwrap_or(200_000),
                settings.seed,
                *j_max,
            )
            .map_err(CliError::from_core)
        }
        WitnessCfg::JordanShear { k, lambda, dimension, samples } => {
            core::jordan_shear_witness(*k, *lambda, *dimension, samples.unwrap_or(100_000), settings.seed)
                .map_err(CliError::from_core)
        }
        WitnessCfg::JordanRotation { k, theta, dimension, samples } => {
            core::jordan_rotation_witness(
                *k,
                *theta,
                *dimension,
                samples.unwrap_or(100_000),
                settings.seed,
            )
            .map_err(CliError::from_core)
        }
        WitnessCfg::Composed { transform, blocks } => {
            let c = Mat::from_rows(transform).map_err(CliError::from_core)?;
            let parts: Result<Vec<_>, CliError> =
                blocks.iter().map(|b| build_witness(b, cfg, settings)).collect();
            core::composed_witness(&c, parts?).map_err(CliError::from_core)
        }
    }
}

pub fn run_witness(cfg: &ConfigFile, settings: &Settings) -> Result<(), CliError> {
    require_json(settings, "witness")?;
    let w = cfg
        .witness
        .as_ref()
        .ok_or_else(|| CliError::Validation("config has no witness section".into()))?;
    let (_, report) = build_witness(w, cfg, settings)?;
    emit_json(settings, &report)
}

pub fn run_evolve(cfg: &ConfigFile, settings: &Settings) -> Result<(), CliError> {
    let e = cfg
        .evolve
        .as_ref()
        .ok_or_else(|| CliError::Validation("config has no evolve section".into()))?;
    if !(e.dt_factor > 0.0 && e.dt_factor <= 0.9) {
        return Err(CliError::Validation("dt_factor must lie in (0, 0.9]".into()));
    }
    let tol = e.tol.unwrap_or(settings.tol);
    let (_kernel, op) = build_operator(cfg, settings, e.radius, e.spacing)?;
    let u0: Vec<f64> = match e.initial {
        InitialData::Random => {
            let mut rng = Rng::new(settings.seed);
            (0..op.n()).map(|_| rng.uniform(-1.0, 1.0)).collect()
        }
        InitialData::Eigenmode => {
            let res = core::smallest_eigenpair(&op, tol, maxiter_or(e.maxiter))
                .map_err(CliError::from_core)?;
            if !res.converged {
                return Err(CliError::Numerical(
                    "eigensolver did not converge while preparing the eigenmode".into(),
                ));
            }
            res.eigvec
        }
    };
    let dt = e.dt_factor * core::stability_limit(&op);
    let traj =
        core::simulate(&op, &u0, e.t_end, dt, e.record_every).map_err(CliError::from_core)?;
    match settings.format.unwrap_or(OutputFormat::Csv) {
        OutputFormat::Csv => emit(settings, &traj.to_csv()),
        OutputFormat::Json => {
            let fit = core::fit_decay_rate(&traj, e.window_fraction).map_err(CliError::from_core)?;
            let doc = json!({
                "rate": fit.rate,
                "window": fit.window,
                "r_squared": fit.r_squared,
                "window_shrunk": fit.window_shrunk,
                "dt": traj.dt,
                "records": traj.times.len(),
                "scheme": traj.scheme,
            });
            emit_json(settings, &doc)
        }
    }
}
