//! Forward-Euler integration of u_t = -T u with exterior-zero data, the
//! h-weighted L² trajectory, and least-squares decay-rate fits.
//!
//! The semigroup contracts the L² norm at rate lambda1 = 2 lambda_T, so
//! ||u(t)||² <= ||u0||² exp(-lambda1 t). Forward Euler preserves that
//! bound step by step whenever dt stays below the stability limit
//! 1/max_i d_i (then |1 - dt lambda| <= 1 - dt lambda_T across the whole
//! spectrum of T).

use crate::error::{Error, Result};
use crate::operator::DiscreteOperator;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// h-weighted squared L² norms at the recorded times.
    pub l2sq: Vec<f64>,
    #[serde(skip)]
    pub u_final: Vec<f64>,
    pub dt: f64,
    pub scheme: &'static str,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,l2sq\n");
        for (t, v) in self.times.iter().zip(self.l2sq.iter()) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

/// Largest stable forward-Euler step, 1/max_i d_i. Gershgorin gives
/// lambda_max(T) <= 2 max_i d_i, so dt * lambda_max <= 2 at this value.
pub fn stability_limit(op: &DiscreteOperator) -> f64 {
    1.0 / op.max_diag()
}

/// Marches u <- u - dt T u until `t_end`, recording the h-weighted
/// squared L² norm at step 0, every `record_every`-th step, and the final
/// step. `dt` must not exceed 0.9 of the stability limit.
pub fn simulate(
    op: &DiscreteOperator,
    u0: &[f64],
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    let n = op.n();
    if u0.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: u0.len() });
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("initial data must be finite".into()));
    }
    if u0.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector);
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParameter("t_end must be nonnegative".into()));
    }
    if record_every == 0 {
        return Err(Error::InvalidParameter("record_every must be at least 1".into()));
    }
    let limit = stability_limit(op);
    if !(dt > 0.0) || dt > 0.9 * limit * (1.0 + 1e-12) {
        return Err(Error::UnstableTimeStep { dt, limit });
    }

    let h_d = op.grid().cell_volume();
    let l2 = |u: &[f64]| h_d * u.iter().map(|v| v * v).sum::<f64>();

    let steps = if t_end == 0.0 { 0 } else { ((t_end / dt) - 1e-9).ceil().max(0.0) as usize };
    let mut u = u0.to_vec();
    let mut tu = vec![0.0; n];
    let mut times = Vec::with_capacity(steps / record_every + 2);
    let mut l2sq = Vec::with_capacity(steps / record_every + 2);
    times.push(0.0);
    l2sq.push(l2(&u));

    for step in 1..=steps {
        op.apply(&u, &mut tu)?;
        for i in 0..n {
            u[i] -= dt * tu[i];
        }
        if step % record_every == 0 || step == steps {
            let v = l2(&u);
            if !v.is_finite() {
                return Err(Error::NonFiniteState { step });
            }
            times.push(step as f64 * dt);
            l2sq.push(v);
        }
    }

    Ok(Trajectory { times, l2sq, u_final: u, dt, scheme: "forward-euler" })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Decay rate of the squared L² norm (minus the slope of ln l2sq).
    pub rate: f64,
    /// Time window [t_lo, t_hi] actually used by the fit.
    pub window: (f64, f64),
    pub r_squared: f64,
    /// True when underflowing records were dropped from the window.
    pub window_shrunk: bool,
}

/// Least-squares slope of ln(l2sq) over the trailing `window_fraction` of
/// the records; `rate` is minus that slope. Records that have underflowed
/// (l2sq below 1e-300) are dropped and flagged.
pub fn fit_decay_rate(traj: &Trajectory, window_fraction: f64) -> Result<DecayFit> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidParameter("window fraction must be in (0, 1]".into()));
    }
    let n = traj.times.len();
    let take = ((window_fraction * n as f64).ceil() as usize).clamp(1, n);
    let start = n - take;
    if traj.l2sq[start..].iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("l2sq must be strictly positive in the window".into()));
    }
    if take < 10 {
        return Err(Error::WindowTooShort { need: 10, got: take });
    }
    let mut pts: Vec<(f64, f64)> = traj.times[start..]
        .iter()
        .zip(traj.l2sq[start..].iter())
        .filter(|(_, &v)| v > 1e-300)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let window_shrunk = pts.len() < take;
    if pts.len() < 2 {
        return Err(Error::WindowTooShort { need: 2, got: pts.len() });
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (t, y) in &pts {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("window spans a single time".into()));
    }
    let slope = sxy / sxx;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (t, y) in &pts {
        let fit = mean_y + slope * (t - mean_t);
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot <= 1e-28 { 1.0 } else { 1.0 - ss_res / ss_tot };

    Ok(DecayFit {
        rate: -slope,
        window: (pts[0].0, pts[pts.len() - 1].0),
        r_squared,
        window_shrunk,
    })
}
