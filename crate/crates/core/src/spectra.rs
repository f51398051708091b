//! Principal eigenpair of the discrete operator, Rayleigh quotients of
//! arbitrary grid functions, and the radius sweep tracking
//! lambda1(B_R) as R grows.
//!
//! The solver runs restarted Lanczos with full reorthogonalization on the
//! shifted operator s I - T, s = 2 max_i d_i (a Gershgorin bound on
//! lambda_max(T)), so the principal eigenvalue of T becomes the dominant
//! one. The contract is the residual bound ||Tv - lambda v|| <= tol * s,
//! not the algorithm; on grids small enough for a dense factorization the
//! result is checked against one in the test suite.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernel::DeformationKernel;
use crate::linalg::{self, Mat};
use crate::operator::{self, DiscreteOperator};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    /// Smallest eigenvalue of T (operator convention).
    #[serde(rename = "lambda_T")]
    pub lambda_t: f64,
    /// Variational convention: lambda1 = 2 lambda_T.
    pub lambda1: f64,
    /// Principal eigenvector on interior nodes, h-weighted L² norm 1,
    /// sign-normalized so that its sum is positive.
    #[serde(skip)]
    pub eigvec: Vec<f64>,
    /// ||T v - lambda_T v||₂ for the Euclidean-unit eigenvector.
    pub residual: f64,
    /// Matrix-vector products consumed.
    pub iterations: usize,
    pub converged: bool,
    /// The two smallest eigenvalues are within 10 tol of each other.
    pub near_degenerate: bool,
}

/// One restarted Lanczos cycle on B = s I - T starting from `start`
/// (Euclidean-unit). Returns the top two Ritz pairs of the cycle.
struct CycleOutput {
    theta_top: f64,
    theta_second: Option<f64>,
    ritz_top: Vec<f64>,
    ritz_second: Option<Vec<f64>>,
    matvecs: usize,
}

fn lanczos_cycle(op: &DiscreteOperator, s: f64, start: &[f64], m: usize) -> CycleOutput {
    let n = op.n();
    let m = m.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut alphas: Vec<f64> = Vec::with_capacity(m);
    let mut betas: Vec<f64> = Vec::with_capacity(m);
    let mut q = start.to_vec();
    let nrm = linalg::norm2(&q);
    linalg::scale(1.0 / nrm, &mut q);
    basis.push(q);
    let mut matvecs = 0;
    let breakdown = 1e-13 * (s.abs() + 1.0);

    let mut w = vec![0.0; n];
    for j in 0..m {
        // w = B q_j = s q_j - T q_j
        op.apply(&basis[j], &mut w).expect("length checked");
        matvecs += 1;
        for i in 0..n {
            w[i] = s * basis[j][i] - w[i];
        }
        if j > 0 {
            let b = betas[j - 1];
            let prev = basis[j - 1].clone();
            linalg::axpy(-b, &prev, &mut w);
        }
        let a = linalg::dot(&w, &basis[j]);
        alphas.push(a);
        {
            let qj = basis[j].clone();
            linalg::axpy(-a, &qj, &mut w);
        }
        // Full reorthogonalization, two passes.
        for _ in 0..2 {
            for q in &basis {
                let c = linalg::dot(&w, q);
                if c != 0.0 {
                    linalg::axpy(-c, q, &mut w);
                }
            }
        }
        let b = linalg::norm2(&w);
        if b <= breakdown || j + 1 == m {
            break;
        }
        betas.push(b);
        let mut next = w.clone();
        linalg::scale(1.0 / b, &mut next);
        basis.push(next);
    }

    let k = alphas.len();
    let mut tri = Mat::zeros(k);
    for i in 0..k {
        tri.set(i, i, alphas[i]);
        if i + 1 < k {
            tri.set(i, i + 1, betas[i]);
            tri.set(i + 1, i, betas[i]);
        }
    }
    let (vals, vecs) = linalg::sym_eigen(&tri);

    let ritz_from = |col: usize| -> Vec<f64> {
        let mut z = vec![0.0; n];
        for (j, q) in basis.iter().enumerate() {
            linalg::axpy(vecs.get(j, col), q, &mut z);
        }
        let nz = linalg::norm2(&z);
        linalg::scale(1.0 / nz, &mut z);
        z
    };

    let top = k - 1;
    let theta_top = vals[top];
    let ritz_top = ritz_from(top);
    let (theta_second, ritz_second) = if k >= 2 {
        (Some(vals[top - 1]), Some(ritz_from(top - 1)))
    } else {
        (None, None)
    };
    CycleOutput { theta_top, theta_second, ritz_top, ritz_second, matvecs }
}

fn residual_norm(op: &DiscreteOperator, lambda: f64, v: &[f64]) -> f64 {
    let tv = op.apply_vec(v).expect("length checked");
    let mut r2 = 0.0;
    for i in 0..v.len() {
        let r = tv[i] - lambda * v[i];
        r2 += r * r;
    }
    r2.sqrt()
}

/// Sign normalization: flips `v` so its entry sum (or, if that is zero,
/// its largest-magnitude entry) is positive. Returns the minimum entry.
fn sign_normalize(v: &mut [f64]) -> f64 {
    let sum: f64 = v.iter().sum();
    let flip = if sum != 0.0 {
        sum < 0.0
    } else {
        let mut idx = 0;
        let mut best = 0.0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > best {
                best = x.abs();
                idx = i;
            }
        }
        v[idx] < 0.0
    };
    if flip {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
    v.iter().fold(f64::INFINITY, |m, &x| m.min(x))
}

/// Smallest eigenpair of T to a relative residual of `tol` (measured
/// against the Gershgorin bound 2 max_i d_i). If `maxiter` matrix-vector
/// products do not suffice, the best iterate is returned flagged
/// non-converged rather than as an error.
pub fn smallest_eigenpair(op: &DiscreteOperator, tol: f64, maxiter: usize) -> Result<SpectralResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    let n = op.n();
    if n == 0 {
        return Err(Error::InvalidParameter("operator has no interior nodes".into()));
    }
    let s = op.lambda_max_bound();
    let target = tol * s.max(f64::MIN_POSITIVE);
    let cycle_len = 80;

    let mut start = vec![1.0; n];
    let mut iterations = 0;
    let mut lambda;
    let mut vec_top;
    let mut second_gap;
    let mut ritz_second;
    let mut resid;
    loop {
        let out = lanczos_cycle(op, s, &start, cycle_len);
        iterations += out.matvecs;
        lambda = s - out.theta_top;
        vec_top = out.ritz_top;
        second_gap = out.theta_second.map(|t2| (out.theta_top - t2).abs());
        ritz_second = out.ritz_second;
        resid = residual_norm(op, lambda, &vec_top);
        if resid <= target || iterations >= maxiter {
            break;
        }
        start = vec_top;
    }
    let converged = resid <= target;

    let near_degenerate = matches!(second_gap, Some(g) if g <= 10.0 * target);
    let mut eigvec = vec_top;
    if near_degenerate {
        // The principal pair is the one with a positive eigenvector.
        if let Some(mut z2) = ritz_second {
            let min1 = sign_normalize(&mut eigvec);
            let min2 = sign_normalize(&mut z2);
            if min2 > min1 && residual_norm(op, lambda, &z2) <= target {
                eigvec = z2;
            }
        }
    } else {
        sign_normalize(&mut eigvec);
    }

    // Rescale to h-weighted unit norm.
    let h_d = op.grid().cell_volume();
    let nrm = linalg::norm2(&eigvec) * h_d.sqrt();
    linalg::scale(1.0 / nrm, &mut eigvec);

    let lambda_t = if lambda < 0.0 && lambda > -1e-12 * s { 0.0 } else { lambda };
    Ok(SpectralResult {
        lambda_t,
        lambda1: 2.0 * lambda_t,
        eigvec,
        residual: resid,
        iterations,
        converged,
        near_degenerate,
    })
}

/// Energy quotient of an arbitrary interior vector:
///
///   [sum_ij K(x_i,x_j)(u~_i - u~_j)² h^{2d}] / [sum_i u_i² h^d],
///
/// sums over interior and extension nodes with u~ = 0 outside. Evaluated
/// directly from the kernel, independent of any assembled operator, and
/// always at least lambda1 of the same discretization.
pub fn rayleigh_quotient(grid: &Grid, kernel: &DeformationKernel, u: &[f64]) -> Result<f64> {
    let n = grid.interior_count();
    if u.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: u.len() });
    }
    let d = grid.dim();
    let h_d = grid.cell_volume();
    let den: f64 = u.iter().map(|v| v * v).sum::<f64>() * h_d;
    if den == 0.0 {
        return Err(Error::ZeroVector);
    }

    let total = grid.total_count();
    let mut images = vec![0.0; total * d];
    for j in 0..total {
        kernel.map().forward(grid.node(j), &mut images[j * d..(j + 1) * d]);
    }
    let mut cand = Vec::new();
    let mut num = 0.0;
    for i in 0..n {
        operator::candidate_ids(grid, kernel, &images, i, &mut cand);
        let x = grid.node(i);
        let ax = &images[i * d..(i + 1) * d];
        let mut acc = 0.0;
        for &j in &cand {
            let ju = j as usize;
            let k = kernel.eval_with_images(x, grid.node(ju), ax, &images[ju * d..(ju + 1) * d]);
            if k > 0.0 {
                if ju < n {
                    let diff = u[i] - u[ju];
                    acc += k * diff * diff;
                } else {
                    // Ordered pairs (i in I, j in E) and (j in E, i in I)
                    // contribute equally.
                    acc += 2.0 * k * u[i] * u[i];
                }
            }
        }
        num += acc;
    }
    num *= h_d * h_d;
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingRule {
    /// The same spacing at every radius.
    Fixed(f64),
    /// h = R / value.
    Proportional(f64),
}

impl SpacingRule {
    pub fn spacing(&self, radius: f64) -> f64 {
        match *self {
            SpacingRule::Fixed(h) => h,
            SpacingRule::Proportional(q) => radius / q,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "h")]
    pub spacing: f64,
    pub lambda1: f64,
    #[serde(rename = "lambda_T")]
    pub lambda_t: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitMethod {
    LastRow,
    GeometricTail,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceLimit {
    pub estimate: f64,
    pub method: LimitMethod,
    /// Fitted decay exponent p in lambda1(R) = limit + c R^{-p}, when the
    /// geometric-tail fit applies.
    pub exponent: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<SweepRow>,
    pub limit: ConvergenceLimit,
    pub psi_mass: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub tol: f64,
    pub maxiter: usize,
    pub max_nodes: usize,
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            tol: 1e-9,
            maxiter: 200_000,
            max_nodes: crate::grid::DEFAULT_MAX_NODES,
            jobs: 1,
        }
    }
}

/// lambda1(B_R) along an increasing list of radii. The limit estimate is
/// the last row, refined by a power-law tail fit over the last three rows
/// when the radii are geometric and the differences are decreasing; the
/// tag records which estimate was used.
pub fn sweep_radius(
    kernel: &DeformationKernel,
    radii: &[f64],
    rule: SpacingRule,
    cfg: &SweepConfig,
) -> Result<ConvergenceTable> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("need at least one radius".into()));
    }
    for w in radii.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter("radii must be strictly increasing".into()));
        }
    }
    for &r in radii {
        let h = rule.spacing(r);
        if !(h > 0.0) || h > r / 4.0 {
            return Err(Error::InvalidParameter(format!(
                "spacing rule must yield 0 < h <= R/4 (R = {r}, h = {h})"
            )));
        }
    }

    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let h = rule.spacing(r);
        let grid = Grid::build(kernel.dim(), r, h, kernel.map(), cfg.max_nodes)?;
        let op = DiscreteOperator::assemble(grid, kernel, cfg.jobs)?;
        let res = smallest_eigenpair(&op, cfg.tol, cfg.maxiter)?;
        rows.push(SweepRow {
            radius: r,
            spacing: h,
            lambda1: res.lambda1,
            lambda_t: res.lambda_t,
            iterations: res.iterations,
            residual: res.residual,
            converged: res.converged,
        });
    }

    let limit = estimate_limit(&rows);
    Ok(ConvergenceTable { rows, limit, psi_mass: kernel.psi_mass() })
}

fn estimate_limit(rows: &[SweepRow]) -> ConvergenceLimit {
    let n = rows.len();
    let last = rows[n - 1].lambda1;
    if n >= 3 {
        let (r1, r2, r3) = (rows[n - 3].radius, rows[n - 2].radius, rows[n - 1].radius);
        let (l1, l2, l3) = (rows[n - 3].lambda1, rows[n - 2].lambda1, rows[n - 1].lambda1);
        let q = r3 / r2;
        let geometric = (r2 / r1 - q).abs() <= 1e-9 * q;
        let d1 = l1 - l2;
        let d2 = l2 - l3;
        if geometric && d1 > 0.0 && d2 > 0.0 && d2 < d1 {
            let p = (d1 / d2).ln() / q.ln();
            let qp = q.powf(-p);
            let estimate = l3 - d2 * qp / (1.0 - qp);
            return ConvergenceLimit {
                estimate,
                method: LimitMethod::GeometricTail,
                exponent: Some(p),
            };
        }
    }
    ConvergenceLimit { estimate: last, method: LimitMethod::LastRow, exponent: None }
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("R,h,lambda1,lambda_T,iterations,residual,converged\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.radius, r.spacing, r.lambda1, r.lambda_t, r.iterations, r.residual, r.converged
            ));
        }
        out
    }
}
