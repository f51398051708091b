//! The deforming map `a`: either an invertible linear map `a(x) = Ax` or a
//! user-supplied diffeomorphism with declared Jacobian bounds.
//!
//! For linear maps the Jacobian density |J_{a^{-1}}| is the constant
//! 1/|det A|. Canonical block data (a similarity A = C J C^{-1} with J
//! block-diagonal) is never computed here - computing it is numerically
//! unstable in general - but, when supplied, it is validated entrywise and
//! kept for the witness constructions.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// One block of a real canonical form: either lambda on the diagonal with
/// ones above it, or 2x2 rotation-scaling cells with identity cells above.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JordanBlock {
    Real { eigenvalue: f64, size: usize },
    Rotation { alpha: f64, beta: f64, size: usize },
}

impl JordanBlock {
    pub fn size(&self) -> usize {
        match self {
            JordanBlock::Real { size, .. } => *size,
            JordanBlock::Rotation { size, .. } => *size,
        }
    }

    /// Dense matrix of this block.
    pub fn assemble(&self) -> Result<Mat> {
        match *self {
            JordanBlock::Real { eigenvalue, size } => {
                if size == 0 {
                    return Err(Error::InvalidParameter("block size must be positive".into()));
                }
                let mut m = Mat::zeros(size);
                for i in 0..size {
                    m.set(i, i, eigenvalue);
                    if i + 1 < size {
                        m.set(i, i + 1, 1.0);
                    }
                }
                Ok(m)
            }
            JordanBlock::Rotation { alpha, beta, size } => {
                if size == 0 || size % 2 != 0 {
                    return Err(Error::InvalidParameter(
                        "rotation block size must be a positive even number".into(),
                    ));
                }
                let mut m = Mat::zeros(size);
                for c in 0..size / 2 {
                    let o = 2 * c;
                    m.set(o, o, alpha);
                    m.set(o, o + 1, beta);
                    m.set(o + 1, o, -beta);
                    m.set(o + 1, o + 1, alpha);
                    if o + 3 < size {
                        m.set(o, o + 2, 1.0);
                        m.set(o + 1, o + 3, 1.0);
                    }
                }
                Ok(m)
            }
        }
    }
}

/// Similarity data A = C J C^{-1}, user-supplied and validated.
#[derive(Debug, Clone)]
pub struct JordanData {
    pub transform: Mat,
    pub blocks: Vec<JordanBlock>,
}

impl JordanData {
    /// Block-diagonal matrix J.
    pub fn assemble(&self) -> Result<Mat> {
        let d: usize = self.blocks.iter().map(|b| b.size()).sum();
        let mut j = Mat::zeros(d);
        let mut off = 0;
        for b in &self.blocks {
            let m = b.assemble()?;
            for r in 0..b.size() {
                for c in 0..b.size() {
                    j.set(off + r, off + c, m.get(r, c));
                }
            }
            off += b.size();
        }
        Ok(j)
    }
}

#[derive(Debug, Clone)]
pub struct LinearMap {
    matrix: Mat,
    inverse: Mat,
    det: f64,
    jordan: Option<JordanData>,
}

impl LinearMap {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let matrix = Mat::from_rows(rows)?;
        let inverse = matrix.inverse().map_err(|_| Error::SingularMatrix)?;
        let det = matrix.det();
        Ok(LinearMap { matrix, inverse, det, jordan: None })
    }

    pub fn from_mat(matrix: Mat) -> Result<Self> {
        let inverse = matrix.inverse().map_err(|_| Error::SingularMatrix)?;
        let det = matrix.det();
        Ok(LinearMap { matrix, inverse, det, jordan: None })
    }

    /// Scalar multiple of the identity, `a(x) = alpha x`.
    pub fn scaling(dim: usize, alpha: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { alpha } else { 0.0 }).collect())
            .collect();
        LinearMap::new(&rows)
    }

    pub fn identity(dim: usize) -> Self {
        LinearMap::scaling(dim, 1.0).expect("identity is invertible")
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let d = entries.len();
        let rows: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { entries[i] } else { 0.0 }).collect())
            .collect();
        LinearMap::new(&rows)
    }

    /// Attaches canonical-block data; rejected unless C J C^{-1}
    /// reproduces A to 1e-10 entrywise.
    pub fn with_jordan(mut self, transform: Mat, blocks: Vec<JordanBlock>) -> Result<Self> {
        let d: usize = blocks.iter().map(|b| b.size()).sum();
        if d != self.dim() || transform.size() != self.dim() {
            return Err(Error::InvalidMap(format!(
                "block sizes sum to {d}, map dimension is {}",
                self.dim()
            )));
        }
        let data = JordanData { transform, blocks };
        let j = data.assemble()?;
        let c_inv = data.transform.inverse().map_err(|_| Error::SingularMatrix)?;
        let rebuilt = data.transform.mul(&j).mul(&c_inv);
        let err = rebuilt.sub(&self.matrix).max_abs();
        if err > 1e-10 {
            return Err(Error::InvalidMap(format!(
                "C J C^-1 deviates from A by {err:.3e} (> 1e-10)"
            )));
        }
        self.jordan = Some(data);
        Ok(self)
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &Mat {
        &self.inverse
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn det_abs(&self) -> f64 {
        self.det.abs()
    }

    pub fn jordan(&self) -> Option<&JordanData> {
        self.jordan.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.size()
    }
}

/// A diffeomorphism given by black-box callables plus declared data that
/// cannot be recovered from point evaluations: the global bounds
/// M = sup |J_{a^{-1}}| and m = inf |J_{a^{-1}}|, Lipschitz constants for
/// the forward and inverse maps (used to size grids), and the
/// 1-homogeneity flag.
#[derive(Clone)]
pub struct DiffeoMap {
    dim: usize,
    forward: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    inverse: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    jac_inv_abs: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    sup_jac_inv: f64,
    inf_jac_inv: f64,
    homogeneous_degree_one: bool,
    lipschitz_forward: f64,
    lipschitz_inverse: f64,
}

impl fmt::Debug for DiffeoMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffeoMap")
            .field("dim", &self.dim)
            .field("sup_jac_inv", &self.sup_jac_inv)
            .field("inf_jac_inv", &self.inf_jac_inv)
            .field("homogeneous_degree_one", &self.homogeneous_degree_one)
            .finish_non_exhaustive()
    }
}

#[allow(clippy::too_many_arguments)]
impl DiffeoMap {
    pub fn new(
        dim: usize,
        forward: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
        inverse: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
        jac_inv_abs: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        sup_jac_inv: f64,
        inf_jac_inv: f64,
        homogeneous_degree_one: bool,
        lipschitz_forward: f64,
        lipschitz_inverse: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if !(sup_jac_inv >= inf_jac_inv && inf_jac_inv > 0.0) {
            return Err(Error::InvalidMap(
                "declared Jacobian bounds require 0 < m <= M".into(),
            ));
        }
        if !(lipschitz_forward > 0.0 && lipschitz_inverse > 0.0) {
            return Err(Error::InvalidMap("Lipschitz constants must be positive".into()));
        }
        Ok(DiffeoMap {
            dim,
            forward,
            inverse,
            jac_inv_abs,
            sup_jac_inv,
            inf_jac_inv,
            homogeneous_degree_one,
            lipschitz_forward,
            lipschitz_inverse,
        })
    }

    /// The built-in one-dimensional family a(x) = alpha x + beta sin x,
    /// strictly monotone for alpha > |beta|. Its inverse is computed by a
    /// guarded Newton iteration; |J_{a^{-1}}|(y) = 1/(alpha + beta cos(a^{-1}(y)))
    /// with exact bounds M = 1/(alpha - |beta|), m = 1/(alpha + |beta|).
    pub fn scaled_sine(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > beta.abs()) {
            return Err(Error::InvalidMap(
                "scaled-sine map needs alpha > |beta| to stay a diffeomorphism".into(),
            ));
        }
        let fwd = move |x: &[f64], out: &mut [f64]| {
            out[0] = alpha * x[0] + beta * x[0].sin();
        };
        let inv = move |y: &[f64], out: &mut [f64]| {
            out[0] = invert_scaled_sine(alpha, beta, y[0]);
        };
        let jac = move |y: &[f64]| {
            let x = invert_scaled_sine(alpha, beta, y[0]);
            1.0 / (alpha + beta * x.cos()).abs()
        };
        DiffeoMap::new(
            1,
            Arc::new(fwd),
            Arc::new(inv),
            Arc::new(jac),
            1.0 / (alpha - beta.abs()),
            1.0 / (alpha + beta.abs()),
            beta == 0.0,
            alpha + beta.abs(),
            1.0 / (alpha - beta.abs()),
        )
    }
}

/// Solves alpha x + beta sin x = y for x (monotone, derivative >= alpha - |beta| > 0).
fn invert_scaled_sine(alpha: f64, beta: f64, y: f64) -> f64 {
    let mut x = y / alpha;
    let (mut lo, mut hi) = ((y - beta.abs()) / alpha, (y + beta.abs()) / alpha);
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    for _ in 0..200 {
        let f = alpha * x + beta * x.sin() - y;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let step = f / (alpha + beta * x.cos());
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// The map `a` in the kernel K(x,y) = psi(y - a(x)) + psi(x - a(y)).
#[derive(Debug, Clone)]
pub enum MapSpec {
    Linear(LinearMap),
    Diffeo(DiffeoMap),
}

impl MapSpec {
    pub fn identity(dim: usize) -> Self {
        MapSpec::Linear(LinearMap::identity(dim))
    }

    pub fn dim(&self) -> usize {
        match self {
            MapSpec::Linear(m) => m.dim(),
            MapSpec::Diffeo(m) => m.dim,
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        match self {
            MapSpec::Linear(m) => m.matrix.apply(x, out),
            MapSpec::Diffeo(m) => (m.forward)(x, out),
        }
    }

    pub fn inverse(&self, y: &[f64], out: &mut [f64]) {
        match self {
            MapSpec::Linear(m) => m.inverse.apply(y, out),
            MapSpec::Diffeo(m) => (m.inverse)(y, out),
        }
    }

    pub fn forward_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.forward(x, &mut out);
        out
    }

    pub fn inverse_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.inverse(y, &mut out);
        out
    }

    /// |J_{a^{-1}}|(y): the density appearing in ∫ psi(x - a(y)) dy after
    /// the change of variables z = a(y). Constant 1/|det A| for linear maps.
    pub fn jac_inv_abs(&self, y: &[f64]) -> f64 {
        match self {
            MapSpec::Linear(m) => 1.0 / m.det_abs(),
            MapSpec::Diffeo(m) => (m.jac_inv_abs)(y),
        }
    }

    /// M = sup |J_{a^{-1}}|.
    pub fn sup_jac_inv(&self) -> f64 {
        match self {
            MapSpec::Linear(m) => 1.0 / m.det_abs(),
            MapSpec::Diffeo(m) => m.sup_jac_inv,
        }
    }

    /// m = inf |J_{a^{-1}}|.
    pub fn inf_jac_inv(&self) -> f64 {
        match self {
            MapSpec::Linear(m) => 1.0 / m.det_abs(),
            MapSpec::Diffeo(m) => m.inf_jac_inv,
        }
    }

    pub fn is_homogeneous_degree_one(&self) -> bool {
        match self {
            MapSpec::Linear(_) => true,
            MapSpec::Diffeo(m) => m.homogeneous_degree_one,
        }
    }

    pub fn as_linear(&self) -> Option<&LinearMap> {
        match self {
            MapSpec::Linear(m) => Some(m),
            MapSpec::Diffeo(_) => None,
        }
    }

    /// Radius of a ball certain to contain a(B_r). Frobenius norms are used
    /// for linear maps (an upper bound on the operator norm, so the cover
    /// can only be generous).
    pub fn range_bound(&self, r: f64) -> f64 {
        match self {
            MapSpec::Linear(m) => m.matrix.frobenius_norm() * r,
            MapSpec::Diffeo(m) => {
                let origin_image = {
                    let x = vec![0.0; m.dim];
                    let mut out = vec![0.0; m.dim];
                    (m.forward)(&x, &mut out);
                    out.iter().map(|v| v * v).sum::<f64>().sqrt()
                };
                origin_image + m.lipschitz_forward * r
            }
        }
    }

    /// Radius of a ball certain to contain a^{-1}(B_r).
    pub fn inverse_range_bound(&self, r: f64) -> f64 {
        match self {
            MapSpec::Linear(m) => m.inverse.frobenius_norm() * r,
            MapSpec::Diffeo(m) => {
                let origin_preimage = {
                    let y = vec![0.0; m.dim];
                    let mut out = vec![0.0; m.dim];
                    (m.inverse)(&y, &mut out);
                    out.iter().map(|v| v * v).sum::<f64>().sqrt()
                };
                origin_preimage + m.lipschitz_inverse * r
            }
        }
    }

    /// Axis-aligned half-widths of a box containing a^{-1}(ball(center, r)),
    /// written into `half` with the box center into `center_out`.
    pub(crate) fn inverse_ball_box(&self, center: &[f64], r: f64, center_out: &mut [f64], half: &mut [f64]) {
        match self {
            MapSpec::Linear(m) => {
                m.inverse.apply(center, center_out);
                for i in 0..self.dim() {
                    half[i] = m.inverse.row_norm(i) * r;
                }
            }
            MapSpec::Diffeo(m) => {
                (m.inverse)(center, center_out);
                for h in half.iter_mut() {
                    *h = m.lipschitz_inverse * r;
                }
            }
        }
    }

    /// Spot-checks the declared data on `n` sampled points: the inverse
    /// round trip to 1e-10 and the Jacobian bracket [m, M].
    pub fn validate(&self, n: usize, seed: u64) -> Result<()> {
        let d = self.dim();
        let mut rng = Rng::new(seed);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut back = vec![0.0; d];
        for _ in 0..n {
            for v in x.iter_mut() {
                *v = rng.uniform(-4.0, 4.0);
            }
            // a^{-1}(a(x)) = x and a(a^{-1}(y)) = y on sampled points.
            self.forward(&x, &mut y);
            self.inverse(&y, &mut back);
            for i in 0..d {
                if (back[i] - x[i]).abs() > 1e-10 * x[i].abs().max(1.0) {
                    return Err(Error::InvalidMap(format!(
                        "inverse round trip off by {:.3e} at sampled point",
                        (back[i] - x[i]).abs()
                    )));
                }
            }
            self.inverse(&x, &mut y);
            self.forward(&y, &mut back);
            for i in 0..d {
                if (back[i] - x[i]).abs() > 1e-10 * x[i].abs().max(1.0) {
                    return Err(Error::InvalidMap(format!(
                        "forward round trip off by {:.3e} at sampled point",
                        (back[i] - x[i]).abs()
                    )));
                }
            }
            self.forward(&x, &mut y);
            let j = self.jac_inv_abs(&y);
            let (m, mm) = (self.inf_jac_inv(), self.sup_jac_inv());
            if j < m * (1.0 - 1e-9) - 1e-12 || j > mm * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::InvalidMap(format!(
                    "sampled |J_a^-1| = {j} escapes the declared bracket [{m}, {mm}]"
                )));
            }
        }
        Ok(())
    }
}
