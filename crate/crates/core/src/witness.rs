//! Near-extremal test functions for the candidate upper bound.
//!
//! Each family drives the normalized overlap
//!
//!   ratio = ∫phi(x) phi(a(x)) dx / (|det A|^{-1/2} ||phi||²)
//!
//! towards its ceiling 1 (Cauchy-Schwarz caps it there):
//!
//! - power-law: separable |x_i|^{-sigma} spikes for diagonal maps, with
//!   per-axis ratio min(|alpha|, 1/|alpha|)^{1/2 - sigma};
//! - expansive-geometric: a geometric staircase sum_j sigma^j chi_{E_j}
//!   over the preimage shells of a small ball, ratio sigma |det|^{-1/2};
//! - canonical shear / rotation blocks (|det| = 1): k+1 disjoint iterated
//!   images of a tiny ball, ratio k/(k+1);
//! - composition through a similarity transform, multiplying per-block
//!   ratios.
//!
//! Every constructor returns the witness together with an overlap report
//! that pairs the closed-form ratio with an independent measurement
//! (graded quadrature or Monte Carlo with a deterministic seed).

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::map::LinearMap;
use crate::quad::{graded_lower_singularity, unit_ball_volume};
use crate::rng::Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// A scalar test function supported in the unit ball, integrable enough
/// to normalize. Implementors provide their own accurate self-integrals;
/// grid quadrature is only a fallback for bounded candidates.
pub trait Candidate {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    /// ||phi||² computed by the candidate's own accurate route.
    fn l2_norm_sq(&self) -> f64;
    /// Radius of a ball containing the support (at most 1).
    fn support_radius(&self) -> f64 {
        1.0
    }
    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// ∫|∇phi|², when the candidate carries gradient data.
    fn gradient_l2_sq(&self) -> Option<f64> {
        None
    }
    /// ∫phi(x) phi(Ax) dx by the candidate's own accurate route, when one
    /// exists for this map.
    fn overlap_linear(&self, _map: &LinearMap) -> Option<f64> {
        None
    }
    fn label(&self) -> String;
}

/// Indicator of an axis-aligned box inside the unit ball.
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxIndicator {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter("box corners must share a dimension".into()));
        }
        let mut corner_sq = 0.0;
        for (a, b) in lo.iter().zip(hi.iter()) {
            if !(a < b) {
                return Err(Error::InvalidParameter("box must have positive extent".into()));
            }
            corner_sq += a.abs().max(b.abs()).powi(2);
        }
        if corner_sq > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter("box escapes the unit ball".into()));
        }
        Ok(BoxIndicator { lo, hi })
    }
}

impl Candidate for BoxIndicator {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        for i in 0..self.lo.len() {
            if x[i] <= self.lo[i] || x[i] >= self.hi[i] {
                return 0.0;
            }
        }
        1.0
    }

    fn l2_norm_sq(&self) -> f64 {
        self.lo.iter().zip(self.hi.iter()).map(|(a, b)| b - a).product()
    }

    fn overlap_linear(&self, map: &LinearMap) -> Option<f64> {
        // Closed form for diagonal maps: per-axis interval overlap.
        let m = map.matrix();
        let d = self.dim();
        if m.size() != d {
            return None;
        }
        for i in 0..d {
            for j in 0..d {
                if i != j && m.get(i, j) != 0.0 {
                    return None;
                }
            }
        }
        let mut vol = 1.0;
        for i in 0..d {
            let alpha = m.get(i, i);
            let (ia, ib) = if alpha > 0.0 {
                (self.lo[i] / alpha, self.hi[i] / alpha)
            } else {
                (self.hi[i] / alpha, self.lo[i] / alpha)
            };
            let lo = self.lo[i].max(ia);
            let hi = self.hi[i].min(ib);
            if hi <= lo {
                return Some(0.0);
            }
            vol *= hi - lo;
        }
        Some(vol)
    }

    fn label(&self) -> String {
        "box-indicator".into()
    }
}

/// The bump (1 - |x|²)₊: Lipschitz, with an explicit gradient, suited to
/// the finite-radius bound.
#[derive(Debug, Clone)]
pub struct QuadraticBump {
    dim: usize,
}

impl QuadraticBump {
    pub fn new(dim: usize) -> Self {
        QuadraticBump { dim }
    }
}

impl Candidate for QuadraticBump {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 >= 1.0 {
            0.0
        } else {
            1.0 - r2
        }
    }

    fn l2_norm_sq(&self) -> f64 {
        // area(S^{d-1}) ∫ (1-r²)² r^{d-1} dr.
        let d = self.dim as f64;
        let area = crate::quad::unit_sphere_area(self.dim);
        area * (1.0 / d - 2.0 / (d + 2.0) + 1.0 / (d + 4.0))
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if r2 >= 1.0 {
            Some(vec![0.0; self.dim])
        } else {
            Some(x.iter().map(|v| -2.0 * v).collect())
        }
    }

    fn gradient_l2_sq(&self) -> Option<f64> {
        // ∫ 4 r² over B_1 = 4 area / (d + 2).
        let area = crate::quad::unit_sphere_area(self.dim);
        Some(4.0 * area / (self.dim as f64 + 2.0))
    }

    fn label(&self) -> String {
        "quadratic-bump".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMethod {
    ClosedForm,
    GridQuadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize)]
pub struct OverlapReport {
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub analytic_ratio: f64,
    pub measured_ratio: f64,
    pub abs_error: f64,
    pub method: EstimationMethod,
    pub stderr: Option<f64>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
}

/// Graded-mesh quadrature levels deep enough to resolve |x|^{-2 sigma}
/// tails for sigma up to 0.49 and change.
const GRADED_LEVELS: usize = 1200;

#[derive(Debug, Clone)]
struct PowerLawData {
    alphas: Vec<f64>,
    sigma: f64,
    eps: f64,
    l2: f64,
}

#[derive(Debug, Clone)]
struct GeometricData {
    /// Expansive generator: the map matrix itself or its inverse.
    g: Mat,
    g_inv: Mat,
    /// Matrix of the original map a.
    a: Mat,
    sigma: f64,
    j_max: u32,
    r_ball: f64,
    escape_sq: f64,
    l2_estimate: f64,
    level_measures: Vec<f64>,
    level_stderrs: Vec<f64>,
}

impl GeometricData {
    /// Last forward-orbit index landing in the seed ball, None when the
    /// point misses the support (or sits beyond the truncation level).
    /// Escape is certified once an iterate leaves the ball of radius
    /// K r = 1 (no later iterate can re-enter B_r).
    fn locate(&self, x: &[f64]) -> Option<u32> {
        let r2 = self.r_ball * self.r_ball;
        let mut z = x.to_vec();
        let mut tmp = vec![0.0; z.len()];
        let mut last_in: Option<u32> = None;
        let horizon = self.j_max as usize + 64;
        for i in 0..=horizon {
            let n2: f64 = z.iter().map(|v| v * v).sum();
            if n2 <= r2 {
                last_in = Some(i as u32);
            } else if n2 > self.escape_sq {
                break;
            }
            if i < horizon {
                self.g.apply(&z, &mut tmp);
                std::mem::swap(&mut z, &mut tmp);
            }
        }
        match last_in {
            Some(l) if l <= self.j_max => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct IteratedBallData {
    matrix: Mat,
    powers_inv: Vec<Mat>,
    base: Vec<f64>,
    rho: f64,
    scale: f64,
    k: usize,
    l2: f64,
}

impl IteratedBallData {
    /// Which images contain x, and how many (disjointness means at most one).
    fn membership(&self, x: &[f64]) -> (Option<usize>, usize) {
        let d = self.matrix.size();
        let y: Vec<f64> = x.iter().map(|v| v / self.scale).collect();
        let mut w = vec![0.0; d];
        let mut found = None;
        let mut count = 0;
        for (j, inv) in self.powers_inv.iter().enumerate() {
            inv.apply(&y, &mut w);
            let mut n2 = 0.0;
            for (wi, bi) in w.iter().zip(self.base.iter()) {
                let u = wi - bi;
                n2 += u * u;
            }
            if n2 <= self.rho * self.rho {
                count += 1;
                if found.is_none() {
                    found = Some(j);
                }
            }
        }
        (found, count)
    }
}

#[derive(Debug, Clone)]
struct ComposedData {
    transform_inv: Mat,
    mu: f64,
    coeff: f64,
    blocks: Vec<WitnessFunction>,
    dims: Vec<usize>,
}

#[derive(Debug, Clone)]
enum WitnessKind {
    PowerLaw(PowerLawData),
    Geometric(GeometricData),
    Shear(IteratedBallData),
    Rotation(IteratedBallData),
    Composed(ComposedData),
}

/// A concrete member of one of the witness families, usable as a
/// [`Candidate`] for the bound machinery.
#[derive(Debug, Clone)]
pub struct WitnessFunction {
    kind: WitnessKind,
    dim: usize,
}

impl WitnessFunction {
    /// Per-level measured |E_j| together with standard errors, for the
    /// geometric family.
    pub fn level_measures(&self) -> Option<(&[f64], &[f64])> {
        match &self.kind {
            WitnessKind::Geometric(g) => Some((&g.level_measures, &g.level_stderrs)),
            _ => None,
        }
    }

    /// How many of the iterated-ball supports contain x (0 or 1 when the
    /// construction is disjoint). 0/1 membership for the other families.
    pub fn multiplicity(&self, x: &[f64]) -> usize {
        match &self.kind {
            WitnessKind::Shear(d) | WitnessKind::Rotation(d) => d.membership(x).1,
            _ => usize::from(self.eval(x) != 0.0),
        }
    }
}

impl Candidate for WitnessFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            WitnessKind::PowerLaw(p) => {
                let mut prod = 1.0;
                for i in 0..self.dim {
                    let xi = x[i];
                    let inside = if p.alphas[i] < 0.0 {
                        xi != 0.0 && xi.abs() < p.eps
                    } else {
                        xi > 0.0 && xi < p.eps
                    };
                    if !inside {
                        return 0.0;
                    }
                    prod *= xi.abs().powf(-p.sigma);
                }
                prod
            }
            WitnessKind::Geometric(g) => match g.locate(x) {
                Some(l) => g.sigma.powi(l as i32),
                None => 0.0,
            },
            WitnessKind::Shear(d) | WitnessKind::Rotation(d) => {
                if d.membership(x).0.is_some() {
                    1.0
                } else {
                    0.0
                }
            }
            WitnessKind::Composed(c) => {
                let mut y = vec![0.0; self.dim];
                c.transform_inv.apply(x, &mut y);
                for v in y.iter_mut() {
                    *v /= c.mu;
                }
                let mut prod = c.coeff;
                let mut off = 0;
                for (b, &bd) in c.blocks.iter().zip(c.dims.iter()) {
                    prod *= b.eval(&y[off..off + bd]);
                    if prod == 0.0 {
                        return 0.0;
                    }
                    off += bd;
                }
                prod
            }
        }
    }

    fn l2_norm_sq(&self) -> f64 {
        match &self.kind {
            WitnessKind::PowerLaw(p) => p.l2,
            WitnessKind::Geometric(g) => g.l2_estimate,
            WitnessKind::Shear(d) | WitnessKind::Rotation(d) => d.l2,
            WitnessKind::Composed(_) => 1.0,
        }
    }

    fn overlap_linear(&self, map: &LinearMap) -> Option<f64> {
        match &self.kind {
            WitnessKind::PowerLaw(p) => {
                let m = map.matrix();
                if m.size() != self.dim {
                    return None;
                }
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        if i != j && m.get(i, j) != 0.0 {
                            return None;
                        }
                    }
                }
                let mut prod = 1.0;
                for i in 0..self.dim {
                    let beta = m.get(i, i);
                    prod *= power_law_axis_overlap(p.alphas[i], beta, p.sigma, p.eps);
                    if prod == 0.0 {
                        return Some(0.0);
                    }
                }
                Some(prod)
            }
            _ => None,
        }
    }

    fn label(&self) -> String {
        match &self.kind {
            WitnessKind::PowerLaw(_) => "power-law".into(),
            WitnessKind::Geometric(_) => "expansive-geometric".into(),
            WitnessKind::Shear(_) => "jordan-shear".into(),
            WitnessKind::Rotation(_) => "jordan-rotation".into(),
            WitnessKind::Composed(_) => "composed".into(),
        }
    }
}

/// ∫ phi_i(x) phi_i(beta x) dx on one axis of a power-law witness built
/// with diagonal entry `alpha` (which fixes the support side), evaluated
/// against diagonal entry `beta`, by graded quadrature.
fn power_law_axis_overlap(alpha: f64, beta: f64, sigma: f64, eps: f64) -> f64 {
    let mirrored = alpha < 0.0;
    if beta < 0.0 && !mirrored {
        // beta x leaves the one-sided support entirely.
        return 0.0;
    }
    let cut = eps.min(eps / beta.abs());
    let f = |x: f64| x.powf(-sigma) * (beta * x).abs().powf(-sigma);
    let one_sided = graded_lower_singularity(f, cut, GRADED_LEVELS);
    if mirrored {
        2.0 * one_sided
    } else {
        one_sided
    }
}

fn power_law_axis_l2(alpha: f64, sigma: f64, eps: f64) -> f64 {
    let one_sided = graded_lower_singularity(|x: f64| x.powf(-2.0 * sigma), eps, GRADED_LEVELS);
    if alpha < 0.0 {
        2.0 * one_sided
    } else {
        one_sided
    }
}

/// Separable power-law witness for a diagonal map diag(alphas): the
/// product over axes of |x_i|^{-sigma} on (0, eps) (mirrored to
/// (-eps, eps) when the diagonal entry is negative, an extension of the
/// one-sided construction). The measured ratio integrates each axis on a
/// graded mesh; the analytic per-axis ratio is
/// min(|alpha|, 1/|alpha|)^{1/2 - sigma}.
pub fn power_law_witness(
    alphas: &[f64],
    sigma: f64,
    eps: f64,
) -> Result<(WitnessFunction, OverlapReport)> {
    let d = alphas.len();
    if d == 0 {
        return Err(Error::InvalidParameter("need at least one diagonal entry".into()));
    }
    if !(sigma > 0.0 && sigma < 0.5) {
        return Err(Error::InvalidParameter(
            "sigma must lie in (0, 1/2); at 1/2 the spike is no longer square-integrable".into(),
        ));
    }
    let eps_cap = 1.0 / (d as f64).sqrt();
    if !(eps > 0.0 && eps <= eps_cap + 1e-15) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie in (0, {eps_cap:.6}] so the product stays in the unit ball"
        )));
    }
    if alphas.iter().any(|&a| a == 0.0 || !a.is_finite()) {
        return Err(Error::InvalidParameter("diagonal entries must be nonzero".into()));
    }

    let mut measured = 1.0;
    let mut analytic = 1.0;
    let mut l2 = 1.0;
    let mut mirrored = 0u32;
    for &alpha in alphas {
        let den = power_law_axis_l2(alpha, sigma, eps);
        let num = power_law_axis_overlap(alpha, alpha, sigma, eps);
        measured *= num / (den / alpha.abs().sqrt());
        let aa = alpha.abs();
        analytic *= aa.min(1.0 / aa).powf(0.5 - sigma);
        l2 *= den;
        if alpha < 0.0 {
            mirrored += 1;
        }
    }

    let mut params = BTreeMap::new();
    params.insert("sigma".into(), sigma);
    params.insert("eps".into(), eps);
    params.insert("dimension".into(), d as f64);
    params.insert("mirrored_axes".into(), mirrored as f64);
    for (i, &a) in alphas.iter().enumerate() {
        params.insert(format!("alpha{i}"), a);
    }
    let report = OverlapReport {
        family: "power-law".into(),
        params,
        analytic_ratio: analytic,
        measured_ratio: measured,
        abs_error: (measured - analytic).abs(),
        method: EstimationMethod::GridQuadrature,
        stderr: None,
        samples: None,
        seed: None,
    };
    let w = WitnessFunction {
        kind: WitnessKind::PowerLaw(PowerLawData { alphas: alphas.to_vec(), sigma, eps, l2 }),
        dim: d,
    };
    Ok((w, report))
}

/// max_{j >= 0} ||m^{-j}||_F when the inverse powers decay (i.e. m is
/// expansive); None otherwise.
fn max_inverse_power_norm(m: &Mat) -> Option<f64> {
    let inv = m.inverse().ok()?;
    let mut p = Mat::identity(m.size());
    let mut best = p.frobenius_norm();
    for _ in 0..4096 {
        p = p.mul(&inv);
        let n = p.frobenius_norm();
        best = best.max(n);
        if n < 1e-9 {
            return Some(best);
        }
    }
    None
}

/// Geometric staircase witness phi = sum_j sigma^j chi_{E_j} where
/// E_j = g^{-j}(F) \ g^{-j-1}(F), F the union of all backward images of a
/// seed ball B. Built for expansive maps; for a co-expansive map (inverse
/// expansive) the construction runs on a^{-1} and the same ratio
/// sigma |det g|^{-1/2} applies. Measurement is per-level Monte Carlo:
/// level j samples g^{-j}(box) uniformly, classifies by forward
/// iteration, and weighs by |det g|^{-j}.
pub fn expansive_geometric_witness(
    map: &LinearMap,
    sigma: f64,
    samples: u64,
    seed: u64,
    j_cap: Option<u32>,
) -> Result<(WitnessFunction, OverlapReport)> {
    let d = map.dim();
    let a = map.matrix().clone();
    let (g, co_expansive, k_norm) = if let Some(k) = max_inverse_power_norm(&a) {
        (a.clone(), false, k)
    } else if let Some(k) = max_inverse_power_norm(map.inverse_matrix()) {
        (map.inverse_matrix().clone(), true, k)
    } else {
        return Err(Error::NonExpansive);
    };
    let det_g = g.det().abs();
    debug_assert!(det_g > 1.0);
    let det_a = a.det().abs();
    if !(sigma > 0.0 && sigma < det_a.sqrt()) {
        return Err(Error::InvalidParameter(format!(
            "sigma must lie in (0, |det A|^(1/2)) = (0, {:.6})",
            det_a.sqrt()
        )));
    }
    // The staircase weight per shell. In the co-expansive orientation the
    // user-facing sigma is rescaled so that the reported ratio is
    // sigma |det A|^{-1/2} in both cases.
    let sigma_c = if co_expansive { sigma / det_a } else { sigma };
    let g_inv = g.inverse()?;
    let r_ball = 1.0 / k_norm;
    let escape_sq = (k_norm * r_ball * (1.0 + 1e-9)).powi(2);

    // Truncation: the level-j share of the L² mass decays like
    // q^j with q = sigma_c²/|det g|; cut once the tail share is below 1e-8.
    let q = sigma_c * sigma_c / det_g;
    let mut j_max = ((1e-8f64).ln() / q.ln()).ceil() as u32;
    j_max = j_max.clamp(1, 1000);
    if let Some(cap) = j_cap {
        j_max = j_max.min(cap.max(1));
    }

    let mut data = GeometricData {
        g,
        g_inv,
        a,
        sigma: sigma_c,
        j_max,
        r_ball,
        escape_sq,
        l2_estimate: 0.0,
        level_measures: Vec::new(),
        level_stderrs: Vec::new(),
    };

    // Per-level Monte Carlo over Y = g^{-j} U, U uniform in [-1, 1]^d
    // (F sits inside the unit ball by the choice of r_ball).
    let levels = data.j_max as usize + 1;
    let per_level = ((samples as usize) / levels).max(32);
    let vol0 = 2.0f64.powi(d as i32);
    let mut pow_inv = Mat::identity(d);
    let mut det_pow = 1.0;

    // Accumulators for N = ∫ phi phi∘a and D = ∫ phi², level-standardized.
    let mut n_hat = 0.0;
    let mut d_hat = 0.0;
    let mut var_n = 0.0;
    let mut var_d = 0.0;
    let mut cov_nd = 0.0;
    let mut measures = Vec::with_capacity(levels);
    let mut measure_errs = Vec::with_capacity(levels);

    let mut u = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut z = vec![0.0; d];
    for j in 0..levels {
        let mut rng = Rng::shard(seed, j as u64);
        let mut sum_fn = 0.0;
        let mut sum_fd = 0.0;
        let mut sum_fn2 = 0.0;
        let mut sum_fd2 = 0.0;
        let mut sum_fnd = 0.0;
        for _ in 0..per_level {
            for v in u.iter_mut() {
                *v = rng.uniform(-1.0, 1.0);
            }
            pow_inv.apply(&u, &mut y);
            let f_d;
            let f_n;
            if data.locate(&y) == Some(j as u32) {
                f_d = 1.0;
                // phi(a(y)) relative to sigma^{j-1}: a shifts the level to
                // j-1 (expansive) or j+1 (co-expansive), but the honest
                // classification of a(y) decides.
                data.a.apply(&y, &mut z);
                f_n = match data.locate(&z) {
                    Some(l) => data.sigma.powi(l as i32 - (j as i32 - 1)),
                    None => 0.0,
                };
            } else {
                f_d = 0.0;
                f_n = 0.0;
            }
            sum_fd += f_d;
            sum_fn += f_n;
            sum_fd2 += f_d * f_d;
            sum_fn2 += f_n * f_n;
            sum_fnd += f_n * f_d;
        }
        let m = per_level as f64;
        let mean_fd = sum_fd / m;
        let mean_fn = sum_fn / m;
        let v_fd = (sum_fd2 / m - mean_fd * mean_fd).max(0.0) / m;
        let v_fn = (sum_fn2 / m - mean_fn * mean_fn).max(0.0) / m;
        let c_nd = (sum_fnd / m - mean_fn * mean_fd) / m;

        // Weights: vol_j sigma_c^{2j} = vol0 q^j for D, vol0 q^j / sigma_c for N.
        let w_d = vol0 * q.powi(j as i32);
        let w_n = w_d / sigma_c;
        d_hat += w_d * mean_fd;
        n_hat += w_n * mean_fn;
        var_d += w_d * w_d * v_fd;
        var_n += w_n * w_n * v_fn;
        cov_nd += w_n * w_d * c_nd;

        let vol_j = vol0 * det_pow;
        measures.push(vol_j * mean_fd);
        measure_errs.push(vol_j * v_fd.sqrt());

        pow_inv = pow_inv.mul(&data.g_inv);
        det_pow /= det_g;
        if pow_inv.max_abs() < 1e-280 {
            // Deeper levels underflow; their mass share is below q^j already.
            break;
        }
    }

    // ratio = N / (c D) with c = |det A|^{-1/2}; in both orientations the
    // expected value is sigma |det A|^{-1/2}.
    let c = 1.0 / det_a.sqrt();
    let ratio = n_hat / (c * d_hat);
    // Delta method for the ratio of correlated sums.
    let dn = 1.0 / (c * d_hat);
    let dd = -n_hat / (c * d_hat * d_hat);
    let var_ratio = (dn * dn * var_n + dd * dd * var_d + 2.0 * dn * dd * cov_nd).max(0.0);
    let stderr = var_ratio.sqrt();

    let analytic = sigma / det_a.sqrt();
    data.l2_estimate = d_hat;
    data.level_measures = measures;
    data.level_stderrs = measure_errs;

    let mut params = BTreeMap::new();
    params.insert("sigma".into(), sigma);
    params.insert("det_abs".into(), det_a);
    params.insert("j_max".into(), data.j_max as f64);
    params.insert("co_expansive".into(), f64::from(co_expansive));
    let total_samples = (per_level * levels) as u64;
    let report = OverlapReport {
        family: "expansive-geometric".into(),
        params,
        analytic_ratio: analytic,
        measured_ratio: ratio,
        abs_error: (ratio - analytic).abs(),
        method: EstimationMethod::MonteCarlo,
        stderr: Some(stderr),
        samples: Some(total_samples),
        seed: Some(seed),
    };
    Ok((WitnessFunction { kind: WitnessKind::Geometric(data), dim: d }, report))
}

fn frobenius_powers(m: &Mat, k: usize) -> (Vec<Mat>, Vec<f64>) {
    let mut powers = Vec::with_capacity(k + 1);
    let mut norms = Vec::with_capacity(k + 1);
    let mut p = Mat::identity(m.size());
    for _ in 0..=k {
        norms.push(p.frobenius_norm());
        powers.push(p.clone());
        p = p.mul(m);
    }
    (powers, norms)
}

fn center_list(powers: &[Mat], base: &[f64]) -> Vec<Vec<f64>> {
    powers.iter().map(|p| p.apply_vec(base)).collect()
}

fn min_pair_distance(centers: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d2: f64 = centers[i]
                .iter()
                .zip(centers[j].iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            best = best.min(d2.sqrt());
        }
    }
    best
}

/// Shared Monte Carlo measurement for the iterated-ball families: sample
/// each image uniformly, push forward through a, and test membership.
/// The image measures are all equal (the block determinant has modulus
/// one), so the overlap ratio is the average hit fraction.
fn measure_iterated_ball(
    data: &IteratedBallData,
    powers: &[Mat],
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = data.matrix.size();
    let k = data.k;
    let per_level = ((samples as usize) / (k + 1)).max(16);
    let mut violations = 0usize;
    let mut ratio_sum = 0.0;
    let mut var_sum = 0.0;
    let mut w = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    for j in 0..=k {
        let mut rng = Rng::shard(seed, j as u64);
        let mut hits = 0usize;
        for _ in 0..per_level {
            rng.in_unit_ball(&mut w);
            for (wi, bi) in w.iter_mut().zip(data.base.iter()) {
                *wi = *wi * data.rho + bi;
            }
            powers[j].apply(&w, &mut x);
            for v in x.iter_mut() {
                *v *= data.scale;
            }
            let (own, mult) = data.membership(&x);
            if own != Some(j) || mult != 1 {
                violations += 1;
                continue;
            }
            data.matrix.apply(&x, &mut z);
            let (hit, mult_z) = data.membership(&z);
            if mult_z > 1 {
                violations += 1;
                continue;
            }
            if hit.is_some() {
                hits += 1;
            }
        }
        let p = hits as f64 / per_level as f64;
        ratio_sum += p;
        var_sum += p * (1.0 - p) / per_level as f64;
    }
    if violations > 0 {
        return Err(Error::InvalidParameter(format!(
            "iterated-ball images overlap on {violations} sampled points"
        )));
    }
    let kp1 = (k + 1) as f64;
    Ok((ratio_sum / kp1, var_sum.sqrt() / kp1))
}

fn iterated_ball_report(
    family: &str,
    params: BTreeMap<String, f64>,
    k: usize,
    measured: f64,
    stderr: f64,
    samples: u64,
    seed: u64,
) -> OverlapReport {
    let analytic = k as f64 / (k as f64 + 1.0);
    OverlapReport {
        family: family.into(),
        params,
        analytic_ratio: analytic,
        measured_ratio: measured,
        abs_error: (measured - analytic).abs(),
        method: EstimationMethod::MonteCarlo,
        stderr: Some(stderr),
        samples: Some(samples),
        seed: Some(seed),
    }
}

/// Witness for a single shear-type canonical block (eigenvalue +-1, ones
/// above the diagonal): the union of the k+1 iterated images of the tiny
/// ball 2^{-k} B_{1/4}(p) with p = (1, 1, 0, ...). The images are
/// pairwise disjoint (iterates of p separate by at least 1) and the
/// overlap ratio is exactly k/(k+1).
pub fn jordan_shear_witness(
    k: usize,
    lambda: f64,
    dim: usize,
    samples: u64,
    seed: u64,
) -> Result<(WitnessFunction, OverlapReport)> {
    if k < 5 {
        return Err(Error::InvalidParameter(
            "the shear construction needs k >= 5 to stay inside the unit ball".into(),
        ));
    }
    if dim < 2 {
        return Err(Error::InvalidParameter("shear blocks need dimension >= 2".into()));
    }
    if lambda != 1.0 && lambda != -1.0 {
        return Err(Error::InvalidParameter("shear eigenvalue must be +1 or -1".into()));
    }
    let block = crate::map::JordanBlock::Real { eigenvalue: lambda, size: dim };
    let a = block.assemble()?;
    let (powers, norms) = frobenius_powers(&a, k);
    let mut base = vec![0.0; dim];
    base[0] = 1.0;
    base[1] = 1.0;
    let centers = center_list(&powers, &base);
    // The construction guarantees unit separation of the centers.
    let dmin = min_pair_distance(&centers);
    if dmin < 1.0 - 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "iterates of the base point come within {dmin} of each other"
        )));
    }
    let rho = 0.25;
    let scale = 2.0f64.powi(-(k as i32));
    support_inside_unit_ball(&centers, &norms, rho, scale)?;

    let inv = a.inverse()?;
    let (powers_inv, _) = frobenius_powers(&inv, k);
    let l2 = (k as f64 + 1.0) * (scale * rho).powi(dim as i32) * unit_ball_volume(dim);
    let data = IteratedBallData { matrix: a, powers_inv, base, rho, scale, k, l2 };
    let (measured, stderr) = measure_iterated_ball(&data, &powers, samples, seed)?;

    let mut params = BTreeMap::new();
    params.insert("k".into(), k as f64);
    params.insert("lambda".into(), lambda);
    params.insert("dimension".into(), dim as f64);
    params.insert("ball_radius".into(), rho);
    let report = iterated_ball_report("jordan-shear", params, k, measured, stderr, samples, seed);
    Ok((WitnessFunction { kind: WitnessKind::Shear(data), dim }, report))
}

/// Witness for a rotation-shear canonical block (2x2 rotation cells with
/// identity cells above). The base point is q = (1, 1, 1, 1, 0, ...); the
/// ball radius starts at 1/4 and is halved until the iterated images are
/// certifiably disjoint. A collision of the iterates themselves (which no
/// radius can separate) is reported as an error.
pub fn jordan_rotation_witness(
    k: usize,
    theta: f64,
    dim: usize,
    samples: u64,
    seed: u64,
) -> Result<(WitnessFunction, OverlapReport)> {
    if k < 7 {
        return Err(Error::InvalidParameter(
            "the rotation construction needs k >= 7 to stay inside the unit ball".into(),
        ));
    }
    if dim < 4 || dim % 2 != 0 {
        return Err(Error::InvalidParameter(
            "rotation blocks need an even dimension >= 4".into(),
        ));
    }
    let block = crate::map::JordanBlock::Rotation { alpha: theta.cos(), beta: theta.sin(), size: dim };
    let a = block.assemble()?;
    let (powers, norms) = frobenius_powers(&a, k);
    let mut base = vec![0.0; dim];
    for b in base.iter_mut().take(4) {
        *b = 1.0;
    }
    let centers = center_list(&powers, &base);
    let dmin = min_pair_distance(&centers);
    if dmin < 1e-9 {
        return Err(Error::IterateCollision);
    }
    let mut rho = 0.25;
    let mut ok = false;
    for _ in 0..200 {
        ok = true;
        'pairs: for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let dist: f64 = centers[i]
                    .iter()
                    .zip(centers[j].iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if dist <= rho * (norms[i] + norms[j]) {
                    ok = false;
                    break 'pairs;
                }
            }
        }
        if ok {
            break;
        }
        rho *= 0.5;
    }
    if !ok {
        return Err(Error::IterateCollision);
    }
    let scale = 2.0f64.powi(-(k as i32));
    support_inside_unit_ball(&centers, &norms, rho, scale)?;

    let inv = a.inverse()?;
    let (powers_inv, _) = frobenius_powers(&inv, k);
    let l2 = (k as f64 + 1.0) * (scale * rho).powi(dim as i32) * unit_ball_volume(dim);
    let data = IteratedBallData { matrix: a, powers_inv, base, rho, scale, k, l2 };
    let (measured, stderr) = measure_iterated_ball(&data, &powers, samples, seed)?;

    let mut params = BTreeMap::new();
    params.insert("k".into(), k as f64);
    params.insert("theta".into(), theta);
    params.insert("dimension".into(), dim as f64);
    params.insert("ball_radius".into(), rho);
    let report =
        iterated_ball_report("jordan-rotation", params, k, measured, stderr, samples, seed);
    Ok((WitnessFunction { kind: WitnessKind::Rotation(data), dim }, report))
}

/// Every image scale*(A^j base + A^j w), |w| <= rho, stays inside the
/// unit ball: |scale A^j(base + w)| <= scale (|c_j| + ||A^j||_F rho).
fn support_inside_unit_ball(centers: &[Vec<f64>], norms: &[f64], rho: f64, scale: f64) -> Result<()> {
    for (c, n) in centers.iter().zip(norms.iter()) {
        let cn: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale * (cn + n * rho) >= 1.0 {
            return Err(Error::InvalidParameter(
                "iterated-ball support escapes the unit ball; increase k".into(),
            ));
        }
    }
    Ok(())
}

/// Composition through a similarity transform A = C J C^{-1}: per-block
/// witnesses on the canonical blocks of J are multiplied, pulled back
/// through C and rescaled to keep unit norm and support inside B_1. The
/// overlap ratio of the composition is the product of the per-block
/// ratios, so the report multiplies the block reports.
pub fn composed_witness(
    transform: &Mat,
    blocks: Vec<(WitnessFunction, OverlapReport)>,
) -> Result<(WitnessFunction, OverlapReport)> {
    if blocks.is_empty() {
        return Err(Error::InvalidParameter("need at least one block witness".into()));
    }
    let d: usize = blocks.iter().map(|(w, _)| w.dim()).sum();
    if transform.size() != d {
        return Err(Error::InvalidMap(format!(
            "transform is {}x{} but block dimensions sum to {d}",
            transform.size(),
            transform.size()
        )));
    }
    let transform_inv = transform.inverse()?;
    let det_c = transform.det().abs();
    let n_blocks = blocks.len() as f64;
    // Scaling mu C maps the product of block supports into B_1:
    // |mu C w| <= mu ||C||_F sqrt(n_blocks) <= 1.
    let mu = 1.0 / (transform.frobenius_norm() * n_blocks.sqrt());
    let mut norm_prod = 1.0;
    for (w, _) in &blocks {
        norm_prod *= w.l2_norm_sq().sqrt();
    }
    if !(norm_prod > 1e-300) {
        return Err(Error::ZeroVector);
    }
    let coeff = mu.powf(-(d as f64) / 2.0) / (det_c.sqrt() * norm_prod);

    let mut analytic = 1.0;
    let mut measured = 1.0;
    let mut rel_var = 0.0;
    let mut method = EstimationMethod::ClosedForm;
    let mut samples_total: Option<u64> = None;
    let mut params = BTreeMap::new();
    params.insert("blocks".into(), n_blocks);
    for (i, (_, r)) in blocks.iter().enumerate() {
        analytic *= r.analytic_ratio;
        measured *= r.measured_ratio;
        if let Some(s) = r.stderr {
            if r.measured_ratio != 0.0 {
                rel_var += (s / r.measured_ratio).powi(2);
            }
        }
        match r.method {
            EstimationMethod::MonteCarlo => method = EstimationMethod::MonteCarlo,
            EstimationMethod::GridQuadrature if method == EstimationMethod::ClosedForm => {
                method = EstimationMethod::GridQuadrature
            }
            _ => {}
        }
        if let Some(s) = r.samples {
            samples_total = Some(samples_total.unwrap_or(0) + s);
        }
        params.insert(format!("block{i}_ratio"), r.measured_ratio);
    }
    let stderr = if rel_var > 0.0 { Some(measured.abs() * rel_var.sqrt()) } else { None };

    let dims: Vec<usize> = blocks.iter().map(|(w, _)| w.dim()).collect();
    let data = ComposedData {
        transform_inv,
        mu,
        coeff,
        blocks: blocks.into_iter().map(|(w, _)| w).collect(),
        dims,
    };
    let report = OverlapReport {
        family: "composed".into(),
        params,
        analytic_ratio: analytic,
        measured_ratio: measured,
        abs_error: (measured - analytic).abs(),
        method,
        stderr,
        samples: samples_total,
        seed: None,
    };
    Ok((WitnessFunction { kind: WitnessKind::Composed(data), dim: d }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_known_ratios() {
        // alpha = 2: ratio 2^{sigma - 1/2}.
        let (_, r) = power_law_witness(&[2.0], 0.25, 1.0).unwrap();
        assert!((r.analytic_ratio - 0.840_896_415_253_714_5).abs() < 1e-12);
        assert!((r.measured_ratio - r.analytic_ratio).abs() < 1e-4);
        let (_, r) = power_law_witness(&[2.0], 0.49, 1.0).unwrap();
        assert!((r.analytic_ratio - 2.0f64.powf(-0.01)).abs() < 1e-12);
        assert!((r.measured_ratio - r.analytic_ratio).abs() < 1e-4);
    }

    #[test]
    fn power_law_identity_axis_gives_one() {
        let (_, r) = power_law_witness(&[1.0], 0.3, 1.0).unwrap();
        assert!((r.analytic_ratio - 1.0).abs() < 1e-12);
        assert!((r.measured_ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn power_law_contracting_axis_mirrors() {
        // alpha = 1/2 gives the same ratio as alpha = 2.
        let (_, r1) = power_law_witness(&[0.5], 0.25, 1.0).unwrap();
        let (_, r2) = power_law_witness(&[2.0], 0.25, 1.0).unwrap();
        assert!((r1.analytic_ratio - r2.analytic_ratio).abs() < 1e-12);
        assert!((r1.measured_ratio - r2.measured_ratio).abs() < 1e-6);
    }

    #[test]
    fn power_law_negative_axis_uses_modulus() {
        let (w, r) = power_law_witness(&[-2.0], 0.25, 1.0).unwrap();
        assert!((r.analytic_ratio - 0.840_896_415_253_714_5).abs() < 1e-12);
        assert!((r.measured_ratio - r.analytic_ratio).abs() < 1e-4);
        // Mirrored support: the witness lives on both sides of 0.
        assert!(w.eval(&[-0.5]) > 0.0);
        assert!(w.eval(&[0.5]) > 0.0);
    }

    #[test]
    fn power_law_parameter_validation() {
        assert!(power_law_witness(&[2.0], 0.5, 1.0).is_err());
        assert!(power_law_witness(&[2.0], 0.0, 1.0).is_err());
        assert!(power_law_witness(&[2.0], 0.25, 0.0).is_err());
        // eps too large for the product support in d = 2.
        assert!(power_law_witness(&[2.0, 2.0], 0.25, 1.0).is_err());
        assert!(power_law_witness(&[0.0], 0.25, 1.0).is_err());
    }

    #[test]
    fn power_law_increasing_in_sigma() {
        let mut prev = 0.0;
        for sigma in [0.25, 0.40, 0.49] {
            let (_, r) = power_law_witness(&[2.0], sigma, 1.0).unwrap();
            assert!(r.measured_ratio > prev);
            prev = r.measured_ratio;
        }
        assert!(prev > 0.95);
    }

    #[test]
    fn power_law_separable_2d() {
        let (_, r) = power_law_witness(&[2.0, 3.0], 0.3, 0.7).unwrap();
        let expect = 2.0f64.powf(0.3 - 0.5) * 3.0f64.powf(0.3 - 0.5);
        assert!((r.analytic_ratio - expect).abs() < 1e-12);
        assert!((r.measured_ratio - expect).abs() < 1e-4);
    }

    #[test]
    fn geometric_known_ratios() {
        let map = LinearMap::scaling(1, 2.0).unwrap();
        let (_, r) = expansive_geometric_witness(&map, 1.0, 200_000, 7, None).unwrap();
        let expect = 1.0 / 2.0f64.sqrt();
        assert!((r.analytic_ratio - expect).abs() < 1e-12);
        assert!(
            (r.measured_ratio - expect).abs() <= 3.0 * r.stderr.unwrap().max(1e-4),
            "measured {} vs {expect} (stderr {:?})",
            r.measured_ratio,
            r.stderr
        );
    }

    #[test]
    fn geometric_high_sigma_ratio() {
        let map = LinearMap::scaling(1, 2.0).unwrap();
        let (_, r) = expansive_geometric_witness(&map, 1.4, 1_000_000, 42, None).unwrap();
        let expect = 1.4 / 2.0f64.sqrt();
        assert!((r.analytic_ratio - expect).abs() < 1e-12);
        assert!(
            (r.measured_ratio - expect).abs() <= 3.0 * r.stderr.unwrap(),
            "measured {} vs {} (stderr {:?})",
            r.measured_ratio,
            expect,
            r.stderr
        );
    }

    #[test]
    fn geometric_small_sigma_small_ratio() {
        let map = LinearMap::scaling(1, 2.0).unwrap();
        let (_, r) = expansive_geometric_witness(&map, 0.05, 50_000, 3, None).unwrap();
        assert!(r.analytic_ratio < 0.04);
        assert!(r.measured_ratio < 0.1);
    }

    #[test]
    fn geometric_co_expansive_via_inverse() {
        // A = [1/2]: the construction runs on A^{-1}; sigma ranges up to
        // |det A|^{1/2} and the ratio is sigma |det A|^{-1/2}.
        let map = LinearMap::scaling(1, 0.5).unwrap();
        let (_, r) = expansive_geometric_witness(&map, 0.5, 200_000, 11, None).unwrap();
        assert!((r.analytic_ratio - 0.5 * 2.0f64.sqrt()).abs() < 1e-12);
        assert!((r.measured_ratio - r.analytic_ratio).abs() <= 3.0 * r.stderr.unwrap().max(1e-4));
        // sigma at or above |det A|^{1/2} is out of range.
        assert!(expansive_geometric_witness(&map, 0.8, 1000, 0, None).is_err());
    }

    #[test]
    fn geometric_rejects_non_expansive_and_bad_sigma() {
        let id = LinearMap::identity(2);
        assert!(matches!(
            expansive_geometric_witness(&id, 0.5, 1000, 0, None),
            Err(Error::NonExpansive)
        ));
        let map = LinearMap::scaling(1, 2.0).unwrap();
        assert!(expansive_geometric_witness(&map, 1.5, 1000, 0, None).is_err());
        assert!(expansive_geometric_witness(&map, 0.0, 1000, 0, None).is_err());
    }

    #[test]
    fn geometric_measure_scaling() {
        // |E_j| / |E_0| must track |det|^{-j} within 3 standard errors.
        let map = LinearMap::scaling(1, 2.0).unwrap();
        let (w, _) = expansive_geometric_witness(&map, 0.9, 400_000, 5, None).unwrap();
        let (m, e) = w.level_measures().unwrap();
        assert!((m[0] - 1.0).abs() <= 3.0 * e[0], "|E_0| = {} +- {}", m[0], e[0]);
        for j in 1..6.min(m.len()) {
            let expect = m[0] * 2.0f64.powi(-(j as i32));
            let tol = 3.0 * (e[j] + e[0] * 2.0f64.powi(-(j as i32)));
            assert!(
                (m[j] - expect).abs() <= tol,
                "level {j}: {} vs {expect} (tol {tol})",
                m[j]
            );
        }
    }

    #[test]
    fn shear_ratios_and_monotonicity() {
        let (_, r9) = jordan_shear_witness(9, 1.0, 2, 50_000, 1).unwrap();
        assert!((r9.analytic_ratio - 0.9).abs() < 1e-12);
        assert!((r9.measured_ratio - 0.9).abs() < 1e-3);
        let (_, r5) = jordan_shear_witness(5, 1.0, 2, 50_000, 1).unwrap();
        assert!((r5.analytic_ratio - 5.0 / 6.0).abs() < 1e-12);
        let (_, r99) = jordan_shear_witness(99, 1.0, 2, 20_000, 1).unwrap();
        assert!((r99.analytic_ratio - 0.99).abs() < 1e-12);
        assert!(r5.analytic_ratio < r9.analytic_ratio && r9.analytic_ratio < r99.analytic_ratio);
    }

    #[test]
    fn shear_negative_eigenvalue() {
        let (_, r) = jordan_shear_witness(6, -1.0, 3, 30_000, 2).unwrap();
        assert!((r.analytic_ratio - 6.0 / 7.0).abs() < 1e-12);
        assert!((r.measured_ratio - r.analytic_ratio).abs() < 1e-3);
    }

    #[test]
    fn shear_parameter_validation() {
        assert!(jordan_shear_witness(4, 1.0, 2, 1000, 0).is_err());
        assert!(jordan_shear_witness(9, 0.5, 2, 1000, 0).is_err());
        assert!(jordan_shear_witness(9, 1.0, 1, 1000, 0).is_err());
    }

    #[test]
    fn shear_support_and_disjointness_on_samples() {
        let (w, _) = jordan_shear_witness(9, 1.0, 2, 2000, 3).unwrap();
        let d = match &w.kind {
            WitnessKind::Shear(d) => d.clone(),
            _ => unreachable!(),
        };
        let mut rng = Rng::new(17);
        let mut inside = 0;
        let mut ball = vec![0.0; 2];
        for _ in 0..100_000 {
            // Sample within the images themselves plus ambient noise.
            let j = (rng.next_u64() % (d.k as u64 + 1)) as usize;
            rng.in_unit_ball(&mut ball);
            let mut x = vec![
                (d.base[0] + ball[0] * d.rho),
                (d.base[1] + ball[1] * d.rho),
            ];
            let mut forward = x.clone();
            for _ in 0..j {
                d.matrix.apply(&x, &mut forward);
                x.copy_from_slice(&forward);
            }
            for v in x.iter_mut() {
                *v *= d.scale;
            }
            let mult = w.multiplicity(&x);
            assert!(mult <= 1, "supports overlap at {x:?}");
            if mult == 1 {
                inside += 1;
                let n2: f64 = x.iter().map(|v| v * v).sum();
                assert!(n2 <= 1.0, "support escapes the unit ball");
            }
        }
        assert!(inside > 90_000);
    }

    #[test]
    fn rotation_ratios() {
        let (_, r) = jordan_rotation_witness(9, 1.0, 4, 40_000, 1).unwrap();
        assert!((r.analytic_ratio - 0.9).abs() < 1e-12);
        assert!((r.measured_ratio - 0.9).abs() < 1e-3);
        let (_, r7) = jordan_rotation_witness(7, 0.6, 4, 40_000, 1).unwrap();
        assert!((r7.analytic_ratio - 7.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_theta_zero_matches_shear_ratio() {
        let (_, r) = jordan_rotation_witness(8, 0.0, 4, 40_000, 1).unwrap();
        assert!((r.analytic_ratio - 8.0 / 9.0).abs() < 1e-12);
        assert!((r.measured_ratio - r.analytic_ratio).abs() < 1e-3);
    }

    #[test]
    fn rotation_parameter_validation() {
        assert!(jordan_rotation_witness(6, 1.0, 4, 1000, 0).is_err());
        assert!(jordan_rotation_witness(9, 1.0, 3, 1000, 0).is_err());
        assert!(jordan_rotation_witness(9, 1.0, 2, 1000, 0).is_err());
    }

    #[test]
    fn holder_ceiling_across_families() {
        let map = LinearMap::scaling(1, 2.0).unwrap();
        let (_, g) = expansive_geometric_witness(&map, 1.4, 200_000, 9, None).unwrap();
        assert!(g.measured_ratio <= 1.0 + 3.0 * g.stderr.unwrap());
        let (_, p) = power_law_witness(&[2.0], 0.49, 1.0).unwrap();
        assert!(p.measured_ratio <= 1.0 + 1e-6);
        let (_, s) = jordan_shear_witness(19, 1.0, 2, 50_000, 4).unwrap();
        assert!(s.measured_ratio <= 1.0 + 3.0 * s.stderr.unwrap().max(1e-9));
        assert!(s.measured_ratio >= 0.95 - 1e-9);
    }

    #[test]
    fn composed_single_block_keeps_ratio() {
        // A = C diag(2) C^{-1} with C = [1]: the composed overlap keeps
        // the block ratio, approaching 2^{-1/2} at sigma -> sqrt(2).
        let map = LinearMap::scaling(1, 2.0).unwrap();
        let block = expansive_geometric_witness(&map, 1.4, 100_000, 6, None).unwrap();
        let c = Mat::identity(1);
        let (w, r) = composed_witness(&c, vec![block]).unwrap();
        assert!((r.analytic_ratio - 1.4 / 2.0f64.sqrt()).abs() < 1e-12);
        // Raw overlap = ratio * |det A|^{-1/2} tends to 2^{-1/2}.
        let raw = r.analytic_ratio / 2.0f64.sqrt();
        assert!((raw - std::f64::consts::FRAC_1_SQRT_2 * (1.4 / 2.0f64.sqrt())).abs() < 1e-12);
        assert_eq!(w.dim(), 1);
        assert!((w.l2_norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn composed_product_blocks_and_unit_norm() {
        // diag(2, 1): expansive block times a unit block built as the
        // power-law witness with alpha = 1.
        let b1 = power_law_witness(&[2.0], 0.49, 1.0).unwrap();
        let b2 = power_law_witness(&[1.0], 0.49, 1.0).unwrap();
        let expect = b1.1.measured_ratio * b2.1.measured_ratio;
        let c = Mat::identity(2);
        let (w, r) = composed_witness(&c, vec![b1, b2]).unwrap();
        assert!((r.measured_ratio - expect).abs() < 1e-12);
        assert!((r.analytic_ratio - 2.0f64.powf(-0.01)).abs() < 1e-12);
        assert_eq!(w.dim(), 2);

        // Support containment on samples (norm checks need a milder
        // spike; see below).
        let mut rng = Rng::new(8);
        let x = &mut [0.0, 0.0];
        for _ in 0..100_000 {
            x[0] = rng.uniform(-1.2, 1.2);
            x[1] = rng.uniform(-1.2, 1.2);
            if w.eval(x) != 0.0 {
                assert!(x[0] * x[0] + x[1] * x[1] <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn composed_unit_norm_via_monte_carlo() {
        // sigma = 0.2 keeps phi^4 integrable, so a plain Monte Carlo
        // estimate of ||Phi||² has finite variance.
        let b1 = power_law_witness(&[2.0], 0.2, 1.0).unwrap();
        let b2 = power_law_witness(&[1.0], 0.2, 1.0).unwrap();
        let c = Mat::from_rows(&[vec![1.0, 0.3], vec![0.0, 1.0]]).unwrap();
        let (w, _) = composed_witness(&c, vec![b1, b2]).unwrap();
        let mut rng = Rng::new(123);
        let n = 4_000_000usize;
        let mut sum = 0.0;
        let x = &mut [0.0, 0.0];
        for _ in 0..n {
            x[0] = rng.uniform(-1.0, 1.0);
            x[1] = rng.uniform(-1.0, 1.0);
            let v = w.eval(x);
            sum += v * v;
        }
        let norm = 4.0 * sum / n as f64;
        assert!((norm - 1.0).abs() < 0.05, "composed norm² = {norm}");
    }

    #[test]
    fn composed_dimension_mismatch_rejected() {
        let b = power_law_witness(&[2.0], 0.3, 1.0).unwrap();
        let c = Mat::identity(2);
        assert!(composed_witness(&c, vec![b]).is_err());
    }

    #[test]
    fn box_indicator_basics() {
        let b = BoxIndicator::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(b.eval(&[0.5]), 1.0);
        assert_eq!(b.eval(&[-0.1]), 0.0);
        assert!((b.l2_norm_sq() - 1.0).abs() < 1e-15);
        let map = LinearMap::scaling(1, 2.0).unwrap();
        assert!((b.overlap_linear(&map).unwrap() - 0.5).abs() < 1e-15);
        assert!(BoxIndicator::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn quadratic_bump_closed_forms() {
        let q = QuadraticBump::new(1);
        // ∫(1-x²)² over [-1,1] = 16/15; ∫(2x)² = 8/3.
        assert!((q.l2_norm_sq() - 16.0 / 15.0).abs() < 1e-14);
        assert!((q.gradient_l2_sq().unwrap() - 8.0 / 3.0).abs() < 1e-14);
        let g = q.gradient(&[0.3]).unwrap();
        assert!((g[0] + 0.6).abs() < 1e-15);
    }
}
