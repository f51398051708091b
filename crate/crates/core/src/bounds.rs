//! Analytic bounds on the whole-space principal eigenvalue, all in the
//! variational convention lambda1:
//!
//! - a lower bound from the Jacobian bounds of a^{-1}: when
//!   M = sup|J_{a^{-1}}| < 1 the value 2(1 - M^{1/2})² ∫psi, when
//!   m = inf|J_{a^{-1}}| > 1 the value 2(m^{1/2} - 1)² ∫psi, and no claim
//!   at all when m <= 1 <= M;
//! - the coarse upper bound 2(1 + M) ∫psi;
//! - the candidate upper bound 2 ∫psi ∫(phi(x) - phi(a(x)))² dx for
//!   1-homogeneous maps and any unit-L² phi supported in the unit ball;
//! - its finite-radius refinement carrying the O(R^{-2}) gradient term;
//! - the exact value 2(1 - |det A|^{-1/2})² ∫psi for linear maps.

use crate::error::{Error, Result};
use crate::kernel::DeformationKernel;
use crate::linalg::Mat;
use crate::map::{LinearMap, MapSpec};
use crate::quad::midpoint_box_refine;
use crate::witness::Candidate;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LowerBoundCase {
    #[serde(rename = "M<1")]
    SupBelowOne,
    #[serde(rename = "m>1")]
    InfAboveOne,
    #[serde(rename = "not-applicable")]
    NotApplicable,
}

/// Lower bound for lambda1(R^d). Returns the value and the regime tag;
/// `NotApplicable` (with no value) when m <= 1 <= M, where the theory
/// makes no claim.
pub fn lower_bound_thm2(kernel: &DeformationKernel) -> (Option<f64>, LowerBoundCase) {
    let psi_mass = kernel.psi_mass();
    let sup = kernel.map().sup_jac_inv();
    let inf = kernel.map().inf_jac_inv();
    if sup < 1.0 {
        let r = 1.0 - sup.sqrt();
        (Some(2.0 * r * r * psi_mass), LowerBoundCase::SupBelowOne)
    } else if inf > 1.0 {
        let r = inf.sqrt() - 1.0;
        (Some(2.0 * r * r * psi_mass), LowerBoundCase::InfAboveOne)
    } else {
        (None, LowerBoundCase::NotApplicable)
    }
}

/// The coarse upper bound 2 (1 + M) ∫psi.
pub fn upper_bound_sup(kernel: &DeformationKernel) -> f64 {
    2.0 * (1.0 + kernel.map().sup_jac_inv()) * kernel.psi_mass()
}

/// Normalized deformation energy ∫(phi - phi∘a)² / ||phi||² for a
/// 1-homogeneous map.
fn candidate_energy(map: &MapSpec, phi: &dyn Candidate) -> Result<f64> {
    if !map.is_homogeneous_degree_one() {
        return Err(Error::NotHomogeneous);
    }
    if phi.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: phi.dim() });
    }
    let norm_sq = phi.l2_norm_sq();
    if !(norm_sq > 1e-300) {
        return Err(Error::ZeroVector);
    }
    if let MapSpec::Linear(lin) = map {
        // ∫phi²(a(x))dx = ||phi||² / |det A| by change of variables, so only
        // the overlap needs numerical work.
        let overlap = match phi.overlap_linear(lin) {
            Some(v) => v,
            None => grid_overlap_linear(lin, phi)?,
        };
        return Ok(1.0 + 1.0 / lin.det_abs() - 2.0 * overlap / norm_sq);
    }
    // Nonlinear 1-homogeneous map: integrate the squared difference over a
    // box covering supp(phi) and a^{-1}(supp(phi)).
    let r = phi.support_radius().max(map.inverse_range_bound(phi.support_radius()));
    let d = map.dim();
    let lo = vec![-r; d];
    let hi = vec![r; d];
    let val = midpoint_box_refine(
        |x| {
            let mut a_of_x = vec![0.0; d];
            map.forward(x, &mut a_of_x);
            let diff = phi.eval(x) - phi.eval(&a_of_x);
            diff * diff
        },
        &lo,
        &hi,
        initial_cells(d),
        1e-5,
        30_000_000,
    )?;
    Ok(val / norm_sq)
}

fn initial_cells(d: usize) -> usize {
    match d {
        1 => 512,
        2 => 48,
        _ => 12,
    }
}

/// Grid-quadrature fallback for ∫phi(x) phi(Ax) dx (bounded candidates).
fn grid_overlap_linear(lin: &LinearMap, phi: &dyn Candidate) -> Result<f64> {
    let d = lin.dim();
    let r = phi.support_radius();
    let lo = vec![-r; d];
    let hi = vec![r; d];
    let mut ax = vec![0.0; d];
    midpoint_box_refine(
        |x| {
            let px = phi.eval(x);
            if px == 0.0 {
                return 0.0;
            }
            lin.matrix().apply(x, &mut ax);
            px * phi.eval(&ax)
        },
        &lo,
        &hi,
        initial_cells(d),
        1e-5,
        30_000_000,
    )
}

/// Candidate-based upper bound 2 ∫psi ∫(phi - phi∘a)² for 1-homogeneous
/// maps; phi is normalized internally.
pub fn upper_bound_candidate(kernel: &DeformationKernel, phi: &dyn Candidate) -> Result<f64> {
    let energy = candidate_energy(kernel.map(), phi)?;
    Ok(2.0 * kernel.psi_mass() * energy)
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteRadiusBound {
    pub delta: f64,
    pub radius: f64,
    /// ∫(phi - phi∘a)² for the unit-normalized candidate.
    pub candidate_energy: f64,
    /// ∫|∇phi|² for the unit-normalized candidate.
    pub gradient_energy: f64,
    /// sup of |J_{a^{-1}}| over the ball of radius 1 + 1/R.
    pub jac_sup: f64,
    pub value: f64,
}

/// C(delta) = 2 (1 + 2/delta), the constant produced by the Young split
/// 2(A+B)² <= (2+delta)A² + 2(1+2/delta)B².
pub fn young_constant(delta: f64) -> f64 {
    2.0 * (1.0 + 2.0 / delta)
}

/// Finite-radius upper bound for lambda1(B_R):
///
///   (2+delta) ∫psi ∫(phi-phi∘a)²
///     + C(delta)/R² ∫psi(z)|z|²dz ∫|∇phi|² sup_{B_{1+1/R}} |J_{a^{-1}}|.
pub fn finite_radius_bound(
    kernel: &DeformationKernel,
    phi: &dyn Candidate,
    radius: f64,
    delta: f64,
) -> Result<FiniteRadiusBound> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("delta must be positive".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("radius must be positive".into()));
    }
    let norm_sq = phi.l2_norm_sq();
    if !(norm_sq > 1e-300) {
        return Err(Error::ZeroVector);
    }
    let gradient_energy = phi.gradient_l2_sq().ok_or(Error::MissingGradient)? / norm_sq;
    let energy = candidate_energy(kernel.map(), phi)?;
    let jac_sup = jac_sup_on_ball(kernel.map(), 1.0 + 1.0 / radius);
    let psi_mass = kernel.psi_mass();
    let moment = kernel.profile().second_moment();
    let value = (2.0 + delta) * psi_mass * energy
        + young_constant(delta) / (radius * radius) * moment * gradient_energy * jac_sup;
    Ok(FiniteRadiusBound {
        delta,
        radius,
        candidate_energy: energy,
        gradient_energy,
        jac_sup,
        value,
    })
}

/// sup |J_{a^{-1}}| over the ball B_r: exact for linear maps, dense
/// sampling for black-box diffeomorphisms.
fn jac_sup_on_ball(map: &MapSpec, r: f64) -> f64 {
    match map {
        MapSpec::Linear(lin) => 1.0 / lin.det_abs(),
        MapSpec::Diffeo(_) => {
            let d = map.dim();
            let n: usize = match d {
                1 => 4096,
                2 => 128,
                _ => 32,
            };
            let mut best = 0.0f64;
            let mut idx = vec![0usize; d];
            let mut x = vec![0.0; d];
            'outer: loop {
                let mut r2 = 0.0;
                for k in 0..d {
                    x[k] = -r + 2.0 * r * (idx[k] as f64 + 0.5) / n as f64;
                    r2 += x[k] * x[k];
                }
                if r2 <= r * r {
                    best = best.max(map.jac_inv_abs(&x));
                }
                for k in 0..d {
                    idx[k] += 1;
                    if idx[k] < n {
                        continue 'outer;
                    }
                    idx[k] = 0;
                }
                break;
            }
            best
        }
    }
}

/// The exact whole-space eigenvalue for a linear map:
/// 2 (1 - |det A|^{-1/2})² ∫psi.
pub fn closed_form_linear(a: &Mat, psi_mass: f64) -> Result<f64> {
    let det = a.det();
    if det == 0.0 || !det.is_finite() {
        return Err(Error::SingularMatrix);
    }
    let r = 1.0 - (1.0 / det.abs()).sqrt();
    Ok(2.0 * r * r * psi_mass)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub lower: Option<f64>,
    pub lower_case: LowerBoundCase,
    pub upper_sup: f64,
    pub upper_candidate: Option<f64>,
    pub candidate: Option<String>,
    pub exact_linear: Option<f64>,
    pub psi_mass: f64,
}

/// Assembles every applicable bound for one kernel. The candidate bound
/// is included when a candidate is supplied and the map is 1-homogeneous.
pub fn report(kernel: &DeformationKernel, phi: Option<&dyn Candidate>) -> Result<BoundReport> {
    let (lower, lower_case) = lower_bound_thm2(kernel);
    let upper_sup = upper_bound_sup(kernel);
    let (upper_candidate, candidate) = match phi {
        Some(c) if kernel.map().is_homogeneous_degree_one() => {
            (Some(upper_bound_candidate(kernel, c)?), Some(c.label()))
        }
        _ => (None, None),
    };
    let exact_linear = match kernel.map() {
        MapSpec::Linear(lin) => Some(closed_form_linear(lin.matrix(), kernel.psi_mass())?),
        MapSpec::Diffeo(_) => None,
    };
    Ok(BoundReport {
        lower,
        lower_case,
        upper_sup,
        upper_candidate,
        candidate,
        exact_linear,
        psi_mass: kernel.psi_mass(),
    })
}
