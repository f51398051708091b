//! Quadrature helpers: adaptive Simpson, Gauss-Legendre rules, graded
//! meshes for endpoint singularities and midpoint rules on boxes.

use crate::error::{Error, Result};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence up to degree n.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureNonConvergence);
    }
    let l = adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?;
    let r = adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

/// Adaptive Simpson quadrature of `f` over [a, b] with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    adaptive_simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Integrates `f` over (0, b] when `f` has an integrable singularity at 0
/// (anything milder than 1/x). Uses Gauss-Legendre panels on a geometric
/// mesh b, b/2, b/4, ... so the singular end is resolved without ever
/// evaluating at 0.
pub fn graded_lower_singularity<F: Fn(f64) -> f64>(f: F, b: f64, levels: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(16);
    let mut total = 0.0;
    let mut hi = b;
    for _ in 0..levels {
        let lo = 0.5 * hi;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut panel = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            panel += w * f(mid + half * x);
        }
        total += panel * half;
        hi = lo;
        if hi < 1e-306 {
            break;
        }
    }
    total
}

/// Midpoint rule over the box `lo..hi`, refined dyadically until two
/// consecutive refinements agree to `rel_tol`, starting from `n0` cells
/// per axis.
pub fn midpoint_box_refine<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    lo: &[f64],
    hi: &[f64],
    n0: usize,
    rel_tol: f64,
    max_points: usize,
) -> Result<f64> {
    let d = lo.len();
    assert_eq!(hi.len(), d);
    let mut n = n0.max(2);
    let mut prev: Option<f64> = None;
    let mut prev_ok = false;
    loop {
        let total_pts = n.checked_pow(d as u32).ok_or(Error::QuadratureNonConvergence)?;
        if total_pts > max_points {
            return Err(Error::QuadratureNonConvergence);
        }
        let mut h = vec![0.0; d];
        let mut cell = 1.0;
        for k in 0..d {
            h[k] = (hi[k] - lo[k]) / n as f64;
            cell *= h[k];
        }
        let mut sum = 0.0;
        let mut idx = vec![0usize; d];
        let mut x = vec![0.0; d];
        'outer: loop {
            for k in 0..d {
                x[k] = lo[k] + (idx[k] as f64 + 0.5) * h[k];
            }
            sum += f(&x);
            // Odometer increment.
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < n {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        let val = sum * cell;
        if let Some(p) = prev {
            let scale = val.abs().max(p.abs()).max(1e-300);
            let ok = (val - p).abs() <= rel_tol * scale;
            if ok && prev_ok {
                return Ok(val);
            }
            prev_ok = ok;
        }
        prev = Some(val);
        n *= 2;
    }
}

/// Volume of the unit ball in `d` dimensions.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Surface area of the unit sphere bounding the unit ball in `d`
/// dimensions (so radial integrals read `area * ∫ f(r) r^{d-1} dr`).
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(8);
        // degree 15 is integrated exactly by the 8-point rule
        let val: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi.powi(14)).sum();
        assert!((val - 2.0 / 15.0).abs() < 1e-13);
        let sum: f64 = w.iter().sum();
        assert!((sum - 2.0).abs() < 1e-13);
    }

    #[test]
    fn adaptive_simpson_smooth() {
        let v = adaptive_simpson(|x| x.sin(), 0.0, PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn graded_handles_power_singularity() {
        // ∫_0^1 x^{-0.98} dx = 50
        let v = graded_lower_singularity(|x| x.powf(-0.98), 1.0, 1200);
        assert!((v - 50.0).abs() / 50.0 < 1e-6, "got {v}");
    }

    #[test]
    fn midpoint_box_matches_disc_area() {
        let v = midpoint_box_refine(
            |x| if x[0] * x[0] + x[1] * x[1] < 1.0 { 1.0 } else { 0.0 },
            &[-1.0, -1.0],
            &[1.0, 1.0],
            8,
            2e-3,
            80_000_000,
        )
        .unwrap();
        assert!((v - PI).abs() < 0.01, "got {v}");
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-14);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }
}
