//! The deformation kernel K(x,y) = psi(y - a(x)) + psi(x - a(y)).
//!
//! K is symmetric and nonnegative by construction and vanishes as soon as
//! both arguments miss each other's image by at least the support radius.
//! Convolution kernels are the special case a = id.

use crate::error::{Error, Result};
use crate::map::MapSpec;
use crate::profile::Profile;
use crate::quad::{adaptive_simpson, midpoint_box_refine};

#[derive(Debug, Clone)]
pub struct DeformationKernel {
    profile: Profile,
    map: MapSpec,
}

impl DeformationKernel {
    pub fn new(profile: Profile, map: MapSpec) -> Result<Self> {
        if profile.dim() != map.dim() {
            return Err(Error::DimensionMismatch {
                expected: profile.dim(),
                got: map.dim(),
            });
        }
        Ok(DeformationKernel { profile, map })
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    /// ∫ psi, the overall kernel scale.
    pub fn psi_mass(&self) -> f64 {
        self.profile.mass()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if y.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: y.len() });
        }
        let ax = self.map.forward_vec(x);
        let ay = self.map.forward_vec(y);
        Ok(self.eval_with_images(x, y, &ax, &ay))
    }

    /// Evaluation when the images a(x), a(y) are already known. This is the
    /// assembly hot path: image tables are computed once per grid.
    #[inline]
    pub fn eval_with_images(&self, x: &[f64], y: &[f64], ax: &[f64], ay: &[f64]) -> f64 {
        let mut r2a = 0.0;
        let mut r2b = 0.0;
        for i in 0..x.len() {
            let u = y[i] - ax[i];
            let v = x[i] - ay[i];
            r2a += u * u;
            r2b += v * v;
        }
        self.profile.eval_r2(r2a) + self.profile.eval_r2(r2b)
    }

    /// m(x) = ∫ K(x,y) dy = ∫psi + (psi * |J_{a^{-1}}|)(x).
    ///
    /// For linear maps the convolution term is the constant
    /// ∫psi / |det A|. For diffeomorphisms it is integrated numerically
    /// over the ball |x - z| < 1 after the change of variables z = a(y).
    pub fn mass_at(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let psi_mass = self.profile.mass();
        match &self.map {
            MapSpec::Linear(m) => Ok(psi_mass * (1.0 + 1.0 / m.det_abs())),
            MapSpec::Diffeo(_) => {
                let conv = self.convolution_term(x)?;
                Ok(psi_mass + conv)
            }
        }
    }

    fn convolution_term(&self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        let profile = &self.profile;
        let map = &self.map;
        if d == 1 {
            let f = |z: f64| {
                let diff = x[0] - z;
                profile.eval_r2(diff * diff) * map.jac_inv_abs(&[z])
            };
            adaptive_simpson(f, x[0] - 1.0, x[0] + 1.0, 1e-11 * profile.mass().max(1.0))
        } else {
            let lo: Vec<f64> = x.iter().map(|v| v - 1.0).collect();
            let hi: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
            let f = |z: &[f64]| {
                let r2: f64 = x.iter().zip(z.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                if r2 >= 1.0 {
                    0.0
                } else {
                    profile.eval_r2(r2) * map.jac_inv_abs(z)
                }
            };
            midpoint_box_refine(f, &lo, &hi, 16, 1e-7, 40_000_000)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{DiffeoMap, LinearMap};
    use crate::profile::ProfileShape;
    use crate::rng::Rng;

    fn epan1(mass: f64) -> Profile {
        Profile::with_mass(ProfileShape::Epanechnikov, 1, mass).unwrap()
    }

    #[test]
    fn convolution_case_at_origin() {
        // a = id: both terms equal psi(y - x); at x = y = 0 the value is 2 psi(0) = 3/2.
        let k = DeformationKernel::new(epan1(1.0), MapSpec::identity(1)).unwrap();
        assert!((k.eval(&[0.0], &[0.0]).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn vanishes_when_both_images_missed() {
        let k = DeformationKernel::new(
            epan1(1.0),
            MapSpec::Linear(LinearMap::scaling(1, 2.0).unwrap()),
        )
        .unwrap();
        // |y - 2x| = 2.6 and |x - 2y| = 5.8: both outside the unit support.
        assert_eq!(k.eval(&[0.2], &[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn indicator_case_with_both_terms_active() {
        // Normalized indicator in d=1 has amplitude 1/2. At x=0.3, y=0.5 with
        // a(x)=2x, |y-a(x)| = 0.1 and |x-a(y)| = 0.7 are both inside the
        // support, so each term contributes 1/2.
        let p = Profile::normalized(ProfileShape::Indicator, 1).unwrap();
        let k = DeformationKernel::new(p, MapSpec::Linear(LinearMap::scaling(1, 2.0).unwrap()))
            .unwrap();
        assert!((k.eval(&[0.3], &[0.5]).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn symmetry_on_random_pairs() {
        let maps = [
            MapSpec::Linear(LinearMap::new(&[vec![1.4, 0.3], vec![-0.2, 0.9]]).unwrap()),
            MapSpec::identity(2),
        ];
        for map in maps {
            let p = Profile::normalized(ProfileShape::Epanechnikov, 2).unwrap();
            let k = DeformationKernel::new(p, map).unwrap();
            let mut rng = Rng::new(17);
            for _ in 0..10_000 {
                let x = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let y = [rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)];
                let kxy = k.eval(&x, &y).unwrap();
                let kyx = k.eval(&y, &x).unwrap();
                assert_eq!(kxy, kyx);
                assert!(kxy >= 0.0);
            }
        }
    }

    #[test]
    fn support_condition_on_samples() {
        let map = MapSpec::Linear(LinearMap::scaling(1, 2.0).unwrap());
        let p = Profile::normalized(ProfileShape::Epanechnikov, 1).unwrap();
        let k = DeformationKernel::new(p, map).unwrap();
        let mut rng = Rng::new(23);
        for _ in 0..10_000 {
            let x = [rng.uniform(-3.0, 3.0)];
            let y = [rng.uniform(-3.0, 3.0)];
            let v = k.eval(&x, &y).unwrap();
            let miss_a = (y[0] - 2.0 * x[0]).abs() >= 1.0;
            let miss_b = (x[0] - 2.0 * y[0]).abs() >= 1.0;
            if miss_a && miss_b {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn linear_mass_is_constant() {
        let k = DeformationKernel::new(
            epan1(1.0),
            MapSpec::Linear(LinearMap::scaling(1, 2.0).unwrap()),
        )
        .unwrap();
        let mut rng = Rng::new(31);
        for _ in 0..50 {
            let x = [rng.uniform(-5.0, 5.0)];
            assert!((k.mass_at(&x).unwrap() - 1.5).abs() < 1e-10);
        }
        let conv = DeformationKernel::new(epan1(1.0), MapSpec::identity(1)).unwrap();
        assert!((conv.mass_at(&[0.7]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diffeo_mass_bracketed_by_jacobian_bounds() {
        // a(x) = 2x + 0.25 sin x: the convolution term lies between
        // psi-mass times the inf and sup of |J_{a^{-1}}|.
        let map = MapSpec::Diffeo(DiffeoMap::scaled_sine(2.0, 0.25).unwrap());
        let k = DeformationKernel::new(epan1(1.0), map).unwrap();
        let v = k.mass_at(&[0.0]).unwrap();
        assert!(v > 1.0 + 1.0 / 2.25, "mass {v} below bracket");
        assert!(v < 1.0 + 1.0 / 1.75, "mass {v} above bracket");
    }

    #[test]
    fn mass_scales_with_psi_mass() {
        let k = DeformationKernel::new(
            epan1(0.5),
            MapSpec::Linear(LinearMap::scaling(1, 2.0).unwrap()),
        )
        .unwrap();
        assert!((k.mass_at(&[1.0]).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let p = Profile::normalized(ProfileShape::Epanechnikov, 2).unwrap();
        assert!(DeformationKernel::new(p.clone(), MapSpec::identity(1)).is_err());
        let k = DeformationKernel::new(p, MapSpec::identity(2)).unwrap();
        assert!(k.eval(&[0.0], &[0.0, 0.0]).is_err());
    }
}
