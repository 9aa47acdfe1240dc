//! The perturbed torsion field `u_eps` on `R^d`.
//!
//! ```text
//! u_eps(x) = (1 - x_2² - … - x_d²) / (2(d-1)) + eps · v_n(x_1, x_2)
//! ```
//!
//! The quadratic part solves `-Δu = 1` on its own and is independent of
//! `x_1`; the harmonic profile perturbation keeps the equation exact while
//! shaping the critical-point structure along the `x_1` axis. All nontrivial
//! behaviour lives in the `(x_1, x_2)` plane, so the gradient and Hessian
//! split into a 2×2 block coupled to the profile plus a diagonal
//! `-1/(d-1)` tail in the remaining coordinates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::profile::HarmonicProfile;

#[derive(Debug, Clone, Serialize)]
pub struct TorsionField {
    profile: HarmonicProfile,
    d: usize,
    eps: f64,
}

impl TorsionField {
    /// Requires `d >= 2`; `eps = 0` is allowed and gives the unperturbed
    /// torsion function of the slab.
    pub fn new(profile: HarmonicProfile, d: usize, eps: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::validation(format!("dimension d = {d} must be at least 2")));
        }
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::validation(format!("eps = {eps} must be finite and nonnegative")));
        }
        Ok(TorsionField { profile, d, eps })
    }

    pub fn profile(&self) -> &HarmonicProfile {
        &self.profile
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `1 / (2(d-1))`, the unperturbed value on the symmetry axis.
    pub fn slab_height(&self) -> f64 {
        1.0 / (2.0 * (self.d as f64 - 1.0))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::validation(format!(
                "point has {} coordinates, field lives in dimension {}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }

    /// Value only; the hot path for grid sweeps and quadrature.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let cross: f64 = x[1..].iter().map(|t| t * t).sum();
        let quad = (1.0 - cross) / (2.0 * (self.d as f64 - 1.0));
        let v = self.profile.eval(x[0], x[1]).0;
        Ok(quad + self.eps * v)
    }

    /// Value, gradient, and dense `d × d` Hessian.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Mat)> {
        self.check_dim(x)?;
        let d = self.d;
        let dm1 = d as f64 - 1.0;
        let (v, vg, vh) = self.profile.eval(x[0], x[1]);

        let cross: f64 = x[1..].iter().map(|t| t * t).sum();
        let value = (1.0 - cross) / (2.0 * dm1) + self.eps * v;

        let mut grad = vec![0.0; d];
        grad[0] = self.eps * vg[0];
        grad[1] = -x[1] / dm1 + self.eps * vg[1];
        for j in 2..d {
            grad[j] = -x[j] / dm1;
        }

        let mut hess = Mat::zeros(d);
        hess[(0, 0)] = self.eps * vh[(0, 0)];
        hess[(0, 1)] = self.eps * vh[(0, 1)];
        hess[(1, 0)] = self.eps * vh[(1, 0)];
        hess[(1, 1)] = -1.0 / dm1 + self.eps * vh[(1, 1)];
        for j in 2..d {
            hess[(j, j)] = -1.0 / dm1;
        }

        Ok((value, grad, hess))
    }

    /// Value on the `x_1` axis: `1/(2(d-1)) + eps · f(t)`.
    pub fn axis_value(&self, t: f64) -> f64 {
        self.slab_height() + self.eps * self.profile.axis(t).0
    }

    /// Restriction to the `(x_1, x_2)` plane, the slice carrying all of the
    /// field's critical structure.
    pub fn plane_value(&self, x1: f64, x2: f64) -> f64 {
        let dm1 = self.d as f64 - 1.0;
        (1.0 - x2 * x2) / (2.0 * dm1) + self.eps * self.profile.eval(x1, x2).0
    }

    /// Gradient of the planar restriction.
    pub fn plane_gradient(&self, x1: f64, x2: f64) -> [f64; 2] {
        let dm1 = self.d as f64 - 1.0;
        let (_, vg, _) = self.profile.eval(x1, x2);
        [self.eps * vg[0], -x2 / dm1 + self.eps * vg[1]]
    }

    /// Planar 2×2 Hessian block `A_eps`.
    pub fn plane_hessian(&self, x1: f64, x2: f64) -> Mat {
        let dm1 = self.d as f64 - 1.0;
        let (_, _, vh) = self.profile.eval(x1, x2);
        let mut a = Mat::zeros(2);
        a[(0, 0)] = self.eps * vh[(0, 0)];
        a[(0, 1)] = self.eps * vh[(0, 1)];
        a[(1, 0)] = self.eps * vh[(1, 0)];
        a[(1, 1)] = -1.0 / dm1 + self.eps * vh[(1, 1)];
        a
    }

    /// Embeds a planar point into `R^d` by zero padding.
    pub fn embed_plane(&self, x1: f64, x2: f64) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        x[0] = x1;
        x[1] = x2;
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(n: usize, d: usize, eps: f64) -> TorsionField {
        TorsionField::new(HarmonicProfile::standard(n).unwrap(), d, eps).unwrap()
    }

    #[test]
    fn construction_validation() {
        let p = HarmonicProfile::standard(2).unwrap();
        assert!(TorsionField::new(p.clone(), 1, 0.1).is_err());
        assert!(TorsionField::new(p.clone(), 2, -0.1).is_err());
        assert!(TorsionField::new(p.clone(), 2, f64::INFINITY).is_err());
        assert!(TorsionField::new(p.clone(), 2, 0.0).is_ok());
        assert!(TorsionField::new(p, 5, 1e-3).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let u = field(2, 3, 1e-2);
        assert!(u.value(&[0.0, 0.0]).is_err());
        assert!(u.eval(&[0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(u.value(&[0.0, 0.0, 0.0]).is_ok());
    }

    #[test]
    fn known_values() {
        // u(0) = 1/2 + eps·v(0,0) with v(0,0) = -4 for n = 2.
        let u22 = field(2, 2, 1e-2);
        assert_eq!(u22.value(&[0.0, 0.0]).unwrap(), 0.46);
        let u23 = field(2, 3, 1e-2);
        assert_eq!(u23.value(&[0.0, 0.0, 0.0]).unwrap(), 0.21);
        // On the axis at a profile maximum: 1/2 + eps·d' exactly.
        let s = (2.5_f64).sqrt();
        assert_relative_eq!(u22.value(&[s, 0.0]).unwrap(), 0.5225, max_relative = 1e-14);
        assert_relative_eq!(u22.axis_value(s), 0.5225, max_relative = 1e-14);
    }

    #[test]
    fn laplacian_is_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for (n, d) in [(2, 2), (2, 3), (3, 2), (3, 4), (4, 3)] {
            let u = field(n, d, 1e-3);
            for _ in 0..200 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let (_, _, h) = u.eval(&x).unwrap();
                assert_abs_diff_eq!(h.trace(), -1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn eps_zero_is_the_slab_torsion_function() {
        let u = field(3, 3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let want = (1.0 - x[1] * x[1] - x[2] * x[2]) / 4.0;
            assert_abs_diff_eq!(u.value(&x).unwrap(), want, epsilon = 1e-15);
            let (_, grad, _) = u.eval(&x).unwrap();
            assert_eq!(grad[0], 0.0);
        }
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let h = 1e-5;
        let u = field(2, 3, 1e-2);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.5..2.5)).collect();
            let (_, grad, hess) = u.eval(&x).unwrap();
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (u.value(&xp).unwrap() - u.value(&xm).unwrap()) / (2.0 * h);
                assert_relative_eq!(grad[j], fd, max_relative = 1e-6, epsilon = 1e-7);
                for k in 0..3 {
                    let fdh = (u.eval(&xp).unwrap().1[k] - u.eval(&xm).unwrap().1[k]) / (2.0 * h);
                    assert_relative_eq!(hess[(j, k)], fdh, max_relative = 1e-5, epsilon = 1e-7);
                }
            }
        }
    }

    #[test]
    fn plane_restriction_agrees_with_full_evaluation() {
        let u = field(3, 4, 2e-5);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let x1 = rng.gen_range(-4.0..4.0);
            let x2 = rng.gen_range(-2.0..2.0);
            let x = u.embed_plane(x1, x2);
            let (v, g, h) = u.eval(&x).unwrap();
            assert_eq!(u.plane_value(x1, x2), v);
            let pg = u.plane_gradient(x1, x2);
            assert_eq!(pg[0], g[0]);
            assert_eq!(pg[1], g[1]);
            let ph = u.plane_hessian(x1, x2);
            assert_eq!(ph[(0, 0)], h[(0, 0)]);
            assert_eq!(ph[(1, 1)], h[(1, 1)]);
            assert_eq!(ph[(0, 1)], h[(0, 1)]);
        }
    }

    #[test]
    fn hessian_tail_is_diagonal() {
        let u = field(2, 5, 1e-3);
        let (_, _, h) = u.eval(&[0.5, 0.3, 0.2, -0.7, 1.1]).unwrap();
        for j in 2..5 {
            assert_eq!(h[(j, j)], -0.25);
            for k in 0..5 {
                if k != j {
                    assert_eq!(h[(j, k)], 0.0);
                    assert_eq!(h[(k, j)], 0.0);
                }
            }
        }
    }
}
