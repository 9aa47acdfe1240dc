//! The planar harmonic profile `v_n` and its axis restriction `f`.
//!
//! Given strictly increasing separation points `0 < a_1 < … < a_n`, the
//! profile is the real part of the even polynomial
//!
//! ```text
//! F(z) = -(z - a_1)(z + a_1) ··· (z - a_n)(z + a_n) = -Σ b_i z^(2i)
//! ```
//!
//! so `v_n(x_1, x_2) = Re F(x_1 + i x_2)` is harmonic, even in both
//! coordinates, and its axis restriction `f(x) = v_n(x, 0)` vanishes exactly
//! at `±a_i`. Between consecutive roots `f` alternates sign, which produces
//! `n` maxima with positive values interlaced with `n - 1` minima with
//! negative values; those heights (`d_prime`, `d_doubleprime`) control every
//! later critical-point and superlevel-set verification.
//!
//! Writing `G(w) = Σ b_i w^i` with `w = z²` gives the evaluation scheme used
//! throughout: `F = -G(z²)`, `F' = -2z G'(z²)`, `F'' = -2G'(z²) - 4z²G''(z²)`,
//! each by complex Horner. The gradient and Hessian of `v_n` then come from
//! `∂_1 v = Re F'`, `∂_2 v = -Im F'` and the corresponding second-derivative
//! identities, so the Hessian trace is zero in exact arithmetic.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Width below which a bisection bracket for a root of `f'` is accepted.
pub const ROOT_BISECTION_TOL: f64 = 1e-12;

/// Relative tolerance for the `F(±a_i) = 0` reconstruction check.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-9;

/// Strictly increasing positive separation points `a_1 < … < a_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationPoints {
    a: Vec<f64>,
}

impl SeparationPoints {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::validation("separation points must be nonempty"));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("separation points must be finite"));
        }
        if a[0] <= 0.0 {
            return Err(Error::validation(format!("a_1 = {} must be positive", a[0])));
        }
        for w in a.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::validation(format!(
                    "separation points must be strictly increasing: {} !< {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(SeparationPoints { a })
    }

    /// Default fixture `a_i = i`.
    pub fn default_for(n: usize) -> Self {
        SeparationPoints { a: (1..=n).map(|i| i as f64).collect() }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.a
    }

    /// Largest separation point `a_n`.
    pub fn outermost(&self) -> f64 {
        *self.a.last().unwrap()
    }
}

/// Coefficients `b_0..b_n` of `F(z) = -Σ b_i z^(2i)`, with `b_n = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvenPolynomial {
    b: Vec<f64>,
}

impl EvenPolynomial {
    pub fn coefficients(&self) -> &[f64] {
        &self.b
    }

    pub fn degree(&self) -> usize {
        self.b.len() - 1
    }

    /// `G(w) = Σ b_i w^i` with first and second derivatives, by Horner.
    fn g_with_derivatives(&self, w: Complex64) -> (Complex64, Complex64, Complex64) {
        let mut g = Complex64::new(0.0, 0.0);
        let mut g1 = Complex64::new(0.0, 0.0);
        let mut g2 = Complex64::new(0.0, 0.0);
        for &b in self.b.iter().rev() {
            g2 = g2 * w + g1;
            g1 = g1 * w + g;
            g = g * w + b;
        }
        // The g2 recurrence accumulates G''/2.
        (g, g1, g2 * 2.0)
    }

    /// `F(z), F'(z), F''(z)` at a complex argument.
    pub fn f_with_derivatives(&self, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let w = z * z;
        let (g, g1, g2) = self.g_with_derivatives(w);
        let f = -g;
        let f1 = -2.0 * z * g1;
        let f2 = -2.0 * g1 - 4.0 * w * g2;
        (f, f1, f2)
    }
}

/// Expands `∏ (w - a_i²)` and negates into the `F`-convention coefficients.
///
/// Accepts a single point (`n = 1`) as a degenerate utility; the profile
/// constructions themselves require `n ≥ 2`.
pub fn build_coefficients(pts: &SeparationPoints) -> EvenPolynomial {
    let mut b = vec![1.0];
    for &ai in pts.values() {
        let a2 = ai * ai;
        let mut next = vec![0.0; b.len() + 1];
        for (i, &c) in b.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * a2;
        }
        b = next;
    }
    let poly = EvenPolynomial { b };
    debug_assert!(poly.check_roots(pts).is_ok());
    poly
}

impl EvenPolynomial {
    /// Verifies that `F` vanishes at every `±a_i` (reconstruction check).
    pub fn check_roots(&self, pts: &SeparationPoints) -> Result<()> {
        let scale = self.b.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        for &ai in pts.values() {
            for sign in [-1.0, 1.0] {
                let z = Complex64::new(sign * ai, 0.0);
                let (f, _, _) = self.f_with_derivatives(z);
                if f.norm() > ROOT_RESIDUAL_TOL * scale {
                    return Err(Error::structural(format!(
                        "F({:.6}) = {:.3e}, expected a root (scale {scale:.3e})",
                        sign * ai,
                        f.norm()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The harmonic profile `v_n = Re F` with exact derivatives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicProfile {
    points: SeparationPoints,
    coeffs: EvenPolynomial,
}

impl HarmonicProfile {
    pub fn new(points: SeparationPoints) -> Result<Self> {
        if points.n() < 2 {
            return Err(Error::validation(format!(
                "profile needs n >= 2 separation points, got {}",
                points.n()
            )));
        }
        let coeffs = build_coefficients(&points);
        Ok(HarmonicProfile { points, coeffs })
    }

    /// Default fixture with `a_i = i`.
    pub fn standard(n: usize) -> Result<Self> {
        HarmonicProfile::new(SeparationPoints::default_for(n))
    }

    pub fn n(&self) -> usize {
        self.points.n()
    }

    pub fn points(&self) -> &SeparationPoints {
        &self.points
    }

    pub fn coefficients(&self) -> &EvenPolynomial {
        &self.coeffs
    }

    /// Value, gradient, and Hessian of `v_n` at `(x1, x2)`.
    ///
    /// The Hessian is the 2×2 matrix `[[Re F'', -Im F''], [-Im F'', -Re F'']]`,
    /// traceless by construction.
    pub fn eval(&self, x1: f64, x2: f64) -> (f64, [f64; 2], Mat) {
        let z = Complex64::new(x1, x2);
        let (f, f1, f2) = self.coeffs.f_with_derivatives(z);
        let grad = [f1.re, -f1.im];
        let hess = Mat::from_rows(&[vec![f2.re, -f2.im], vec![-f2.im, -f2.re]]);
        (f.re, grad, hess)
    }

    /// Axis restriction `f(x) = v_n(x, 0)` with `f'` and `f''`.
    pub fn axis(&self, x: f64) -> (f64, f64, f64) {
        let (f, f1, f2) = self.coeffs.f_with_derivatives(Complex64::new(x, 0.0));
        (f.re, f1.re, f2.re)
    }

    /// Coefficient of the monomial `x1^p x2^q` in `v_n`, by exact binomial
    /// expansion of `Re(-b_i z^(2i))`.
    ///
    /// Independent of the Horner evaluation path, so it doubles as an
    /// evaluation oracle; the structural identity here is that the
    /// coefficient of `x1^(2n-2) x2^2` equals `n(2n-1)`.
    pub fn monomial_coefficient(&self, p: usize, q: usize) -> f64 {
        if q % 2 != 0 || (p + q) % 2 != 0 {
            return 0.0;
        }
        let i = (p + q) / 2;
        if i > self.coeffs.degree() {
            return 0.0;
        }
        let sign = if (q / 2) % 2 == 0 { 1.0 } else { -1.0 };
        -self.coeffs.coefficients()[i] * sign * binomial(2 * i, q)
    }

    /// Locates all `2n - 1` roots of `f'` in `(-a_n, a_n)` and classifies
    /// them by the sign of `f''`.
    ///
    /// Sign-change bracketing on a uniform grid (at least `64 n` nodes),
    /// refined by bisection to interval width `1e-12`. If the bracket count
    /// is not `2n - 1` the grid is refined fourfold once; a second mismatch
    /// is a structural error, because the construction guarantees `2n - 1`
    /// simple roots.
    pub fn axis_critical_points(&self) -> Result<AxisCriticalProfile> {
        let n = self.n();
        let a_n = self.points.outermost();
        let expected = 2 * n - 1;
        let mut nodes = 64 * n;
        let mut roots = self.bracket_axis_roots(a_n, nodes);
        if roots.len() != expected {
            nodes *= 4;
            roots = self.bracket_axis_roots(a_n, nodes);
            if roots.len() != expected {
                return Err(Error::structural(format!(
                    "found {} axis critical points on {} nodes, expected {}",
                    roots.len(),
                    nodes,
                    expected
                )));
            }
        }

        let mut maxima = Vec::new();
        let mut minima = Vec::new();
        for &r in &roots {
            let (_, _, f2) = self.axis(r);
            if f2 < 0.0 {
                maxima.push(r);
            } else if f2 > 0.0 {
                minima.push(r);
            } else {
                return Err(Error::structural(format!(
                    "degenerate axis critical point at {r}: f'' = 0"
                )));
            }
        }
        if maxima.len() != n || minima.len() != n - 1 {
            return Err(Error::structural(format!(
                "classification mismatch: {} maxima, {} minima (expected {} and {})",
                maxima.len(),
                minima.len(),
                n,
                n - 1
            )));
        }
        // Interlacing: the sorted roots must alternate max, min, max, …
        for (k, &r) in roots.iter().enumerate() {
            let should_be_max = k % 2 == 0;
            let is_max = maxima.contains(&r);
            if should_be_max != is_max {
                return Err(Error::structural(format!(
                    "interlacing violated at root #{k} = {r}"
                )));
            }
        }

        let d_prime = maxima.iter().map(|&s| self.axis(s).0).fold(f64::INFINITY, f64::min);
        let d_doubleprime =
            -minima.iter().map(|&s| self.axis(s).0).fold(f64::NEG_INFINITY, f64::max);
        if d_prime <= 0.0 || d_doubleprime <= 0.0 {
            return Err(Error::structural(format!(
                "critical heights have wrong sign: d' = {d_prime}, d'' = {d_doubleprime}"
            )));
        }

        Ok(AxisCriticalProfile { maxima, minima, d_prime, d_doubleprime })
    }

    fn bracket_axis_roots(&self, a_n: f64, nodes: usize) -> Vec<f64> {
        // Stay strictly inside (-a_n, a_n): f' vanishes only there, and the
        // slight inset avoids bracketing the boundary zeros of f itself.
        let lo = -a_n * (1.0 - 1e-9);
        let hi = a_n * (1.0 - 1e-9);
        let h = (hi - lo) / nodes as f64;
        let fp = |x: f64| self.axis(x).1;
        let mut roots = Vec::new();
        let mut x_prev = lo;
        let mut f_prev = fp(lo);
        for k in 1..=nodes {
            let x = lo + k as f64 * h;
            let f = fp(x);
            if f == 0.0 {
                roots.push(x);
            } else if f_prev * f < 0.0 {
                roots.push(bisect(fp, x_prev, x));
            }
            x_prev = x;
            f_prev = f;
        }
        roots
    }
}

/// Bisection on a bracketing interval down to `ROOT_BISECTION_TOL`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > ROOT_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut num: u128 = 1;
    let mut den: u128 = 1;
    for i in 0..k {
        num *= (n - i) as u128;
        den *= (i + 1) as u128;
    }
    (num / den) as f64
}

/// Axis critical points of `f`, sorted ascending, with the extremal heights
/// `d_prime = min_j f(maxima_j) > 0` and `d_doubleprime = -max_j f(minima_j) > 0`.
#[derive(Debug, Clone, Serialize)]
pub struct AxisCriticalProfile {
    pub maxima: Vec<f64>,
    pub minima: Vec<f64>,
    pub d_prime: f64,
    pub d_doubleprime: f64,
}

impl AxisCriticalProfile {
    /// All roots of `f'` interleaved in ascending order.
    pub fn all_sorted(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.maxima.iter().chain(&self.minima).copied().collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent expansion oracle: convolves the quadratic factors
    /// (w - a_i²) without going through `build_coefficients`.
    fn convolve_factors(a: &[f64]) -> Vec<f64> {
        let mut c = vec![1.0];
        for &ai in a {
            let mut next = vec![0.0; c.len() + 1];
            for (i, &ci) in c.iter().enumerate() {
                next[i] -= ai * ai * ci;
                next[i + 1] += ci;
            }
            c = next;
        }
        c
    }

    /// Evaluation oracle independent of complex Horner: full monomial sum.
    fn eval_by_monomials(p: &HarmonicProfile, x1: f64, x2: f64) -> f64 {
        let n = p.n();
        let mut v = 0.0;
        for total in 0..=n {
            for q in (0..=2 * total).step_by(2) {
                let pdeg = 2 * total - q;
                v += p.monomial_coefficient(pdeg, q) * x1.powi(pdeg as i32) * x2.powi(q as i32);
            }
        }
        v
    }

    #[test]
    fn separation_points_validation() {
        assert!(SeparationPoints::new(vec![]).is_err());
        assert!(SeparationPoints::new(vec![0.0, 1.0]).is_err());
        assert!(SeparationPoints::new(vec![-1.0, 1.0]).is_err());
        assert!(SeparationPoints::new(vec![1.0, 1.0]).is_err());
        assert!(SeparationPoints::new(vec![2.0, 1.0]).is_err());
        assert!(SeparationPoints::new(vec![1.0, f64::NAN]).is_err());
        assert!(SeparationPoints::new(vec![1.0, 2.5, 3.0]).is_ok());
    }

    #[test]
    fn coefficients_single_factor() {
        let pts = SeparationPoints::new(vec![1.0]).unwrap();
        let b = build_coefficients(&pts);
        assert_eq!(b.coefficients(), &[-1.0, 1.0]);
    }

    #[test]
    fn coefficients_match_convolution_oracle() {
        for a in [vec![1.0, 2.0], vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0], vec![0.5, 1.7, 2.9]] {
            let pts = SeparationPoints::new(a.clone()).unwrap();
            let b = build_coefficients(&pts);
            let oracle = convolve_factors(&a);
            assert_eq!(b.coefficients().len(), oracle.len());
            for (got, want) in b.coefficients().iter().zip(&oracle) {
                assert_relative_eq!(got, want, max_relative = 1e-15);
            }
            assert_eq!(*b.coefficients().last().unwrap(), 1.0);
            b.check_roots(&pts).unwrap();
        }
    }

    #[test]
    fn coefficients_known_fixtures() {
        let b2 = build_coefficients(&SeparationPoints::default_for(2));
        assert_eq!(b2.coefficients(), &[4.0, -5.0, 1.0]);
        let b3 = build_coefficients(&SeparationPoints::default_for(3));
        assert_eq!(b3.coefficients(), &[-36.0, 49.0, -14.0, 1.0]);
        let b4 = build_coefficients(&SeparationPoints::default_for(4));
        assert_eq!(b4.coefficients(), &[576.0, -820.0, 273.0, -30.0, 1.0]);
    }

    #[test]
    fn profile_requires_two_points() {
        assert!(HarmonicProfile::new(SeparationPoints::new(vec![1.0]).unwrap()).is_err());
        assert!(HarmonicProfile::standard(2).is_ok());
    }

    #[test]
    fn value_fixtures_n2() {
        let p = HarmonicProfile::standard(2).unwrap();
        let (v, grad, _) = p.eval(0.0, 0.0);
        assert_eq!(v, -4.0);
        assert_eq!(grad, [0.0, 0.0]);
        // -(1 - 6 + 1) + 5·(1 - 1) - 4 = 0 at (1,1).
        let (v11, _, _) = p.eval(1.0, 1.0);
        assert_abs_diff_eq!(v11, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn horner_matches_monomial_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for n in 2..=4 {
            let p = HarmonicProfile::standard(n).unwrap();
            let a_n = n as f64;
            for _ in 0..200 {
                let x1 = rng.gen_range(-a_n..a_n);
                let x2 = rng.gen_range(-a_n..a_n);
                let (v, _, _) = p.eval(x1, x2);
                let oracle = eval_by_monomials(&p, x1, x2);
                assert_relative_eq!(v, oracle, max_relative = 1e-10, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn harmonicity_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 2..=4 {
            let p = HarmonicProfile::standard(n).unwrap();
            let a_n = n as f64;
            for _ in 0..1000 {
                let x1 = rng.gen_range(-a_n..a_n);
                let x2 = rng.gen_range(-a_n..a_n);
                let (v, _, h) = p.eval(x1, x2);
                assert!(
                    h.trace().abs() <= 1e-10 * (1.0 + v.abs()),
                    "trace {} at ({x1}, {x2})",
                    h.trace()
                );
            }
        }
    }

    #[test]
    fn evenness_in_both_coordinates() {
        let p = HarmonicProfile::standard(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x1 = rng.gen_range(-3.0..3.0);
            let x2 = rng.gen_range(-3.0..3.0);
            let v = p.eval(x1, x2).0;
            assert_eq!(v, p.eval(-x1, x2).0);
            assert_eq!(v, p.eval(x1, -x2).0);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for n in 2..=3 {
            let p = HarmonicProfile::standard(n).unwrap();
            let a_n = n as f64;
            for _ in 0..100 {
                let x1 = rng.gen_range(-a_n..a_n);
                let x2 = rng.gen_range(-a_n..a_n);
                let (_, grad, hess) = p.eval(x1, x2);
                let fd1 = (p.eval(x1 + h, x2).0 - p.eval(x1 - h, x2).0) / (2.0 * h);
                let fd2 = (p.eval(x1, x2 + h).0 - p.eval(x1, x2 - h).0) / (2.0 * h);
                assert_relative_eq!(grad[0], fd1, max_relative = 1e-6, epsilon = 1e-6);
                assert_relative_eq!(grad[1], fd2, max_relative = 1e-6, epsilon = 1e-6);
                let fd11 = (p.eval(x1 + h, x2).1[0] - p.eval(x1 - h, x2).1[0]) / (2.0 * h);
                let fd12 = (p.eval(x1, x2 + h).1[0] - p.eval(x1, x2 - h).1[0]) / (2.0 * h);
                assert_relative_eq!(hess[(0, 0)], fd11, max_relative = 1e-6, epsilon = 1e-6);
                assert_relative_eq!(hess[(0, 1)], fd12, max_relative = 1e-6, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn leading_cross_coefficient_is_n_times_2n_minus_1() {
        for n in 2..=4 {
            let p = HarmonicProfile::standard(n).unwrap();
            let c = p.monomial_coefficient(2 * n - 2, 2);
            let expect = (n * (2 * n - 1)) as f64;
            assert_eq!(c, expect, "n = {n}");
        }
    }

    #[test]
    fn axis_matches_planar_evaluation() {
        let p = HarmonicProfile::standard(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = rng.gen_range(-3.5..3.5);
            let (f, f1, f2) = p.axis(x);
            let (v, grad, hess) = p.eval(x, 0.0);
            assert_eq!(f, v);
            assert_eq!(f1, grad[0]);
            assert_eq!(f2, hess[(0, 0)]);
            assert_eq!(grad[1], 0.0);
        }
    }

    #[test]
    fn axis_zeros_at_separation_points() {
        let p = HarmonicProfile::standard(2).unwrap();
        for a in [1.0_f64, 2.0] {
            assert_abs_diff_eq!(p.axis(a).0, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.axis(-a).0, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.axis((2.5_f64).sqrt()).2, -20.0, epsilon = 1e-12);
    }

    #[test]
    fn critical_profile_n2() {
        let p = HarmonicProfile::standard(2).unwrap();
        let cp = p.axis_critical_points().unwrap();
        let s = (2.5_f64).sqrt();
        assert_eq!(cp.maxima.len(), 2);
        assert_abs_diff_eq!(cp.maxima[0], -s, epsilon = 1e-11);
        assert_abs_diff_eq!(cp.maxima[1], s, epsilon = 1e-11);
        assert_eq!(cp.minima.len(), 1);
        assert_abs_diff_eq!(cp.minima[0], 0.0, epsilon = 1e-11);
        assert_relative_eq!(cp.d_prime, 2.25, max_relative = 1e-10);
        assert_relative_eq!(cp.d_doubleprime, 4.0, max_relative = 1e-10);
    }

    #[test]
    fn critical_profile_n3() {
        let p = HarmonicProfile::standard(3).unwrap();
        let cp = p.axis_critical_points().unwrap();
        let s7 = 7.0_f64.sqrt();
        let s73 = (7.0_f64 / 3.0).sqrt();
        assert_eq!(cp.maxima.len(), 3);
        assert_abs_diff_eq!(cp.maxima[0], -s7, epsilon = 1e-10);
        assert_abs_diff_eq!(cp.maxima[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cp.maxima[2], s7, epsilon = 1e-10);
        assert_abs_diff_eq!(cp.minima[0], -s73, epsilon = 1e-10);
        assert_abs_diff_eq!(cp.minima[1], s73, epsilon = 1e-10);
        assert_relative_eq!(cp.d_prime, 36.0, max_relative = 1e-10);
        assert_relative_eq!(cp.d_doubleprime, 400.0 / 27.0, max_relative = 1e-10);
        assert_eq!(p.axis(0.0).0, 36.0);
    }

    #[test]
    fn critical_profile_n4() {
        // Frozen from a high-precision offline solve of f'(x) = 0 for
        // a = (1,2,3,4): the maxima sit at ±1.502…, ±3.678… and the origin
        // is a minimum (f(0) = -576).
        let p = HarmonicProfile::standard(4).unwrap();
        let cp = p.axis_critical_points().unwrap();
        assert_eq!(cp.maxima.len(), 4);
        assert_eq!(cp.minima.len(), 3);
        assert_abs_diff_eq!(cp.maxima[2], 1.50258562002286234, epsilon = 1e-10);
        assert_abs_diff_eq!(cp.maxima[3], 3.67868835340370486, epsilon = 1e-10);
        assert_abs_diff_eq!(cp.minima[1], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(cp.minima[2], 2.59026802725749774, epsilon = 1e-10);
        assert_relative_eq!(cp.d_prime, 203.03340411029585, max_relative = 1e-10);
        assert_relative_eq!(cp.d_doubleprime, 329.197566707645087, max_relative = 1e-10);
        assert_eq!(p.axis(0.0).0, -576.0);
        assert_relative_eq!(p.axis(0.0).2, 1640.0, max_relative = 1e-12);
    }

    #[test]
    fn critical_set_is_symmetric() {
        for n in 2..=4 {
            let p = HarmonicProfile::standard(n).unwrap();
            let cp = p.axis_critical_points().unwrap();
            let all = cp.all_sorted();
            assert_eq!(all.len(), 2 * n - 1);
            for (lo, hi) in all.iter().zip(all.iter().rev()) {
                assert_abs_diff_eq!(lo + hi, 0.0, epsilon = 1e-10);
            }
            // Interlacing inside (-a_n, a_n).
            let a_n = n as f64;
            assert!(all[0] > -a_n && *all.last().unwrap() < a_n);
            for w in all.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn irregular_spacing_still_yields_full_critical_profile() {
        let pts = SeparationPoints::new(vec![0.3, 0.45, 2.0, 7.5]).unwrap();
        let p = HarmonicProfile::new(pts).unwrap();
        let cp = p.axis_critical_points().unwrap();
        assert_eq!(cp.maxima.len(), 4);
        assert_eq!(cp.minima.len(), 3);
        assert!(cp.d_prime > 0.0 && cp.d_doubleprime > 0.0);
        for &s in &cp.maxima {
            let (_, f1, f2) = p.axis(s);
            assert_abs_diff_eq!(f1, 0.0, epsilon = 1e-6 * (1.0 + f2.abs()));
            assert!(f2 < 0.0);
        }
    }
}
