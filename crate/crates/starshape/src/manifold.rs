//! Model charts with closed-form exponential maps: rescaled normal
//! coordinates, the Laplace-Beltrami split, chart transition maps, and
//! geodesic star-shape certificates.
//!
//! Geometry enters the construction in three places and this module owns
//! all of them. In normal coordinates at scale `eta` the metric splits as
//! `eta^2 (I + h(eta x))` with `h` quadratically small; the Laplace-Beltrami
//! operator splits as `eta^{-2} (Delta - eta^2 T_eta)` with `T_eta` a
//! first/second-order perturbation whose coefficients vanish at the origin;
//! and the chart transition between nearby base points differs from a
//! translation by a second-order remainder. All three defects shrink as
//! `eta -> 0`, and the calibration sweeps here measure the rates and
//! constants instead of assuming them.
//!
//! Built-in manifolds are the constant-curvature models: flat space, the
//! sphere of curvature `kappa > 0` embedded in R^{d+1}, and hyperbolic space
//! of curvature `kappa < 0` on the hyperboloid with the Minkowski pairing.
//! Both curved models admit globally valid closed forms for exp, log,
//! parallel transport along radial geodesics, and the normal-coordinate
//! metric, so every rate claim can be checked against exact evaluations.
//! Arbitrary metrics enter through [`CustomMetric`] callbacks in normal
//! coordinates; for those the chart itself is the data and exp/log are the
//! identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::domain::{self, StarDomain};
use crate::error::{Error, Result};
use crate::exec;
use crate::kernel::{self, KernelRegion, MeasureEstimate, MeasureMethod, SmoothMap};
use crate::linalg::{self, Mat};
use crate::quad;

/// Numeric cap standing in for an unbounded chart.
const FLAT_CHART_RADIUS: f64 = 1e3;
/// Keeps sphere charts strictly inside the injectivity radius.
const SPHERE_CHART_MARGIN: f64 = 1.0 - 1e-6;
/// `cosh` overflows past roughly 709, so hyperbolic charts cap the geodesic
/// radius at 700 curvature lengths when that is tighter than the flat cap.
const HYPERBOLIC_REACH: f64 = 700.0;
/// Step factor for centered differences of fluxes and Jacobians.
const FD_STEP: f64 = 1e-6;
/// Fixed seed for the Monte Carlo fallback of the weighted measure ratio.
const MEASURE_SEED: u64 = 0x4d45_4153;

// --------------------------------------------------------------------------
// Charted manifolds
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Hyperbolic,
    Custom,
}

/// User-supplied metric in normal coordinates: `g(y)` and its coordinate
/// derivatives `dg/dy_j`. The callbacks must describe a genuine normal
/// coordinate system, in particular `g(0) = I`; the constructor checks that
/// and per-point queries verify symmetry and positivity.
pub struct CustomMetric {
    pub metric: Box<dyn Fn(&[f64]) -> Mat + Sync + Send>,
    pub metric_derivative: Box<dyn Fn(&[f64], usize) -> Mat + Sync + Send>,
}

/// A model space with one fixed normal-coordinate chart at its base point.
///
/// Sphere and hyperboloid points live in embedding coordinates in R^{d+1}
/// with the base point at `R e_{d+1}`; flat and custom manifolds identify
/// points with their chart coordinates in R^d.
pub struct ChartedManifold {
    kind: ManifoldKind,
    dimension: usize,
    kappa: f64,
    chart_radius: f64,
    custom: Option<CustomMetric>,
}

impl std::fmt::Debug for ChartedManifold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChartedManifold")
            .field("kind", &self.kind)
            .field("dimension", &self.dimension)
            .field("kappa", &self.kappa)
            .field("chart_radius", &self.chart_radius)
            .finish()
    }
}

impl ChartedManifold {
    pub fn euclidean(dimension: usize) -> Result<Self> {
        check_dimension(dimension)?;
        Ok(ChartedManifold {
            kind: ManifoldKind::Euclidean,
            dimension,
            kappa: 0.0,
            chart_radius: FLAT_CHART_RADIUS,
            custom: None,
        })
    }

    pub fn sphere(dimension: usize, kappa: f64) -> Result<Self> {
        check_dimension(dimension)?;
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::validation("sphere curvature must be positive and finite"));
        }
        Ok(ChartedManifold {
            kind: ManifoldKind::Sphere,
            dimension,
            kappa,
            chart_radius: std::f64::consts::PI / kappa.sqrt() * SPHERE_CHART_MARGIN,
            custom: None,
        })
    }

    pub fn hyperbolic(dimension: usize, kappa: f64) -> Result<Self> {
        check_dimension(dimension)?;
        if !(kappa < 0.0) || !kappa.is_finite() {
            return Err(Error::validation("hyperbolic curvature must be negative and finite"));
        }
        let reach = HYPERBOLIC_REACH / (-kappa).sqrt();
        Ok(ChartedManifold {
            kind: ManifoldKind::Hyperbolic,
            dimension,
            kappa,
            chart_radius: FLAT_CHART_RADIUS.min(reach),
            custom: None,
        })
    }

    pub fn custom(dimension: usize, metric: CustomMetric) -> Result<Self> {
        check_dimension(dimension)?;
        let g0 = (metric.metric)(&vec![0.0; dimension]);
        if g0.n != dimension {
            return Err(Error::validation("custom metric callback returns the wrong size"));
        }
        let mut dev = 0.0_f64;
        for i in 0..dimension {
            for j in 0..dimension {
                let expect = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((g0[(i, j)] - expect).abs());
            }
        }
        if dev > 1e-12 {
            return Err(Error::validation(format!(
                "custom metric is not the identity at the chart origin (deviation {dev:.3e}); \
                 the callbacks must be given in normal coordinates"
            )));
        }
        Ok(ChartedManifold {
            kind: ManifoldKind::Custom,
            dimension,
            kappa: 0.0,
            chart_radius: FLAT_CHART_RADIUS,
            custom: Some(metric),
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Curvature of the model; zero for flat and custom charts.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn chart_radius(&self) -> f64 {
        self.chart_radius
    }

    /// Curvature radius `1/sqrt(|kappa|)` of the curved models.
    fn model_radius(&self) -> f64 {
        1.0 / self.kappa.abs().sqrt()
    }

    fn check_chart(&self, r: f64) -> Result<()> {
        if r > self.chart_radius {
            return Err(Error::chart_domain(format!(
                "point at geodesic radius {r:.6e} leaves the chart (radius {:.6e})",
                self.chart_radius
            )));
        }
        Ok(())
    }

    fn check_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.dimension {
            return Err(Error::validation(format!(
                "{what} has length {}, expected the chart dimension {}",
                v.len(),
                self.dimension
            )));
        }
        Ok(())
    }

    /// Exponential map at the base point. Curved models return embedding
    /// coordinates in R^{d+1}; flat and custom charts return `v` itself.
    pub fn exp_map(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v, "tangent vector")?;
        let t = linalg::norm(v);
        self.check_chart(t)?;
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::Custom => Ok(v.to_vec()),
            ManifoldKind::Sphere => {
                let r = self.model_radius();
                let mut x = vec![0.0; self.dimension + 1];
                if t < 1e-300 {
                    x[self.dimension] = r;
                    return Ok(x);
                }
                let scale = r * (t / r).sin() / t;
                for k in 0..self.dimension {
                    x[k] = scale * v[k];
                }
                x[self.dimension] = r * (t / r).cos();
                Ok(x)
            }
            ManifoldKind::Hyperbolic => {
                let r = self.model_radius();
                let mut x = vec![0.0; self.dimension + 1];
                if t < 1e-300 {
                    x[self.dimension] = r;
                    return Ok(x);
                }
                let scale = r * (t / r).sinh() / t;
                for k in 0..self.dimension {
                    x[k] = scale * v[k];
                }
                x[self.dimension] = r * (t / r).cosh();
                Ok(x)
            }
        }
    }

    /// Inverse of [`exp_map`] at the base point.
    pub fn log_map(&self, point: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::Custom => {
                self.check_len(point, "chart point")?;
                self.check_chart(linalg::norm(point))?;
                Ok(point.to_vec())
            }
            ManifoldKind::Sphere => {
                let (d, r) = (self.dimension, self.model_radius());
                if point.len() != d + 1 {
                    return Err(Error::validation("sphere points live in d+1 coordinates"));
                }
                let norm = linalg::norm(point);
                if (norm - r).abs() > 1e-9 * r {
                    return Err(Error::validation(format!(
                        "point at distance {norm:.6e} from the center is not on the sphere \
                         of radius {r:.6e}"
                    )));
                }
                let u = &point[..d];
                let nu = linalg::norm(u);
                let theta = nu.atan2(point[d]);
                self.check_chart(r * theta)?;
                if nu < 1e-300 {
                    return Ok(vec![0.0; d]);
                }
                Ok(linalg::scale(u, r * theta / nu))
            }
            ManifoldKind::Hyperbolic => {
                let (d, r) = (self.dimension, self.model_radius());
                if point.len() != d + 1 {
                    return Err(Error::validation("hyperboloid points live in d+1 coordinates"));
                }
                let xd = point[d];
                // Scaled by X_d the constraint Q(X,X) = -R^2 reads
                // |u/X_d|^2 + (R/X_d)^2 = 1, which stays finite at any chart
                // radius; the raw quadratic form overflows past a few
                // hundred curvature lengths.
                if !(xd >= r * (1.0 - 1e-9)) || !xd.is_finite() {
                    return Err(Error::validation(
                        "point does not satisfy the hyperboloid constraint",
                    ));
                }
                let w: Vec<f64> = (0..d).map(|i| point[i] / xd).collect();
                let s = r / xd;
                if (linalg::dot(&w, &w) + s * s - 1.0).abs() > 1e-9 {
                    return Err(Error::validation(
                        "point does not satisfy the hyperboloid constraint",
                    ));
                }
                let nw = linalg::norm(&w);
                if nw < 1e-300 {
                    return Ok(vec![0.0; d]);
                }
                let q = xd * nw / r;
                // Past 1e150 the square inside asinh overflows while
                // log(2q) is already exact.
                let theta = if q > 1e150 { std::f64::consts::LN_2 + q.ln() } else { q.asinh() };
                self.check_chart(r * theta)?;
                Ok(linalg::scale(&w, r * theta / nw))
            }
        }
    }

    /// Metric `g(y)` in normal coordinates at the base point.
    pub fn metric_normal_coords(&self, y: &[f64]) -> Result<Mat> {
        self.check_len(y, "chart point")?;
        self.check_chart(linalg::norm(y))?;
        let g = self.metric_raw(y);
        if self.kind == ManifoldKind::Custom {
            let mut asym = 0.0_f64;
            for i in 0..g.n {
                for j in i + 1..g.n {
                    asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
                }
            }
            let eig = g.sym_eigenvalues();
            if asym > 1e-9 || eig[0] <= 0.0 {
                return Err(Error::validation(format!(
                    "custom metric is not symmetric positive definite at {y:?} \
                     (asymmetry {asym:.3e}, smallest eigenvalue {:.3e})",
                    eig[0]
                )));
            }
        }
        Ok(g)
    }

    /// Metric without chart or shape checks; hot paths that have already
    /// validated their sample boxes use this.
    fn metric_raw(&self, y: &[f64]) -> Mat {
        let d = self.dimension;
        match self.kind {
            ManifoldKind::Euclidean => Mat::identity(d),
            ManifoldKind::Custom => (self.custom.as_ref().unwrap().metric)(y),
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let r = linalg::norm(y);
                if r < 1e-300 {
                    return Mat::identity(d);
                }
                let sor2 = 1.0 + s_over_r_sq_minus_one(self.kappa, r);
                let mut g = Mat::zeros(d);
                for i in 0..d {
                    for j in 0..d {
                        let p = y[i] * y[j] / (r * r);
                        g[(i, j)] = p + sor2 * (((i == j) as u8) as f64 - p);
                    }
                }
                g
            }
        }
    }

    /// Inverse metric in normal coordinates, closed form for the models.
    fn inverse_metric_raw(&self, y: &[f64]) -> Result<Mat> {
        let d = self.dimension;
        match self.kind {
            ManifoldKind::Euclidean => Ok(Mat::identity(d)),
            ManifoldKind::Custom => self.metric_raw(y).inverse().ok_or_else(|| {
                Error::validation(format!("custom metric is numerically singular at {y:?}"))
            }),
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let r = linalg::norm(y);
                if r < 1e-300 {
                    return Ok(Mat::identity(d));
                }
                let sor2 = 1.0 + s_over_r_sq_minus_one(self.kappa, r);
                let inv = 1.0 / sor2;
                let mut g = Mat::zeros(d);
                for i in 0..d {
                    for j in 0..d {
                        let p = y[i] * y[j] / (r * r);
                        g[(i, j)] = p + inv * (((i == j) as u8) as f64 - p);
                    }
                }
                Ok(g)
            }
        }
    }

    /// `sqrt(det g(y))`, the normal-coordinate volume density.
    fn sqrt_det_raw(&self, y: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean => 1.0,
            ManifoldKind::Custom => self.metric_raw(y).det().max(0.0).sqrt(),
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let r = linalg::norm(y);
                if r < 1e-300 {
                    return 1.0;
                }
                let sor = s_over_r(self.kappa, r);
                sor.powi(self.dimension as i32 - 1)
            }
        }
    }

    /// `B_k(y) = (1/sqrt g) d_j (sqrt g g^{jk})`, the first-order part of the
    /// Laplace-Beltrami operator in normal coordinates. Radial closed form
    /// for the models, chain rule over the callbacks for custom metrics.
    fn divergence_raw(&self, y: &[f64]) -> Result<Vec<f64>> {
        let d = self.dimension;
        match self.kind {
            ManifoldKind::Euclidean => Ok(vec![0.0; d]),
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let r = linalg::norm(y);
                if r < 1e-300 {
                    return Ok(vec![0.0; d]);
                }
                let sor = s_over_r(self.kappa, r);
                let dsor = ds_factor(self.kappa, r);
                let dm1 = (d - 1) as f64;
                // sqrt(g) g^{jk} = phi1 P + phi2 (I - P) with phi1 = sor^{d-1},
                // phi2 = sor^{d-3}; its divergence points along y with scale
                // phi1' + (d-1)(phi1 - phi2)/r.
                let phi1p = dm1 * sor.powi(d as i32 - 2) * dsor;
                let gap = dm1 * sor.powi(d as i32 - 3) * s_over_r_sq_minus_one(self.kappa, r) / r;
                let scale = (phi1p + gap) / sor.powi(d as i32 - 1);
                Ok(y.iter().map(|&yi| scale * yi / r).collect())
            }
            ManifoldKind::Custom => {
                let cm = self.custom.as_ref().unwrap();
                let ginv = self.inverse_metric_raw(y)?;
                let mut b = vec![0.0; d];
                for j in 0..d {
                    let dg = (cm.metric_derivative)(y, j);
                    let gd = ginv.matmul(&dg);
                    let tr = gd.trace();
                    let gdg = gd.matmul(&ginv);
                    for k in 0..d {
                        b[k] += 0.5 * tr * ginv[(j, k)] - gdg[(j, k)];
                    }
                }
                Ok(b)
            }
        }
    }
}

fn check_dimension(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::validation("manifold dimension must be at least 2"));
    }
    Ok(())
}

/// Minkowski pairing with signature (+,...,+,-) on R^{d+1}.
fn minkowski(x: &[f64], y: &[f64], d: usize) -> f64 {
    let spatial: f64 = (0..d).map(|i| x[i] * y[i]).sum();
    spatial - x[d] * y[d]
}

/// `s_kappa(r)/r` where `s_kappa` is sin/sinh scaled by the curvature; the
/// series branch avoids cancellation for small arguments.
fn s_over_r(kappa: f64, r: f64) -> f64 {
    let a2 = kappa * r * r;
    if a2.abs() < 1e-8 {
        return 1.0 - a2 / 6.0 + a2 * a2 / 120.0;
    }
    if kappa > 0.0 {
        let t = kappa.sqrt() * r;
        t.sin() / t
    } else {
        let t = (-kappa).sqrt() * r;
        t.sinh() / t
    }
}

/// `(s_kappa(r)/r)^2 - 1` without cancellation near the origin.
fn s_over_r_sq_minus_one(kappa: f64, r: f64) -> f64 {
    let a2 = kappa * r * r;
    if a2.abs() < 1e-6 {
        return -a2 / 3.0 + 2.0 * a2 * a2 / 45.0;
    }
    let sor = s_over_r(kappa, r);
    sor * sor - 1.0
}

/// `(s_kappa'(r) r - s_kappa(r)) / r^2`, the radial derivative of `s/r`.
fn ds_factor(kappa: f64, r: f64) -> f64 {
    let a2 = kappa * r * r;
    if a2.abs() < 1e-8 {
        return -kappa * r / 3.0 + kappa * kappa * r * r * r / 30.0;
    }
    if kappa > 0.0 {
        let a = kappa.sqrt();
        (r * (a * r).cos() - (a * r).sin() / a) / (r * r)
    } else {
        let a = (-kappa).sqrt();
        (r * (a * r).cosh() - (a * r).sinh() / a) / (r * r)
    }
}

/// Largest round-trip defect `|log(exp(v)) - v|` over seeded random tangent
/// vectors. Sampling stays a factor 0.999 inside the chart radius; in the
/// remaining sliver next to the cut locus the log direction is legitimately
/// ill-conditioned.
pub fn roundtrip_check(m: &ChartedManifold, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::validation("round-trip check needs at least one sample"));
    }
    let d = m.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = linalg::norm(&v);
        if n < 1e-12 {
            continue;
        }
        let radius = 0.999 * m.chart_radius() * rng.gen::<f64>();
        for c in v.iter_mut() {
            *c *= radius / n;
        }
        let back = m.log_map(&m.exp_map(&v)?)?;
        for k in 0..d {
            worst = worst.max((back[k] - v[k]).abs());
        }
    }
    Ok(worst)
}

// --------------------------------------------------------------------------
// Rescaled metric and the operator split
// --------------------------------------------------------------------------

/// The chart metric viewed at scale `eta`: working coordinates `x` relate to
/// chart coordinates by `y = eta x`, and the metric becomes
/// `eta^2 (I + h(eta x))`.
pub struct RescaledMetric<'a> {
    manifold: &'a ChartedManifold,
    eta: f64,
}

/// Coefficients of `T_eta` and the volume density at one point.
#[derive(Debug, Clone)]
pub struct OperatorCoeffs {
    /// Symmetric matrix multiplying second derivatives.
    pub second_order: Mat,
    /// Vector multiplying first derivatives.
    pub first_order: Vec<f64>,
    /// `rho(x) = sqrt(det g(eta x))`, the rescaled volume density.
    pub density: f64,
}

impl<'a> RescaledMetric<'a> {
    pub fn new(manifold: &'a ChartedManifold, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::validation("scale eta must be positive and finite"));
        }
        Ok(RescaledMetric { manifold, eta })
    }

    pub fn manifold(&self) -> &ChartedManifold {
        self.manifold
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Chart coordinates of a working point, with the radius check.
    fn chart_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.manifold.check_len(x, "working point")?;
        let y = linalg::scale(x, self.eta);
        self.manifold.check_chart(linalg::norm(&y))?;
        Ok(y)
    }

    /// Errors unless every working point of radius `reach` stays in the chart.
    pub fn require_reach(&self, reach: f64) -> Result<()> {
        if self.eta * reach > self.manifold.chart_radius() {
            return Err(Error::chart_domain(format!(
                "working radius {reach:.3e} at scale eta = {:.3e} leaves the chart \
                 (radius {:.6e})",
                self.eta,
                self.manifold.chart_radius()
            )));
        }
        Ok(())
    }

    /// Full rescaled metric `eta^2 g(eta x)`.
    pub fn metric(&self, x: &[f64]) -> Result<Mat> {
        let y = self.chart_point(x)?;
        let mut g = self.manifold.metric_raw(&y);
        let s = self.eta * self.eta;
        for v in g.a.iter_mut() {
            *v *= s;
        }
        Ok(g)
    }

    /// The normalized metric `g(eta x)`, i.e. the rescaled metric over eta^2.
    pub fn normalized_metric(&self, x: &[f64]) -> Result<Mat> {
        let y = self.chart_point(x)?;
        Ok(self.manifold.metric_raw(&y))
    }

    /// Deviation `h(eta x) = g(eta x) - I`, so that the rescaled metric is
    /// `eta^2 (I + h)` exactly.
    pub fn h_matrix(&self, x: &[f64]) -> Result<Mat> {
        let mut g = self.normalized_metric(x)?;
        for i in 0..g.n {
            g[(i, i)] -= 1.0;
        }
        Ok(g)
    }

    /// Inverse of the rescaled metric, `g^{jk}(eta x) / eta^2`.
    pub fn inverse_metric(&self, x: &[f64]) -> Result<Mat> {
        let y = self.chart_point(x)?;
        let mut ginv = self.manifold.inverse_metric_raw(&y)?;
        let s = 1.0 / (self.eta * self.eta);
        for v in ginv.a.iter_mut() {
            *v *= s;
        }
        Ok(ginv)
    }

    /// `sqrt(det)` of the full rescaled metric, `eta^d sqrt(det g(eta x))`.
    pub fn sqrt_det_rescaled(&self, x: &[f64]) -> Result<f64> {
        let y = self.chart_point(x)?;
        Ok(self.eta.powi(self.manifold.dimension() as i32) * self.manifold.sqrt_det_raw(&y))
    }

    /// Volume density `rho(x) = sqrt(det g(eta x))`; the `eta^d` of the
    /// rescaled determinant cancels against the coordinate volume.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        let y = self.chart_point(x)?;
        Ok(self.manifold.sqrt_det_raw(&y))
    }

    fn density_unchecked(&self, x: &[f64]) -> f64 {
        let y = linalg::scale(x, self.eta);
        self.manifold.sqrt_det_raw(&y)
    }

    /// Coefficients of the split `Delta_g = eta^{-2} (Delta - eta^2 T_eta)`
    /// with `T_eta w = second_order : D^2 w + first_order . grad w`, plus the
    /// density. The second-order matrix is `(I - g^{jk}(eta x)) / eta^2` and
    /// both coefficient fields vanish at `x = 0`.
    pub fn operator_coeffs(&self, x: &[f64]) -> Result<OperatorCoeffs> {
        let y = self.chart_point(x)?;
        let d = self.manifold.dimension();
        let inv_eta2 = 1.0 / (self.eta * self.eta);

        let mut second = Mat::zeros(d);
        match self.manifold.kind {
            ManifoldKind::Euclidean => {}
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let r = linalg::norm(&y);
                if r >= 1e-300 {
                    // I - g^{jk} = (1 - sor^{-2})(I - P) for the models.
                    let sor2m1 = s_over_r_sq_minus_one(self.manifold.kappa, r);
                    let factor = inv_eta2 * sor2m1 / (1.0 + sor2m1);
                    for i in 0..d {
                        for j in 0..d {
                            let p = y[i] * y[j] / (r * r);
                            second[(i, j)] = factor * (((i == j) as u8) as f64 - p);
                        }
                    }
                }
            }
            ManifoldKind::Custom => {
                let ginv = self.manifold.inverse_metric_raw(&y)?;
                for i in 0..d {
                    for j in 0..d {
                        let delta = ((i == j) as u8) as f64;
                        second[(i, j)] = inv_eta2 * (delta - ginv[(i, j)]);
                    }
                }
                // The inverse of a symmetric matrix picks up roundoff skew.
                for i in 0..d {
                    for j in i + 1..d {
                        let s = 0.5 * (second[(i, j)] + second[(j, i)]);
                        second[(i, j)] = s;
                        second[(j, i)] = s;
                    }
                }
            }
        }

        let b = self.manifold.divergence_raw(&y)?;
        let first: Vec<f64> = b.iter().map(|&bk| -bk / self.eta).collect();
        Ok(OperatorCoeffs {
            second_order: second,
            first_order: first,
            density: self.manifold.sqrt_det_raw(&y),
        })
    }
}

/// Laplace-Beltrami value of a test function computed directly from the
/// divergence form `(1/sqrt G) d_j (sqrt G G^{jk} d_k w)` of the rescaled
/// metric, with the outer derivative taken by centered differences of the
/// flux. Slow reference implementation used to validate
/// [`RescaledMetric::operator_coeffs`]; `gradient` must supply exact
/// derivatives of the test function.
pub fn divergence_form_laplacian(
    rm: &RescaledMetric,
    x: &[f64],
    gradient: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<f64> {
    let d = rm.manifold().dimension();
    let step = FD_STEP * (1.0 + linalg::norm(x));
    let flux = |z: &[f64], j: usize| -> Result<f64> {
        let ginv = rm.inverse_metric(z)?;
        let sq = rm.sqrt_det_rescaled(z)?;
        let gr = gradient(z);
        Ok(sq * (0..d).map(|k| ginv[(j, k)] * gr[k]).sum::<f64>())
    };
    let mut div = 0.0;
    for j in 0..d {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += step;
        xm[j] -= step;
        div += (flux(&xp, j)? - flux(&xm, j)?) / (2.0 * step);
    }
    Ok(div / rm.sqrt_det_rescaled(x)?)
}

// --------------------------------------------------------------------------
// Chart transition maps
// --------------------------------------------------------------------------

/// Embedded data of the geodesic from the base point to `exp_p(eta xi)`:
/// the target point and the frame obtained by parallel transport of the
/// coordinate directions along it.
struct GeoData {
    q: Vec<f64>,
    frame: Vec<Vec<f64>>,
}

/// Transition between the normal chart at the base point and the normal
/// chart at `exp_p(eta xi)`, written in the transported frame:
/// `psi(y) = log_q(exp_p(y))`. It splits as `psi(y) = y - eta xi + psi2(y)`
/// with a second-order remainder `psi2`, and the rescaled map
/// `Psi(x) = x + psi2(eta x)/eta` is the near-identity perturbation that the
/// star-shape transfer works through.
pub struct TransitionMap<'a> {
    manifold: &'a ChartedManifold,
    eta: f64,
    xi: Vec<f64>,
    shift: Vec<f64>,
    geo: Option<GeoData>,
}

impl<'a> TransitionMap<'a> {
    pub fn new(manifold: &'a ChartedManifold, eta: f64, xi: &[f64]) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::validation("scale eta must be positive and finite"));
        }
        manifold.check_len(xi, "target chart center")?;
        let shift = linalg::scale(xi, eta);
        let dist = linalg::norm(&shift);
        manifold.check_chart(dist)?;

        let geo = match manifold.kind {
            ManifoldKind::Euclidean | ManifoldKind::Custom => None,
            ManifoldKind::Sphere | ManifoldKind::Hyperbolic => {
                let d = manifold.dimension();
                let r = manifold.model_radius();
                let q = manifold.exp_map(&shift)?;
                let mut frame = Vec::with_capacity(d);
                if dist < 1e-300 {
                    for j in 0..d {
                        let mut e = vec![0.0; d + 1];
                        e[j] = 1.0;
                        frame.push(e);
                    }
                } else {
                    let theta = dist / r;
                    let wh = linalg::scale(&shift, 1.0 / dist);
                    // Transport of the radial direction; perpendicular
                    // directions are constant in the embedding.
                    let mut moved = vec![0.0; d + 1];
                    for k in 0..d {
                        moved[k] = wh[k]
                            * if manifold.kind == ManifoldKind::Sphere {
                                theta.cos()
                            } else {
                                theta.cosh()
                            };
                    }
                    moved[d] = if manifold.kind == ManifoldKind::Sphere {
                        -theta.sin()
                    } else {
                        theta.sinh()
                    };
                    for j in 0..d {
                        let alpha = wh[j];
                        let mut e = vec![0.0; d + 1];
                        e[j] = 1.0;
                        for k in 0..d {
                            e[k] += alpha * (moved[k] - wh[k]);
                        }
                        e[d] = alpha * moved[d];
                        frame.push(e);
                    }
                }
                Some(GeoData { q, frame })
            }
        };
        Ok(TransitionMap { manifold, eta, xi: xi.to_vec(), shift, geo })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn center(&self) -> &[f64] {
        &self.xi
    }

    /// The transition in chart coordinates, `psi(y) = log_q(exp_p(y))`.
    pub fn psi(&self, y: &[f64]) -> Result<Vec<f64>> {
        match &self.geo {
            None => {
                self.manifold.check_len(y, "chart point")?;
                self.manifold.check_chart(linalg::norm(y))?;
                let out = linalg::sub(y, &self.shift);
                self.manifold.check_chart(linalg::norm(&out))?;
                Ok(out)
            }
            Some(geo) => {
                let x = self.manifold.exp_map(y)?;
                let (v, _, _, _) = self.log_at_target(geo, &x)?;
                Ok(v)
            }
        }
    }

    /// Remainder `psi2(y) = psi(y) - y + eta xi`; identically zero for flat
    /// and custom charts.
    pub fn second_order_part(&self, y: &[f64]) -> Result<Vec<f64>> {
        if self.geo.is_none() {
            self.manifold.check_len(y, "chart point")?;
            return Ok(vec![0.0; self.manifold.dimension()]);
        }
        let p = self.psi(y)?;
        Ok((0..p.len()).map(|k| p[k] - y[k] + self.shift[k]).collect())
    }

    /// Rescaled transition `Psi(x) = x + psi2(eta x)/eta`, a near-identity
    /// map of the working coordinates.
    pub fn rescaled(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = linalg::scale(x, self.eta);
        let r = self.second_order_part(&y)?;
        Ok((0..x.len()).map(|k| x[k] + r[k] / self.eta).collect())
    }

    /// `psi(eta x)/eta = Psi(x) - xi`: the map that carries the working
    /// domain into the chart centered at `xi`, with `xi` landing at the
    /// origin.
    pub fn domain_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.rescaled(x)?;
        Ok((0..p.len()).map(|k| p[k] - self.xi[k]).collect())
    }

    /// Jacobian of `psi` at `y`, closed form through the differentials of
    /// exp and log (radial/orthogonal Jacobi scaling in the embedding).
    pub fn psi_jacobian(&self, y: &[f64]) -> Result<Mat> {
        let d = self.manifold.dimension();
        match &self.geo {
            None => {
                self.manifold.check_len(y, "chart point")?;
                Ok(Mat::identity(d))
            }
            Some(geo) => {
                let x = self.manifold.exp_map(y)?;
                let (_, u_norm, theta, c) = self.log_at_target(geo, &x)?;
                let r = self.manifold.model_radius();
                let sphere = self.manifold.kind == ManifoldKind::Sphere;

                let mut jac = Mat::zeros(d);
                for j in 0..d {
                    let v1 = self.dexp_column(y, j);
                    let w = if theta < 1e-12 {
                        v1
                    } else {
                        // Unit log direction at q and unit geodesic tangent
                        // at x; the orthogonal part scales by theta/s(theta).
                        let mhat = linalg::scale(&u_for(&x, geo, c, d), 1.0 / u_norm);
                        let mut that = vec![0.0; d + 1];
                        for k in 0..=d {
                            that[k] = if sphere {
                                theta.cos() * mhat[k] - theta.sin() / r * geo.q[k]
                            } else {
                                theta.cosh() * mhat[k] + theta.sinh() / r * geo.q[k]
                            };
                        }
                        let beta = if sphere {
                            linalg::dot(&v1, &that)
                        } else {
                            minkowski(&v1, &that, d)
                        };
                        let fac = if sphere { theta / theta.sin() } else { theta / theta.sinh() };
                        (0..=d)
                            .map(|k| beta * mhat[k] + fac * (v1[k] - beta * that[k]))
                            .collect()
                    };
                    for i in 0..d {
                        jac[(i, j)] = if sphere {
                            linalg::dot(&w, &geo.frame[i])
                        } else {
                            minkowski(&w, &geo.frame[i], d)
                        };
                    }
                }
                Ok(jac)
            }
        }
    }

    /// Jacobian of the rescaled map; by the chain rule it equals the psi
    /// Jacobian evaluated at `eta x`.
    pub fn rescaled_jacobian(&self, x: &[f64]) -> Result<Mat> {
        self.psi_jacobian(&linalg::scale(x, self.eta))
    }

    /// The rescaled map as value/Jacobian callbacks for the perturbed star
    /// check. The callbacks panic outside the chart; validate the probe set
    /// (for example with [`RescaledMetric::require_reach`]) before use.
    pub fn smooth_map(&self) -> SmoothMap<'_> {
        SmoothMap {
            value: Box::new(move |x: &[f64]| {
                self.rescaled(x).expect("transition map evaluated outside its chart")
            }),
            jacobian: Box::new(move |x: &[f64]| {
                self.rescaled_jacobian(x).expect("transition map evaluated outside its chart")
            }),
        }
    }

    /// Log at the transported chart: frame coordinates, the norm of the
    /// tangential projection, the geodesic angle, and the projection
    /// coefficient, shared by `psi` and its Jacobian.
    fn log_at_target(&self, geo: &GeoData, x: &[f64]) -> Result<(Vec<f64>, f64, f64, f64)> {
        let d = self.manifold.dimension();
        let r = self.manifold.model_radius();
        let (c, u, theta) = match self.manifold.kind {
            ManifoldKind::Sphere => {
                let c = linalg::dot(x, &geo.q) / (r * r);
                let u = u_for(x, geo, c, d);
                let nu = linalg::norm(&u);
                (c, u, nu.atan2(c * r) )
            }
            ManifoldKind::Hyperbolic => {
                let c = -minkowski(x, &geo.q, d) / (r * r);
                let u = u_for(x, geo, c, d);
                let nu = minkowski(&u, &u, d).max(0.0).sqrt();
                (c, u, (nu / r).asinh())
            }
            _ => unreachable!(),
        };
        self.manifold.check_chart(r * theta)?;
        let nu = match self.manifold.kind {
            ManifoldKind::Sphere => linalg::norm(&u),
            _ => minkowski(&u, &u, d).max(0.0).sqrt(),
        };
        if nu < 1e-300 {
            return Ok((vec![0.0; d], nu, theta, c));
        }
        let v_embed = linalg::scale(&u, r * theta / nu);
        let coords = (0..d)
            .map(|i| match self.manifold.kind {
                ManifoldKind::Sphere => linalg::dot(&v_embed, &geo.frame[i]),
                _ => minkowski(&v_embed, &geo.frame[i], d),
            })
            .collect();
        Ok((coords, nu, theta, c))
    }

    /// Column `j` of the differential of exp at `y`, in the embedding.
    fn dexp_column(&self, y: &[f64], j: usize) -> Vec<f64> {
        let d = self.manifold.dimension();
        let r = self.manifold.model_radius();
        let sphere = self.manifold.kind == ManifoldKind::Sphere;
        let rr = linalg::norm(y);
        if rr < 1e-12 {
            let mut e = vec![0.0; d + 1];
            e[j] = 1.0;
            return e;
        }
        let alpha = y[j] / rr;
        let t = rr / r;
        // Velocity of the unit-speed radial geodesic at radius rr.
        let mut gamma = vec![0.0; d + 1];
        for k in 0..d {
            gamma[k] = y[k] / rr * if sphere { t.cos() } else { t.cosh() };
        }
        gamma[d] = if sphere { -t.sin() } else { t.sinh() };
        let sfac = if sphere { r * t.sin() / rr } else { r * t.sinh() / rr };
        let mut col = vec![0.0; d + 1];
        for k in 0..d {
            let perp = (((k == j) as u8) as f64) - alpha * y[k] / rr;
            col[k] = alpha * gamma[k] + sfac * perp;
        }
        col[d] = alpha * gamma[d];
        col
    }
}

/// Projection of an embedded point onto the tangent space at the target.
fn u_for(x: &[f64], geo: &GeoData, c: f64, d: usize) -> Vec<f64> {
    (0..=d).map(|k| x[k] - c * geo.q[k]).collect()
}

// --------------------------------------------------------------------------
// Calibration sweeps
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MetricCalibrationRow {
    pub eta: f64,
    /// `sup |h_jk(eta x)|` over the sample ball.
    pub sup_h: f64,
    /// `sup |h_jk(eta x)| / (eta |x|)^2`, the constant in the quadratic bound.
    pub h_constant: f64,
    /// `sup |rho(eta x) - 1| / eta`, the constant in the density bound.
    pub density_constant: f64,
}

/// Measured decay of the metric deviation across a scale sweep.
#[derive(Debug, Clone, Serialize)]
pub struct MetricCalibration {
    pub rows: Vec<MetricCalibrationRow>,
    /// Log-log slope of `sup_h` against `eta`; quadratic decay gives 2.
    pub h_slope: f64,
}

/// Samples `h` and the density over the ball `|x| <= radius` for each scale
/// and reports the measured constants and the decay slope.
pub fn calibrate_metric(
    m: &ChartedManifold,
    etas: &[f64],
    radius: f64,
) -> Result<MetricCalibration> {
    check_eta_sweep(etas)?;
    if !(radius > 0.0) {
        return Err(Error::validation("sample radius must be positive"));
    }
    let dirs = sample_directions(m.dimension());
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let rm = RescaledMetric::new(m, eta)?;
        rm.require_reach(radius)?;
        let per_dir = exec::map(dirs.len(), |i| {
            let mut sup_h = 0.0_f64;
            let mut hc = 0.0_f64;
            let mut dc = 0.0_f64;
            for step in 0..=40 {
                let t = radius * step as f64 / 40.0;
                let x = linalg::scale(&dirs[i], t);
                let h = rm.h_matrix(&x).expect("reach checked");
                let dev = h.max_abs();
                sup_h = sup_h.max(dev);
                if step > 0 {
                    hc = hc.max(dev / (eta * t * eta * t));
                }
                dc = dc.max((rm.density_unchecked(&x) - 1.0).abs() / eta);
            }
            (sup_h, hc, dc)
        });
        let mut row = MetricCalibrationRow {
            eta,
            sup_h: 0.0,
            h_constant: 0.0,
            density_constant: 0.0,
        };
        for (sh, hc, dc) in per_dir {
            row.sup_h = row.sup_h.max(sh);
            row.h_constant = row.h_constant.max(hc);
            row.density_constant = row.density_constant.max(dc);
        }
        rows.push(row);
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eta, r.sup_h.max(1e-300))).collect();
    Ok(MetricCalibration { rows, h_slope: quad::loglog_slope(&pts) })
}

#[derive(Debug, Clone, Serialize)]
pub struct TransitionCalibrationRow {
    pub eta: f64,
    /// `sup |Psi(x) - x|` over the sample ball: the rescaled second-order
    /// remainder `psi2(eta x)/eta`.
    pub defect_sup: f64,
    /// `sup |psi2(eta x)|`, the unrescaled remainder; equals `eta` times the
    /// rescaled defect pointwise.
    pub raw_sup: f64,
}

/// Measured decay of the transition remainder across a scale sweep.
///
/// The slope is fitted to the rescaled defect `Psi - I`, the quantity the
/// star-shape transfer bounds by `C eta`; its sup decays like `eta^2` on the
/// models. The unrescaled remainder carries one more power of `eta` and is
/// reported per row without a fit.
#[derive(Debug, Clone, Serialize)]
pub struct TransitionCalibration {
    pub rows: Vec<TransitionCalibrationRow>,
    pub defect_slope: f64,
}

pub fn calibrate_transition(
    m: &ChartedManifold,
    etas: &[f64],
    xi: &[f64],
    radius: f64,
) -> Result<TransitionCalibration> {
    check_eta_sweep(etas)?;
    if !(radius > 0.0) {
        return Err(Error::validation("sample radius must be positive"));
    }
    let dirs = sample_directions(m.dimension());
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let tm = TransitionMap::new(m, eta, xi)?;
        RescaledMetric::new(m, eta)?.require_reach(radius + linalg::norm(xi) + 0.01)?;
        let per_dir = exec::try_map(dirs.len(), |i| {
            let mut sup = 0.0_f64;
            for step in 0..=80 {
                let t = radius * step as f64 / 80.0;
                let x = linalg::scale(&dirs[i], t);
                let p = tm.rescaled(&x)?;
                let dev: f64 =
                    (0..x.len()).map(|k| (p[k] - x[k]) * (p[k] - x[k])).sum::<f64>().sqrt();
                sup = sup.max(dev);
            }
            Ok(sup)
        })?;
        let defect = per_dir.into_iter().fold(0.0_f64, f64::max);
        rows.push(TransitionCalibrationRow { eta, defect_sup: defect, raw_sup: eta * defect });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eta, r.defect_sup.max(1e-300))).collect();
    Ok(TransitionCalibration { rows, defect_slope: quad::loglog_slope(&pts) })
}

/// Sups of `|Psi - x|`, `|DPsi - I|` and a centered second difference of
/// `DPsi` over a sample set; all three are bounded by `C eta` on the models.
#[derive(Debug, Clone, Serialize)]
pub struct ClosenessReport {
    pub eta: f64,
    pub sup_value: f64,
    pub sup_first: f64,
    pub sup_second: f64,
}

impl ClosenessReport {
    pub fn max(&self) -> f64 {
        self.sup_value.max(self.sup_first).max(self.sup_second)
    }
}

/// Measures how close the rescaled transition is to the identity over the
/// ball `|x| <= radius`.
pub fn transition_closeness(
    m: &ChartedManifold,
    eta: f64,
    xi: &[f64],
    radius: f64,
) -> Result<ClosenessReport> {
    let tm = TransitionMap::new(m, eta, xi)?;
    RescaledMetric::new(m, eta)?.require_reach(radius + linalg::norm(xi) + 0.01)?;
    let dirs = sample_directions(m.dimension());
    let mut points = Vec::with_capacity(dirs.len() * 21);
    for dir in &dirs {
        for step in 0..=20 {
            points.push(linalg::scale(dir, radius * step as f64 / 20.0));
        }
    }
    closeness_over(&tm, &points)
}

fn closeness_over(tm: &TransitionMap, points: &[Vec<f64>]) -> Result<ClosenessReport> {
    let d = tm.manifold.dimension();
    let fd = 1e-5;
    let per_point = exec::try_map(points.len(), |idx| {
        let x = &points[idx];
        let p = tm.rescaled(x)?;
        let mut value = 0.0_f64;
        for k in 0..d {
            value = value.max((p[k] - x[k]).abs());
        }
        let mut jac = tm.rescaled_jacobian(x)?;
        for k in 0..d {
            jac[(k, k)] -= 1.0;
        }
        let first = jac.max_abs();
        let mut second = 0.0_f64;
        for j in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += fd;
            xm[j] -= fd;
            let jp = tm.rescaled_jacobian(&xp)?;
            let jm = tm.rescaled_jacobian(&xm)?;
            for r in 0..d {
                for c in 0..d {
                    second = second.max((jp[(r, c)] - jm[(r, c)]).abs() / (2.0 * fd));
                }
            }
        }
        Ok((value, first, second))
    })?;
    let mut report =
        ClosenessReport { eta: tm.eta, sup_value: 0.0, sup_first: 0.0, sup_second: 0.0 };
    for (v, f, s) in per_point {
        report.sup_value = report.sup_value.max(v);
        report.sup_first = report.sup_first.max(f);
        report.sup_second = report.sup_second.max(s);
    }
    Ok(report)
}

fn check_eta_sweep(etas: &[f64]) -> Result<()> {
    if etas.len() < 2 {
        return Err(Error::validation("a calibration sweep needs at least two scales"));
    }
    for w in etas.windows(2) {
        if !(w[0] > w[1] && w[1] > 0.0) {
            return Err(Error::validation("scales must be positive and strictly decreasing"));
        }
    }
    if !(etas[0].is_finite()) {
        return Err(Error::validation("scales must be finite"));
    }
    Ok(())
}

/// Direction samples for sup estimates: uniform angles in the plane, a
/// golden-angle spiral on the 2-sphere, seeded Gaussian directions above.
fn sample_directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        2 => (0..181)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / 181.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => domain::fibonacci_sphere(200),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x4449_5253);
            (0..200)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let n = linalg::norm(&v).max(1e-12);
                    linalg::scale(&v, 1.0 / n)
                })
                .collect()
        }
    }
}

// --------------------------------------------------------------------------
// Geodesic star-shape verification
// --------------------------------------------------------------------------

/// Star-shape margins of the domain pulled back to the chart centered at a
/// kernel point, with the measured deviation of the transition from the
/// identity.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicStarReport {
    pub eta: f64,
    pub center: Vec<f64>,
    /// Flat star margin `c0` of the center.
    pub unperturbed_margin: f64,
    /// Worst conormal pairing after mapping through the transition.
    pub mapped_margin: f64,
    pub margin_ratio: f64,
    pub deviation: f64,
    pub boundary_samples: usize,
}

/// Verifies that the domain, carried into the normal chart at
/// `exp_p(eta xi)`, is star-shaped with respect to that chart's origin.
///
/// The mapped domain is `psi(eta Omega)/eta = Psi(Omega) - xi`, so the
/// condition is the perturbed star check with the map `Psi` and the single
/// center `xi`: every mapped boundary pairing must keep at least half the
/// flat margin `c0(xi)`.
pub fn verify_geodesic_star(
    m: &ChartedManifold,
    dom: &StarDomain,
    kernel: &KernelRegion,
    eta: f64,
    xi: &[f64],
) -> Result<GeodesicStarReport> {
    verify_geodesic_star_with(m, dom, kernel, eta, xi, kernel::DEFAULT_BOUNDARY_SAMPLES)
}

pub fn verify_geodesic_star_with(
    m: &ChartedManifold,
    dom: &StarDomain,
    kernel: &KernelRegion,
    eta: f64,
    xi: &[f64],
    boundary_samples: usize,
) -> Result<GeodesicStarReport> {
    check_same_dimension(m, dom)?;
    if !kernel.contains(xi)? {
        return Err(Error::validation(format!(
            "center {xi:?} is not in the kernel region (threshold {:.6e})",
            kernel.threshold()
        )));
    }
    let boundary = kernel::boundary_with_gradients(dom, boundary_samples)?;
    geodesic_star_core(m, eta, xi, &boundary)
}

/// Aggregate of [`verify_geodesic_star`] over sampled kernel centers.
#[derive(Debug, Clone, Serialize)]
pub struct GeodesicStarSweep {
    pub eta: f64,
    pub centers: usize,
    pub boundary_samples: usize,
    pub min_margin_ratio: f64,
    pub max_deviation: f64,
    pub worst_center: Vec<f64>,
}

pub fn verify_geodesic_star_sampled(
    m: &ChartedManifold,
    dom: &StarDomain,
    kernel: &KernelRegion,
    eta: f64,
    count: usize,
    seed: u64,
) -> Result<GeodesicStarSweep> {
    check_same_dimension(m, dom)?;
    let centers = kernel::sample_kernel_points(dom, kernel, count, seed)?;
    verify_geodesic_star_at(m, dom, &centers, eta, kernel::DEFAULT_BOUNDARY_SAMPLES)
}

/// [`verify_geodesic_star_sampled`] over an explicit center list, so a
/// caller can run the check exactly at centers whose flat star margins it
/// has already certified.
pub fn verify_geodesic_star_at(
    m: &ChartedManifold,
    dom: &StarDomain,
    centers: &[Vec<f64>],
    eta: f64,
    boundary_samples: usize,
) -> Result<GeodesicStarSweep> {
    check_same_dimension(m, dom)?;
    if centers.is_empty() {
        return Err(Error::validation(
            "kernel region is empty at this amplitude; there is nothing to verify",
        ));
    }
    let boundary = kernel::boundary_with_gradients(dom, boundary_samples)?;
    let mut sweep = GeodesicStarSweep {
        eta,
        centers: centers.len(),
        boundary_samples: boundary.len(),
        min_margin_ratio: f64::INFINITY,
        max_deviation: 0.0,
        worst_center: centers[0].clone(),
    };
    for xi in centers {
        let report = geodesic_star_core(m, eta, xi, &boundary)?;
        if report.margin_ratio < sweep.min_margin_ratio {
            sweep.min_margin_ratio = report.margin_ratio;
            sweep.worst_center = xi.clone();
        }
        sweep.max_deviation = sweep.max_deviation.max(report.deviation);
    }
    Ok(sweep)
}

fn check_same_dimension(m: &ChartedManifold, dom: &StarDomain) -> Result<()> {
    if m.dimension() != dom.field().dimension() {
        return Err(Error::validation(format!(
            "manifold dimension {} does not match the domain dimension {}",
            m.dimension(),
            dom.field().dimension()
        )));
    }
    Ok(())
}

fn geodesic_star_core(
    m: &ChartedManifold,
    eta: f64,
    xi: &[f64],
    boundary: &[(Vec<f64>, Vec<f64>)],
) -> Result<GeodesicStarReport> {
    let tm = TransitionMap::new(m, eta, xi)?;
    let reach = boundary
        .iter()
        .map(|(x, _)| linalg::norm(x))
        .fold(0.0_f64, f64::max)
        + linalg::norm(xi)
        + 0.01;
    RescaledMetric::new(m, eta)?.require_reach(reach)?;

    // Deviation of Psi from the identity over a boundary subsample.
    let stride = (boundary.len() / 200).max(1);
    let probes: Vec<Vec<f64>> =
        boundary.iter().step_by(stride).map(|(x, _)| x.clone()).collect();
    let deviation = closeness_over(&tm, &probes)?.max();

    let (c0, at) = kernel::star_margin(xi, boundary);
    if c0 <= 0.0 {
        return Err(Error::structural(format!(
            "unperturbed star-shape inequality already fails from {xi:?} at {:?}",
            boundary[at].0
        )));
    }

    let pairings = exec::try_map(boundary.len(), |i| {
        let (x, g) = &boundary[i];
        let y = tm.domain_map(x)?;
        let jt = tm.rescaled_jacobian(x)?.transpose();
        let neg_g: Vec<f64> = g.iter().map(|&v| -v).collect();
        let nu = jt.solve(&neg_g).ok_or_else(|| {
            Error::hypothesis(format!("transition Jacobian is singular at boundary point {x:?}"))
        })?;
        Ok(linalg::dot(&y, &nu))
    })?;
    let mut worst = f64::INFINITY;
    let mut worst_at = 0;
    for (i, &p) in pairings.iter().enumerate() {
        if p < worst {
            worst = p;
            worst_at = i;
        }
    }
    if worst < 0.5 * c0 {
        return Err(Error::structural(format!(
            "mapped star margin {worst:.6e} from {xi:?} drops below half the flat margin \
             {c0:.6e} at boundary point {:?}",
            boundary[worst_at].0
        )));
    }
    Ok(GeodesicStarReport {
        eta,
        center: xi.to_vec(),
        unperturbed_margin: c0,
        mapped_margin: worst,
        margin_ratio: worst / c0,
        deviation,
        boundary_samples: boundary.len(),
    })
}

// --------------------------------------------------------------------------
// Weighted measure ratio
// --------------------------------------------------------------------------

/// Measure ratio of the non-kernel part, weighted by the volume density
/// `rho(x) = sqrt(det g(eta x))`. The `eta^d` normalization of the rescaled
/// volume form cancels between numerator and denominator, so this is the
/// manifold measure ratio of the image domain. Flat charts reproduce the
/// unweighted ratio exactly.
pub fn manifold_measure_ratio(
    m: &ChartedManifold,
    dom: &StarDomain,
    kernel: &KernelRegion,
    eta: f64,
) -> Result<MeasureEstimate> {
    check_same_dimension(m, dom)?;
    let rm = RescaledMetric::new(m, eta)?;
    let slice = dom.slice_oracle(kernel::SLICE_SPACING)?;
    let (lo, hi) = kernel::quadrature_box(dom);
    let corner = hi.iter().map(|v| v * v).sum::<f64>().sqrt();
    rm.require_reach(corner + 0.01)?;
    let thr = kernel.threshold();
    let classify = |x: &[f64]| match slice.value_inside(x) {
        Some(u) => {
            let w = rm.density_unchecked(x);
            (w, if u <= thr { w } else { 0.0 })
        }
        None => (0.0, 0.0),
    };
    match dom.field().dimension() {
        d @ (2 | 3) => {
            let h = if d == 2 { kernel::GRID_SPACING_2D } else { kernel::GRID_SPACING_3D };
            let (oc, dc, _) = quad::midpoint_pair(&lo, &hi, h, &classify)?;
            let (of, df, cells) = quad::midpoint_pair(&lo, &hi, 0.5 * h, &classify)?;
            if !(of > 0.0) {
                return Err(Error::structural(
                    "domain has zero weighted measure at quadrature resolution",
                ));
            }
            let coarse = dc / oc.max(f64::MIN_POSITIVE);
            let fine = df / of;
            Ok(MeasureEstimate::new(fine, (fine - coarse).abs(), MeasureMethod::Grid, cells))
        }
        _ => {
            let pair = quad::monte_carlo_pair(&lo, &hi, 1_000_000, MEASURE_SEED, &classify)?;
            let (ratio, half) = pair.ratio().map_err(|_| {
                Error::structural("no Monte Carlo sample landed in the domain")
            })?;
            Ok(MeasureEstimate::new(ratio, half, MeasureMethod::MonteCarlo, 1_000_000))
        }
    }
}
