//! Kernel regions and quantitative star-shape certificates.
//!
//! The kernel of a torsion domain is the superlevel set `{u > A0 eps^{1/n}}`.
//! Points of the kernel are candidate star centers: the domain is verified
//! star-shaped with respect to a center by checking that the outward
//! conormal pairing `-(x - xi) . grad u(x)` stays positive over boundary
//! samples. The measure of the complement `Omega \ D` relative to `Omega`
//! quantifies how far the domain is from convex; it shrinks with `eps`,
//! and [`sweep_almost_convexity`] fits the decay exponent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::StarDomain;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::Mat;
use crate::profile::HarmonicProfile;
use crate::quad;
use crate::torsion::TorsionField;

pub const DEFAULT_BOUNDARY_SAMPLES: usize = 2000;
pub const DEFAULT_KERNEL_SAMPLES: usize = 200;

/// Planar resolution of the membership oracle behind sampling and quadrature.
pub(crate) const SLICE_SPACING: f64 = 0.01;
/// Coarse quadrature spacing by dimension; one refinement halves it.
pub(crate) const GRID_SPACING_2D: f64 = 0.02;
pub(crate) const GRID_SPACING_3D: f64 = 0.05;
/// Rejection-sampling budget per requested kernel point.
const REJECTION_BUDGET: usize = 20_000;
/// Fixed seed for boundary directions above three dimensions.
const BOUNDARY_SEED: u64 = 0x5742;

// --------------------------------------------------------------------------
// Kernel region
// --------------------------------------------------------------------------

/// Superlevel set `{u > A0 eps^{1/n}}` of a torsion field.
#[derive(Debug, Clone, Serialize)]
pub struct KernelRegion {
    field: TorsionField,
    a0: f64,
    threshold: f64,
}

impl KernelRegion {
    pub fn new(field: TorsionField, a0: f64) -> Result<Self> {
        if !(a0 > 0.0) || !a0.is_finite() {
            return Err(Error::validation("kernel amplitude A0 must be positive and finite"));
        }
        if !(field.eps() > 0.0) {
            return Err(Error::validation("kernel region needs a positive perturbation size"));
        }
        let n = field.profile().points().n() as f64;
        let threshold = a0 * field.eps().powf(1.0 / n);
        Ok(KernelRegion { field, a0, threshold })
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn field(&self) -> &TorsionField {
        &self.field
    }

    /// Membership is exactly the threshold comparison `u(xi) > threshold`.
    pub fn contains(&self, xi: &[f64]) -> Result<bool> {
        Ok(self.field.value(xi)? > self.threshold)
    }
}

// --------------------------------------------------------------------------
// Measure estimates
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureMethod {
    Grid,
    MonteCarlo,
}

/// Nonnegative measure (or measure ratio) with an attached uncertainty:
/// a Richardson difference for grid quadrature, a 99 percent confidence
/// half width for Monte Carlo. The interval is truncated at zero so that
/// `value - error` is never negative.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub error: f64,
    pub method: MeasureMethod,
    pub samples: u64,
}

impl MeasureEstimate {
    pub(crate) fn new(value: f64, error: f64, method: MeasureMethod, samples: u64) -> Self {
        let value = value.max(0.0);
        MeasureEstimate { value, error: error.abs().min(value), method, samples }
    }
}

// --------------------------------------------------------------------------
// Star-point verification
// --------------------------------------------------------------------------

/// Certificate that every sampled boundary point sees the center:
/// `margin = min -(x - center) . grad u(x) > 0`.
#[derive(Debug, Clone, Serialize)]
pub struct StarPointReport {
    pub center: Vec<f64>,
    pub margin: f64,
    pub worst_point: Vec<f64>,
    pub boundary_samples: usize,
}

/// Boundary points paired with the field gradient there.
pub(crate) fn boundary_with_gradients(
    dom: &StarDomain,
    count: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let pts = dom.boundary_points(count.max(1), BOUNDARY_SEED)?;
    exec::try_map(pts.len(), |i| {
        let (_, grad, _) = dom.field().eval(&pts[i])?;
        Ok((pts[i].clone(), grad))
    })
}

pub(crate) fn star_margin(center: &[f64], boundary: &[(Vec<f64>, Vec<f64>)]) -> (f64, usize) {
    let mut worst = f64::INFINITY;
    let mut at = 0;
    for (i, (x, g)) in boundary.iter().enumerate() {
        let pairing: f64 = x.iter().zip(center).zip(g).map(|((&xi, &ci), &gi)| (xi - ci) * gi).sum();
        if -pairing < worst {
            worst = -pairing;
            at = i;
        }
    }
    (worst, at)
}

/// Verifies the star-shape inequality from a single center over sampled
/// boundary points and returns the worst margin.
pub fn verify_star_point(
    dom: &StarDomain,
    center: &[f64],
    boundary_samples: usize,
) -> Result<StarPointReport> {
    if !dom.contains(center)? {
        return Err(Error::validation(format!(
            "star center {center:?} does not lie inside the domain"
        )));
    }
    let boundary = boundary_with_gradients(dom, boundary_samples)?;
    let (margin, at) = star_margin(center, &boundary);
    if margin <= 0.0 {
        return Err(Error::structural(format!(
            "star-shape violation at boundary point {:?}: (x - center) . grad u = {:.6e}",
            boundary[at].0, -margin
        )));
    }
    Ok(StarPointReport {
        center: center.to_vec(),
        margin,
        worst_point: boundary[at].0.clone(),
        boundary_samples: boundary.len(),
    })
}

// --------------------------------------------------------------------------
// Kernel sampling
// --------------------------------------------------------------------------

/// Rejection-samples kernel points inside the domain, uniformly from the
/// a priori box. Deterministic in `seed`. Returns fewer points (possibly
/// none) when the kernel occupies too small a fraction of the box.
pub fn sample_kernel_points(
    dom: &StarDomain,
    kernel: &KernelRegion,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let slice = dom.slice_oracle(SLICE_SPACING)?;
    let d = dom.field().dimension();
    let (bx, bc) = (dom.box_x1(), dom.box_cross());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut x = vec![0.0; d];
    for _ in 0..count.saturating_mul(REJECTION_BUDGET) {
        if out.len() == count {
            break;
        }
        x[0] = bx * (2.0 * rng.gen::<f64>() - 1.0);
        for c in x.iter_mut().skip(1) {
            *c = bc * (2.0 * rng.gen::<f64>() - 1.0);
        }
        match slice.value_inside(&x) {
            Some(u) if u > kernel.threshold() => out.push(x.clone()),
            _ => {}
        }
    }
    Ok(out)
}

// --------------------------------------------------------------------------
// Amplitude selection
// --------------------------------------------------------------------------

/// Result of the dyadic amplitude scan: the smallest `A0` whose kernel is
/// nonempty and certifies the star-shape margin from every sampled point.
#[derive(Debug, Clone, Serialize)]
pub struct ChosenA0 {
    pub a0: f64,
    pub threshold: f64,
    pub margin: f64,
    pub kernel_points: usize,
    pub boundary_samples: usize,
}

pub fn choose_a0(field: &TorsionField, seed: u64) -> Result<ChosenA0> {
    choose_a0_with(field, seed, DEFAULT_KERNEL_SAMPLES, DEFAULT_BOUNDARY_SAMPLES)
}

/// Scans `A0 in {2^k : k = -3..12}` in ascending order and returns the first
/// amplitude that passes. Larger amplitudes shrink the kernel, so a pass
/// here implies a pass for every larger nonempty kernel.
pub fn choose_a0_with(
    field: &TorsionField,
    seed: u64,
    kernel_count: usize,
    boundary_count: usize,
) -> Result<ChosenA0> {
    let dom = StarDomain::new(field.clone())?;
    let boundary = boundary_with_gradients(&dom, boundary_count)?;

    // Largest field value, attained on the symmetry axis; thresholds at or
    // above it give an empty kernel and are skipped without sampling.
    let axis = field.profile().axis_critical_points()?;
    let mut sup_u = field.axis_value(0.0);
    for &s in &axis.maxima {
        sup_u = sup_u.max(field.axis_value(s));
    }

    for k in -3..=12 {
        let a0 = (2.0_f64).powi(k);
        let kernel = KernelRegion::new(field.clone(), a0)?;
        if kernel.threshold() >= sup_u {
            continue;
        }
        let points = sample_kernel_points(&dom, &kernel, kernel_count, seed ^ (k as u64) << 32)?;
        if points.is_empty() {
            continue;
        }
        let mut margin = f64::INFINITY;
        for xi in &points {
            let (m, _) = star_margin(xi, &boundary);
            margin = margin.min(m);
        }
        if margin > 0.0 {
            return Ok(ChosenA0 {
                a0,
                threshold: kernel.threshold(),
                margin,
                kernel_points: points.len(),
                boundary_samples: boundary.len(),
            });
        }
    }
    Err(Error::structural(
        "no amplitude in the dyadic grid 2^-3..2^12 certifies the star-shape margin; \
         the perturbation size is too large for this sampling density",
    ))
}

// --------------------------------------------------------------------------
// Perturbed star check
// --------------------------------------------------------------------------

/// A map of the ambient space given by value and Jacobian callbacks.
pub struct SmoothMap<'f> {
    pub value: Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + Send + 'f>,
    pub jacobian: Box<dyn Fn(&[f64]) -> Mat + Sync + Send + 'f>,
}

impl<'f> SmoothMap<'f> {
    pub fn identity(d: usize) -> Self {
        SmoothMap {
            value: Box::new(|x: &[f64]| x.to_vec()),
            jacobian: Box::new(move |_: &[f64]| Mat::identity(d)),
        }
    }

    pub fn translation(shift: Vec<f64>) -> Self {
        let d = shift.len();
        SmoothMap {
            value: Box::new(move |x: &[f64]| {
                x.iter().zip(&shift).map(|(&a, &b)| a + b).collect()
            }),
            jacobian: Box::new(move |_: &[f64]| Mat::identity(d)),
        }
    }

    /// Measured deviation from the identity over the sample set: the largest
    /// of `|phi - id|`, `|Dphi - I|` and a centered-difference estimate of
    /// the second derivative.
    pub fn deviation_from_identity(&self, points: &[Vec<f64>]) -> f64 {
        let mut dev = 0.0_f64;
        let fd = 1e-5;
        for x in points {
            let d = x.len();
            let y = (self.value)(x);
            for k in 0..d {
                dev = dev.max((y[k] - x[k]).abs());
            }
            let mut jac = (self.jacobian)(x);
            for k in 0..d {
                jac[(k, k)] -= 1.0;
            }
            dev = dev.max(jac.max_abs());
            for j in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += fd;
                xm[j] -= fd;
                let jp = (self.jacobian)(&xp);
                let jm = (self.jacobian)(&xm);
                for r in 0..d {
                    for c in 0..d {
                        dev = dev.max((jp[(r, c)] - jm[(r, c)]).abs() / (2.0 * fd));
                    }
                }
            }
        }
        dev
    }
}

/// Margins of the star-shape inequality after mapping the boundary through
/// a near-identity map. The perturbed pairing uses the transformed conormal
/// `Dphi^{-T} (-grad u)`, left unnormalized so that the identity map
/// reproduces [`verify_star_point`] margins exactly.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbedStarReport {
    pub unperturbed_margin: f64,
    pub perturbed_margin: f64,
    /// Smallest ratio of perturbed to unperturbed margin over kernel centers.
    pub margin_ratio: f64,
    pub deviation: f64,
    pub kernel_points: usize,
    pub boundary_samples: usize,
}

/// Checks `(phi(x) - xi) . nu(phi(x)) >= c0(xi) / 2` for sampled kernel
/// centers `xi` and boundary points `x`, where `c0(xi)` is the unperturbed
/// margin of `xi` over the same samples.
pub fn perturbed_star_check(
    dom: &StarDomain,
    kernel: &KernelRegion,
    map: &SmoothMap,
    delta: f64,
    seed: u64,
) -> Result<PerturbedStarReport> {
    perturbed_star_check_with(
        dom,
        kernel,
        map,
        delta,
        seed,
        DEFAULT_KERNEL_SAMPLES,
        DEFAULT_BOUNDARY_SAMPLES,
    )
}

pub fn perturbed_star_check_with(
    dom: &StarDomain,
    kernel: &KernelRegion,
    map: &SmoothMap,
    delta: f64,
    seed: u64,
    kernel_count: usize,
    boundary_count: usize,
) -> Result<PerturbedStarReport> {
    if !(delta >= 0.0) {
        return Err(Error::validation("deviation bound must be nonnegative"));
    }
    let boundary = boundary_with_gradients(dom, boundary_count)?;
    let centers = sample_kernel_points(dom, kernel, kernel_count, seed ^ 0x9e37_79b9)?;
    if centers.is_empty() {
        return Err(Error::validation(
            "kernel region is empty at this amplitude; there is nothing to verify",
        ));
    }

    let mut probe: Vec<Vec<f64>> = boundary.iter().map(|(x, _)| x.clone()).collect();
    probe.extend(centers.iter().cloned());
    let deviation = map.deviation_from_identity(&probe);
    if deviation > delta {
        return Err(Error::hypothesis(format!(
            "map deviates from the identity by {deviation:.3e}, beyond the declared bound {delta:.3e}"
        )));
    }

    mapped_margins(map, &centers, &boundary, deviation)
}

/// Core of the perturbed check: transformed conormal pairings against the
/// half-margin threshold for an explicit list of centers.
pub(crate) fn mapped_margins(
    map: &SmoothMap,
    centers: &[Vec<f64>],
    boundary: &[(Vec<f64>, Vec<f64>)],
    deviation: f64,
) -> Result<PerturbedStarReport> {
    // Image point and transformed conormal, once per boundary sample.
    let transformed = exec::try_map(boundary.len(), |i| {
        let (x, g) = &boundary[i];
        let y = (map.value)(x);
        let jt = (map.jacobian)(x).transpose();
        let neg_g: Vec<f64> = g.iter().map(|&v| -v).collect();
        let nu = jt.solve(&neg_g).ok_or_else(|| {
            Error::hypothesis(format!("map Jacobian is singular at boundary point {x:?}"))
        })?;
        Ok((y, nu))
    })?;

    let mut report = PerturbedStarReport {
        unperturbed_margin: f64::INFINITY,
        perturbed_margin: f64::INFINITY,
        margin_ratio: f64::INFINITY,
        deviation,
        kernel_points: centers.len(),
        boundary_samples: boundary.len(),
    };
    for xi in centers {
        let (c0, at) = star_margin(xi, boundary);
        if c0 <= 0.0 {
            return Err(Error::structural(format!(
                "unperturbed star-shape inequality already fails from {xi:?} at {:?}",
                boundary[at].0
            )));
        }
        let mut worst = f64::INFINITY;
        let mut worst_at = 0;
        for (i, (y, nu)) in transformed.iter().enumerate() {
            let m: f64 = y.iter().zip(xi).zip(nu).map(|((&yi, &ci), &ni)| (yi - ci) * ni).sum();
            if m < worst {
                worst = m;
                worst_at = i;
            }
        }
        if worst < 0.5 * c0 {
            return Err(Error::structural(format!(
                "perturbed star margin {worst:.6e} from {xi:?} drops below half the \
                 unperturbed margin {c0:.6e} at boundary point {:?}",
                boundary[worst_at].0
            )));
        }
        report.unperturbed_margin = report.unperturbed_margin.min(c0);
        report.perturbed_margin = report.perturbed_margin.min(worst);
        report.margin_ratio = report.margin_ratio.min(worst / c0);
    }
    Ok(report)
}

// --------------------------------------------------------------------------
// Measure ratio
// --------------------------------------------------------------------------

pub(crate) fn quadrature_box(dom: &StarDomain) -> (Vec<f64>, Vec<f64>) {
    let d = dom.field().dimension();
    let (bx, bc) = (dom.box_x1(), dom.box_cross());
    let mut lo = vec![-bc; d];
    let mut hi = vec![bc; d];
    lo[0] = -bx;
    hi[0] = bx;
    (lo, hi)
}

/// `mea(Omega \ D) / mea(Omega)` by midpoint counting at spacing `h` and
/// `h/2`; the refined value is reported with the Richardson difference as
/// its error.
pub fn grid_measure_ratio(dom: &StarDomain, kernel: &KernelRegion, h: f64) -> Result<MeasureEstimate> {
    let slice = dom.slice_oracle(SLICE_SPACING)?;
    let (lo, hi) = quadrature_box(dom);
    let thr = kernel.threshold();
    let classify = |x: &[f64]| match slice.value_inside(x) {
        Some(u) => (1.0, if u <= thr { 1.0 } else { 0.0 }),
        None => (0.0, 0.0),
    };
    let (oc, dc, _) = quad::midpoint_pair(&lo, &hi, h, &classify)?;
    let (of, df, cells) = quad::midpoint_pair(&lo, &hi, 0.5 * h, &classify)?;
    if !(of > 0.0) {
        return Err(Error::structural("domain has zero measure at quadrature resolution"));
    }
    let coarse = dc / oc.max(f64::MIN_POSITIVE);
    let fine = df / of;
    Ok(MeasureEstimate::new(fine, (fine - coarse).abs(), MeasureMethod::Grid, cells))
}

/// Monte Carlo companion of [`grid_measure_ratio`] with a 99 percent
/// confidence half width.
pub fn monte_carlo_measure_ratio(
    dom: &StarDomain,
    kernel: &KernelRegion,
    samples: u64,
    seed: u64,
) -> Result<MeasureEstimate> {
    let slice = dom.slice_oracle(SLICE_SPACING)?;
    let (lo, hi) = quadrature_box(dom);
    let thr = kernel.threshold();
    let classify = |x: &[f64]| match slice.value_inside(x) {
        Some(u) => (1.0, if u <= thr { 1.0 } else { 0.0 }),
        None => (0.0, 0.0),
    };
    let pair = quad::monte_carlo_pair(&lo, &hi, samples, seed, &classify)?;
    let (ratio, half) = pair.ratio().map_err(|_| {
        Error::structural("no Monte Carlo sample landed in the domain; its measure is zero")
    })?;
    Ok(MeasureEstimate::new(ratio, half, MeasureMethod::MonteCarlo, samples))
}

/// Relative measure of the non-kernel part of the domain. Grid quadrature
/// with one Richardson refinement up to dimension three, seeded Monte Carlo
/// with at least 10^6 samples above.
pub fn measure_ratio(dom: &StarDomain, kernel: &KernelRegion, seed: u64) -> Result<MeasureEstimate> {
    match dom.field().dimension() {
        2 => grid_measure_ratio(dom, kernel, GRID_SPACING_2D),
        3 => grid_measure_ratio(dom, kernel, GRID_SPACING_3D),
        _ => monte_carlo_measure_ratio(dom, kernel, 1_000_000, seed),
    }
}

// --------------------------------------------------------------------------
// Almost-convexity sweep
// --------------------------------------------------------------------------

/// Amplitude selection rule for sweeps: one fixed value for every `eps`,
/// or the dyadic scan per `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum A0Rule {
    Fixed(f64),
    #[default]
    Auto,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityRow {
    pub eps: f64,
    pub a0: f64,
    pub threshold: f64,
    pub ratio: f64,
    pub error: f64,
    pub samples: u64,
    pub method: MeasureMethod,
}

/// Measured decay of the non-kernel measure ratio along a decreasing list
/// of perturbation sizes.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexitySweep {
    pub rows: Vec<ConvexityRow>,
    /// Least-squares slope of `log ratio` against `log eps`.
    pub fitted_slope: f64,
    /// Exponent `1 / (2n)` that the slope is reported against.
    pub reference_exponent: f64,
    pub strictly_decreasing: bool,
}

pub fn sweep_almost_convexity(
    profile: &HarmonicProfile,
    dimension: usize,
    rule: A0Rule,
    eps_list: &[f64],
    seed: u64,
) -> Result<ConvexitySweep> {
    if eps_list.len() < 3 {
        return Err(Error::validation(
            "almost-convexity sweep needs at least three perturbation sizes",
        ));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) || eps_list.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::validation(
            "perturbation sizes must be positive and strictly decreasing",
        ));
    }

    let mut rows = Vec::with_capacity(eps_list.len());
    for (i, &eps) in eps_list.iter().enumerate() {
        let field = TorsionField::new(profile.clone(), dimension, eps)?;
        let a0 = match rule {
            A0Rule::Fixed(v) => v,
            A0Rule::Auto => choose_a0(&field, seed.wrapping_add(i as u64))?.a0,
        };
        let dom = StarDomain::new(field.clone())?;
        let kernel = KernelRegion::new(field, a0)?;
        let est = measure_ratio(&dom, &kernel, seed.wrapping_add(1000 + i as u64))?;
        rows.push(ConvexityRow {
            eps,
            a0,
            threshold: kernel.threshold(),
            ratio: est.value,
            error: est.error,
            samples: est.samples,
            method: est.method,
        });
    }

    for w in rows.windows(2) {
        if w[1].ratio > w[0].ratio + (w[0].error + w[1].error) {
            return Err(Error::structural(format!(
                "measure ratio increases from {:.6e} at eps {:.2e} to {:.6e} at eps {:.2e}, \
                 beyond the combined quadrature errors",
                w[0].ratio, w[0].eps, w[1].ratio, w[1].eps
            )));
        }
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].ratio < w[0].ratio);

    if rows.iter().any(|r| !(r.ratio > 0.0)) {
        return Err(Error::structural(
            "a measure ratio vanished at quadrature resolution; the decay slope is undefined",
        ));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.ratio)).collect();
    let n = profile.points().n() as f64;

    Ok(ConvexitySweep {
        rows,
        fitted_slope: quad::loglog_slope(&pts),
        reference_exponent: 1.0 / (2.0 * n),
        strictly_decreasing,
    })
}
