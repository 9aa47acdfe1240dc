//! The star-shaped domain `Omega_eps` carved out by the torsion field.
//!
//! `Omega_eps` is the connected component of `{u_eps > 0}` containing the
//! origin. For admissible `eps` it is a bounded, star-shaped (about the
//! origin) perturbation of the slab `{|x'| < 1}` truncated near
//! `|x_1| ~ ((d-1) eps)^(-1/(2n))`, and it must fit inside the a priori box
//!
//! ```text
//! B = { |x_1| <= ((d-1) eps)^(-1/(2n)) } × { |x'| <= sqrt(2) }.
//! ```
//!
//! Everything here works through the reduced representation: `u_eps`
//! depends only on `(x_1, x_2, |x''|)`, so along a ray from the origin the
//! field value is a degree-`n` polynomial in `s = t²`. That polynomial
//! drives the radial root finding, and a Sturm-sequence count of its
//! positive roots gives a certificate when a ray never exits (the domain is
//! then unbounded and `eps` is inadmissible).

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::profile::HarmonicProfile;
use crate::torsion::TorsionField;

/// Fraction of the box diagonal used as the radial marching step.
pub const MARCH_FRACTION: f64 = 0.01;

/// Width tolerance for radial bisection.
pub const RADIAL_TOL: f64 = 1e-10;

/// Slack added to the strict transversality threshold `-1/(2(d-1))`.
pub const TRANSVERSALITY_SLACK: f64 = 1e-8;

/// Distance below which two critical-point candidates are merged.
pub const DEDUP_TOL: f64 = 1e-7;

// --------------------------------------------------------------------------
// Ray polynomials and Sturm certificates
// --------------------------------------------------------------------------

/// Evaluates an ascending-coefficient polynomial by Horner.
fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, &ci)| i as f64 * ci).collect()
}

fn poly_trim(mut c: Vec<f64>) -> Vec<f64> {
    let scale = c.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tol = 1e-14 * scale;
    while c.len() > 1 && c.last().unwrap().abs() <= tol {
        c.pop();
    }
    c
}

/// Remainder of `a / b`, coefficients ascending, `b` nonzero after trim.
fn poly_rem(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.to_vec();
    let db = b.len() - 1;
    let lead = b[db];
    while r.len() - 1 >= db && r.len() > 1 {
        let dr = r.len() - 1;
        let factor = r[dr] / lead;
        for j in 0..=db {
            r[dr - db + j] -= factor * b[j];
        }
        r.pop();
        r = poly_trim(r);
        if r.len() == 1 && r[0] == 0.0 {
            break;
        }
    }
    r
}

/// Number of distinct real roots of `p` in `(0, ∞)`, by Sturm's theorem.
///
/// Assumes `p(0) != 0`. Multiple roots collapse in the Sturm chain, so a
/// tangency counts once, which is the conservative answer for "does the ray
/// ever leave the domain".
pub fn sturm_positive_roots(p: &[f64]) -> usize {
    let p0 = poly_trim(p.to_vec());
    if p0.len() <= 1 {
        return 0;
    }
    let mut chain = vec![p0.clone(), poly_trim(poly_derivative(&p0))];
    while chain.last().unwrap().len() > 1 {
        let k = chain.len();
        let mut r = poly_rem(&chain[k - 2], &chain[k - 1]);
        if r.len() == 1 && r[0] == 0.0 {
            break;
        }
        for c in &mut r {
            *c = -*c;
        }
        chain.push(r);
    }

    let sign_changes = |signs: Vec<f64>| -> usize {
        let nonzero: Vec<f64> = signs.into_iter().filter(|s| *s != 0.0).collect();
        nonzero.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
    };
    let at_zero = sign_changes(chain.iter().map(|q| q[0].signum() * (q[0] != 0.0) as i32 as f64).collect());
    let at_inf = sign_changes(chain.iter().map(|q| q.last().unwrap().signum()).collect());
    at_zero.saturating_sub(at_inf)
}

/// Outcome of following one ray from the origin.
#[derive(Debug, Clone, Serialize)]
pub enum RayVerdict {
    /// The field crosses zero at radius `extent`.
    Bounded { extent: f64 },
    /// Certified positive on the whole ray: zero positive roots in `s`.
    Escapes,
    /// Positive out to the marching cap, but the ray polynomial does have
    /// positive roots, so the domain pokes past the verification window.
    ExitsBeyondCap { positive_roots: usize },
}

// --------------------------------------------------------------------------
// Reports
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub eps: f64,
    /// Minimum of `u` over the axis segment `|t| <= a_n` and its location.
    pub axis_min: f64,
    pub axis_argmin: f64,
    pub axis_positive: bool,
    pub bounded: bool,
    /// Direction `(theta_deg, phi_deg)` of a ray that never exits, if any.
    pub escape_witness: Option<EscapeWitness>,
    pub max_radial_extent: f64,
    pub transversal: bool,
    /// Largest value of `x · grad u` over sampled boundary points; the check
    /// requires it to stay below `-1/(2(d-1)) + slack`.
    pub worst_transversality: f64,
    pub worst_transversality_direction: (f64, f64),
    pub admissible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EscapeWitness {
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// True when the Sturm certificate shows no exit at any radius; false
    /// when the ray merely exits beyond the verification cap.
    pub certified_unbounded: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundingBoxReport {
    /// Half-length `((d-1) eps)^(-1/(2n))` of the a priori box.
    pub box_x1: f64,
    pub box_cross: f64,
    pub max_abs_x1: f64,
    pub max_cross_norm: f64,
    pub contained: bool,
    pub escape_witness: Option<EscapeWitness>,
    pub sup_u: f64,
    pub directions_sampled: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    pub threshold: f64,
    pub worst: f64,
    pub worst_direction: (f64, f64),
    pub passed: bool,
    pub boundary_points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperlevelReport {
    pub level: f64,
    pub count: usize,
    pub expected: usize,
    pub spacing: f64,
    /// Maximum of the slice field over each component, ascending in `x_1`
    /// of the component seed.
    pub component_maxima: Vec<f64>,
    /// Required lower bound `level + eps d' (1 - 1e-6)` for each maximum.
    pub height_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriticalKind {
    Maximum,
    Saddle,
    Minimum,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPoint {
    pub x: Vec<f64>,
    pub value: f64,
    pub kind: CriticalKind,
    /// Eigenvalues of the full d-dimensional Hessian, ascending.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CylinderReport {
    /// `(eps, sup |r_eps - 1|)` pairs in the order supplied.
    pub distances: Vec<(f64, f64)>,
    pub monotone_decreasing: bool,
}

// --------------------------------------------------------------------------
// The domain
// --------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StarDomain {
    field: TorsionField,
    /// Half-length of the a priori box in `x_1`.
    box_x1: f64,
    /// Radial marching cap, slightly beyond the box diagonal.
    cap: f64,
}

impl StarDomain {
    /// Requires `eps > 0` and the origin strictly inside `{u > 0}`.
    pub fn new(field: TorsionField) -> Result<Self> {
        if field.eps() <= 0.0 {
            return Err(Error::validation("domain construction needs eps > 0"));
        }
        let origin = vec![0.0; field.dimension()];
        let u0 = field.value(&origin)?;
        if u0 <= 0.0 {
            return Err(Error::validation(format!(
                "origin lies outside the domain: u(0) = {u0:.6}"
            )));
        }
        let n = field.profile().n() as f64;
        let dm1 = field.dimension() as f64 - 1.0;
        let box_x1 = (dm1 * field.eps()).powf(-1.0 / (2.0 * n));
        let a_n = field.profile().points().outermost();
        let reach = box_x1.max(2.0 * a_n);
        let cap = 1.05 * (reach * reach + 2.0).sqrt();
        Ok(StarDomain { field, box_x1, cap })
    }

    pub fn field(&self) -> &TorsionField {
        &self.field
    }

    /// Half-length of the a priori box in `x_1`: `((d-1) eps)^(-1/(2n))`.
    pub fn box_x1(&self) -> f64 {
        self.box_x1
    }

    /// Cross-sectional radius `sqrt(2)` of the a priori box.
    pub fn box_cross(&self) -> f64 {
        std::f64::consts::SQRT_2
    }

    /// Radial marching cap.
    pub fn cap(&self) -> f64 {
        self.cap
    }

    /// Collapses a d-dimensional direction to `(c1, c2, c_rho)` where
    /// `c_rho` carries all coordinates past the second.
    fn reduce_direction(&self, dir: &[f64]) -> Result<(f64, f64, f64)> {
        if dir.len() != self.field.dimension() {
            return Err(Error::validation(format!(
                "direction has {} coordinates, expected {}",
                dir.len(),
                self.field.dimension()
            )));
        }
        let norm: f64 = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::validation("direction must be a nonzero finite vector"));
        }
        let c1 = dir[0] / norm;
        let c2 = if dir.len() > 1 { dir[1] / norm } else { 0.0 };
        let crho = if dir.len() > 2 {
            dir[2..].iter().map(|c| (c / norm) * (c / norm)).sum::<f64>().sqrt()
        } else {
            0.0
        };
        Ok((c1, c2, crho))
    }

    /// Coefficients of `q(s) = u(t · dir)` with `s = t²`, ascending.
    fn ray_polynomial(&self, c1: f64, c2: f64, crho: f64) -> Vec<f64> {
        let h = self.field.slab_height();
        let b = self.field.profile().coefficients().coefficients();
        let n = b.len() - 1;
        let mut q = vec![0.0; n + 1];
        q[0] = h - self.field.eps() * b[0];
        q[1] -= h * (c2 * c2 + crho * crho);
        let zc = Complex64::new(c1, c2);
        let z2 = zc * zc;
        let mut p = Complex64::new(1.0, 0.0);
        for (i, &bi) in b.iter().enumerate().skip(1) {
            p *= z2;
            q[i] -= self.field.eps() * bi * p.re;
        }
        q
    }

    /// Follows one reduced ray: marches in `t` and bisects the first sign
    /// change, or classifies the failure via the Sturm certificate.
    fn follow_ray(&self, c1: f64, c2: f64, crho: f64) -> RayVerdict {
        let q = self.ray_polynomial(c1, c2, crho);
        let step = MARCH_FRACTION * 2.0 * (self.box_x1 * self.box_x1 + 2.0).sqrt();
        let mut t = step;
        let mut t_prev = 0.0;
        while t <= self.cap {
            if poly_eval(&q, t * t) <= 0.0 {
                let extent = bisect_root(|x| poly_eval(&q, x * x), t_prev, t);
                return RayVerdict::Bounded { extent };
            }
            t_prev = t;
            t += step;
        }
        let roots = sturm_positive_roots(&q);
        if roots == 0 {
            RayVerdict::Escapes
        } else {
            RayVerdict::ExitsBeyondCap { positive_roots: roots }
        }
    }

    /// Distance from the origin to the boundary along `dir`.
    ///
    /// Errors when the ray never crosses zero inside the marching cap; for
    /// an admissible `eps` that cannot happen.
    pub fn radial_extent(&self, dir: &[f64]) -> Result<f64> {
        let (c1, c2, crho) = self.reduce_direction(dir)?;
        match self.follow_ray(c1, c2, crho) {
            RayVerdict::Bounded { extent } => Ok(extent),
            RayVerdict::Escapes => Err(Error::structural(format!(
                "ray ({c1:.4}, {c2:.4}, {crho:.4}) stays positive at every radius; domain unbounded"
            ))),
            RayVerdict::ExitsBeyondCap { .. } => Err(Error::structural(format!(
                "ray ({c1:.4}, {c2:.4}, {crho:.4}) stays positive out to the cap {:.3}",
                self.cap
            ))),
        }
    }

    /// Star-shaped membership test by radial comparison.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.field.dimension() {
            return Err(Error::validation(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.field.dimension()
            )));
        }
        let r: f64 = x.iter().map(|c| c * c).sum::<f64>().sqrt();
        if r == 0.0 {
            return Ok(true);
        }
        Ok(r < self.radial_extent(x)?)
    }

    /// Direction grid on the reduced `(theta, phi)` space. `phi = 0` is the
    /// `(x_1, x_2)` plane; positive `phi` tilts into `|x''|`.
    fn direction_grid(&self, n_theta: usize, n_phi: usize) -> Vec<(f64, f64)> {
        let mut dirs = Vec::new();
        for k in 0..n_theta {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_theta as f64;
            dirs.push((theta, 0.0));
        }
        if self.field.dimension() >= 3 {
            for j in 1..=n_phi {
                let phi = std::f64::consts::FRAC_PI_2 * j as f64 / n_phi as f64;
                for k in 0..n_theta {
                    let theta = 2.0 * std::f64::consts::PI * k as f64 / n_theta as f64;
                    dirs.push((theta, phi));
                }
            }
        }
        dirs
    }

    fn reduced_components(theta: f64, phi: f64) -> (f64, f64, f64) {
        (theta.cos() * phi.cos(), theta.sin() * phi.cos(), phi.sin())
    }

    /// Runs the three admissibility checks: positivity of `u` on the axis
    /// segment `|t| <= a_n`, boundedness of the origin component, and
    /// uniform transversality of the radial field on the boundary.
    pub fn check_epsilon_admissible(&self) -> Result<AdmissibilityReport> {
        let a_n = self.field.profile().points().outermost();

        // (a) axis positivity, dense sampling of a smooth 1-d function
        let m = 4096;
        let mut axis_min = f64::INFINITY;
        let mut axis_argmin = 0.0;
        for k in 0..=m {
            let t = -a_n + 2.0 * a_n * k as f64 / m as f64;
            let v = self.field.axis_value(t);
            if v < axis_min {
                axis_min = v;
                axis_argmin = t;
            }
        }
        let axis_positive = axis_min > 0.0;

        // (b) boundedness and (c) transversality share one direction scan
        let n_theta = 3600;
        let n_phi = if self.field.dimension() >= 3 { 60 } else { 0 };
        let dirs = self.direction_grid(n_theta, n_phi);
        let verdicts = exec::map(dirs.len(), |i| {
            let (theta, phi) = dirs[i];
            let (c1, c2, crho) = Self::reduced_components(theta, phi);
            (dirs[i], self.follow_ray(c1, c2, crho))
        });

        let mut bounded = true;
        let mut escape_witness: Option<EscapeWitness> = None;
        let mut max_extent = 0.0_f64;
        let mut worst_trans = f64::NEG_INFINITY;
        let mut worst_dir = (0.0, 0.0);
        for ((theta, phi), verdict) in &verdicts {
            match verdict {
                RayVerdict::Bounded { extent } => {
                    max_extent = max_extent.max(*extent);
                    let (c1, c2, crho) = Self::reduced_components(*theta, *phi);
                    let q = self.ray_polynomial(c1, c2, crho);
                    let s = extent * extent;
                    let radial = 2.0 * s * poly_eval(&poly_derivative(&q), s);
                    if radial > worst_trans {
                        worst_trans = radial;
                        worst_dir = (theta.to_degrees(), phi.to_degrees());
                    }
                }
                RayVerdict::Escapes => {
                    // A certified escape is the strongest witness; keep the
                    // first one found and never downgrade it.
                    if escape_witness.as_ref().map_or(true, |w| !w.certified_unbounded) {
                        escape_witness = Some(EscapeWitness {
                            theta_deg: theta.to_degrees(),
                            phi_deg: phi.to_degrees(),
                            certified_unbounded: true,
                        });
                    }
                    bounded = false;
                }
                RayVerdict::ExitsBeyondCap { .. } => {
                    if escape_witness.is_none() {
                        escape_witness = Some(EscapeWitness {
                            theta_deg: theta.to_degrees(),
                            phi_deg: phi.to_degrees(),
                            certified_unbounded: false,
                        });
                    }
                    bounded = false;
                }
            }
        }

        let threshold = -self.field.slab_height() + TRANSVERSALITY_SLACK;
        let transversal = bounded && worst_trans <= threshold;
        let admissible = axis_positive && bounded && transversal;
        Ok(AdmissibilityReport {
            eps: self.field.eps(),
            axis_min,
            axis_argmin,
            axis_positive,
            bounded,
            escape_witness,
            max_radial_extent: max_extent,
            transversal,
            worst_transversality: worst_trans,
            worst_transversality_direction: worst_dir,
            admissible,
        })
    }

    /// Samples at least `samples` boundary directions, reports the extreme
    /// extents against the a priori box, and the sup of `u` over the rays.
    pub fn verify_bounding_box(&self, samples: usize) -> Result<BoundingBoxReport> {
        let samples = samples.max(10_000);
        let d = self.field.dimension();
        let (n_theta, n_phi) = if d == 2 {
            (samples, 0)
        } else {
            let np = ((samples as f64).sqrt() / 2.0).ceil() as usize;
            (samples.div_ceil(np + 1).max(360), np)
        };
        let dirs = self.direction_grid(n_theta, n_phi);

        let rows = exec::map(dirs.len(), |i| {
            let (theta, phi) = dirs[i];
            let (c1, c2, crho) = Self::reduced_components(theta, phi);
            let verdict = self.follow_ray(c1, c2, crho);
            match verdict {
                RayVerdict::Bounded { extent } => {
                    let q = self.ray_polynomial(c1, c2, crho);
                    let mut sup = 0.0_f64;
                    for j in 0..=16 {
                        let t = extent * j as f64 / 16.0;
                        sup = sup.max(poly_eval(&q, t * t).abs());
                    }
                    let cross = (c2 * c2 + crho * crho).sqrt();
                    Ok(((extent * c1).abs(), extent * cross, sup))
                }
                _ => Err((theta, phi, matches!(verdict, RayVerdict::Escapes))),
            }
        });

        let mut max_x1 = 0.0_f64;
        let mut max_cross = 0.0_f64;
        let mut sup_u = 0.0_f64;
        let mut witness = None;
        for row in rows {
            match row {
                Ok((x1, cross, sup)) => {
                    max_x1 = max_x1.max(x1);
                    max_cross = max_cross.max(cross);
                    sup_u = sup_u.max(sup);
                }
                Err((theta, phi, certified)) => {
                    if witness.is_none() {
                        witness = Some(EscapeWitness {
                            theta_deg: theta.to_degrees(),
                            phi_deg: phi.to_degrees(),
                            certified_unbounded: certified,
                        });
                    }
                }
            }
        }
        // Interior maxima can slightly exceed any on-ray sample; the axis
        // values at the profile maxima are exact.
        if let Ok(cp) = self.field.profile().axis_critical_points() {
            for &s in &cp.maxima {
                sup_u = sup_u.max(self.field.axis_value(s).abs());
            }
        }

        let contained =
            witness.is_none() && max_x1 <= self.box_x1 && max_cross <= self.box_cross();
        Ok(BoundingBoxReport {
            box_x1: self.box_x1,
            box_cross: self.box_cross(),
            max_abs_x1: max_x1,
            max_cross_norm: max_cross,
            contained,
            escape_witness: witness,
            sup_u,
            directions_sampled: dirs.len(),
        })
    }

    /// Checks `x · grad u <= -1/(2(d-1)) + slack` over sampled boundary
    /// points. Errors when a sampled ray never reaches the boundary.
    pub fn verify_transversality(&self, samples: usize) -> Result<TransversalityReport> {
        let samples = samples.max(3600);
        let d = self.field.dimension();
        let (n_theta, n_phi) =
            if d == 2 { (samples, 0) } else { (samples.div_ceil(49).max(360), 48) };
        let dirs = self.direction_grid(n_theta, n_phi);
        let rows = exec::try_map(dirs.len(), |i| {
            let (theta, phi) = dirs[i];
            let (c1, c2, crho) = Self::reduced_components(theta, phi);
            match self.follow_ray(c1, c2, crho) {
                RayVerdict::Bounded { extent } => {
                    let q = self.ray_polynomial(c1, c2, crho);
                    let s = extent * extent;
                    Ok(2.0 * s * poly_eval(&poly_derivative(&q), s))
                }
                _ => Err(Error::structural(format!(
                    "no boundary point along theta = {:.2} deg, phi = {:.2} deg",
                    theta.to_degrees(),
                    phi.to_degrees()
                ))),
            }
        })?;

        let mut worst = f64::NEG_INFINITY;
        let mut worst_dir = (0.0, 0.0);
        for (i, &r) in rows.iter().enumerate() {
            if r > worst {
                worst = r;
                worst_dir = (dirs[i].0.to_degrees(), dirs[i].1.to_degrees());
            }
        }
        let threshold = -self.field.slab_height() + TRANSVERSALITY_SLACK;
        Ok(TransversalityReport {
            threshold,
            worst,
            worst_direction: worst_dir,
            passed: worst <= threshold,
            boundary_points: rows.len(),
        })
    }

    /// Window that must contain the whole planar slice of a bounded domain.
    fn slice_window(&self) -> (f64, f64) {
        let a_n = self.field.profile().points().outermost();
        let xw = 1.05 * self.box_x1.max(2.0 * a_n);
        let yw = 1.05 * std::f64::consts::SQRT_2;
        (xw, yw)
    }

    /// Counts the connected components of the planar slice of
    /// `{u > 1/(2(d-1))}` inside the origin component of the domain.
    ///
    /// Flood fill at spacing `min(0.01, a_1/50)`; the count must be stable
    /// under one halving of the spacing, every component must clear the
    /// height threshold `level + eps d'(1 - 1e-6)`, and neither the slice
    /// domain nor any component may touch the window edge.
    pub fn count_superlevel_components(&self) -> Result<SuperlevelReport> {
        let a1 = self.field.profile().points().values()[0];
        let spacing = (0.01_f64).min(a1 / 50.0);
        let level = self.field.slab_height();
        let cp = self.field.profile().axis_critical_points()?;
        let threshold = level + self.field.eps() * cp.d_prime * (1.0 - 1e-6);

        let coarse = self.superlevel_pass(spacing, level, &cp)?;
        let fine = self.superlevel_pass(spacing / 2.0, level, &cp)?;
        if coarse.0 != fine.0 {
            return Err(Error::resolution(format!(
                "superlevel component count unstable under refinement: {} at h = {spacing}, {} at h/2",
                coarse.0, fine.0
            )));
        }
        let (count, component_maxima) = fine;
        for &m in &component_maxima {
            if m <= threshold {
                return Err(Error::structural(format!(
                    "superlevel component peaks at {m:.8}, below the required {threshold:.8}"
                )));
            }
        }
        Ok(SuperlevelReport {
            level,
            count,
            expected: self.field.profile().n(),
            spacing: spacing / 2.0,
            component_maxima,
            height_threshold: threshold,
        })
    }

    fn superlevel_pass(
        &self,
        h: f64,
        level: f64,
        cp: &crate::profile::AxisCriticalProfile,
    ) -> Result<(usize, Vec<f64>)> {
        let (xw, yw) = self.slice_window();
        let grid = PlaneGrid::domain_slice(&self.field, xw, yw, h)?;
        let m0 = grid.origin_component()?;

        let above: Vec<bool> = (0..grid.len())
            .map(|i| m0.membership[i] && grid.values[i] > level)
            .collect();
        let comps = grid.components(&above);
        let mut maxima = Vec::new();
        let mut seeds = Vec::new();
        for comp in &comps {
            if comp.touches_edge {
                return Err(Error::structural(
                    "a superlevel component reaches the verification window edge",
                ));
            }
            let mut cmax = comp.max_value;
            // Exact polish: an axis maximum inside the component beats any
            // grid sample of a sharply peaked polynomial.
            for &s in &cp.maxima {
                if let Some(idx) = grid.nearest_index(s, 0.0) {
                    if comp.membership[idx] {
                        cmax = cmax.max(self.field.axis_value(s));
                    }
                }
            }
            maxima.push(cmax);
            seeds.push(comp.seed_x);
        }
        let mut order: Vec<usize> = (0..maxima.len()).collect();
        order.sort_by(|&i, &j| seeds[i].partial_cmp(&seeds[j]).unwrap());
        Ok((comps.len(), order.into_iter().map(|i| maxima[i]).collect()))
    }

    /// Finds every critical point of `u` inside the origin component.
    ///
    /// Newton iteration on the planar gradient with its analytic Jacobian,
    /// seeded at the axis critical points and on a sweep grid across the
    /// slice window. Converged points are kept when they lie in the origin
    /// component, deduplicated at `1e-7`, and classified through the exact
    /// d-dimensional Hessian. The construction promises exactly `2n - 1`
    /// points; any other outcome is a structural error that lists what was
    /// found.
    pub fn find_critical_points(&self) -> Result<Vec<CriticalPoint>> {
        let (xw, yw) = self.slice_window();
        let grid = PlaneGrid::domain_slice(&self.field, xw, yw, 0.01)?;
        // Enumerate inside the window even when the component escapes it;
        // the escape is reported after the sweep so the error can list
        // whatever was found inside.
        let m0 = grid.origin_component_lenient()?;

        let cp = self.field.profile().axis_critical_points()?;
        let mut seeds: Vec<(f64, f64)> = cp.all_sorted().iter().map(|&s| (s, 0.0)).collect();
        let sweep_x = 200;
        let sweep_y = 50;
        for i in 0..=sweep_x {
            let x = -xw + 2.0 * xw * i as f64 / sweep_x as f64;
            for j in 0..=sweep_y {
                let y = -yw + 2.0 * yw * j as f64 / sweep_y as f64;
                if grid.nearest_index(x, y).map(|k| m0.membership[k]).unwrap_or(false) {
                    seeds.push((x, y));
                }
            }
        }

        let found = exec::map(seeds.len(), |i| self.newton_plane(seeds[i].0, seeds[i].1, xw, yw));
        let mut points: Vec<(f64, f64)> = Vec::new();
        for root in found.into_iter().flatten() {
            let inside = self.field.plane_value(root.0, root.1) > 0.0
                && grid
                    .nearest_index(root.0, root.1)
                    .map(|k| m0.membership[k])
                    .unwrap_or(false);
            if !inside {
                continue;
            }
            if !points.iter().any(|p| (p.0 - root.0).hypot(p.1 - root.1) < DEDUP_TOL) {
                points.push(root);
            }
        }
        points.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());

        let classified: Vec<CriticalPoint> =
            points.iter().map(|&(x1, x2)| self.classify_critical(x1, x2)).collect::<Result<_>>()?;

        let listing = |pts: &[CriticalPoint]| {
            pts.iter()
                .map(|p| format!("({:.6}, {:.6}) {:?}", p.x[0], p.x[1], p.kind))
                .collect::<Vec<_>>()
                .join(", ")
        };
        if m0.touches_edge {
            return Err(Error::structural(format!(
                "origin component leaves the verification window, so the enumeration cannot be \
                 certified complete; {} critical points found inside: [{}]",
                classified.len(),
                listing(&classified)
            )));
        }
        let expected = 2 * self.field.profile().n() - 1;
        if classified.len() != expected {
            return Err(Error::structural(format!(
                "found {} critical points, construction promises {expected}: [{}]",
                classified.len(),
                listing(&classified)
            )));
        }
        Ok(classified)
    }

    fn newton_plane(&self, mut x: f64, mut y: f64, xw: f64, yw: f64) -> Option<(f64, f64)> {
        for _ in 0..60 {
            let g = self.field.plane_gradient(x, y);
            let h = self.field.plane_hessian(x, y);
            let (dx, dy) =
                crate::linalg::solve2(h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)], -g[0], -g[1])?;
            x += dx;
            y += dy;
            if !x.is_finite() || !y.is_finite() || x.abs() > 1.5 * xw || y.abs() > 1.5 * yw {
                return None;
            }
            if dx.hypot(dy) <= 1e-13 * (1.0 + x.abs() + y.abs()) {
                let g = self.field.plane_gradient(x, y);
                if g[0].abs().max(g[1].abs()) < 1e-10 {
                    return Some((x, y));
                }
                return None;
            }
        }
        None
    }

    fn classify_critical(&self, x1: f64, x2: f64) -> Result<CriticalPoint> {
        let d = self.field.dimension();
        let x = self.field.embed_plane(x1, x2);
        let (value, _, hess) = self.field.eval(&x)?;
        let a = hess[(0, 0)];
        let b = hess[(0, 1)];
        let c = hess[(1, 1)];
        let mean = 0.5 * (a + c);
        let disc = (0.5 * (a - c)).hypot(b);
        let mut eigs = vec![mean - disc, mean + disc];
        for _ in 2..d {
            eigs.push(-1.0 / (d as f64 - 1.0));
        }
        eigs.sort_by(|p, q| p.partial_cmp(q).unwrap());

        let scale = eigs.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
        if eigs.iter().any(|e| e.abs() <= 1e-12 * (1.0 + scale)) {
            return Err(Error::structural(format!(
                "degenerate Hessian at ({x1:.8}, {x2:.8}): eigenvalues {eigs:?}"
            )));
        }
        let negs = eigs.iter().filter(|e| **e < 0.0).count();
        let kind = if negs == d {
            CriticalKind::Maximum
        } else if negs == 0 {
            CriticalKind::Minimum
        } else {
            CriticalKind::Saddle
        };
        Ok(CriticalPoint { x, value, kind, eigenvalues: eigs })
    }

    /// Deterministic boundary sample points: uniform angles for `d = 2`, a
    /// Fibonacci sphere for `d = 3`, seeded Gaussian directions above that.
    ///
    /// Errors when any sampled ray fails to reach the boundary, which is
    /// exactly the inadmissible-`eps` situation.
    pub fn boundary_points(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let d = self.field.dimension();
        let dirs: Vec<Vec<f64>> = match d {
            2 => (0..count)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect(),
            3 => fibonacci_sphere(count),
            _ => {
                use rand::SeedableRng;
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                (0..count)
                    .map(|_| {
                        loop {
                            let v: Vec<f64> =
                                (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                            let norm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                            if norm > 1e-6 {
                                return v.into_iter().map(|c| c / norm).collect();
                            }
                        }
                    })
                    .collect()
            }
        };
        exec::try_map(dirs.len(), |i| {
            let r = self.radial_extent(&dirs[i])?;
            Ok(dirs[i].iter().map(|c| c * r).collect())
        })
    }

    /// Exact-component membership oracle at planar resolution `h`.
    ///
    /// Errors when the planar slice leaves the verification window, because
    /// then the origin component is not confined and no quadrature over the
    /// a priori box is meaningful.
    pub fn slice_oracle(&self, h: f64) -> Result<DomainSlice> {
        let (xw, yw) = self.slice_window();
        let grid = PlaneGrid::domain_slice(&self.field, xw, yw, h)?;
        let comp = grid.origin_component()?;
        Ok(DomainSlice {
            field: self.field.clone(),
            nx: grid.nx,
            ny: grid.ny,
            x0: grid.x0,
            y0: grid.y0,
            h: grid.h,
            m0: comp.membership,
        })
    }

    /// Checks the index identity `sum sign(det Hess) = (-1)^d` over a full
    /// set of nondegenerate critical points.
    pub fn poincare_hopf_check(&self, points: &[CriticalPoint]) -> Result<()> {
        let d = self.field.dimension();
        let mut total = 0_i64;
        for p in points {
            let negs = p.eigenvalues.iter().filter(|e| **e < 0.0).count();
            total += if negs % 2 == 0 { 1 } else { -1 };
        }
        let want = if d % 2 == 0 { 1 } else { -1 };
        if total != want {
            return Err(Error::structural(format!(
                "index sum {total} over {} critical points, expected {want}",
                points.len()
            )));
        }
        Ok(())
    }
}

/// Bisection for a bracketed sign change, to width `RADIAL_TOL`.
fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    while hi - lo > RADIAL_TOL {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sup-distance of the domain sections over `|x_1| <= 1` from the unit
/// cylinder, for each `eps` supplied; admissibility of every `eps` in the
/// list is assumed checked by the caller.
pub fn cylinder_convergence(
    profile: &HarmonicProfile,
    d: usize,
    eps_list: &[f64],
) -> Result<CylinderReport> {
    if eps_list.is_empty() {
        return Err(Error::validation("need at least one eps"));
    }
    let n_sections = 41;
    let n_angles = if d == 2 { 1 } else { 25 };
    let mut distances = Vec::new();
    for &eps in eps_list {
        let field = TorsionField::new(profile.clone(), d, eps)?;
        let mut worst = 0.0_f64;
        for i in 0..n_sections {
            let x1 = -1.0 + 2.0 * i as f64 / (n_sections - 1) as f64;
            for j in 0..n_angles {
                let alpha = if n_angles == 1 {
                    0.0
                } else {
                    std::f64::consts::FRAC_PI_2 * j as f64 / (n_angles - 1) as f64
                };
                // Cross-sectional profile g(r) = u(x1, r cos a, r sin a, 0, …)
                let g = |r: f64| field.plane_value(x1, r * alpha.cos())
                    - (r * alpha.sin()).powi(2) / (2.0 * (d as f64 - 1.0));
                if g(0.0) <= 0.0 {
                    return Err(Error::structural(format!(
                        "section x1 = {x1:.3} is empty at eps = {eps}"
                    )));
                }
                let mut r = 0.0;
                let mut found = None;
                while r < 2.0 {
                    let next = r + 0.01;
                    if g(next) <= 0.0 {
                        found = Some(bisect_root(g, r, next));
                        break;
                    }
                    r = next;
                }
                let r_eps = found.ok_or_else(|| {
                    Error::structural(format!(
                        "section x1 = {x1:.3}, angle {:.1} deg has radius beyond 2 at eps = {eps}",
                        alpha.to_degrees()
                    ))
                })?;
                worst = worst.max((r_eps - 1.0).abs());
            }
        }
        distances.push((eps, worst));
    }
    let monotone = distances.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(CylinderReport { distances, monotone_decreasing: monotone })
}

/// Golden-angle spiral on the unit 2-sphere.
pub(crate) fn fibonacci_sphere(count: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let th = golden * k as f64;
            vec![r * th.cos(), r * th.sin(), z]
        })
        .collect()
}

/// Frozen planar origin component plus the field it was built from.
///
/// Membership of a point in any dimension reduces to the plane: the field
/// only decreases as the tail coordinates move away from zero, so sliding
/// them to zero keeps a positive-field point inside its component. A point
/// belongs to the domain exactly when the field is positive at the point
/// itself and its `(x_1, x_2)` projection lies in the planar component.
pub struct DomainSlice {
    field: TorsionField,
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    h: f64,
    m0: Vec<bool>,
}

impl DomainSlice {
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if self.field.value(x)? <= 0.0 {
            return Ok(false);
        }
        Ok(self.plane_member(x[0], x[1]))
    }

    /// Field value when the point lies in the domain, `None` otherwise.
    /// Quadrature closures use this to classify a point and read the field
    /// in one evaluation.
    pub fn value_inside(&self, x: &[f64]) -> Option<f64> {
        let u = self.field.value(x).ok()?;
        if u > 0.0 && self.plane_member(x[0], x[1]) {
            Some(u)
        } else {
            None
        }
    }

    /// Component membership with cell coverage: true when any lattice node
    /// of the cell around `(x1, x2)` lies in the origin component. The
    /// nearest-node test clips the sliver between the continuum boundary
    /// and the lattice; combined with an exact sign test on the field this
    /// variant resolves membership to the true boundary, which boundary
    /// bisections need.
    pub fn cell_member(&self, x1: f64, x2: f64) -> bool {
        let s = 0.5 * self.h;
        [(-s, -s), (-s, s), (s, -s), (s, s)]
            .iter()
            .any(|&(a, b)| self.plane_member(x1 + a, x2 + b))
    }

    /// Planar component membership of the nearest grid node.
    pub fn plane_member(&self, x1: f64, x2: f64) -> bool {
        let i = ((x1 - self.x0) / self.h).round();
        let j = ((x2 - self.y0) / self.h).round();
        if i < 0.0 || j < 0.0 {
            return false;
        }
        let (i, j) = (i as usize, j as usize);
        if i >= self.nx || j >= self.ny {
            return false;
        }
        self.m0[j * self.nx + i]
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn field(&self) -> &TorsionField {
        &self.field
    }
}

// --------------------------------------------------------------------------
// Planar flood-fill grid
// --------------------------------------------------------------------------

/// Node-sampled rectangle `[-xw, xw] × [-yw, yw]` with 4-neighbor
/// connectivity, shared by the superlevel counter and the critical-point
/// membership filter.
struct PlaneGrid {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    h: f64,
    values: Vec<f64>,
    inside: Vec<bool>,
}

struct Component {
    membership: Vec<bool>,
    touches_edge: bool,
    max_value: f64,
    /// `x_1` of the highest node, used only for deterministic ordering.
    seed_x: f64,
}

impl PlaneGrid {
    fn domain_slice(field: &TorsionField, xw: f64, yw: f64, h: f64) -> Result<Self> {
        let nx = (2.0 * xw / h).ceil() as usize + 1;
        let ny = (2.0 * yw / h).ceil() as usize + 1;
        let x0 = -xw;
        let y0 = -yw;
        let values = exec::map(nx * ny, |idx| {
            let i = idx % nx;
            let j = idx / nx;
            field.plane_value(x0 + i as f64 * h, y0 + j as f64 * h)
        });
        let inside = values.iter().map(|&v| v > 0.0).collect();
        Ok(PlaneGrid { nx, ny, x0, y0, h, values, inside })
    }

    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn nearest_index(&self, x: f64, y: f64) -> Option<usize> {
        let i = ((x - self.x0) / self.h).round();
        let j = ((y - self.y0) / self.h).round();
        if i < 0.0 || j < 0.0 || i >= self.nx as f64 || j >= self.ny as f64 {
            return None;
        }
        Some(j as usize * self.nx + i as usize)
    }

    fn is_edge(&self, idx: usize) -> bool {
        let i = idx % self.nx;
        let j = idx / self.nx;
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    fn flood(&self, mask: &[bool], start: usize) -> Component {
        let mut membership = vec![false; mask.len()];
        let mut queue = std::collections::VecDeque::new();
        membership[start] = true;
        queue.push_back(start);
        let mut touches_edge = false;
        let mut max_value = f64::NEG_INFINITY;
        let mut seed_x = 0.0;
        while let Some(idx) = queue.pop_front() {
            if self.is_edge(idx) {
                touches_edge = true;
            }
            if self.values[idx] > max_value {
                max_value = self.values[idx];
                seed_x = self.x0 + (idx % self.nx) as f64 * self.h;
            }
            let i = idx % self.nx;
            let j = idx / self.nx;
            let mut push = |ni: usize| {
                if mask[ni] && !membership[ni] {
                    membership[ni] = true;
                    queue.push_back(ni);
                }
            };
            if i > 0 {
                push(idx - 1);
            }
            if i + 1 < self.nx {
                push(idx + 1);
            }
            if j > 0 {
                push(idx - self.nx);
            }
            if j + 1 < self.ny {
                push(idx + self.nx);
            }
        }
        Component { membership, touches_edge, max_value, seed_x }
    }

    /// Component of `{u > 0}` containing the origin, regardless of whether
    /// it stays inside the window.
    fn origin_component_lenient(&self) -> Result<Component> {
        let start = self
            .nearest_index(0.0, 0.0)
            .ok_or_else(|| Error::validation("window does not contain the origin"))?;
        if !self.inside[start] {
            return Err(Error::validation("origin lies outside the slice domain"));
        }
        Ok(self.flood(&self.inside, start))
    }

    /// As above, but errors when the component reaches the window edge,
    /// since then the slice does not fit the verification window.
    fn origin_component(&self) -> Result<Component> {
        let comp = self.origin_component_lenient()?;
        if comp.touches_edge {
            return Err(Error::structural(
                "the slice domain reaches the verification window edge; the origin component is \
                 not confined to the a priori box",
            ));
        }
        Ok(comp)
    }

    /// All connected components of `mask`, in first-seed scan order.
    fn components(&self, mask: &[bool]) -> Vec<Component> {
        let mut seen = vec![false; mask.len()];
        let mut out = Vec::new();
        for idx in 0..mask.len() {
            if mask[idx] && !seen[idx] {
                let comp = self.flood(mask, idx);
                for (s, m) in seen.iter_mut().zip(&comp.membership) {
                    *s |= m;
                }
                out.push(comp);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn domain(n: usize, d: usize, eps: f64) -> StarDomain {
        let field = TorsionField::new(HarmonicProfile::standard(n).unwrap(), d, eps).unwrap();
        StarDomain::new(field).unwrap()
    }

    #[test]
    fn sturm_counts_positive_roots() {
        // (s - 1)(s - 2) = 2 - 3s + s²: two positive roots.
        assert_eq!(sturm_positive_roots(&[2.0, -3.0, 1.0]), 2);
        // (s + 1)(s + 2): none.
        assert_eq!(sturm_positive_roots(&[2.0, 3.0, 1.0]), 0);
        // (s - 1)(s + 2)(s - 3) = 6 - 7s² + ... expand: (s-1)(s-3) = s²-4s+3,
        // times (s+2): s³ - 2s² - 5s + 6: roots 1, 3, -2.
        assert_eq!(sturm_positive_roots(&[6.0, -5.0, -2.0, 1.0]), 2);
        // s² + 1: none.
        assert_eq!(sturm_positive_roots(&[1.0, 0.0, 1.0]), 0);
        // Double root (s - 1)²: counted once.
        assert_eq!(sturm_positive_roots(&[1.0, -2.0, 1.0]), 1);
    }

    #[test]
    fn construction_rejects_bad_eps() {
        let p = HarmonicProfile::standard(2).unwrap();
        let f0 = TorsionField::new(p.clone(), 2, 0.0).unwrap();
        assert!(StarDomain::new(f0).is_err());
        // u(0) = 1/2 - 576 eps < 0 for the n = 4 profile at this eps.
        let p4 = HarmonicProfile::standard(4).unwrap();
        let f4 = TorsionField::new(p4, 2, 1e-3).unwrap();
        assert!(StarDomain::new(f4).is_err());
    }

    #[test]
    fn box_half_length_formula() {
        let dom = domain(2, 2, 1e-3);
        assert_relative_eq!(dom.box_x1(), 1000.0_f64.powf(0.25), max_relative = 1e-14);
        let dom3 = domain(2, 3, 1e-3);
        assert_relative_eq!(dom3.box_x1(), 500.0_f64.powf(0.25), max_relative = 1e-14);
    }

    #[test]
    fn radial_extent_frozen_values() {
        // Offline high-precision roots of u(t, 0, …) = 0 and u(0, t, 0, …) = 0.
        let dom = domain(2, 2, 1e-3);
        let ax = dom.radial_extent(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(ax, 4.9910855363352540327, epsilon = 1e-9);
        let vert = dom.radial_extent(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(vert, 0.99008856510075898249, epsilon = 1e-9);

        let dom3 = domain(2, 3, 1e-3);
        let ax3 = dom3.radial_extent(&[1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(ax3, 4.287467804458546722, epsilon = 1e-9);
        // Along x3 the profile contributes only its constant v(0,0) = -4,
        // so the extent solves (1 - t²)/4 = 4 eps exactly.
        let v3 = dom3.radial_extent(&[0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(v3, (1.0 - 16.0 * 1e-3_f64).sqrt(), epsilon = 1e-9);
        // Along x2 the profile decays on top of that, pulling the wall in.
        let v2 = dom3.radial_extent(&[0.0, 1.0, 0.0]).unwrap();
        assert!(v2 < v3);
    }

    #[test]
    fn containment_by_radial_comparison() {
        let dom = domain(2, 2, 1e-3);
        assert!(dom.contains(&[0.0, 0.0]).unwrap());
        assert!(dom.contains(&[4.9, 0.0]).unwrap());
        assert!(!dom.contains(&[5.1, 0.0]).unwrap());
        assert!(dom.contains(&[0.0, 0.98]).unwrap());
        assert!(!dom.contains(&[0.0, 1.01]).unwrap());
        assert!(dom.contains(&[1.0, 1.0]).err().is_none());
    }

    #[test]
    fn admissible_at_small_eps() {
        let rep = domain(2, 2, 1e-3).check_epsilon_admissible().unwrap();
        assert!(rep.axis_positive);
        assert!(rep.bounded, "escape witness: {:?}", rep.escape_witness);
        assert!(rep.transversal, "worst {}", rep.worst_transversality);
        assert!(rep.admissible);
        assert_relative_eq!(rep.axis_min, 0.496, max_relative = 1e-12);
        assert!(rep.worst_transversality <= -0.5 + TRANSVERSALITY_SLACK);
    }

    #[test]
    fn inadmissible_when_wedge_escapes() {
        // At eps = 1e-2 the n = 2 domain leaks along a wedge near 27 deg;
        // the scan must certify an escaping ray there.
        let rep = domain(2, 2, 1e-2).check_epsilon_admissible().unwrap();
        assert!(rep.axis_positive);
        assert!(!rep.bounded);
        assert!(!rep.admissible);
        let w = rep.escape_witness.expect("escape witness");
        assert!(w.certified_unbounded);
        let theta = w.theta_deg.min(180.0 - w.theta_deg).abs();
        assert!((25.0..29.0).contains(&theta), "witness at {theta:.2} deg");
    }

    #[test]
    fn escape_wedge_membership_by_sturm() {
        let dom = domain(2, 2, 1e-2);
        // 26 deg lies inside the escape wedge [25.23, 28.45]; 24 deg does not.
        let inside = dom.ray_polynomial(26.0_f64.to_radians().cos(), 26.0_f64.to_radians().sin(), 0.0);
        assert_eq!(sturm_positive_roots(&inside), 0);
        let outside = dom.ray_polynomial(24.0_f64.to_radians().cos(), 24.0_f64.to_radians().sin(), 0.0);
        assert!(sturm_positive_roots(&outside) > 0);
    }

    #[test]
    fn bounding_box_report_at_small_eps() {
        let rep = domain(2, 2, 1e-3).verify_bounding_box(10_000).unwrap();
        assert!(rep.contained, "max x1 {} vs {}", rep.max_abs_x1, rep.box_x1);
        assert_abs_diff_eq!(rep.max_abs_x1, 4.9910855363352540327, epsilon = 1e-6);
        assert!(rep.max_cross_norm < 1.1);
        // sup u is attained at the axis maxima: 1/2 + eps d' = 0.50225.
        assert_relative_eq!(rep.sup_u, 0.50225, max_relative = 1e-10);
        assert!(rep.directions_sampled >= 10_000);
    }

    #[test]
    fn transversality_margin_at_small_eps() {
        let rep = domain(2, 2, 1e-3).verify_transversality(3600).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.threshold, -0.5 + TRANSVERSALITY_SLACK);
        assert!(rep.worst < -0.5, "worst {}", rep.worst);
    }

    #[test]
    fn transversality_errors_on_escaping_ray() {
        let err = domain(2, 2, 1e-2).verify_transversality(3600).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
    }

    #[test]
    fn superlevel_component_count_n2() {
        let rep = domain(2, 2, 1e-3).count_superlevel_components().unwrap();
        assert_eq!(rep.count, 2);
        assert_eq!(rep.expected, 2);
        assert_eq!(rep.component_maxima.len(), 2);
        for &m in &rep.component_maxima {
            // Exact peak height 1/2 + eps d' at the axis maxima.
            assert_relative_eq!(m, 0.50225, max_relative = 1e-12);
            assert!(m > rep.height_threshold);
        }
    }

    #[test]
    fn superlevel_count_errors_when_domain_escapes() {
        let err = domain(2, 2, 1e-2).count_superlevel_components().unwrap_err();
        assert!(matches!(err, Error::Structural(_)), "{err}");
        assert!(err.to_string().contains("window edge"));
    }

    #[test]
    fn critical_points_n2_small_eps() {
        let dom = domain(2, 2, 1e-3);
        let pts = dom.find_critical_points().unwrap();
        assert_eq!(pts.len(), 3);
        let s = (2.5_f64).sqrt();
        assert_abs_diff_eq!(pts[0].x[0], -s, epsilon = 1e-9);
        assert_abs_diff_eq!(pts[1].x[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(pts[2].x[0], s, epsilon = 1e-9);
        for p in &pts {
            assert_abs_diff_eq!(p.x[1], 0.0, epsilon = 1e-9);
        }
        assert_eq!(pts[0].kind, CriticalKind::Maximum);
        assert_eq!(pts[1].kind, CriticalKind::Saddle);
        assert_eq!(pts[2].kind, CriticalKind::Maximum);
        // Planar Hessian at the maxima: diag(eps f'', -1 - eps f'') with
        // f'' = -20, so eigenvalues -0.98 and -0.02.
        assert_relative_eq!(pts[0].eigenvalues[0], -0.98, max_relative = 1e-10);
        assert_relative_eq!(pts[0].eigenvalues[1], -0.02, max_relative = 1e-10);
        // Saddle at the origin: f''(0) = 8 for n = 2... f'' = -2G'(0) = -2(-5) = 10.
        assert_relative_eq!(pts[1].eigenvalues[1], 1e-3 * 10.0, max_relative = 1e-9);
        dom.poincare_hopf_check(&pts).unwrap();
    }

    #[test]
    fn critical_point_search_refuses_escaping_component_at_large_eps() {
        // At eps = 1e-2 the origin component leaks out through a wedge (and
        // off-axis saddles appear beyond the a priori box), so the promised
        // count of three axis points must not be certified.
        let dom = domain(2, 2, 1e-2);
        let err = dom.find_critical_points().unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Structural(_)), "{msg}");
        assert!(msg.contains("cannot be certified complete"), "{msg}");
    }

    #[test]
    fn d3_critical_points_have_negative_tail() {
        let dom = domain(2, 3, 1e-3);
        let pts = dom.find_critical_points().unwrap();
        assert_eq!(pts.len(), 3);
        for p in &pts {
            assert_eq!(p.eigenvalues.len(), 3);
            assert!(p.eigenvalues.iter().filter(|e| **e < 0.0).count() >= 2);
        }
        assert_eq!(pts[1].kind, CriticalKind::Saddle);
        dom.poincare_hopf_check(&pts).unwrap();
    }

    #[test]
    fn cell_membership_covers_the_boundary_sliver() {
        // Points strictly inside the domain but within half a slice cell of
        // the boundary: the nearest-node selector misses some of them, the
        // cell selector must catch all of them.
        let dom = domain(2, 2, 1e-3);
        let slice = dom.slice_oracle(0.01).unwrap();
        let field = slice.field().clone();
        let mut nearest_misses = 0usize;
        for k in 0..72 {
            let theta = std::f64::consts::PI * k as f64 / 36.0;
            let dir = [theta.cos(), theta.sin()];
            // Bisect the field zero along the ray from the origin.
            let (mut t_in, mut t_out) = (0.0f64, 8.0f64);
            for _ in 0..80 {
                let mid = 0.5 * (t_in + t_out);
                if field.value(&[mid * dir[0], mid * dir[1]]).unwrap() > 0.0 {
                    t_in = mid;
                } else {
                    t_out = mid;
                }
            }
            let t = t_in - 1e-9;
            let p = [t * dir[0], t * dir[1]];
            assert!(field.value(&p).unwrap() > 0.0);
            assert!(
                slice.cell_member(p[0], p[1]),
                "cell selector lost an interior point at angle {theta}"
            );
            if !slice.plane_member(p[0], p[1]) {
                nearest_misses += 1;
            }
        }
        assert!(
            nearest_misses > 0,
            "every near-boundary probe hit the nearest-node selector; the \
             cell variant is not being exercised"
        );
    }

    #[test]
    fn cylinder_sections_shrink_with_eps() {
        let p = HarmonicProfile::standard(2).unwrap();
        let rep = cylinder_convergence(&p, 2, &[2e-3, 1e-3, 5e-4]).unwrap();
        assert_eq!(rep.distances.len(), 3);
        assert!(rep.monotone_decreasing, "{:?}", rep.distances);
        // Leading order: 1 - r² ~ -2(d-1) eps v(x1, 1), worst near x1 = 0
        // where v(0, 1) = -10, so |r - 1| is about eps · 10.
        let (_, d0) = rep.distances[0];
        assert_relative_eq!(d0, 0.02, max_relative = 0.15);
        let (_, d2) = rep.distances[2];
        assert!(d2 < 0.006);
    }
}
