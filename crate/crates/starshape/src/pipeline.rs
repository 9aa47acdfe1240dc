//! End-to-end sweep over an `(eps_k, eta_k)` schedule.
//!
//! One run takes a [`RunConfig`], executes every verification stage for
//! each perturbation size, and aggregates the results into a
//! [`TheoremOneReport`] with three clause verdicts:
//!
//! * clause a: each solved scale carries exactly `2n - 1` nondegenerate
//!   critical points, `n` maxima and `n - 1` saddles;
//! * clause b: the mapped domain is geodesically star-shaped with respect
//!   to every sampled kernel center, certified through the chart
//!   transition maps;
//! * clause c: the manifold measure ratio of the non-kernel part
//!   decreases along the schedule.
//!
//! A stage failure at one scale is recorded on that scale's record and the
//! sweep continues, so a single bad configuration still yields maximal
//! diagnostics. The report is a pure function of the config (which embeds
//! the seed): scales run concurrently but are assembled in schedule order,
//! and every random draw is seeded per scale and stage.
//!
//! [`emit_artifacts`] renders a finished report to `report.json` (stable
//! key order, byte-identical across reruns), two CSV tables, and an SVG
//! figure per planar scale; every artifact carries the config hash.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{
    AdmissibilityReport, BoundingBoxReport, CriticalKind, CriticalPoint, StarDomain,
    SuperlevelReport, TransversalityReport,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::kernel::{self, A0Rule, KernelRegion, MeasureEstimate};
use crate::manifold::{
    self, ChartedManifold, GeodesicStarSweep, MetricCalibration, TransitionCalibration,
};
use crate::nonlinearity::Nonlinearity;
use crate::profile::{HarmonicProfile, SeparationPoints};
use crate::quad;
use crate::solver::{self, DiscreteSolution};
use crate::torsion::TorsionField;

/// Default cap of the scale schedule `eta_k = min(cap, eps_k)`.
pub const DEFAULT_ETA_CAP: f64 = 0.05;
/// Default solver grid spacing.
pub const DEFAULT_GRID_SPACING: f64 = 0.05;
/// Default number of sampled kernel centers per scale.
pub const DEFAULT_KERNEL_CENTERS: usize = 50;
/// Retry budget for halving `eta` when the solve does not converge.
pub const MAX_ETA_HALVINGS: usize = 5;
/// Retry budget for doubling the kernel amplitude when an independent
/// center sample falsifies the scan's sampled margin certificate.
pub const MAX_A0_ESCALATIONS: usize = 5;
/// Warm-started continuation steps from zero up to the working scale.
const CONTINUATION_STEPS: usize = 4;
/// Sample-ball radius for the per-scale metric and transition calibrations.
pub const CALIBRATION_RADIUS: f64 = 2.0;
/// Lattice spacing of the marching-squares contour grid in the SVG figure.
const CONTOUR_SPACING: f64 = 0.01;
/// Angular samples of the boundary polyline in the SVG figure.
const BOUNDARY_POLYLINE_SAMPLES: usize = 512;

// --------------------------------------------------------------------------
// Configuration
// --------------------------------------------------------------------------

/// Model manifold selection. Custom callback metrics are constructed in
/// code through [`ChartedManifold::custom`] and cannot appear in a config
/// file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ManifoldSpec {
    Euclidean,
    Sphere { kappa: f64 },
    Hyperbolic { kappa: f64 },
}

impl ManifoldSpec {
    pub fn build(&self, dimension: usize) -> Result<ChartedManifold> {
        match *self {
            ManifoldSpec::Euclidean => ChartedManifold::euclidean(dimension),
            ManifoldSpec::Sphere { kappa } => ChartedManifold::sphere(dimension, kappa),
            ManifoldSpec::Hyperbolic { kappa } => ChartedManifold::hyperbolic(dimension, kappa),
        }
    }
}

/// Right-hand side selection: the built-in families or a parsed expression
/// in `u` and `x1..xd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NonlinearitySpec {
    ConstantOne,
    OnePlusU,
    Quadratic { c: f64 },
    Custom { expression: String },
}

impl NonlinearitySpec {
    pub fn build(&self, dimension: usize) -> Result<Nonlinearity> {
        match self {
            NonlinearitySpec::ConstantOne => Ok(Nonlinearity::constant_one()),
            NonlinearitySpec::OnePlusU => Ok(Nonlinearity::one_plus_u()),
            NonlinearitySpec::Quadratic { c } => Nonlinearity::quadratic(*c),
            NonlinearitySpec::Custom { expression } => {
                Nonlinearity::parse(expression, dimension)
            }
        }
    }
}

fn default_eta_cap() -> f64 {
    DEFAULT_ETA_CAP
}
fn default_grid_spacing() -> f64 {
    DEFAULT_GRID_SPACING
}
fn default_boundary_samples() -> usize {
    kernel::DEFAULT_BOUNDARY_SAMPLES
}
fn default_kernel_centers() -> usize {
    DEFAULT_KERNEL_CENTERS
}

/// Full description of one sweep. The JSON schema is exactly this struct;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of prescribed maxima of the profile.
    pub n: usize,
    /// Ambient dimension, 2 or 3.
    pub d: usize,
    /// Separation points of the profile; `a_i = i` when omitted.
    #[serde(default)]
    pub a_values: Option<Vec<f64>>,
    /// Perturbation sizes, positive and strictly decreasing.
    pub eps: Vec<f64>,
    /// Explicit scale schedule; `eta_k = min(eta_cap, eps_k)` when omitted.
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    #[serde(default = "default_eta_cap")]
    pub eta_cap: f64,
    pub manifold: ManifoldSpec,
    pub nonlinearity: NonlinearitySpec,
    /// Kernel amplitude: a fixed value or the dyadic scan per scale.
    #[serde(default)]
    pub a0: A0Rule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
    #[serde(default = "default_kernel_centers")]
    pub kernel_centers: usize,
    #[serde(default = "default_grid_spacing")]
    pub grid_spacing: f64,
    /// Artifact directory; the caller of [`emit_artifacts`] may override it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Checks every config invariant without doing any work.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::validation("the profile needs n >= 2 maxima"));
        }
        if !(self.d == 2 || self.d == 3) {
            return Err(Error::validation(format!(
                "dimension {} is not supported by the solver; use 2 or 3",
                self.d
            )));
        }
        check_decreasing("eps", &self.eps)?;
        if let Some(etas) = &self.eta {
            if etas.len() != self.eps.len() {
                return Err(Error::validation(format!(
                    "eta list has {} entries for {} perturbation sizes",
                    etas.len(),
                    self.eps.len()
                )));
            }
            check_decreasing("eta", etas)?;
        }
        if let Some(a) = &self.a_values {
            if a.len() != self.n {
                return Err(Error::validation(format!(
                    "a_values has {} entries but n = {}",
                    a.len(),
                    self.n
                )));
            }
        }
        if !(self.eta_cap > 0.0 && self.eta_cap.is_finite()) {
            return Err(Error::validation("eta_cap must be positive and finite"));
        }
        if !(self.grid_spacing > 0.0 && self.grid_spacing.is_finite()) {
            return Err(Error::validation("grid_spacing must be positive and finite"));
        }
        if self.boundary_samples == 0 || self.kernel_centers == 0 {
            return Err(Error::validation(
                "boundary_samples and kernel_centers must be at least 1",
            ));
        }
        Ok(())
    }

    /// The scale requested for scale index `k` before any halving.
    pub fn eta_requested(&self, k: usize) -> f64 {
        match &self.eta {
            Some(etas) => etas[k],
            None => self.eta_cap.min(self.eps[k]),
        }
    }

    /// The full requested schedule.
    pub fn eta_schedule(&self) -> Vec<f64> {
        (0..self.eps.len()).map(|k| self.eta_requested(k)).collect()
    }

    /// Doubles the sample densities, the effect of the `--strict` flag.
    pub fn apply_strict(&mut self) {
        self.boundary_samples *= 2;
        self.kernel_centers *= 2;
    }

    pub fn build_profile(&self) -> Result<HarmonicProfile> {
        match &self.a_values {
            Some(a) => HarmonicProfile::new(SeparationPoints::new(a.clone())?),
            None => HarmonicProfile::standard(self.n),
        }
    }

    /// Parses and validates a config from JSON text.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses, and validates a config file.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }
}

fn check_decreasing(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::validation(format!("{name} list must not be empty")));
    }
    for v in values {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::validation(format!(
                "{name} list must be positive and finite, got {v}"
            )));
        }
    }
    if values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::validation(format!(
            "{name} list must be strictly decreasing"
        )));
    }
    Ok(())
}

/// FNV-1a hash of the canonical JSON serialization, the provenance tag
/// every artifact carries.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in &bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

/// Stage tag of the amplitude selection in the seed derivation.
pub const STAGE_AMPLITUDE: u64 = 1;
/// Stage tag of the measure-ratio estimate in the seed derivation.
pub const STAGE_MEASURE: u64 = 2;

/// Deterministic per-scale, per-stage seed derivation (splitmix64
/// finisher). The pipeline draws one stream per scale and stage, so any
/// stage can be rerun in isolation with identical numbers.
pub fn stage_seed(seed: u64, k: usize, stage: u64) -> u64 {
    let mut z = seed
        ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ stage.wrapping_mul(0xd1b5_4a32_d192_ed03);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// --------------------------------------------------------------------------
// Report types
// --------------------------------------------------------------------------

/// A stage that failed at one scale, with the error it raised.
#[derive(Debug, Clone, Serialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

/// The accepted kernel amplitude with its certificate.
#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeRecord {
    pub rule: A0Rule,
    pub a0: f64,
    pub threshold: f64,
    /// Worst star-shape margin over the certified kernel centers.
    pub margin: f64,
    pub kernel_points: usize,
    pub boundary_samples: usize,
    /// Amplitude doublings taken after the dyadic scan's choice failed the
    /// independent certification sample.
    pub escalations: usize,
}

/// Summary of the continuation solve at one scale.
#[derive(Debug, Clone, Serialize)]
pub struct SolveRecord {
    pub grid_spacing: f64,
    pub interior_nodes: usize,
    pub continuation_steps: usize,
    /// Newton iterations summed over the continuation branch.
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub residual_tolerance: f64,
}

/// Everything measured at one scale. Absent stages carry `None` and leave
/// an entry in `errors` naming the stage and the failure.
#[derive(Debug, Clone, Serialize)]
pub struct KRecord {
    pub k: usize,
    pub eps: f64,
    pub eta_requested: f64,
    /// Scale the solver accepted after halvings; `None` when every retry
    /// failed.
    pub eta: Option<f64>,
    pub eta_halvings: usize,
    pub admissibility: Option<AdmissibilityReport>,
    pub bounding_box: Option<BoundingBoxReport>,
    pub transversality: Option<TransversalityReport>,
    pub superlevel: Option<SuperlevelReport>,
    pub field_critical_points: Option<Vec<CriticalPoint>>,
    pub amplitude: Option<AmplitudeRecord>,
    pub flat_measure: Option<MeasureEstimate>,
    pub solve: Option<SolveRecord>,
    pub manifold_measure: Option<MeasureEstimate>,
    pub metric_calibration: Option<MetricCalibration>,
    pub transition_calibration: Option<TransitionCalibration>,
    pub geodesic_star: Option<GeodesicStarSweep>,
    pub solution_critical_points: Option<Vec<CriticalPoint>>,
    pub clause_a: bool,
    pub clause_b: bool,
    pub errors: Vec<StageError>,
}

/// One clause-level verdict with a human-readable justification that
/// quotes the measured quantities and their tolerances.
#[derive(Debug, Clone, Serialize)]
pub struct ClauseVerdict {
    pub passed: bool,
    pub detail: String,
}

/// The aggregated result of one sweep.
#[derive(Debug, Clone, Serialize)]
pub struct TheoremOneReport {
    pub config: RunConfig,
    pub config_hash: String,
    pub records: Vec<KRecord>,
    pub clause_a: ClauseVerdict,
    pub clause_b: ClauseVerdict,
    pub clause_c: ClauseVerdict,
    pub all_passed: bool,
}

// --------------------------------------------------------------------------
// Pipeline
// --------------------------------------------------------------------------

/// Runs every stage for every scale and aggregates the clause verdicts.
///
/// Config-level problems (malformed schedules, an unbuildable manifold or
/// nonlinearity) error out before any work. Per-scale failures are
/// recorded on the scale's record and the sweep continues.
pub fn run_pipeline(config: &RunConfig) -> Result<TheoremOneReport> {
    config.validate()?;
    let manifold = config.manifold.build(config.d)?;
    let nl = config.nonlinearity.build(config.d)?;
    let config_hash = config_hash(config)?;

    let mut records =
        exec::map(config.eps.len(), |k| run_single_scale(config, &manifold, &nl, k));
    records.sort_by_key(|r| r.k);

    let clause_a = clause_a_verdict(&records, config.n);
    let clause_b = clause_b_verdict(&records);
    let clause_c = clause_c_verdict(&records);
    let all_passed = clause_a.passed && clause_b.passed && clause_c.passed;
    Ok(TheoremOneReport {
        config: config.clone(),
        config_hash,
        records,
        clause_a,
        clause_b,
        clause_c,
        all_passed,
    })
}

fn record_stage<T>(errors: &mut Vec<StageError>, stage: &str, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(StageError { stage: stage.into(), message: e.to_string() });
            None
        }
    }
}

fn empty_record(k: usize, eps: f64, eta_requested: f64) -> KRecord {
    KRecord {
        k,
        eps,
        eta_requested,
        eta: None,
        eta_halvings: 0,
        admissibility: None,
        bounding_box: None,
        transversality: None,
        superlevel: None,
        field_critical_points: None,
        amplitude: None,
        flat_measure: None,
        solve: None,
        manifold_measure: None,
        metric_calibration: None,
        transition_calibration: None,
        geodesic_star: None,
        solution_critical_points: None,
        clause_a: false,
        clause_b: false,
        errors: Vec::new(),
    }
}

fn run_single_scale(
    config: &RunConfig,
    m: &ChartedManifold,
    nl: &Nonlinearity,
    k: usize,
) -> KRecord {
    let eps = config.eps[k];
    let mut rec = empty_record(k, eps, config.eta_requested(k));
    let errors = &mut rec.errors;

    let dom = match record_stage(errors, "domain", build_domain(config, eps)) {
        Some(d) => d,
        None => return rec,
    };
    let field = dom.field().clone();

    rec.admissibility =
        record_stage(errors, "admissibility", dom.check_epsilon_admissible());
    rec.bounding_box =
        record_stage(errors, "bounding-box", dom.verify_bounding_box(config.boundary_samples));
    rec.transversality = record_stage(
        errors,
        "transversality",
        dom.verify_transversality(config.boundary_samples),
    );
    rec.superlevel = record_stage(errors, "superlevel", dom.count_superlevel_components());
    rec.field_critical_points =
        record_stage(errors, "field-critical-points", dom.find_critical_points());

    let kernel = record_stage(
        errors,
        "amplitude",
        select_amplitude(config, &field, &dom, stage_seed(config.seed, k, STAGE_AMPLITUDE)),
    )
    .map(|sel| {
        rec.amplitude = Some(sel.record);
        (sel.region, sel.centers)
    });

    if let Some((region, _)) = &kernel {
        rec.flat_measure = record_stage(
            errors,
            "measure",
            kernel::measure_ratio(&dom, region, stage_seed(config.seed, k, STAGE_MEASURE)),
        );
    }

    let endpoint = record_stage(
        errors,
        "solve",
        solve_scale(config, m, nl, &dom, rec.eta_requested),
    )
    .map(|solved| {
        rec.eta = Some(solved.eta);
        rec.eta_halvings = solved.halvings;
        rec.solve = Some(solved.record);
        solved.solution
    });

    // Calibrations describe the manifold around the working scale; when the
    // solve failed they still run at the requested scale for diagnostics.
    let chart_eta = rec.eta.unwrap_or(rec.eta_requested);
    let sweep = [2.0 * chart_eta, chart_eta, 0.5 * chart_eta];
    rec.metric_calibration = record_stage(
        errors,
        "metric-calibration",
        manifold::calibrate_metric(m, &sweep, CALIBRATION_RADIUS),
    );
    let mut xi = vec![0.0; config.d];
    xi[0] = 1.0;
    rec.transition_calibration = record_stage(
        errors,
        "transition-calibration",
        manifold::calibrate_transition(m, &sweep, &xi, CALIBRATION_RADIUS),
    );

    if let (Some((region, centers)), Some(eta)) = (&kernel, rec.eta) {
        rec.manifold_measure = record_stage(
            errors,
            "manifold-measure",
            manifold::manifold_measure_ratio(m, &dom, region, eta),
        );
        rec.geodesic_star = record_stage(
            errors,
            "geodesic-star",
            manifold::verify_geodesic_star_at(m, &dom, centers, eta, config.boundary_samples),
        );
    }

    if let Some(sol) = &endpoint {
        rec.solution_critical_points = record_stage(
            errors,
            "solution-critical-points",
            solver::count_solution_critical_points(sol, &dom),
        );
    }

    rec.clause_a = clause_a_holds(&rec);
    rec.clause_b = rec.geodesic_star.is_some();
    rec
}

/// Builds the perturbed domain of one scale from the config.
pub fn build_domain(config: &RunConfig, eps: f64) -> Result<StarDomain> {
    let profile = config.build_profile()?;
    let field = TorsionField::new(profile, config.d, eps)?;
    StarDomain::new(field)
}

/// The outcome of the amplitude stage: the kernel region, its certificate,
/// and the exact centers the certificate covers.
pub struct SelectedAmplitude {
    pub region: KernelRegion,
    pub record: AmplitudeRecord,
    /// Centers whose flat star margins the certification verified; the
    /// geodesic stage runs exactly at these points, so its flat-inequality
    /// precondition holds by construction.
    pub centers: Vec<Vec<f64>>,
}

/// Resolves the kernel amplitude for one scale and certifies an
/// independent center sample at it.
///
/// Under [`A0Rule::Auto`] the dyadic scan proposes an amplitude from its
/// own per-level samples; since that certificate is sampled, a fresh draw
/// can falsify it, in which case the amplitude is doubled (shrinking the
/// kernel toward the segment between the extreme maxima, where margins
/// grow) up to [`MAX_A0_ESCALATIONS`] times. Under [`A0Rule::Fixed`] the
/// configured amplitude is certified as is and any falsification is an
/// error.
pub fn select_amplitude(
    config: &RunConfig,
    field: &TorsionField,
    dom: &StarDomain,
    seed: u64,
) -> Result<SelectedAmplitude> {
    let (mut a0, escalatable) = match config.a0 {
        A0Rule::Auto => {
            let chosen = kernel::choose_a0_with(
                field,
                seed,
                config.kernel_centers,
                config.boundary_samples,
            )?;
            (chosen.a0, true)
        }
        A0Rule::Fixed(a0) => (a0, false),
    };
    let mut escalations = 0usize;
    loop {
        let region = KernelRegion::new(field.clone(), a0)?;
        let centers =
            kernel::sample_kernel_points(dom, &region, config.kernel_centers, seed)?;
        if centers.is_empty() {
            return Err(Error::structural(format!(
                "kernel region is empty at amplitude {a0}"
            )));
        }
        match certify_margin(config, dom, &centers) {
            Ok(margin) => {
                let record = AmplitudeRecord {
                    rule: config.a0,
                    a0,
                    threshold: region.threshold(),
                    margin,
                    kernel_points: centers.len(),
                    boundary_samples: config.boundary_samples,
                    escalations,
                };
                return Ok(SelectedAmplitude { region, record, centers });
            }
            Err(Error::Structural(_)) if escalatable && escalations < MAX_A0_ESCALATIONS => {
                a0 *= 2.0;
                escalations += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Worst flat star margin over the centers; errors on the first center
/// that is not a star point.
fn certify_margin(config: &RunConfig, dom: &StarDomain, centers: &[Vec<f64>]) -> Result<f64> {
    let mut margin = f64::INFINITY;
    for center in centers {
        let report = kernel::verify_star_point(dom, center, config.boundary_samples)?;
        margin = margin.min(report.margin);
    }
    Ok(margin)
}

/// A converged continuation solve with the scale it was accepted at.
pub struct SolvedScale {
    pub record: SolveRecord,
    pub solution: DiscreteSolution,
    pub eta: f64,
    pub halvings: usize,
}

/// Discretizes once and runs the continuation, halving the scale on solver
/// failure up to [`MAX_ETA_HALVINGS`] times. Config-class errors abort
/// immediately; only convergence, branch, and chart-reach failures are
/// retried, since all three shrink away with the scale.
pub fn solve_scale(
    config: &RunConfig,
    m: &ChartedManifold,
    nl: &Nonlinearity,
    dom: &StarDomain,
    eta_requested: f64,
) -> Result<SolvedScale> {
    let gd = Arc::new(solver::discretize(dom, config.grid_spacing)?);
    let mut eta = eta_requested;
    let mut halvings = 0usize;
    loop {
        match solver::continuation_in_eta(&gd, m, nl, eta, CONTINUATION_STEPS) {
            Ok(branch) => {
                let newton_iterations = branch.iter().map(|s| s.iterations).sum();
                let solution = branch.into_iter().last().expect("branch is never empty");
                let record = SolveRecord {
                    grid_spacing: gd.h(),
                    interior_nodes: gd.interior_count(),
                    continuation_steps: CONTINUATION_STEPS,
                    newton_iterations,
                    final_residual: solution.residual_norm,
                    residual_tolerance: solver::residual_tolerance(nl),
                };
                return Ok(SolvedScale { record, solution, eta, halvings });
            }
            Err(e) if halvings < MAX_ETA_HALVINGS && retryable(&e) => {
                eta *= 0.5;
                halvings += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::NoConvergence(_) | Error::Structural(_) | Error::ChartDomain(_)
    )
}

// --------------------------------------------------------------------------
// Clause verdicts
// --------------------------------------------------------------------------

fn kind_counts(points: &[CriticalPoint]) -> (usize, usize, usize) {
    let maxima = points.iter().filter(|p| p.kind == CriticalKind::Maximum).count();
    let saddles = points.iter().filter(|p| p.kind == CriticalKind::Saddle).count();
    (maxima, saddles, points.len() - maxima - saddles)
}

fn clause_a_holds(rec: &KRecord) -> bool {
    match &rec.solution_critical_points {
        Some(points) => {
            let n = points.len().div_euclid(2) + 1;
            kind_counts(points) == (n, n - 1, 0)
        }
        None => false,
    }
}

fn clause_a_verdict(records: &[KRecord], n: usize) -> ClauseVerdict {
    let failing: Vec<String> = records
        .iter()
        .filter(|r| !r.clause_a)
        .map(|r| match &r.solution_critical_points {
            Some(points) => {
                let (ma, sa, mi) = kind_counts(points);
                format!(
                    "k={} (eps={:.3e}): {} maxima, {} saddles, {} minima",
                    r.k, r.eps, ma, sa, mi
                )
            }
            None => format!(
                "k={} (eps={:.3e}): no certified critical-point list; see its errors",
                r.k, r.eps
            ),
        })
        .collect();
    if failing.is_empty() {
        ClauseVerdict {
            passed: true,
            detail: format!(
                "every scale has exactly {} nondegenerate critical points \
                 ({} maxima, {} saddles), eigenvalues above 1e-3 eps",
                2 * n - 1,
                n,
                n - 1
            ),
        }
    } else {
        ClauseVerdict { passed: false, detail: failing.join("; ") }
    }
}

fn clause_b_verdict(records: &[KRecord]) -> ClauseVerdict {
    let failing: Vec<String> = records
        .iter()
        .filter(|r| !r.clause_b)
        .map(|r| format!("k={} (eps={:.3e})", r.k, r.eps))
        .collect();
    if failing.is_empty() {
        let worst = records
            .iter()
            .filter_map(|r| r.geodesic_star.as_ref())
            .map(|s| s.min_margin_ratio)
            .fold(f64::INFINITY, f64::min);
        ClauseVerdict {
            passed: true,
            detail: format!(
                "geodesic star-shapedness certified from every sampled kernel center; \
                 worst mapped/flat margin ratio {worst:.4} (requirement: >= 0.5)"
            ),
        }
    } else {
        ClauseVerdict {
            passed: false,
            detail: format!(
                "geodesic star certification missing or failed at {}; see the scale errors",
                failing.join(", ")
            ),
        }
    }
}

fn clause_c_verdict(records: &[KRecord]) -> ClauseVerdict {
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        match &r.manifold_measure {
            Some(est) => rows.push((r.k, r.eps, est.value, est.error)),
            None => {
                return ClauseVerdict {
                    passed: false,
                    detail: format!(
                        "k={} (eps={:.3e}) has no manifold measure ratio; see its errors",
                        r.k, r.eps
                    ),
                }
            }
        }
    }
    let listing = rows
        .iter()
        .map(|(_, eps, v, e)| format!("eps={eps:.3e}: {v:.6} +- {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    if rows.len() < 2 {
        return ClauseVerdict {
            passed: true,
            detail: format!("single scale, no decrease to verify ({listing})"),
        };
    }
    for w in rows.windows(2) {
        if !(w[1].2 < w[0].2) {
            return ClauseVerdict {
                passed: false,
                detail: format!(
                    "manifold measure ratio does not decrease from k={} to k={}: {listing}",
                    w[0].0, w[1].0
                ),
            };
        }
    }
    ClauseVerdict {
        passed: true,
        detail: format!("manifold measure ratio strictly decreasing: {listing}"),
    }
}

// --------------------------------------------------------------------------
// Artifacts
// --------------------------------------------------------------------------

/// Artifact families [`emit_artifacts`] can write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactFormat {
    Json,
    Csv,
    Svg,
}

impl std::str::FromStr for ArtifactFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ArtifactFormat::Json),
            "csv" => Ok(ArtifactFormat::Csv),
            "svg" => Ok(ArtifactFormat::Svg),
            other => Err(Error::config(format!(
                "unknown artifact format \"{other}\"; use json, csv, or svg"
            ))),
        }
    }
}

/// Writes the requested artifact families into `dir` and returns the paths
/// in emission order.
///
/// `json` writes `report.json`: the full report, stable key order,
/// byte-identical for identical config and seed. `csv` writes
/// `critical_points.csv` (one row per certified solution critical point)
/// and `measure_sweep.csv` (one row per scale with a manifold measure
/// ratio). `svg` writes `domain_{k}.svg` for each planar scale whose
/// domain builds: the boundary polyline, the superlevel contour at
/// `1/(2(d-1))` from marching squares, and the critical points as marks;
/// scales whose geometry is unavailable are skipped since their failure is
/// already recorded in the report.
pub fn emit_artifacts(
    report: &TheoremOneReport,
    formats: &[ArtifactFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if formats.contains(&ArtifactFormat::Json) {
        let path = dir.join("report.json");
        fs::write(&path, render_report_json(report)?)?;
        written.push(path);
    }
    if formats.contains(&ArtifactFormat::Csv) {
        let path = dir.join("critical_points.csv");
        fs::write(&path, render_critical_points_csv(report)?)?;
        written.push(path);
        let path = dir.join("measure_sweep.csv");
        fs::write(&path, render_measure_sweep_csv(report)?)?;
        written.push(path);
    }
    if formats.contains(&ArtifactFormat::Svg) && report.config.d == 2 {
        for rec in &report.records {
            if let Ok(svg) = render_domain_svg(report, rec) {
                let path = dir.join(format!("domain_{}.svg", rec.k));
                fs::write(&path, svg)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// The `report.json` payload: pretty-printed with struct field order.
pub fn render_report_json(report: &TheoremOneReport) -> Result<String> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    Ok(text)
}

fn kind_label(kind: CriticalKind) -> &'static str {
    match kind {
        CriticalKind::Maximum => "maximum",
        CriticalKind::Saddle => "saddle",
        CriticalKind::Minimum => "minimum",
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn csv_with_provenance(report: &TheoremOneReport, body: Vec<u8>) -> String {
    format!(
        "# config {}\n{}",
        report.config_hash,
        String::from_utf8(body).expect("csv output is utf-8")
    )
}

fn render_critical_points_csv(report: &TheoremOneReport) -> Result<String> {
    let d = report.config.d;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["k".to_string(), "eps".into(), "eta".into()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["kind".to_string(), "min_eig".into(), "max_eig".into()]);
    w.write_record(&header)?;
    for rec in &report.records {
        if let Some(points) = &rec.solution_critical_points {
            let eta = rec.eta.unwrap_or(rec.eta_requested);
            for p in points {
                let mut row = vec![rec.k.to_string(), fmt_num(rec.eps), fmt_num(eta)];
                row.extend(p.x.iter().map(|&v| fmt_num(v)));
                row.push(kind_label(p.kind).to_string());
                row.push(fmt_num(*p.eigenvalues.first().expect("nonempty spectrum")));
                row.push(fmt_num(*p.eigenvalues.last().expect("nonempty spectrum")));
                w.write_record(&row)?;
            }
        }
    }
    let body = w.into_inner().map_err(|e| Error::config(format!("csv buffer: {e}")))?;
    Ok(csv_with_provenance(report, body))
}

fn render_measure_sweep_csv(report: &TheoremOneReport) -> Result<String> {
    let rows: Vec<(usize, f64, f64, f64)> = report
        .records
        .iter()
        .filter_map(|r| r.manifold_measure.as_ref().map(|m| (r.k, r.eps, m.value, m.error)))
        .collect();
    let slope = if rows.len() >= 2 {
        quad::loglog_slope(
            &rows.iter().map(|&(_, eps, v, _)| (eps, v.max(1e-300))).collect::<Vec<_>>(),
        )
    } else {
        0.0
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "eps", "ratio", "ci", "fitted_slope"])?;
    for (k, eps, value, error) in rows {
        w.write_record([
            k.to_string(),
            fmt_num(eps),
            fmt_num(value),
            fmt_num(error),
            fmt_num(slope),
        ])?;
    }
    let body = w.into_inner().map_err(|e| Error::config(format!("csv buffer: {e}")))?;
    Ok(csv_with_provenance(report, body))
}

// --------------------------------------------------------------------------
// SVG rendering
// --------------------------------------------------------------------------

fn fmt_coord(v: f64) -> String {
    format!("{v:.4}")
}

/// Renders the planar figure for one scale of a config without running the
/// sweep: boundary polyline, superlevel contour, and the analytic critical
/// points as marks. The full pipeline substitutes the solved points when
/// it has them.
pub fn render_domain_figure(config: &RunConfig, k: usize) -> Result<String> {
    config.validate()?;
    if k >= config.eps.len() {
        return Err(Error::validation(format!(
            "scale index {k} is out of range for {} perturbation sizes",
            config.eps.len()
        )));
    }
    let hash = config_hash(config)?;
    let mut rec = empty_record(k, config.eps[k], config.eta_requested(k));
    rec.field_critical_points = Some(build_domain(config, rec.eps)?.find_critical_points()?);
    render_domain_svg_at(config, &hash, &rec)
}

fn render_domain_svg(report: &TheoremOneReport, rec: &KRecord) -> Result<String> {
    render_domain_svg_at(&report.config, &report.config_hash, rec)
}

/// Renders the planar figure for one scale: boundary polyline, superlevel
/// contour, critical-point marks. Rebuilds the geometry from the config,
/// so it fails exactly when the scale's domain stage failed.
fn render_domain_svg_at(config: &RunConfig, hash: &str, rec: &KRecord) -> Result<String> {
    if config.d != 2 {
        return Err(Error::validation("the domain figure is planar only"));
    }
    let dom = build_domain(config, rec.eps)?;
    let boundary = boundary_polyline(&dom)?;
    let level = 1.0 / (2.0 * (config.d as f64 - 1.0));
    let segments = level_contour(&dom, level)?;
    let marks = rec
        .solution_critical_points
        .as_ref()
        .or(rec.field_critical_points.as_ref())
        .map(|v| v.as_slice())
        .unwrap_or(&[]);

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &boundary {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let pad = 0.06 * (max_x - min_x).max(max_y - min_y);

    // SVG y points down, so every emitted y is negated.
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n",
        fmt_coord(min_x - pad),
        fmt_coord(-max_y - pad),
        fmt_coord(max_x - min_x + 2.0 * pad),
        fmt_coord(max_y - min_y + 2.0 * pad),
    ));
    svg.push_str(&format!(
        "<desc>config {} k={} eps={}</desc>\n",
        hash, rec.k, rec.eps
    ));

    let mut path = String::new();
    for (i, &(x, y)) in boundary.iter().enumerate() {
        path.push_str(if i == 0 { "M" } else { " L" });
        path.push_str(&format!("{} {}", fmt_coord(x), fmt_coord(-y)));
    }
    path.push_str(" Z");
    svg.push_str(&format!(
        "<path class=\"boundary\" fill=\"none\" stroke=\"#333333\" \
         stroke-width=\"0.02\" d=\"{path}\"/>\n"
    ));

    let mut contour = String::new();
    for seg in &segments {
        contour.push_str(&format!(
            "M{} {} L{} {} ",
            fmt_coord(seg[0]),
            fmt_coord(-seg[1]),
            fmt_coord(seg[2]),
            fmt_coord(-seg[3]),
        ));
    }
    svg.push_str(&format!(
        "<path class=\"contour\" fill=\"none\" stroke=\"#1a7f5a\" \
         stroke-width=\"0.015\" d=\"{}\"/>\n",
        contour.trim_end()
    ));

    svg.push_str("<g class=\"critical-points\">\n");
    for p in marks {
        let (cx, cy) = (fmt_coord(p.x[0]), fmt_coord(-p.x[1]));
        match p.kind {
            CriticalKind::Maximum => svg.push_str(&format!(
                "<circle class=\"maximum\" cx=\"{cx}\" cy=\"{cy}\" r=\"0.06\" \
                 fill=\"#b3362b\"/>\n"
            )),
            CriticalKind::Saddle => svg.push_str(&format!(
                "<circle class=\"saddle\" cx=\"{cx}\" cy=\"{cy}\" r=\"0.06\" \
                 fill=\"none\" stroke=\"#b3362b\" stroke-width=\"0.02\"/>\n"
            )),
            CriticalKind::Minimum => svg.push_str(&format!(
                "<circle class=\"minimum\" cx=\"{cx}\" cy=\"{cy}\" r=\"0.06\" \
                 fill=\"#2b62b3\"/>\n"
            )),
        }
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}

/// Closed boundary polyline from radial samples.
fn boundary_polyline(dom: &StarDomain) -> Result<Vec<(f64, f64)>> {
    exec::try_map(BOUNDARY_POLYLINE_SAMPLES, |i| {
        let angle = 2.0 * std::f64::consts::PI * i as f64 / BOUNDARY_POLYLINE_SAMPLES as f64;
        let dir = [angle.cos(), angle.sin()];
        let r = dom.radial_extent(&dir)?;
        Ok((r * dir[0], r * dir[1]))
    })
}

/// Marching-squares segments of `{u = level}` over the verification box.
fn level_contour(dom: &StarDomain, level: f64) -> Result<Vec<[f64; 4]>> {
    let (lo, hi) = kernel::quadrature_box(dom);
    let nx = ((hi[0] - lo[0]) / CONTOUR_SPACING).ceil() as usize + 1;
    let ny = ((hi[1] - lo[1]) / CONTOUR_SPACING).ceil() as usize + 1;
    let field = dom.field();
    let values = exec::try_map(nx * ny, |idx| {
        let i = idx / ny;
        let j = idx % ny;
        field.value(&[
            lo[0] + i as f64 * CONTOUR_SPACING,
            lo[1] + j as f64 * CONTOUR_SPACING,
        ])
    })?;

    let rows = exec::map(nx - 1, |i| {
        let mut segs = Vec::new();
        for j in 0..ny - 1 {
            let x0 = lo[0] + i as f64 * CONTOUR_SPACING;
            let y0 = lo[1] + j as f64 * CONTOUR_SPACING;
            let v00 = values[i * ny + j];
            let v10 = values[(i + 1) * ny + j];
            let v01 = values[i * ny + j + 1];
            let v11 = values[(i + 1) * ny + j + 1];
            cell_segments(x0, y0, CONTOUR_SPACING, [v00, v10, v11, v01], level, &mut segs);
        }
        segs
    });
    Ok(rows.into_iter().flatten().collect())
}

/// Emits the contour segments of one cell. Corners are ordered
/// `[v00, v10, v11, v01]`; ambiguous diagonal cases are resolved with the
/// cell-center average.
fn cell_segments(
    x0: f64,
    y0: f64,
    h: f64,
    c: [f64; 4],
    level: f64,
    out: &mut Vec<[f64; 4]>,
) {
    let [v00, v10, v11, v01] = c;
    let code = (v00 > level) as usize
        | ((v10 > level) as usize) << 1
        | ((v11 > level) as usize) << 2
        | ((v01 > level) as usize) << 3;
    if code == 0 || code == 15 {
        return;
    }
    let t = |a: f64, b: f64| (level - a) / (b - a);
    // Edge crossings by linear interpolation: south, east, north, west.
    let s = [x0 + h * t(v00, v10), y0];
    let e = [x0 + h, y0 + h * t(v10, v11)];
    let n = [x0 + h * t(v01, v11), y0 + h];
    let w = [x0, y0 + h * t(v00, v01)];
    let mut push = |a: [f64; 2], b: [f64; 2]| out.push([a[0], a[1], b[0], b[1]]);
    match code {
        1 | 14 => push(w, s),
        2 | 13 => push(s, e),
        3 | 12 => push(w, e),
        4 | 11 => push(e, n),
        6 | 9 => push(s, n),
        7 | 8 => push(n, w),
        5 => {
            if 0.25 * (v00 + v10 + v11 + v01) > level {
                push(s, e);
                push(w, n);
            } else {
                push(w, s);
                push(e, n);
            }
        }
        10 => {
            if 0.25 * (v00 + v10 + v11 + v01) > level {
                push(w, s);
                push(e, n);
            } else {
                push(s, e);
                push(w, n);
            }
        }
        _ => unreachable!("cases 0 and 15 returned early"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;

    fn base_config(
        eps: Vec<f64>,
        manifold: ManifoldSpec,
        nonlinearity: NonlinearitySpec,
    ) -> RunConfig {
        RunConfig {
            n: 2,
            d: 2,
            a_values: None,
            eps,
            eta: None,
            eta_cap: DEFAULT_ETA_CAP,
            manifold,
            nonlinearity,
            a0: A0Rule::Auto,
            seed: 7,
            boundary_samples: 600,
            kernel_centers: 12,
            grid_spacing: 0.1,
            output_dir: None,
        }
    }

    #[test]
    fn config_parses_with_defaults_and_rejects_unknown_keys() {
        let minimal = r#"{"n":2,"d":2,"eps":[1e-2,1e-3],
            "manifold":{"kind":"euclidean"},"nonlinearity":{"kind":"constant-one"}}"#;
        let cfg = RunConfig::from_json_str(minimal).unwrap();
        assert_eq!(cfg.eta_cap, DEFAULT_ETA_CAP);
        assert_eq!(cfg.grid_spacing, DEFAULT_GRID_SPACING);
        assert_eq!(cfg.a0, A0Rule::Auto);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.eta_schedule(), vec![1e-2, 1e-3]);

        let full = base_config(
            vec![1e-3],
            ManifoldSpec::Sphere { kappa: 1.0 },
            NonlinearitySpec::Quadratic { c: 1.0 },
        );
        let text = serde_json::to_string(&full).unwrap();
        assert_eq!(RunConfig::from_json_str(&text).unwrap(), full);

        let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        doc.as_object_mut().unwrap().insert("mystery".into(), 1.into());
        let err = RunConfig::from_json_str(&doc.to_string()).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn bad_schedules_fail_before_any_work() {
        let increasing = base_config(
            vec![1e-3, 1e-2],
            ManifoldSpec::Euclidean,
            NonlinearitySpec::ConstantOne,
        );
        assert!(matches!(run_pipeline(&increasing).unwrap_err(), Error::Validation(_)));

        let mut cfg =
            base_config(vec![1e-2, 1e-3], ManifoldSpec::Euclidean, NonlinearitySpec::ConstantOne);
        cfg.eta = Some(vec![0.01]);
        assert!(matches!(run_pipeline(&cfg).unwrap_err(), Error::Validation(_)));
        cfg.eta = None;
        cfg.n = 1;
        assert!(matches!(run_pipeline(&cfg).unwrap_err(), Error::Validation(_)));
        cfg.n = 2;
        cfg.d = 4;
        assert!(matches!(run_pipeline(&cfg).unwrap_err(), Error::Validation(_)));
        cfg.d = 2;
        cfg.a_values = Some(vec![1.0, 2.0, 3.0]);
        assert!(matches!(run_pipeline(&cfg).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn specs_build_the_named_models() {
        assert_eq!(NonlinearitySpec::ConstantOne.build(2).unwrap().base_value(), 1.0);
        assert_eq!(NonlinearitySpec::OnePlusU.build(2).unwrap().base_value(), 1.0);
        assert_eq!(NonlinearitySpec::Quadratic { c: 2.0 }.build(2).unwrap().base_value(), 2.0);
        let custom = NonlinearitySpec::Custom { expression: "1 + u^2".into() };
        let nl = custom.build(2).unwrap();
        assert_eq!(nl.base_value(), 1.0);
        assert!((nl.value(&[0.0, 0.0], 0.5) - 1.25).abs() < 1e-15);

        assert_eq!(ManifoldSpec::Euclidean.build(3).unwrap().dimension(), 3);
        assert_eq!(ManifoldSpec::Sphere { kappa: 1.0 }.build(2).unwrap().kappa(), 1.0);
        assert_eq!(ManifoldSpec::Hyperbolic { kappa: -1.0 }.build(2).unwrap().kappa(), -1.0);
        assert!(ManifoldSpec::Sphere { kappa: -1.0 }.build(2).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let cfg =
            base_config(vec![1e-3], ManifoldSpec::Euclidean, NonlinearitySpec::ConstantOne);
        let h1 = config_hash(&cfg).unwrap();
        let h2 = config_hash(&cfg.clone()).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(h1.len(), 16);
        assert!(h1.chars().all(|c| c.is_ascii_hexdigit()));
        let mut other = cfg;
        other.seed += 1;
        assert_ne!(config_hash(&other).unwrap(), h1);
    }

    #[test]
    fn flat_run_reproduces_the_field_critical_points() {
        let cfg = base_config(
            vec![4e-3, 1e-3],
            ManifoldSpec::Euclidean,
            NonlinearitySpec::ConstantOne,
        );
        let report = run_pipeline(&cfg).unwrap();
        assert!(report.all_passed, "{:#?}", (report.clause_a, report.clause_b, report.clause_c));
        for rec in &report.records {
            assert!(rec.errors.is_empty(), "scale {} errors: {:?}", rec.k, rec.errors);
            assert_eq!(rec.eta, Some(rec.eta_requested));
            assert_eq!(rec.eta_halvings, 0);
            assert_eq!(rec.superlevel.as_ref().unwrap().count, 2);

            let solved = rec.solution_critical_points.as_ref().unwrap();
            let analytic = build_domain(&cfg, rec.eps).unwrap().find_critical_points().unwrap();
            assert_eq!(solved.len(), 3);
            assert_eq!(analytic.len(), 3);
            for p in solved {
                let nearest = analytic
                    .iter()
                    .filter(|a| a.kind == p.kind)
                    .map(|a| linalg::norm(&linalg::sub(&p.x, &a.x)))
                    .fold(f64::INFINITY, f64::min);
                assert!(nearest < 0.01, "{:?} displaced by {nearest}", p.x);
            }

            // On the flat chart the weighted ratio is the unweighted one.
            let flat = rec.flat_measure.as_ref().unwrap().value;
            let weighted = rec.manifold_measure.as_ref().unwrap().value;
            assert!((flat - weighted).abs() < 1e-9, "{flat} vs {weighted}");
        }
        let r0 = report.records[0].manifold_measure.as_ref().unwrap().value;
        let r1 = report.records[1].manifold_measure.as_ref().unwrap().value;
        assert!(r1 < r0, "ratio must decrease: {r0} -> {r1}");
    }

    #[test]
    fn sphere_run_passes_all_clauses() {
        let cfg = base_config(
            vec![4e-3, 1e-3],
            ManifoldSpec::Sphere { kappa: 1.0 },
            NonlinearitySpec::OnePlusU,
        );
        let report = run_pipeline(&cfg).unwrap();
        assert!(report.all_passed, "{:#?}", (report.clause_a, report.clause_b, report.clause_c));
        for rec in &report.records {
            assert!(rec.errors.is_empty(), "scale {} errors: {:?}", rec.k, rec.errors);
            assert!(rec.clause_a && rec.clause_b);
            let star = rec.geodesic_star.as_ref().unwrap();
            assert!(star.min_margin_ratio >= 0.5);
            let slope = rec.metric_calibration.as_ref().unwrap().h_slope;
            assert!((1.8..=2.2).contains(&slope), "h slope {slope}");
            let defect = rec.transition_calibration.as_ref().unwrap().defect_slope;
            assert!((1.8..=2.2).contains(&defect), "transition slope {defect}");
        }
    }

    #[test]
    fn amplitude_escalates_when_a_fresh_sample_falsifies_the_scan() {
        // At this seed and density the dyadic scan accepts an amplitude
        // whose kernel still contains non-star centers; the independent
        // certification sample catches one and the stage doubles the
        // amplitude instead of letting the geodesic stage fail downstream.
        let mut cfg = base_config(
            vec![4e-3],
            ManifoldSpec::Sphere { kappa: 1.0 },
            NonlinearitySpec::OnePlusU,
        );
        cfg.seed = 0;
        cfg.boundary_samples = 2000;
        cfg.kernel_centers = 50;
        let report = run_pipeline(&cfg).unwrap();
        let rec = &report.records[0];
        assert!(rec.errors.is_empty(), "{:?}", rec.errors);
        let amp = rec.amplitude.as_ref().unwrap();
        assert!(amp.escalations >= 1, "expected an escalation, accepted a0 {}", amp.a0);
        assert!(amp.margin > 0.0);
        assert!(rec.clause_b, "certified centers must pass the geodesic check");
    }

    #[test]
    fn out_of_window_scale_is_recorded_and_the_rest_continue() {
        // At eps = 1e-2 the planar domain is unbounded, so every geometric
        // stage of the first scale fails; the sweep must still complete the
        // second scale and fail the aggregate verdicts honestly.
        let cfg = base_config(
            vec![1e-2, 1e-3],
            ManifoldSpec::Sphere { kappa: 1.0 },
            NonlinearitySpec::ConstantOne,
        );
        let report = run_pipeline(&cfg).unwrap();
        assert!(!report.all_passed);
        let first = &report.records[0];
        assert!(!first.errors.is_empty());
        if let Some(adm) = &first.admissibility {
            assert!(!adm.admissible);
            assert!(adm.escape_witness.is_some());
        }
        assert!(!first.clause_a);
        let second = &report.records[1];
        assert!(second.clause_a && second.clause_b, "errors: {:?}", second.errors);
        assert!(!report.clause_c.passed);
    }

    #[test]
    fn eta_halving_retries_until_convergence() {
        // eta = 2.5 puts eta^2 above the principal Dirichlet eigenvalue, so
        // the first continuation leaves the positive branch; one halving
        // lands at 1.25, which converges.
        let mut cfg =
            base_config(vec![1e-3], ManifoldSpec::Euclidean, NonlinearitySpec::OnePlusU);
        cfg.eta = Some(vec![2.5]);
        let report = run_pipeline(&cfg).unwrap();
        let rec = &report.records[0];
        assert_eq!(rec.eta_requested, 2.5);
        assert_eq!(rec.eta, Some(1.25));
        assert_eq!(rec.eta_halvings, 1);
        assert!(rec.solve.is_some());
    }

    #[test]
    fn strict_doubles_the_sample_densities() {
        let mut cfg =
            base_config(vec![1e-3], ManifoldSpec::Euclidean, NonlinearitySpec::ConstantOne);
        cfg.apply_strict();
        assert_eq!(cfg.boundary_samples, 1200);
        assert_eq!(cfg.kernel_centers, 24);
    }

    #[test]
    fn artifacts_are_deterministic_and_complete() {
        let cfg = base_config(
            vec![1e-3],
            ManifoldSpec::Euclidean,
            NonlinearitySpec::ConstantOne,
        );
        let report = run_pipeline(&cfg).unwrap();
        let again = run_pipeline(&cfg).unwrap();
        assert_eq!(
            render_report_json(&report).unwrap(),
            render_report_json(&again).unwrap(),
            "two runs with the same config and seed must serialize identically"
        );

        let dir = tempfile::tempdir().unwrap();
        let formats = [ArtifactFormat::Json, ArtifactFormat::Csv, ArtifactFormat::Svg];
        let written = emit_artifacts(&report, &formats, dir.path()).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            ["report.json", "critical_points.csv", "measure_sweep.csv", "domain_0.svg"]
        );

        let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, serde_json::to_value(&report).unwrap());

        let csv_text = fs::read_to_string(dir.path().join("critical_points.csv")).unwrap();
        let lines: Vec<&str> = csv_text.lines().collect();
        assert_eq!(lines[0], format!("# config {}", report.config_hash));
        assert_eq!(lines[1], "k,eps,eta,x1,x2,kind,min_eig,max_eig");
        assert_eq!(lines.len(), 2 + 3, "one row per critical point");

        let sweep_text = fs::read_to_string(dir.path().join("measure_sweep.csv")).unwrap();
        let sweep_lines: Vec<&str> = sweep_text.lines().collect();
        assert_eq!(sweep_lines[1], "k,eps,ratio,ci,fitted_slope");
        assert_eq!(sweep_lines.len(), 3);

        let svg = fs::read_to_string(dir.path().join("domain_0.svg")).unwrap();
        assert!(svg.contains(&format!("config {}", report.config_hash)));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(contour_components(&svg), 2, "the level set has two bumps");
    }

    /// Counts connected components of the contour path by union-find over
    /// quantized segment endpoints.
    fn contour_components(svg: &str) -> usize {
        let start = svg.find("class=\"contour\"").expect("contour path present");
        let d_start = svg[start..].find("d=\"").unwrap() + start + 3;
        let d_end = svg[d_start..].find('"').unwrap() + d_start;
        let path = &svg[d_start..d_end];

        let mut parents: Vec<usize> = Vec::new();
        let mut index: std::collections::HashMap<(i64, i64), usize> =
            std::collections::HashMap::new();
        fn find(parents: &mut Vec<usize>, mut i: usize) -> usize {
            while parents[i] != i {
                parents[i] = parents[parents[i]];
                i = parents[i];
            }
            i
        }
        let mut key = |parents: &mut Vec<usize>,
                       index: &mut std::collections::HashMap<(i64, i64), usize>,
                       x: f64,
                       y: f64| {
            let q = ((x * 1e6).round() as i64, (y * 1e6).round() as i64);
            *index.entry(q).or_insert_with(|| {
                parents.push(parents.len());
                parents.len() - 1
            })
        };
        for seg in path.split('M').filter(|s| !s.trim().is_empty()) {
            let nums: Vec<f64> = seg
                .replace('L', " ")
                .split_whitespace()
                .map(|t| t.parse().unwrap())
                .collect();
            assert_eq!(nums.len(), 4, "segment {seg:?}");
            let a = key(&mut parents, &mut index, nums[0], nums[1]);
            let b = key(&mut parents, &mut index, nums[2], nums[3]);
            let (ra, rb) = (find(&mut parents, a), find(&mut parents, b));
            parents[ra] = rb;
        }
        let mut roots: Vec<usize> =
            (0..parents.len()).map(|i| find(&mut parents, i)).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}
