//! Command-line driver for the verification toolkit.
//!
//! Each subcommand runs one stage in isolation against the same JSON run
//! config the library consumes, and `theorem1` runs the full sweep with
//! artifact emission. Stage subcommands print a JSON document to stdout;
//! `theorem1` prints one verdict line per clause.
//!
//! Exit codes: 0 when every requested check passed, 1 when a check ran and
//! failed, 2 for configuration and I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use starshape::kernel::{self, A0Rule};
use starshape::manifold;
use starshape::pipeline::{
    self, ArtifactFormat, ManifoldSpec, NonlinearitySpec, RunConfig, CALIBRATION_RADIUS,
    STAGE_AMPLITUDE, STAGE_MEASURE,
};
use starshape::solver;

#[derive(Parser)]
#[command(
    name = "starshape",
    version,
    about = "Builds star-shaped torsion domains with prescribed critical-point \
             structure and verifies every advertised property"
)]
struct Cli {
    /// JSON run config; a built-in planar demonstration is used when omitted
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Replaces the seed from the config
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Artifact directory; replaces output_dir from the config
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Doubles every sample density
    #[arg(long, global = true)]
    strict: bool,

    /// Artifact families to write, repeatable; default json
    #[arg(long, global = true, value_enum, value_name = "FMT")]
    format: Vec<FormatArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Svg,
}

impl From<FormatArg> for ArtifactFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ArtifactFormat::Json,
            FormatArg::Csv => ArtifactFormat::Csv,
            FormatArg::Svg => ArtifactFormat::Svg,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Report the harmonic profile: separation points, leading mixed
    /// coefficient, harmonicity residual
    Profile,
    /// Run the geometric checks at every perturbation size: admissibility,
    /// bounding box, transversality, superlevel count, critical points
    Domain,
    /// Choose the kernel amplitude and estimate the non-kernel measure ratio
    Kernel,
    /// Check the chart atlas: round-trip accuracy and the metric and
    /// transition scaling calibrations
    Manifold,
    /// Run the rescaled solves and certify the solution critical points
    Solve,
    /// Run the full sweep, print the clause verdicts, emit artifacts
    Theorem1,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let config = load_config(&cli)?;
    let formats = formats(&cli);
    match cli.command {
        Command::Profile => cmd_profile(&config),
        Command::Domain => cmd_domain(&config, &formats),
        Command::Kernel => cmd_kernel(&config),
        Command::Manifold => cmd_manifold(&config),
        Command::Solve => cmd_solve(&config),
        Command::Theorem1 => cmd_theorem1(&config, &formats),
    }
}

/// Two in-window perturbation sizes on the sphere, quick enough for a look
/// around without a config file.
fn demo_config() -> RunConfig {
    RunConfig {
        n: 2,
        d: 2,
        a_values: None,
        eps: vec![4e-3, 1e-3],
        eta: None,
        eta_cap: pipeline::DEFAULT_ETA_CAP,
        manifold: ManifoldSpec::Sphere { kappa: 1.0 },
        nonlinearity: NonlinearitySpec::OnePlusU,
        a0: A0Rule::Auto,
        seed: 0,
        boundary_samples: kernel::DEFAULT_BOUNDARY_SAMPLES,
        kernel_centers: pipeline::DEFAULT_KERNEL_CENTERS,
        grid_spacing: 0.1,
        output_dir: None,
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_json_file(path)
            .with_context(|| format!("reading config {}", path.display()))?,
        None => demo_config(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.strict {
        config.apply_strict();
    }
    if let Some(dir) = &cli.out {
        config.output_dir = Some(dir.clone());
    }
    config.validate()?;
    Ok(config)
}

fn formats(cli: &Cli) -> Vec<ArtifactFormat> {
    if cli.format.is_empty() {
        vec![ArtifactFormat::Json]
    } else {
        cli.format.iter().map(|&f| f.into()).collect()
    }
}

fn exit_for(passed: bool) -> ExitCode {
    if passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Prints the stage document to stdout and mirrors it into the artifact
/// directory when one is configured.
fn emit_doc(config: &RunConfig, name: &str, doc: &Value) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(doc)?;
    println!("{text}");
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, format!("{text}\n"))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

/// Runs one fallible check, stores its report under `name`, and applies
/// the pass predicate; a stage error is recorded and counts as a failure.
fn run_check<T: Serialize>(
    obj: &mut Map<String, Value>,
    errors: &mut Vec<String>,
    name: &str,
    result: starshape::Result<T>,
    passes: impl FnOnce(&T) -> bool,
) -> bool {
    match result {
        Ok(report) => {
            let ok = passes(&report);
            let value = serde_json::to_value(&report).expect("reports serialize");
            obj.insert(name.to_string(), value);
            ok
        }
        Err(e) => {
            errors.push(format!("{name}: {e}"));
            false
        }
    }
}

fn scale_entry(k: usize, eps: f64) -> Map<String, Value> {
    let mut obj = Map::new();
    obj.insert("k".into(), json!(k));
    obj.insert("eps".into(), json!(eps));
    obj
}

fn seal_entry(mut obj: Map<String, Value>, errors: Vec<String>, passed: bool) -> Value {
    obj.insert("errors".into(), json!(errors));
    obj.insert("passed".into(), json!(passed));
    Value::Object(obj)
}

// --------------------------------------------------------------------------
// Subcommands
// --------------------------------------------------------------------------

fn cmd_profile(config: &RunConfig) -> anyhow::Result<ExitCode> {
    let profile = config.build_profile()?;
    let n = profile.n();

    // Harmonicity over a deterministic lattice covering the separation
    // points with margin; the profile is harmonic in closed form, so the
    // sup of the Hessian trace is pure rounding noise.
    let r = profile.points().outermost() + 1.0;
    let mut laplacian_sup = 0.0_f64;
    for i in 0..50 {
        for j in 0..50 {
            let x1 = -r + 2.0 * r * i as f64 / 49.0;
            let x2 = -r + 2.0 * r * j as f64 / 49.0;
            let (_, _, hess) = profile.eval(x1, x2);
            laplacian_sup = laplacian_sup.max(hess.trace().abs());
        }
    }

    let coefficient = profile.monomial_coefficient(2 * n - 2, 2);
    let expected = (n * (2 * n - 1)) as f64;
    let harmonic = laplacian_sup <= 1e-10;
    let coefficient_ok = (coefficient - expected).abs() <= 1e-10 * expected;
    let passed = harmonic && coefficient_ok;

    let doc = json!({
        "config_hash": pipeline::config_hash(config)?,
        "n": n,
        "separation_points": profile.points().values(),
        "degree_in_z": 2 * profile.coefficients().degree(),
        "leading_mixed_coefficient": coefficient,
        "expected_leading_mixed_coefficient": expected,
        "laplacian_sup": laplacian_sup,
        "harmonic": harmonic,
        "passed": passed,
    });
    emit_doc(config, "profile.json", &doc)?;
    Ok(exit_for(passed))
}

fn cmd_domain(config: &RunConfig, formats: &[ArtifactFormat]) -> anyhow::Result<ExitCode> {
    let expected_points = 2 * config.n - 1;
    let mut scales = Vec::new();
    let mut all_passed = true;

    for (k, &eps) in config.eps.iter().enumerate() {
        let mut obj = scale_entry(k, eps);
        let mut errors = Vec::new();
        let mut ok = true;
        match pipeline::build_domain(config, eps) {
            Ok(dom) => {
                ok &= run_check(
                    &mut obj,
                    &mut errors,
                    "admissibility",
                    dom.check_epsilon_admissible(),
                    |r| r.admissible,
                );
                ok &= run_check(
                    &mut obj,
                    &mut errors,
                    "bounding_box",
                    dom.verify_bounding_box(config.boundary_samples),
                    |r| r.contained,
                );
                ok &= run_check(
                    &mut obj,
                    &mut errors,
                    "transversality",
                    dom.verify_transversality(config.boundary_samples),
                    |r| r.passed,
                );
                ok &= run_check(
                    &mut obj,
                    &mut errors,
                    "superlevel",
                    dom.count_superlevel_components(),
                    |r| r.count == r.expected,
                );
                ok &= run_check(
                    &mut obj,
                    &mut errors,
                    "critical_points",
                    dom.find_critical_points(),
                    |pts| pts.len() == expected_points,
                );
            }
            Err(e) => {
                ok = false;
                errors.push(format!("domain: {e}"));
            }
        }

        if formats.contains(&ArtifactFormat::Svg) && config.d == 2 {
            if let Some(dir) = &config.output_dir {
                match pipeline::render_domain_figure(config, k) {
                    Ok(svg) => {
                        std::fs::create_dir_all(dir)?;
                        let path = dir.join(format!("domain_{k}.svg"));
                        std::fs::write(&path, svg)?;
                        eprintln!("wrote {}", path.display());
                    }
                    Err(e) => eprintln!("figure for scale {k} skipped: {e}"),
                }
            }
        }

        all_passed &= ok;
        scales.push(seal_entry(obj, errors, ok));
    }

    let doc = json!({
        "config_hash": pipeline::config_hash(config)?,
        "scales": scales,
        "passed": all_passed,
    });
    emit_doc(config, "domain.json", &doc)?;
    Ok(exit_for(all_passed))
}

fn cmd_kernel(config: &RunConfig) -> anyhow::Result<ExitCode> {
    let mut scales = Vec::new();
    let mut all_passed = true;

    for (k, &eps) in config.eps.iter().enumerate() {
        let mut obj = scale_entry(k, eps);
        let mut errors = Vec::new();
        let mut ok = true;
        match pipeline::build_domain(config, eps) {
            Ok(dom) => {
                let field = dom.field().clone();
                let seed = pipeline::stage_seed(config.seed, k, STAGE_AMPLITUDE);
                match pipeline::select_amplitude(config, &field, &dom, seed) {
                    Ok(selected) => {
                        obj.insert("amplitude".into(), serde_json::to_value(&selected.record)?);
                        let seed = pipeline::stage_seed(config.seed, k, STAGE_MEASURE);
                        ok &= run_check(
                            &mut obj,
                            &mut errors,
                            "measure",
                            kernel::measure_ratio(&dom, &selected.region, seed),
                            |_| true,
                        );
                    }
                    Err(e) => {
                        ok = false;
                        errors.push(format!("amplitude: {e}"));
                    }
                }
            }
            Err(e) => {
                ok = false;
                errors.push(format!("domain: {e}"));
            }
        }
        all_passed &= ok;
        scales.push(seal_entry(obj, errors, ok));
    }

    let doc = json!({
        "config_hash": pipeline::config_hash(config)?,
        "scales": scales,
        "passed": all_passed,
    });
    emit_doc(config, "kernel.json", &doc)?;
    Ok(exit_for(all_passed))
}

/// Strictly decreasing calibration scales: the requested schedule when it
/// has at least two distinct entries, otherwise a dyadic sweep around the
/// single scale.
fn calibration_etas(config: &RunConfig) -> Vec<f64> {
    let mut etas = config.eta_schedule();
    etas.dedup();
    if etas.len() >= 2 {
        etas
    } else {
        vec![2.0 * etas[0], etas[0], 0.5 * etas[0]]
    }
}

fn cmd_manifold(config: &RunConfig) -> anyhow::Result<ExitCode> {
    let m = config.manifold.build(config.d)?;
    let roundtrip = manifold::roundtrip_check(&m, config.boundary_samples, config.seed)?;
    let etas = calibration_etas(config);
    let metric = manifold::calibrate_metric(&m, &etas, CALIBRATION_RADIUS)?;
    let mut xi = vec![0.0; config.d];
    xi[0] = 1.0;
    let transition = manifold::calibrate_transition(&m, &etas, &xi, CALIBRATION_RADIUS)?;

    let roundtrip_ok = roundtrip <= 1e-10;
    // Flat charts have identically vanishing corrections, so the quadratic
    // slope criterion only applies to curved models.
    let slopes_ok = match config.manifold {
        ManifoldSpec::Euclidean => true,
        _ => {
            (1.8..=2.2).contains(&metric.h_slope)
                && (1.8..=2.2).contains(&transition.defect_slope)
        }
    };
    let passed = roundtrip_ok && slopes_ok;

    let doc = json!({
        "config_hash": pipeline::config_hash(config)?,
        "manifold": config.manifold,
        "dimension": config.d,
        "roundtrip_sup": roundtrip,
        "roundtrip_ok": roundtrip_ok,
        "calibration_etas": etas,
        "metric_calibration": metric,
        "transition_calibration": transition,
        "slopes_ok": slopes_ok,
        "passed": passed,
    });
    emit_doc(config, "manifold.json", &doc)?;
    Ok(exit_for(passed))
}

fn cmd_solve(config: &RunConfig) -> anyhow::Result<ExitCode> {
    let m = config.manifold.build(config.d)?;
    let nl = config.nonlinearity.build(config.d)?;
    let mut scales = Vec::new();
    let mut all_passed = true;

    for (k, &eps) in config.eps.iter().enumerate() {
        let mut obj = scale_entry(k, eps);
        let mut errors = Vec::new();
        let mut ok = true;
        obj.insert("eta_requested".into(), json!(config.eta_requested(k)));
        match pipeline::build_domain(config, eps) {
            Ok(dom) => {
                match pipeline::solve_scale(config, &m, &nl, &dom, config.eta_requested(k)) {
                    Ok(solved) => {
                        obj.insert("eta".into(), json!(solved.eta));
                        obj.insert("eta_halvings".into(), json!(solved.halvings));
                        obj.insert("solve".into(), serde_json::to_value(&solved.record)?);
                        ok &= run_check(
                            &mut obj,
                            &mut errors,
                            "critical_points",
                            solver::count_solution_critical_points(&solved.solution, &dom),
                            |_| true,
                        );
                    }
                    Err(e) => {
                        ok = false;
                        errors.push(format!("solve: {e}"));
                    }
                }
            }
            Err(e) => {
                ok = false;
                errors.push(format!("domain: {e}"));
            }
        }
        all_passed &= ok;
        scales.push(seal_entry(obj, errors, ok));
    }

    let doc = json!({
        "config_hash": pipeline::config_hash(config)?,
        "scales": scales,
        "passed": all_passed,
    });
    emit_doc(config, "solve.json", &doc)?;
    Ok(exit_for(all_passed))
}

fn cmd_theorem1(config: &RunConfig, formats: &[ArtifactFormat]) -> anyhow::Result<ExitCode> {
    let report = pipeline::run_pipeline(config)?;
    for (name, verdict) in [
        ("a", &report.clause_a),
        ("b", &report.clause_b),
        ("c", &report.clause_c),
    ] {
        let mark = if verdict.passed { "PASS" } else { "FAIL" };
        println!("clause {name}: {mark} ({})", verdict.detail);
    }
    let summary = if report.all_passed { "all clauses pass" } else { "failed" };
    println!("config {}: {summary}", report.config_hash);

    if let Some(dir) = &report.config.output_dir {
        for path in pipeline::emit_artifacts(&report, formats, dir)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(exit_for(report.all_passed))
}
