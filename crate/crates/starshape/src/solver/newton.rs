//! Damped Newton iteration on the discrete rescaled equation, plus the
//! continuation and grid-refinement drivers built on it.
//!
//! The torsion sample is always the starting iterate: on the operational
//! branch the solution is a small perturbation of it, so Newton converges in
//! a handful of steps and the backtracking line search almost never
//! activates. When it does stall, or the iteration cap is hit, the scale is
//! outside the branch and the error says so.

use std::sync::Arc;

use crate::error::Error;
use crate::manifold::{ChartedManifold, RescaledMetric};
use crate::nonlinearity::Nonlinearity;
use crate::Result;

use super::assemble::{assemble, residual, sup_norm};
use super::grid::GridDiscretization;
use super::linear::{solve_banded, solve_bicgstab};

const MAX_NEWTON_ITERATIONS: usize = 50;
const MAX_BACKTRACKS: usize = 30;
const ARMIJO_SLOPE: f64 = 1e-4;

/// A converged iterate on one grid at one scale.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub grid: Arc<GridDiscretization>,
    pub values: Vec<f64>,
    pub eta: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Residual sup norms per assembled iterate, the initial one first.
    pub residual_history: Vec<f64>,
}

/// Convergence tolerance on the residual sup norm.
pub fn residual_tolerance(nl: &Nonlinearity) -> f64 {
    1e-9 * (1.0 + nl.base_value().abs())
}

/// Runs damped Newton from `init` (default: the torsion sample). `rm` is
/// the metric at the working scale; `None` solves the zero-scale problem
/// `Delta U + f(0, 0) = 0`.
pub fn newton_solve(
    gd: &Arc<GridDiscretization>,
    rm: Option<&RescaledMetric>,
    nl: &Nonlinearity,
    init: Option<Vec<f64>>,
) -> Result<DiscreteSolution> {
    let eta = rm.map_or(0.0, |r| r.eta());
    let tol = residual_tolerance(nl);
    let mut u = match init {
        Some(v) => v,
        None => gd.sample_torsion()?,
    };
    let mut history = Vec::new();
    let mut iterations = 0usize;

    loop {
        let asm = assemble(gd, rm, nl, &u)?;
        let rnorm = sup_norm(&asm.residual);
        history.push(rnorm);
        if rnorm <= tol {
            return finish(gd, u, eta, rnorm, iterations, history);
        }
        if iterations >= MAX_NEWTON_ITERATIONS {
            return Err(Error::no_convergence(format!(
                "no convergence in {MAX_NEWTON_ITERATIONS} Newton iterations at scale \
                 eta = {eta:.3e} (residual {rnorm:.3e}); the scale likely exceeds the \
                 operational branch"
            )));
        }

        let rhs: Vec<f64> = asm.residual.iter().map(|r| -r).collect();
        let delta = if gd.dimension() == 2 {
            solve_banded(&asm.jacobian, &rhs)?
        } else {
            solve_bicgstab(&asm.jacobian, &rhs, &vec![0.0; rhs.len()])?.0
        };

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = u
                .iter()
                .zip(&delta)
                .map(|(&a, &b)| a + step * b)
                .collect();
            let cand_norm = sup_norm(&residual(gd, rm, nl, &candidate)?);
            if cand_norm <= (1.0 - ARMIJO_SLOPE * step) * rnorm {
                u = candidate;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::no_convergence(format!(
                "line search stalled at scale eta = {eta:.3e} with residual {rnorm:.3e}; \
                 the scale likely exceeds the operational branch"
            )));
        }
        iterations += 1;
    }
}

fn finish(
    gd: &Arc<GridDiscretization>,
    u: Vec<f64>,
    eta: f64,
    rnorm: f64,
    iterations: usize,
    history: Vec<f64>,
) -> Result<DiscreteSolution> {
    if let Some((node, &value)) = u
        .iter()
        .enumerate()
        .find(|(_, &v)| v <= 0.0)
        .map(|(i, v)| (i, v))
    {
        return Err(Error::structural(format!(
            "discrete solution is {value:.3e} at interior node {node}; losing positivity \
             means the scale left the operational branch"
        )));
    }
    Ok(DiscreteSolution {
        grid: Arc::clone(gd),
        values: u,
        eta,
        residual_norm: rnorm,
        iterations,
        residual_history: history,
    })
}

/// Warm-started continuation from small scales up to `eta_target`, in
/// `steps` equal increments. The zero-target edge returns the sampled
/// torsion endpoint of the branch without solving anything.
pub fn continuation_in_eta(
    gd: &Arc<GridDiscretization>,
    manifold: &ChartedManifold,
    nl: &Nonlinearity,
    eta_target: f64,
    steps: usize,
) -> Result<Vec<DiscreteSolution>> {
    if !eta_target.is_finite() || eta_target < 0.0 {
        return Err(Error::validation(format!(
            "continuation target {eta_target} must be a nonnegative scale"
        )));
    }
    if eta_target == 0.0 {
        let u = gd.sample_torsion()?;
        let rnorm = sup_norm(&residual(gd, None, nl, &u)?);
        return Ok(vec![DiscreteSolution {
            grid: Arc::clone(gd),
            values: u,
            eta: 0.0,
            residual_norm: rnorm,
            iterations: 0,
            residual_history: vec![rnorm],
        }]);
    }
    if steps == 0 {
        return Err(Error::validation("continuation needs at least one step"));
    }

    let mut branch = Vec::with_capacity(steps);
    let mut warm: Option<Vec<f64>> = None;
    for j in 1..=steps {
        let eta_j = eta_target * j as f64 / steps as f64;
        let rm = RescaledMetric::new(manifold, eta_j)?;
        let sol = newton_solve(gd, Some(&rm), nl, warm.take())?;
        warm = Some(sol.values.clone());
        branch.push(sol);
    }
    Ok(branch)
}

/// One scale of the refinement study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceRow {
    pub eta: f64,
    pub sup_distance: f64,
    pub grad_distance: f64,
}

/// Distances of solved iterates to the sampled torsion field across a
/// decreasing scale list, with the zero-scale discretization floor.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub sup_floor: f64,
    pub grad_floor: f64,
}

/// Solves at each scale in `etas` (strictly decreasing) and checks that the
/// distance to the sampled torsion field decreases toward the
/// discretization floor, which is measured from the zero-scale solve.
pub fn convergence_study(
    gd: &Arc<GridDiscretization>,
    manifold: &ChartedManifold,
    nl: &Nonlinearity,
    etas: &[f64],
) -> Result<ConvergenceStudy> {
    if etas.is_empty() {
        return Err(Error::validation("scale list for the study is empty"));
    }
    for pair in etas.windows(2) {
        if !(pair[1] > 0.0 && pair[1] < pair[0]) {
            return Err(Error::validation(format!(
                "scales must be positive and strictly decreasing, got {etas:?}"
            )));
        }
    }
    if !(etas[0] > 0.0 && etas[0].is_finite()) {
        return Err(Error::validation(format!(
            "scales must be positive and strictly decreasing, got {etas:?}"
        )));
    }

    let reference = gd.sample_torsion()?;
    let flat = newton_solve(gd, None, nl, None)?;
    let sup_floor = sup_distance(&flat.values, &reference);
    let grad_floor = grad_distance(gd, &flat.values, &reference);

    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let rm = RescaledMetric::new(manifold, eta)?;
        let sol = newton_solve(gd, Some(&rm), nl, None)?;
        rows.push(ConvergenceRow {
            eta,
            sup_distance: sup_distance(&sol.values, &reference),
            grad_distance: grad_distance(gd, &sol.values, &reference),
        });
    }

    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.sup_distance >= a.sup_distance && a.sup_distance > 2.0 * sup_floor {
            return Err(Error::structural(format!(
                "sup distance fails to decrease: {:.3e} at eta = {:.3e}, then {:.3e} at \
                 eta = {:.3e}, while above the floor {sup_floor:.3e}",
                a.sup_distance, a.eta, b.sup_distance, b.eta
            )));
        }
        if b.grad_distance >= a.grad_distance && a.grad_distance > 2.0 * grad_floor {
            return Err(Error::structural(format!(
                "gradient distance fails to decrease: {:.3e} at eta = {:.3e}, then {:.3e} \
                 at eta = {:.3e}, while above the floor {grad_floor:.3e}",
                a.grad_distance, a.eta, b.grad_distance, b.eta
            )));
        }
    }

    Ok(ConvergenceStudy {
        rows,
        sup_floor,
        grad_floor,
    })
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Sup over nodes and axes of the centered-difference gradient gap between
/// two grid functions, both read with the zero boundary trace.
fn grad_distance(gd: &GridDiscretization, a: &[f64], b: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..gd.interior_count() {
        for axis in 0..gd.dimension() {
            let (ga, gb) = gd.gaps(i, axis);
            let read = |v: &[f64], side: usize| gd.neighbor(i, axis, side).map_or(0.0, |j| v[j]);
            let da = (read(a, 1) - read(a, 0)) / (ga + gb);
            let db = (read(b, 1) - read(b, 0)) / (ga + gb);
            worst = worst.max((da - db).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StarDomain;
    use crate::profile::HarmonicProfile;
    use crate::solver::grid::discretize;
    use crate::torsion::TorsionField;

    fn fixture_grid(n: usize, d: usize, eps: f64, h: f64) -> Arc<GridDiscretization> {
        let profile = HarmonicProfile::standard(n).unwrap();
        let field = TorsionField::new(profile, d, eps).unwrap();
        let dom = StarDomain::new(field).unwrap();
        Arc::new(discretize(&dom, h).unwrap())
    }

    #[test]
    fn constant_forcing_converges_in_two_iterations() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::constant_one();
        let m = ChartedManifold::euclidean(2).unwrap();
        for eta in [0.3, 1e-2, 1e-4] {
            let rm = RescaledMetric::new(&m, eta).unwrap();
            let sol = newton_solve(&gd, Some(&rm), &nl, None).unwrap();
            assert!(sol.iterations <= 2, "{} iterations at eta {eta}", sol.iterations);
            assert!(sol.residual_norm <= residual_tolerance(&nl));
            assert!(sol.values.iter().all(|&v| v > 0.0));
        }
        let flat = newton_solve(&gd, None, &nl, None).unwrap();
        assert!(flat.iterations <= 2);
    }

    #[test]
    fn solution_error_is_second_order_in_the_spacing() {
        let nl = Nonlinearity::constant_one();
        let mut errors = Vec::new();
        for h in [0.1, 0.05] {
            let gd = fixture_grid(2, 2, 1e-3, h);
            let sol = newton_solve(&gd, None, &nl, None).unwrap();
            let truth = gd.sample_torsion().unwrap();
            errors.push(sup_distance(&sol.values, &truth));
        }
        let factor = errors[0] / errors[1];
        assert!(
            (3.5..=4.5).contains(&factor),
            "halving the spacing shrank the error by {factor}"
        );
    }

    #[test]
    fn residual_history_has_a_quadratic_tail() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::quadratic(1.0).unwrap();
        let m = ChartedManifold::euclidean(2).unwrap();
        let rm = RescaledMetric::new(&m, 0.9).unwrap();
        let sol = newton_solve(&gd, Some(&rm), &nl, None).unwrap();
        let tol = residual_tolerance(&nl);
        let mut tail_pairs = 0usize;
        for w in sol.residual_history.windows(2) {
            if w[0] <= 1e-3 {
                let bound = (100.0 * w[0] * w[0]).max(2.0 * tol);
                assert!(
                    w[1] <= bound,
                    "residual {} after {} breaks the quadratic tail",
                    w[1],
                    w[0]
                );
                tail_pairs += 1;
            }
        }
        assert!(tail_pairs >= 1, "history {:?} never entered the tail", sol.residual_history);
    }

    #[test]
    fn resonant_scale_leaves_the_branch() {
        // With f = 1 + u on the flat chart the linearization is
        // Delta + eta^2, and once eta^2 passes the first Dirichlet
        // eigenvalue the solution flips sign. The solver must refuse it
        // rather than return it.
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::one_plus_u();
        let m = ChartedManifold::euclidean(2).unwrap();
        let rm = RescaledMetric::new(&m, 2.5).unwrap();
        let err = newton_solve(&gd, Some(&rm), &nl, None).unwrap_err();
        assert!(
            matches!(err, Error::Structural(_) | Error::NoConvergence(_)),
            "{err}"
        );
    }

    #[test]
    fn continuation_returns_the_whole_branch() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::constant_one();
        let m = ChartedManifold::sphere(2, 1.0).unwrap();
        let branch = continuation_in_eta(&gd, &m, &nl, 0.01, 3).unwrap();
        assert_eq!(branch.len(), 3);
        let truth = gd.sample_torsion().unwrap();
        let first = sup_distance(&branch[0].values, &truth);
        let last = sup_distance(&branch[2].values, &truth);
        for (j, sol) in branch.iter().enumerate() {
            let expect = 0.01 * (j + 1) as f64 / 3.0;
            assert!((sol.eta - expect).abs() < 1e-15);
            assert!(sol.residual_norm <= residual_tolerance(&nl));
        }
        assert!(
            last >= first,
            "distance to the torsion endpoint shrank along the branch: {first} to {last}"
        );
    }

    #[test]
    fn zero_target_continuation_is_the_sampled_endpoint() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::constant_one();
        let m = ChartedManifold::sphere(2, 1.0).unwrap();
        let branch = continuation_in_eta(&gd, &m, &nl, 0.0, 5).unwrap();
        assert_eq!(branch.len(), 1);
        assert_eq!(branch[0].values, gd.sample_torsion().unwrap());
        assert_eq!(branch[0].iterations, 0);
        // The sampled field satisfies the equation exactly, but the stencil
        // truncation is first order on the boundary ring (and second order
        // inside), so the sup residual sits near h times the third
        // derivative rather than at the interior h^2 level.
        assert!(branch[0].residual_norm < 1e-2, "flat residual should be small");
    }

    #[test]
    fn continuation_validates_its_arguments() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::constant_one();
        let m = ChartedManifold::euclidean(2).unwrap();
        assert!(continuation_in_eta(&gd, &m, &nl, -1.0, 3).is_err());
        assert!(continuation_in_eta(&gd, &m, &nl, 0.01, 0).is_err());
    }

    #[test]
    fn study_sits_at_the_floor_on_the_flat_chart() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::constant_one();
        let m = ChartedManifold::euclidean(2).unwrap();
        let study = convergence_study(&gd, &m, &nl, &[0.4, 0.2, 0.1]).unwrap();
        for row in &study.rows {
            assert!(
                (row.sup_distance - study.sup_floor).abs() <= 1e-12 * (1.0 + study.sup_floor),
                "flat-chart distance {} drifted from the floor {}",
                row.sup_distance,
                study.sup_floor
            );
        }
    }

    #[test]
    fn study_decreases_on_the_sphere() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::constant_one();
        let m = ChartedManifold::sphere(2, 1.0).unwrap();
        let study = convergence_study(&gd, &m, &nl, &[0.04, 0.02, 0.01]).unwrap();
        for pair in study.rows.windows(2) {
            assert!(pair[1].sup_distance < pair[0].sup_distance);
        }
        assert!(study.rows[0].sup_distance > 10.0 * study.sup_floor);
    }

    #[test]
    fn study_rejects_bad_scale_lists() {
        let gd = fixture_grid(2, 2, 1e-3, 0.1);
        let nl = Nonlinearity::constant_one();
        let m = ChartedManifold::euclidean(2).unwrap();
        assert!(convergence_study(&gd, &m, &nl, &[]).is_err());
        assert!(convergence_study(&gd, &m, &nl, &[0.1, 0.2]).is_err());
        assert!(convergence_study(&gd, &m, &nl, &[0.1, 0.1]).is_err());
    }
}
