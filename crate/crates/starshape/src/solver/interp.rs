//! Cubic interpolation of grid functions and critical-point counting on
//! discrete solutions.
//!
//! The interpolant is a tensor-product Catmull-Rom cubic: it interpolates
//! the node values, is continuously differentiable, reproduces quadratics
//! exactly, and its pieces have analytic gradients and Hessians. Exterior
//! lattice sites carry the boundary value zero. That is exactly enough
//! regularity to run Newton on the gradient and classify what it finds.

use std::sync::Arc;

use crate::domain::{CriticalKind, CriticalPoint, StarDomain};
use crate::error::Error;
use crate::linalg::{self, Mat};
use crate::Result;

use super::newton::DiscreteSolution;

const POLISH_MAX_ITERATIONS: usize = 60;
const POLISH_STEP_TOL: f64 = 1e-11;

/// Tensor-product Catmull-Rom interpolant over a uniform lattice.
#[derive(Debug, Clone)]
pub struct CubicInterpolant {
    origin: Vec<f64>,
    h: f64,
    dims: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl CubicInterpolant {
    /// Wraps a full lattice of values; `values` is indexed row-major with
    /// the last axis fastest.
    pub fn from_lattice(origin: Vec<f64>, h: f64, dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let d = dims.len();
        if !(2..=3).contains(&d) || origin.len() != d {
            return Err(Error::validation(format!(
                "interpolation lattice must be 2 or 3 dimensional, got dims {dims:?}"
            )));
        }
        if dims.iter().any(|&m| m < 4) {
            return Err(Error::validation(format!(
                "each lattice axis needs at least 4 sites, got {dims:?}"
            )));
        }
        let total: usize = dims.iter().product();
        if values.len() != total {
            return Err(Error::validation(format!(
                "lattice of {dims:?} sites needs {total} values, got {}",
                values.len()
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::validation(format!("lattice spacing {h} must be positive")));
        }
        let mut strides = vec![1usize; d];
        for k in (0..d - 1).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        Ok(CubicInterpolant { origin, h, dims, strides, values })
    }

    /// Interpolates a discrete solution, reading exterior sites as zero.
    pub fn from_solution(sol: &DiscreteSolution) -> Self {
        let gd = &sol.grid;
        let (origin, dims) = gd.layout();
        let dims = dims.to_vec();
        let mut strides = vec![1usize; dims.len()];
        for k in (0..dims.len() - 1).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let mut values = vec![0.0f64; dims.iter().product()];
        for i in 0..gd.interior_count() {
            let flat: usize = gd
                .lattice_of(i)
                .iter()
                .zip(&strides)
                .map(|(&idx, &s)| idx * s)
                .sum();
            values[flat] = sol.values[i];
        }
        CubicInterpolant {
            origin: origin.to_vec(),
            h: gd.h(),
            dims,
            strides,
            values,
        }
    }

    /// Cell index and local coordinate per axis; errors when the 4-site
    /// stencil would leave the lattice.
    fn locate(&self, x: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        let d = self.dims.len();
        if x.len() != d {
            return Err(Error::validation(format!(
                "point has {} coordinates on a {d}-dimensional lattice",
                x.len()
            )));
        }
        let mut cell = Vec::with_capacity(d);
        let mut local = Vec::with_capacity(d);
        for k in 0..d {
            let s = (x[k] - self.origin[k]) / self.h;
            let c = s.floor();
            if !(c >= 1.0 && c + 2.0 <= (self.dims[k] - 1) as f64) {
                return Err(Error::validation(format!(
                    "point {x:?} leaves the interpolation core along axis {k}"
                )));
            }
            cell.push(c as usize);
            local.push(s - c);
        }
        Ok((cell, local))
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.eval(x)?.0)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(x)?.1)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<Mat> {
        Ok(self.eval(x)?.2)
    }

    /// Value, gradient, and Hessian in one pass over the stencil.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>, Mat)> {
        let (cell, local) = self.locate(x)?;
        let d = self.dims.len();
        let mut w = [[0.0f64; 4]; 3];
        let mut dw = [[0.0f64; 4]; 3];
        let mut ddw = [[0.0f64; 4]; 3];
        for k in 0..d {
            let (a, b, c) = catmull_rom_weights(local[k]);
            w[k] = a;
            dw[k] = b;
            ddw[k] = c;
        }

        let mut value = 0.0;
        let mut grad = vec![0.0f64; d];
        let mut hess = Mat::zeros(d);
        let mut offsets = vec![0usize; d];
        loop {
            let mut flat = 0usize;
            for k in 0..d {
                flat += (cell[k] - 1 + offsets[k]) * self.strides[k];
            }
            let p = self.values[flat];
            if p != 0.0 {
                let mut base = p;
                for k in 0..d {
                    base *= w[k][offsets[k]];
                }
                value += base;
                for a in 0..d {
                    let mut g = p;
                    for k in 0..d {
                        g *= if k == a { dw[k][offsets[k]] } else { w[k][offsets[k]] };
                    }
                    grad[a] += g;
                    for b in a..d {
                        let mut hh = p;
                        for k in 0..d {
                            hh *= if k == a && k == b {
                                ddw[k][offsets[k]]
                            } else if k == a || k == b {
                                dw[k][offsets[k]]
                            } else {
                                w[k][offsets[k]]
                            };
                        }
                        hess[(a, b)] += hh;
                    }
                }
            }
            // advance the 4^d odometer
            let mut k = d;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                offsets[k] += 1;
                if offsets[k] < 4 {
                    break;
                }
                offsets[k] = 0;
            }
            if offsets.iter().all(|&o| o == 0) {
                break;
            }
        }

        for g in grad.iter_mut() {
            *g /= self.h;
        }
        for a in 0..d {
            for b in a..d {
                hess[(a, b)] /= self.h * self.h;
                hess[(b, a)] = hess[(a, b)];
            }
        }
        Ok((value, grad, hess))
    }
}

/// Catmull-Rom weight row and its first two derivatives in the local
/// coordinate `t` of one cell.
fn catmull_rom_weights(t: f64) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let w = [
        0.5 * (-t + 2.0 * t2 - t3),
        0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
        0.5 * (t + 4.0 * t2 - 3.0 * t3),
        0.5 * (-t2 + t3),
    ];
    let dw = [
        0.5 * (-1.0 + 4.0 * t - 3.0 * t2),
        0.5 * (-10.0 * t + 9.0 * t2),
        0.5 * (1.0 + 8.0 * t - 9.0 * t2),
        0.5 * (-2.0 * t + 3.0 * t2),
    ];
    let ddw = [
        0.5 * (4.0 - 6.0 * t),
        0.5 * (-10.0 + 18.0 * t),
        0.5 * (8.0 - 18.0 * t),
        0.5 * (-2.0 + 6.0 * t),
    ];
    (w, dw, ddw)
}

/// Locates and classifies the critical points of a discrete solution and
/// checks them against the profile's expected count.
///
/// Seeds come from the analytic critical points of the torsion field plus a
/// sweep for local minima of the discrete gradient norm; each seed is then
/// polished by Newton on the interpolated gradient. The count must be
/// exactly `2 n - 1` and every Hessian eigenvalue must clear the
/// nondegeneracy floor `1e-3 eps`, otherwise the solution's critical
/// structure is not certified and an error reports what was found.
pub fn count_solution_critical_points(
    sol: &DiscreteSolution,
    dom: &StarDomain,
) -> Result<Vec<CriticalPoint>> {
    let gd = &sol.grid;
    let field = dom.field();
    if gd.dimension() != field.dimension() || gd.field().eps() != field.eps() {
        return Err(Error::validation(
            "solution grid and domain describe different torsion fields",
        ));
    }
    let d = gd.dimension();
    let h = gd.h();
    let eps = field.eps();
    let interp = Arc::new(CubicInterpolant::from_solution(sol));

    let mut seeds: Vec<Vec<f64>> = dom
        .find_critical_points()?
        .into_iter()
        .map(|c| c.x)
        .collect();
    seeds.extend(gradient_norm_minima(gd, &sol.values));

    let slice = dom.slice_oracle(crate::kernel::SLICE_SPACING)?;
    let mut found: Vec<(Vec<f64>, f64, Mat)> = Vec::new();
    'seed: for seed in seeds {
        let mut x = seed;
        let mut converged = false;
        for _ in 0..POLISH_MAX_ITERATIONS {
            let Ok((_, grad, hess)) = interp.eval(&x) else {
                continue 'seed;
            };
            let Some(step) = hess.solve(&grad) else {
                continue 'seed;
            };
            let mut clipped = 1.0f64;
            let norm = linalg::norm(&step);
            if norm > h {
                clipped = h / norm;
            }
            for k in 0..d {
                x[k] -= clipped * step[k];
            }
            if clipped * norm <= POLISH_STEP_TOL {
                converged = true;
                break;
            }
        }
        if !converged || !slice.contains(&x).unwrap_or(false) {
            continue;
        }
        if found
            .iter()
            .any(|(y, _, _)| linalg::norm(&linalg::sub(&x, y)) < 0.5 * h)
        {
            continue;
        }
        let (value, _, hess) = interp.eval(&x)?;
        found.push((x, value, hess));
    }

    let expected = 2 * field.profile().points().values().len() - 1;
    if found.len() != expected {
        let spots: Vec<String> = found.iter().map(|(x, _, _)| format!("{x:?}")).collect();
        return Err(Error::structural(format!(
            "found {} critical points of the discrete solution, expected {expected}: [{}]",
            found.len(),
            spots.join(", ")
        )));
    }

    let floor = 1e-3 * eps;
    let mut out = Vec::with_capacity(found.len());
    for (x, value, hess) in found {
        let eigenvalues = hess.sym_eigenvalues();
        let smallest = eigenvalues.iter().fold(f64::INFINITY, |a, &l| a.min(l.abs()));
        if smallest < floor {
            return Err(Error::structural(format!(
                "critical point at {x:?} has an eigenvalue of magnitude {smallest:.3e}, \
                 below the nondegeneracy floor {floor:.3e}"
            )));
        }
        let kind = if eigenvalues.iter().all(|&l| l < 0.0) {
            CriticalKind::Maximum
        } else if eigenvalues.iter().all(|&l| l > 0.0) {
            CriticalKind::Minimum
        } else {
            CriticalKind::Saddle
        };
        out.push(CriticalPoint { x, value, kind, eigenvalues });
    }
    out.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .expect("critical coordinates are finite")
    });
    Ok(out)
}

/// Nodes whose centered-difference gradient norm is a local minimum among
/// the axis neighbors, as coordinates.
fn gradient_norm_minima(
    gd: &super::grid::GridDiscretization,
    values: &[f64],
) -> Vec<Vec<f64>> {
    let n = gd.interior_count();
    let d = gd.dimension();
    let gnorm: Vec<f64> = (0..n)
        .map(|i| {
            let mut s = 0.0;
            for axis in 0..d {
                let (ga, gb) = gd.gaps(i, axis);
                let vm = gd.neighbor(i, axis, 0).map_or(0.0, |j| values[j]);
                let vp = gd.neighbor(i, axis, 1).map_or(0.0, |j| values[j]);
                let g = (vp - vm) / (ga + gb);
                s += g * g;
            }
            s
        })
        .collect();
    (0..n)
        .filter(|&i| {
            (0..d).all(|axis| {
                (0..2).all(|side| {
                    gd.neighbor(i, axis, side)
                        .map_or(true, |j| gnorm[i] <= gnorm[j])
                })
            })
        })
        .map(|i| gd.node_coords(i))
        .collect()
}
