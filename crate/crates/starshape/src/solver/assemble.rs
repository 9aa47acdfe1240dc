//! Discrete residual and Jacobian of the rescaled equation.
//!
//! The residual at an interior node is
//!
//! ```text
//! G(U)_i = (Delta_h U)_i - eta^2 (T_eta U)_i + f(eta x_i, eta^2 U_i)
//! ```
//!
//! with the boundary-fitted second-difference stencil along each axis and
//! the metric correction `T_eta` from the chart split. The boundary carries
//! the zero trace, so stencil arms that leave the domain contribute nothing.
//! Passing no metric gives the zero-scale operator `Delta_h U + f(0, 0)`,
//! the flat reference every continuation starts from.

use crate::error::Error;
use crate::exec;
use crate::manifold::RescaledMetric;
use crate::nonlinearity::Nonlinearity;
use crate::Result;

use super::grid::GridDiscretization;
use super::linear::CsrMatrix;

/// Residual vector and Jacobian matrix at one iterate.
#[derive(Debug)]
pub struct Assembled {
    pub residual: Vec<f64>,
    pub jacobian: CsrMatrix,
}

/// Assembles residual and Jacobian at the iterate `u`.
pub fn assemble(
    gd: &GridDiscretization,
    rm: Option<&RescaledMetric>,
    nl: &Nonlinearity,
    u: &[f64],
) -> Result<Assembled> {
    let (residual, rows) = build(gd, rm, nl, u, true)?;
    Ok(Assembled {
        residual,
        jacobian: CsrMatrix::from_rows(rows.expect("rows requested")),
    })
}

/// Residual only, for line searches that do not need the matrix.
pub fn residual(
    gd: &GridDiscretization,
    rm: Option<&RescaledMetric>,
    nl: &Nonlinearity,
    u: &[f64],
) -> Result<Vec<f64>> {
    Ok(build(gd, rm, nl, u, false)?.0)
}

type RowSet = Option<Vec<Vec<(usize, f64)>>>;

fn build(
    gd: &GridDiscretization,
    rm: Option<&RescaledMetric>,
    nl: &Nonlinearity,
    u: &[f64],
    want_jacobian: bool,
) -> Result<(Vec<f64>, RowSet)> {
    let n = gd.interior_count();
    if u.len() != n {
        return Err(Error::validation(format!(
            "iterate has {} entries for a grid with {n} interior nodes",
            u.len()
        )));
    }
    let d = gd.dimension();
    let h = gd.h();
    let eta = rm.map_or(0.0, |r| r.eta());
    let eta2 = eta * eta;
    if let Some(r) = rm {
        r.require_reach(gd.max_radius())?;
    }

    let per_node = exec::try_map(n, |i| -> Result<(f64, Vec<(usize, f64)>)> {
        let x = gd.node_coords(i);
        let coeffs = match rm {
            Some(r) => Some(r.operator_coeffs(&x)?),
            None => None,
        };
        let ui = u[i];
        let mut res = 0.0;
        let mut diag = 0.0;
        let mut row: Vec<(usize, f64)> = if want_jacobian {
            Vec::with_capacity(2 * d * d + 1)
        } else {
            Vec::new()
        };

        for axis in 0..d {
            let (ga, gb) = gd.gaps(i, axis);
            let minus = gd.neighbor(i, axis, 0);
            let plus = gd.neighbor(i, axis, 1);
            let vm = minus.map_or(0.0, |j| u[j]);
            let vp = plus.map_or(0.0, |j| u[j]);

            // Axis second difference, weighted by the diagonal part of the
            // metric correction.
            let w = 1.0
                - coeffs
                    .as_ref()
                    .map_or(0.0, |c| eta2 * c.second_order[(axis, axis)]);
            let cm = 2.0 / (ga * (ga + gb));
            let cp = 2.0 / (gb * (ga + gb));
            let cc = -2.0 / (ga * gb);
            res += w * (cm * vm + cp * vp + cc * ui);
            diag += w * cc;
            if want_jacobian {
                if let Some(j) = minus {
                    row.push((j, w * cm));
                }
                if let Some(j) = plus {
                    row.push((j, w * cp));
                }
            }

            // Drift term, centered.
            if let Some(c) = &coeffs {
                let bk = c.first_order[axis];
                if bk != 0.0 {
                    let w1 = -eta2 * bk / (2.0 * h);
                    res += w1 * (vp - vm);
                    if want_jacobian {
                        if let Some(j) = plus {
                            row.push((j, w1));
                        }
                        if let Some(j) = minus {
                            row.push((j, -w1));
                        }
                    }
                }
            }
        }

        // Mixed second derivatives on the four-point lattice cross.
        if let Some(c) = &coeffs {
            let lat = gd.lattice_of(i);
            let ilat: Vec<i64> = lat.iter().map(|&v| v as i64).collect();
            for aj in 0..d {
                for ak in aj + 1..d {
                    let ajk = c.second_order[(aj, ak)];
                    if ajk == 0.0 {
                        continue;
                    }
                    let wx = -eta2 * 2.0 * ajk / (4.0 * h * h);
                    for (sj, sk, sign) in
                        [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)]
                    {
                        let mut shifted = ilat.clone();
                        shifted[aj] += sj;
                        shifted[ak] += sk;
                        if let Some(jn) = gd.node_at(&shifted) {
                            res += wx * sign * u[jn];
                            if want_jacobian {
                                row.push((jn, wx * sign));
                            }
                        }
                    }
                }
            }
        }

        // Reaction term at the rescaled point and amplitude.
        let q: Vec<f64> = x.iter().map(|&c| eta * c).collect();
        res += nl.value(&q, eta2 * ui);
        diag += eta2 * nl.du(&q, eta2 * ui);
        if want_jacobian {
            row.push((i, diag));
        }
        Ok((res, row))
    })?;

    let mut residual = Vec::with_capacity(n);
    let mut rows = want_jacobian.then(|| Vec::with_capacity(n));
    for (res, row) in per_node {
        residual.push(res);
        if let Some(rs) = rows.as_mut() {
            rs.push(row);
        }
    }
    Ok((residual, rows))
}

/// Sup norm, the residual scale the Newton loop monitors.
pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}
