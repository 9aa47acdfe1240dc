//! Numerical construction and verification of star-shaped torsion domains.
//!
//! The central object is the perturbed torsion field
//!
//! ```text
//! u_eps(x) = (1 - x_2^2 - ... - x_d^2) / (2(d-1)) + eps * v_n(x_1, x_2)
//! ```
//!
//! where `v_n = Re F(x_1 + i x_2)` is a planar harmonic polynomial whose
//! axis restriction has `n` prescribed maxima. The field solves the torsion
//! problem `-Δu = 1` with zero boundary data on the domain
//! `Ω_eps = { u_eps > 0 }` (connected component of the origin), and for
//! small `eps` that domain is a bounded, star-shaped perturbation of the
//! unit cylinder whose solution has exactly `n` local maxima and `n - 1`
//! saddles.
//!
//! The crate builds these objects exactly (closed-form values, gradients,
//! Hessians), verifies every advertised property at desk scale, and extends
//! the construction to constant-curvature model manifolds through rescaled
//! normal coordinates: a finite-difference Newton continuation solves the
//! semilinear problem `ΔU - η²T_η U + f(ηx, η²U) = 0` on the flat domain,
//! and chart transition maps certify geodesic star-shapedness and
//! almost-convexity measure estimates of the mapped domains.
//!
//! Module map:
//!
//! * [`profile`] — harmonic profile `v_n`: coefficients, evaluation, axis
//!   critical points.
//! * [`torsion`] — the field `u_eps` with exact derivatives.
//! * [`domain`] — the domain `Ω_eps`: radial boundary, membership,
//!   bounding box / transversality / superlevel / critical-point checks.
//! * [`kernel`] — star kernel `D_eps`, star-point certification, measure
//!   ratios, almost-convexity sweeps.
//! * [`manifold`] — model manifolds, rescaled metrics, Laplace-Beltrami
//!   split, chart transitions, geodesic star checks.
//! * [`solver`] — masked-grid discretization and damped-Newton continuation
//!   for the semilinear problem.
//! * [`nonlinearity`] — built-in and parsed right-hand sides `f(q, u)`.
//! * [`pipeline`] — end-to-end sweep over an `(eps_k, eta_k)` schedule with
//!   deterministic report and artifact emission.
//!
//! All verification sweeps run data-parallel when the `parallel` feature
//! (default) is enabled and sequentially otherwise; results are bitwise
//! identical either way because reductions are ordered deterministically.

pub mod domain;
pub mod error;
pub mod exec;
pub mod kernel;
pub mod linalg;
pub mod manifold;
pub mod nonlinearity;
pub mod pipeline;
pub mod profile;
pub mod quad;
pub mod solver;
pub mod torsion;

pub use error::{Error, Result};
pub use profile::{AxisCriticalProfile, EvenPolynomial, HarmonicProfile, SeparationPoints};
pub use torsion::TorsionField;
