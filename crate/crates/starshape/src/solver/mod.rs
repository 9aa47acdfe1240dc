//! Finite-difference solver for the rescaled semilinear problem on a star
//! domain.
//!
//! The pipeline is: [`discretize`] a domain into a boundary-fitted lattice,
//! [`assemble`] the residual and Jacobian of
//! `Delta U - eta^2 T_eta U + f(eta x, eta^2 U)` at an iterate,
//! [`newton_solve`] the system with a damped Newton iteration, and
//! optionally walk scales with [`continuation_in_eta`] or compare against
//! the torsion sample with [`convergence_study`]. A converged
//! [`DiscreteSolution`] can then be upgraded to a [`CubicInterpolant`] and
//! its critical points counted with [`count_solution_critical_points`].
//!
//! Planar problems factorize their banded Newton systems directly; spatial
//! ones use BiCGStab with diagonal scaling. Either way the zero Dirichlet
//! trace is built into the stencils, so the unknowns are exactly the
//! interior node values.

mod assemble;
mod grid;
mod interp;
mod linear;
mod newton;

pub use assemble::{assemble, residual, sup_norm, Assembled};
pub use grid::{discretize, GridDiscretization};
pub use interp::{count_solution_critical_points, CubicInterpolant};
pub use linear::{solve_banded, solve_bicgstab, CsrMatrix, KRYLOV_TOL};
pub use newton::{
    continuation_in_eta, convergence_study, newton_solve, residual_tolerance, ConvergenceRow,
    ConvergenceStudy, DiscreteSolution,
};
