//! Simulator for the stochastic p-Laplace evolution
//! du = div(|grad u|^(p-2) grad u) dt + noise, posed on a truncated
//! periodic box for any exponent p in (1, inf).
//!
//! Time is discretized implicitly: each step solves the monotone stationary
//! equation v - tau * div(|grad v|^(p-2) grad v) = f by convex minimization
//! ([`step`]). Noise is a truncated cylindrical Wiener process pushed
//! through Hilbert-Schmidt coefficient fields ([`noise`]), with the
//! previous-interval averaging convention that keeps every step adapted.
//! Solution-dependent noise is handled by a Picard iteration on the
//! solution operator under an exponentially weighted norm
//! ([`multiplicative`]), and an optional |u|^(p-2) u viscous term restores
//! coercivity for regularization studies ([`viscosity`]). The [`mc`] module
//! runs seed-reproducible ensembles and checks the discrete energy
//! estimates with statistical tolerances.

// negated comparisons are deliberate: NaN must fall into the conservative
// branch of every solver guard
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// stencil kernels index several arrays per lattice point
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod driver;
pub mod grid;
pub mod mc;
pub mod multiplicative;
pub mod noise;
pub mod output;
pub mod plap;
pub mod selfcheck;
pub mod spectral;
pub mod step;
pub mod viscosity;

pub use grid::{div, grad, inner, norm_l2, Field, Grid, VectorField};
pub use plap::PLaplaceParams;
pub use step::{solve_step, StepProblem, StepReport};
