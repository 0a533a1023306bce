//! The discrete p-Laplace operator, its flux, and the associated convex
//! energy.
//!
//! The flux carries an optional regularization weight
//! (|F|^2 + delta^2)^((p-2)/2) so the per-step solver has a locally
//! Lipschitz nonlinearity for p < 2; delta = 0 recovers the exact
//! degenerate/singular flux with the continuous extension by zero at
//! F = 0. Monotonicity holds for every delta >= 0 because the regularized
//! flux stays the gradient of a convex integrand.

use crate::grid::{div, grad, Field, VectorField};

/// Exponent p in (1, inf) and flux regularization delta >= 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PLaplaceParams {
    pub p: f64,
    pub delta: f64,
}

impl PLaplaceParams {
    pub fn new(p: f64) -> Self {
        Self::with_delta(p, 0.0)
    }

    pub fn with_delta(p: f64, delta: f64) -> Self {
        assert!(
            p > 1.0 && p.is_finite(),
            "exponent must satisfy p > 1, got {p}"
        );
        assert!(
            delta >= 0.0,
            "flux regularization must be >= 0, got {delta}"
        );
        PLaplaceParams { p, delta }
    }

    /// Conjugate exponent p' = p / (p - 1).
    pub fn conjugate(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

/// First delta of the continuation schedule used for p < 2.
pub const DELTA_SCHEDULE_START: f64 = 1e-2;
/// Multiplicative decay per continuation stage.
pub const DELTA_SCHEDULE_FACTOR: f64 = 0.5;
/// The schedule stops once delta drops to this floor, then a final stage
/// runs at the target delta itself.
pub const DELTA_SCHEDULE_FLOOR: f64 = 1e-8;

/// Continuation deltas for a solve targeting `target` at exponent `p`.
///
/// For p >= 2 (or a target already above the schedule start) the flux is
/// solver-friendly as is and the schedule is just `[target]`. For p < 2 the
/// schedule walks 1e-2 * 2^-j down to the floor and finishes at `target`.
pub fn delta_schedule(p: f64, target: f64) -> Vec<f64> {
    if p >= 2.0 || target >= DELTA_SCHEDULE_START {
        return vec![target];
    }
    let mut out = Vec::new();
    let mut d = DELTA_SCHEDULE_START;
    while d > DELTA_SCHEDULE_FLOOR && d > target {
        out.push(d);
        d *= DELTA_SCHEDULE_FACTOR;
    }
    out.push(target.max(0.0));
    out
}

/// Pointwise regularized flux weight (s + delta^2)^((p-2)/2) with s = |F|^2.
///
/// Returns 0 when s + delta^2 == 0, which is the continuous extension of
/// the flux by zero at the p < 2 singularity (and exact for p > 2).
#[inline]
pub(crate) fn flux_weight(s: f64, p: f64, delta: f64) -> f64 {
    let t = s + delta * delta;
    if t == 0.0 {
        0.0
    } else {
        t.powf(0.5 * (p - 2.0))
    }
}

/// Regularized flux (|F|^2 + delta^2)^((p-2)/2) F, applied pointwise.
pub fn flux(f: &VectorField, params: PLaplaceParams) -> VectorField {
    let g = f.grid();
    let mut out = VectorField::zeros(g);
    for idx in 0..g.len() {
        let w = flux_weight(f.magnitude_sq(idx), params.p, params.delta);
        for axis in 0..g.dim() {
            out.component_mut(axis)[idx] = w * f.component(axis)[idx];
        }
    }
    out
}

/// Discrete p-Laplacian div(flux(grad u)); exact for delta = 0.
pub fn p_laplacian(u: &Field, params: PLaplaceParams) -> Field {
    div(&flux(&grad(u), params))
}

/// Convex diffusion energy (1/p) sum_x h^d (|grad u(x)|^2 + delta^2)^(p/2).
///
/// For delta = 0 this is (1/p) ||grad u||_p^p, and -p_laplacian(u) is its
/// gradient with respect to the lattice inner product.
pub fn energy(u: &Field, params: PLaplaceParams) -> f64 {
    let gu = grad(u);
    energy_of_gradient(&gu, params)
}

pub(crate) fn energy_of_gradient(gu: &VectorField, params: PLaplaceParams) -> f64 {
    let g = gu.grid();
    let d2 = params.delta * params.delta;
    let mut s = 0.0;
    for idx in 0..g.len() {
        s += (gu.magnitude_sq(idx) + d2).powf(0.5 * params.p);
    }
    g.cell_volume() * s / params.p
}

/// Pairing <flux(grad u), grad u>; equals ||grad u||_p^p when delta = 0.
pub fn dissipation(u: &Field, params: PLaplaceParams) -> f64 {
    let gu = grad(u);
    let g = gu.grid();
    let mut s = 0.0;
    for idx in 0..g.len() {
        let m2 = gu.magnitude_sq(idx);
        s += flux_weight(m2, params.p, params.delta) * m2;
    }
    g.cell_volume() * s
}
