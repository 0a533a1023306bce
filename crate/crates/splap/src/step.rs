//! One implicit time step: find v with v - tau * div(|grad v|^(p-2) grad v)
//! (+ optional viscous term) = f.
//!
//! The step operator is strictly monotone and coercive, so the step is the
//! unique minimizer of the strictly convex potential
//!
//! ```text
//! J(v) = 1/2 ||v||_2^2 + tau * energy(v) + (eps*tau/p) ||v||_p^p - <f, v>
//! ```
//!
//! whose gradient is exactly the step residual. The solver is a damped
//! descent method with Armijo backtracking (factor 0.5, sufficient-decrease
//! constant 1e-4) on J; directions come from an inexact Newton solve of the
//! Hessian system by preconditioned CG, with a spectral constant-coefficient
//! resolvent as the preconditioner. Every accepted iterate decreases J, so
//! the Newton acceleration never costs global convergence. For p < 2 the
//! flux is singular at grad v = 0 and the solve walks the delta-continuation
//! schedule from [`crate::plap`], finishing at the problem's own delta.

use thiserror::Error;

use crate::grid::{div, grad, inner, norm_l2, Field, VectorField};
use crate::plap::{delta_schedule, energy_of_gradient, flux_weight, PLaplaceParams};
use crate::spectral::Spectral;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

const ARMIJO_C1: f64 = 1e-4;
const ARMIJO_BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
const MAX_CG_ITER: usize = 400;
/// Iterations without a 0.1% residual improvement before a stage gives up.
const STALL_WINDOW: usize = 250;

/// One instance of the stationary step equation.
#[derive(Debug, Clone)]
pub struct StepProblem {
    /// Right-hand side, u^k plus the sampled noise increment.
    pub f: Field,
    /// Time step, > 0.
    pub tau: f64,
    pub params: PLaplaceParams,
    /// Weight of the extra |v|^(p-2) v term; 0 disables it.
    pub eps_viscosity: f64,
    /// Relative residual tolerance: success means
    /// ||residual||_2 <= tol * (1 + ||f||_2).
    pub tol: f64,
    pub max_iter: usize,
}

impl StepProblem {
    pub fn new(f: Field, tau: f64, params: PLaplaceParams) -> Self {
        StepProblem {
            f,
            tau,
            params,
            eps_viscosity: 0.0,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    fn validate(&self) {
        assert!(self.tau > 0.0, "step problem requires tau > 0");
        assert!(self.tol > 0.0, "step problem requires tol > 0");
        assert!(self.max_iter >= 1, "step problem requires max_iter >= 1");
        assert!(self.eps_viscosity >= 0.0);
    }
}

/// What the solver did: iteration count, final residual norm, final
/// objective value and the continuation deltas it visited.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub iterations: usize,
    pub residual: f64,
    pub objective: f64,
    pub delta_trace: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "step solve did not converge: residual {residual:.3e} after {iterations} iterations \
         (target {target:.3e}); shrink tau, raise max_iter, or for exponents close to 1 \
         set a positive flux regularization delta or a coarser tol (the flux resolves \
         differences across a flat lattice bond only down to about eps_machine^(p-1))"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },
}

/// The convex step potential at the problem's own delta.
pub fn objective(v: &Field, prob: &StepProblem) -> f64 {
    objective_at_delta(v, prob, prob.params.delta)
}

fn objective_at_delta(v: &Field, prob: &StepProblem, delta: f64) -> f64 {
    objective_with_scale(v, prob, delta).0
}

/// Objective value together with the sum of absolute term magnitudes; the
/// latter bounds the floating-point resolution of objective differences.
fn objective_with_scale(v: &Field, prob: &StepProblem, delta: f64) -> (f64, f64) {
    let p = prob.params.p;
    let gv = grad(v);
    let quad = 0.5 * inner(v, v);
    let diff = prob.tau * energy_of_gradient(&gv, PLaplaceParams::with_delta(p, delta));
    let visc = if prob.eps_viscosity > 0.0 {
        prob.eps_viscosity * prob.tau / p * lp_power_sum(v, p)
    } else {
        0.0
    };
    let data = inner(&prob.f, v);
    (quad + diff + visc - data, quad + diff + visc + data.abs())
}

/// h^d sum |v|^p, i.e. ||v||_p^p without the outer root.
pub fn lp_power_sum(v: &Field, p: f64) -> f64 {
    let s: f64 = v.values().iter().map(|x| x.abs().powf(p)).sum();
    v.grid().cell_volume() * s
}

/// Gradient of [`objective`]:
/// v - tau * p_laplacian(v) + eps * tau * |v|^(p-2) v - f.
pub fn residual(v: &Field, prob: &StepProblem) -> Field {
    residual_from_gradient(v, &grad(v), prob, prob.params.delta)
}

fn residual_from_gradient(v: &Field, gv: &VectorField, prob: &StepProblem, delta: f64) -> Field {
    let g = v.grid();
    let p = prob.params.p;
    let fl = crate::plap::flux(gv, PLaplaceParams::with_delta(p, delta));
    let dfl = div(&fl);
    let mut out = Field::zeros(g);
    let ev = prob.eps_viscosity * prob.tau;
    for i in 0..g.len() {
        let vi = v.values()[i];
        let mut r = vi - prob.tau * dfl.values()[i] - prob.f.values()[i];
        if ev > 0.0 {
            r += ev * signed_power(vi, p);
        }
        out.values_mut()[i] = r;
    }
    out
}

/// |v|^(p-2) v with the continuous extension by 0 at v = 0.
#[inline]
fn signed_power(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.abs().powf(p - 2.0) * v
    }
}

/// Frozen second-order data of the objective at the current iterate.
struct HessianCtx<'a> {
    prob: &'a StepProblem,
    grad_v: VectorField,
    /// floored flux weight per point
    weight: Vec<f64>,
    /// rank-one coefficient (p-2) * weight / s per point
    rank1: Vec<f64>,
    /// diagonal 1 + eps*tau*(p-1)*|v|^(p-2), floored for p < 2
    diag: Vec<f64>,
}

impl<'a> HessianCtx<'a> {
    fn new(v: &Field, gv: VectorField, prob: &'a StepProblem, delta: f64) -> Self {
        let g = v.grid();
        let p = prob.params.p;
        // Hessian floor: keeps the curvature finite where the p < 2 flux is
        // singular; only the search direction sees it, never the residual.
        let mut floor = delta.max(1e-8);
        if p < 2.0 {
            let rms = (0..g.len()).map(|i| gv.magnitude_sq(i)).sum::<f64>() / g.len() as f64;
            floor = floor.max(1e-6 * rms.sqrt());
        }
        let f2 = floor * floor;
        let mut weight = vec![0.0; g.len()];
        let mut rank1 = vec![0.0; g.len()];
        for i in 0..g.len() {
            let s = gv.magnitude_sq(i) + f2;
            let w = flux_weight(gv.magnitude_sq(i), p, floor);
            weight[i] = w;
            rank1[i] = if s > 0.0 { (p - 2.0) * w / s } else { 0.0 };
        }
        let ev = prob.eps_viscosity * prob.tau;
        let diag = (0..g.len())
            .map(|i| {
                let mut d = 1.0;
                if ev > 0.0 {
                    let s = v.values()[i] * v.values()[i] + f2;
                    if s > 0.0 {
                        d += ev * (p - 1.0) * s.powf(0.5 * (p - 2.0));
                    }
                }
                d
            })
            .collect();
        HessianCtx {
            prob,
            grad_v: gv,
            weight,
            rank1,
            diag,
        }
    }

    /// H q = diag .* q - tau * div(D(x) grad q) with
    /// D(x) y = weight y + rank1 (Gv . y) Gv.
    fn apply(&self, q: &Field) -> Field {
        let g = q.grid();
        let gq = grad(q);
        let mut dgq = VectorField::zeros(g);
        for i in 0..g.len() {
            let mut dot = 0.0;
            for a in 0..g.dim() {
                dot += self.grad_v.component(a)[i] * gq.component(a)[i];
            }
            let r1 = self.rank1[i] * dot;
            for a in 0..g.dim() {
                dgq.component_mut(a)[i] =
                    self.weight[i] * gq.component(a)[i] + r1 * self.grad_v.component(a)[i];
            }
        }
        let dd = div(&dgq);
        let mut out = Field::zeros(g);
        for i in 0..g.len() {
            out.values_mut()[i] = self.diag[i] * q.values()[i] - self.prob.tau * dd.values()[i];
        }
        out
    }

    /// Scalars for the spectral preconditioner gamma I - c tau Lap.
    fn preconditioner_scalars(&self) -> (f64, f64) {
        let n = self.weight.len() as f64;
        let mean_w = self.weight.iter().sum::<f64>() / n;
        let mean_d = self.diag.iter().sum::<f64>() / n;
        let c = self.prob.tau * mean_w * (self.prob.params.p - 1.0).max(1.0);
        (mean_d, c)
    }

    /// Exact diagonal of H: along each axis the point couples to its own
    /// and its backward neighbor's diffusion coefficient.
    fn hessian_diagonal(&self) -> Vec<f64> {
        let g = self.prob.f.grid();
        let n = g.points_per_axis();
        let h2 = g.spacing() * g.spacing();
        let mut out = self.diag.clone();
        for axis in 0..g.dim() {
            let stride = g.stride(axis);
            for idx in 0..g.len() {
                let c = (idx / stride) % n;
                let down = if c == 0 {
                    idx + (n - 1) * stride
                } else {
                    idx - stride
                };
                let here = self.coef_aa(idx, axis);
                let below = self.coef_aa(down, axis);
                out[idx] += self.prob.tau * (here + below) / h2;
            }
        }
        out
    }

    /// Diagonal entry of the pointwise diffusion tensor along `axis`;
    /// bounded below by (p-1) * weight, hence positive.
    #[inline]
    fn coef_aa(&self, idx: usize, axis: usize) -> f64 {
        let ga = self.grad_v.component(axis)[idx];
        self.weight[idx] + self.rank1[idx] * ga * ga
    }

    /// Pick the preconditioner: the spectral constant-coefficient
    /// resolvent when the weights are roughly uniform (it is exact at
    /// p = 2), a Jacobi sweep on the true diagonal when the singular
    /// p < 2 weight field spans decades, which is where the scalar
    /// surrogate breaks down.
    fn preconditioner<'s>(&'s self, spectral: &'s Spectral) -> Box<dyn Fn(&Field) -> Field + 's> {
        let n = self.weight.len() as f64;
        let mean_w = self.weight.iter().sum::<f64>() / n;
        let max_w = self.weight.iter().fold(0.0_f64, |a, &b| a.max(b));
        if self.prob.params.p < 2.0 && max_w > 100.0 * mean_w {
            let diag = self.hessian_diagonal();
            Box::new(move |r: &Field| {
                let values = r.values().iter().zip(&diag).map(|(v, d)| v / d).collect();
                Field::from_values(r.grid(), values)
            })
        } else {
            let (gamma, c) = self.preconditioner_scalars();
            Box::new(move |r: &Field| spectral.solve_helmholtz(r, gamma, c))
        }
    }
}

/// Preconditioned CG on the Hessian system H d = b, in the lattice inner
/// product (H is self-adjoint there thanks to the exact grad/div pair).
fn pcg(
    ctx: &HessianCtx,
    precond: &dyn Fn(&Field) -> Field,
    b: &Field,
    rel_tol: f64,
    max_iter: usize,
) -> Field {
    let mut d = Field::zeros(b.grid());
    let mut res = b.clone();
    let b_norm = norm_l2(b);
    if b_norm == 0.0 {
        return d;
    }
    let mut z = precond(&res);
    let mut pdir = z.clone();
    let mut rz = inner(&res, &z);
    for _ in 0..max_iter {
        let hp = ctx.apply(&pdir);
        let php = inner(&pdir, &hp);
        if !(php > 0.0) {
            break; // numerically lost positive-definiteness; use what we have
        }
        let alpha = rz / php;
        d.add_scaled(alpha, &pdir);
        res.add_scaled(-alpha, &hp);
        if norm_l2(&res) <= rel_tol * b_norm {
            break;
        }
        z = precond(&res);
        let rz_new = inner(&res, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut new_p = z.clone();
        new_p.add_scaled(beta, &pdir);
        pdir = new_p;
    }
    d
}

/// Solve the step equation to ||residual||_2 <= tol * (1 + ||f||_2),
/// starting from `v0` (callers pass the previous time level).
pub fn solve_step(prob: &StepProblem, v0: &Field) -> Result<(Field, StepReport), SolveError> {
    prob.validate();
    let f_norm = norm_l2(&prob.f);
    let target = prob.tol * (1.0 + f_norm);
    let schedule = delta_schedule(prob.params.p, prob.params.delta);
    let spectral = Spectral::new(prob.f.grid());

    let mut v = v0.clone();
    let mut total_iters = 0usize;
    let mut delta_trace = Vec::with_capacity(schedule.len());
    let mut last_residual = f64::INFINITY;

    for (si, &delta) in schedule.iter().enumerate() {
        let final_stage = si + 1 == schedule.len();
        // Intermediate continuation stages only need to stay inside the
        // next stage's Newton basin.
        let stage_tol = if final_stage {
            target
        } else {
            target.max(0.05 * delta * (1.0 + f_norm))
        };
        delta_trace.push(delta);

        // Step-size memory across iterations of this stage. At a p < 2 flux
        // cusp (a lattice gradient entry pinned at zero by the minimizer)
        // every quadratic model overshoots; keeping the damped scale turns
        // the iteration into a bisection onto the cusp instead of
        // re-overshooting from a full step each time.
        let mut alpha_start: f64 = 1.0;
        // Stall detection: close to p = 1 the flux resolution across a
        // flat lattice bond is about eps_machine^(p-1), which puts a hard
        // floor under the reachable residual; give up early instead of
        // creeping against it until max_iter.
        let mut best_rn = f64::INFINITY;
        let mut since_improvement = 0usize;
        loop {
            let gv = grad(&v);
            let r = residual_from_gradient(&v, &gv, prob, delta);
            let rn = norm_l2(&r);
            last_residual = rn;
            if rn <= stage_tol {
                break;
            }
            if rn <= best_rn * (1.0 - 1e-3) {
                best_rn = rn;
                since_improvement = 0;
            } else {
                since_improvement += 1;
            }
            if total_iters >= prob.max_iter || since_improvement >= STALL_WINDOW {
                return Err(SolveError::NonConvergence {
                    iterations: total_iters,
                    residual: rn,
                    target,
                });
            }

            let ctx = HessianCtx::new(&v, gv, prob, delta);
            let precond = ctx.preconditioner(&spectral);
            let cg_tol = (rn / (1.0 + f_norm)).sqrt().clamp(1e-4, 0.1);
            let mut dir = pcg(&ctx, &*precond, &r.scale(-1.0), cg_tol, MAX_CG_ITER);
            let mut slope = inner(&r, &dir);
            if !(slope < 0.0) {
                // fall back to preconditioned steepest descent
                dir = precond(&r).scale(-1.0);
                slope = inner(&r, &dir);
            }

            let (j0, jscale) = objective_with_scale(&v, prob, delta);
            // Below this, objective differences drown in rounding noise;
            // the Armijo test can neither accept nor reject reliably, so
            // the acceptance criterion switches to residual decrease.
            let noise_floor = 64.0 * f64::EPSILON * jscale.max(f64::MIN_POSITIVE);
            let mut alpha = alpha_start;
            let mut accepted = false;
            let mut backtracked = false;
            for _ in 0..MAX_BACKTRACKS {
                let trial = v.axpy(alpha, &dir);
                let predicted = ARMIJO_C1 * alpha * slope;
                if predicted.abs() > noise_floor {
                    let jt = objective_at_delta(&trial, prob, delta);
                    if jt <= j0 + predicted {
                        v = trial;
                        accepted = true;
                        break;
                    }
                } else {
                    let trial_rn =
                        norm_l2(&residual_from_gradient(&trial, &grad(&trial), prob, delta));
                    if trial_rn <= rn * (1.0 - ARMIJO_C1 * alpha) {
                        v = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= ARMIJO_BACKTRACK;
                backtracked = true;
            }
            total_iters += 1;
            if !accepted {
                // Progress stalled at floating-point resolution.
                return Err(SolveError::NonConvergence {
                    iterations: total_iters,
                    residual: rn,
                    target,
                });
            }
            alpha_start = if backtracked {
                alpha
            } else {
                (2.0 * alpha_start).min(1.0)
            };
            if std::env::var_os("SPLAP_TRACE").is_some() {
                eprintln!(
                    "iter {total_iters}: delta={delta:.3e} rn={rn:.6e} slope={slope:.3e} alpha={alpha:.3e}"
                );
            }
        }
    }

    if !(last_residual <= target) || !v.is_finite() {
        return Err(SolveError::NonConvergence {
            iterations: total_iters,
            residual: last_residual,
            target,
        });
    }
    let report = StepReport {
        iterations: total_iters,
        residual: last_residual,
        objective: objective(&v, prob),
        delta_trace,
    };
    Ok((v, report))
}
