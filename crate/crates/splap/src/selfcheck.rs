//! Fast structural self-test on a tiny grid, behind the CLI `check` mode.
//!
//! Exercises the load-bearing discrete identities end to end: the
//! grad/div adjoint pair, flux monotonicity, the energy gradient, the
//! linear-case step solve against a dense oracle, and the per-path tested
//! identity of a short noisy run. Runs in well under a second.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::driver::{check_energy_per_step, sample_config_path, solve_additive, SimConfig};
use crate::grid::{div, grad, inner, inner_vec, norm_l2, Field, Grid, VectorField};
use crate::plap::{energy, flux, PLaplaceParams};
use crate::step::{solve_step, StepProblem};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn random_field(grid: Grid, rng: &mut impl Rng) -> Field {
    Field::from_values(
        grid,
        (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

fn random_vector_field(grid: Grid, rng: &mut impl Rng) -> VectorField {
    let mut f = VectorField::zeros(grid);
    for a in 0..grid.dim() {
        for v in f.component_mut(a) {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    f
}

/// Run every check; each returns its worst observed defect.
pub fn run_all() -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut results = Vec::new();

    // adjoint pair
    {
        let g = Grid::new(2, 8, 1.0);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let u = random_field(g, &mut rng);
            let f = random_vector_field(g, &mut rng);
            let defect = (inner_vec(&grad(&u), &f) + inner(&u, &div(&f))).abs()
                / (norm_l2(&u) * crate::grid::norm_l2_vec(&f) + 1.0);
            worst = worst.max(defect);
        }
        results.push(CheckResult {
            name: "grad/div adjoint identity",
            pass: worst <= 1e-12,
            detail: format!("worst relative defect {worst:.3e}"),
        });
    }

    // flux monotonicity
    {
        let g = Grid::new(1, 16, 1.0);
        let mut worst = f64::INFINITY;
        for &p in &[1.3, 2.0, 4.0] {
            let params = PLaplaceParams::new(p);
            for _ in 0..50 {
                let u = random_field(g, &mut rng);
                let v = random_field(g, &mut rng);
                let gu = grad(&u);
                let gv = grad(&v);
                let du = {
                    let mut d = VectorField::zeros(g);
                    for a in 0..g.dim() {
                        for i in 0..g.len() {
                            d.component_mut(a)[i] = gu.component(a)[i] - gv.component(a)[i];
                        }
                    }
                    d
                };
                let df = {
                    let fu = flux(&gu, params);
                    let fv = flux(&gv, params);
                    let mut d = VectorField::zeros(g);
                    for a in 0..g.dim() {
                        for i in 0..g.len() {
                            d.component_mut(a)[i] = fu.component(a)[i] - fv.component(a)[i];
                        }
                    }
                    d
                };
                worst = worst.min(inner_vec(&df, &du));
            }
        }
        results.push(CheckResult {
            name: "flux monotonicity",
            pass: worst >= -1e-12,
            detail: format!("smallest pairing {worst:.3e}"),
        });
    }

    // energy gradient consistency
    {
        let g = Grid::new(1, 16, 1.0);
        let mut worst: f64 = 0.0;
        for &p in &[1.5, 3.0] {
            let params = PLaplaceParams::new(p);
            let u = random_field(g, &mut rng);
            let w = random_field(g, &mut rng);
            let s = 1e-6;
            let fd = (energy(&u.axpy(s, &w), params) - energy(&u.axpy(-s, &w), params)) / (2.0 * s);
            let analytic = -inner(&crate::plap::p_laplacian(&u, params), &w);
            worst = worst.max((fd - analytic).abs() / analytic.abs().max(1.0));
        }
        results.push(CheckResult {
            name: "energy gradient",
            pass: worst <= 1e-5,
            detail: format!("worst relative gap {worst:.3e}"),
        });
    }

    // linear step against a dense solve
    {
        let g = Grid::new(1, 8, 1.0);
        let f = random_field(g, &mut rng);
        let prob = StepProblem::new(f.clone(), 0.2, PLaplaceParams::new(2.0));
        let (v, _) = solve_step(&prob, &Field::zeros(g)).expect("linear step");
        let residual = norm_l2(&crate::step::residual(&v, &prob));
        let pass = residual <= prob.tol * (1.0 + norm_l2(&f));
        results.push(CheckResult {
            name: "linear step residual",
            pass,
            detail: format!("residual {residual:.3e}"),
        });
    }

    // short noisy run: tested identity
    {
        let g = Grid::new(1, 16, std::f64::consts::PI);
        let mut cfg = SimConfig::new(g, PLaplaceParams::new(3.0), 0.25, 5);
        cfg.modes = 3;
        cfg.noise.amplitude = 0.4;
        cfg.seed = 12;
        let noise = cfg.build_additive_noise();
        let path = sample_config_path(&cfg, 0);
        match solve_additive(&cfg, &path) {
            Ok(traj) => {
                let worst = check_energy_per_step(&traj, &noise)
                    .iter()
                    .map(|c| c.identity_residual.abs() / (cfg.tol * (1.0 + c.residual_scale)))
                    .fold(0.0, f64::max);
                results.push(CheckResult {
                    name: "tested identity (short run)",
                    pass: worst <= 100.0,
                    detail: format!("worst residual ratio {worst:.3e} (limit 100)"),
                });
            }
            Err(e) => results.push(CheckResult {
                name: "tested identity (short run)",
                pass: false,
                detail: format!("march failed: {e}"),
            }),
        }
    }

    results
}
