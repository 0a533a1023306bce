//! Solution-dependent noise via Banach fixed-point iteration.
//!
//! The solution operator maps a candidate state history rho to the
//! trajectory driven by the frozen coefficients b_n(rho): freeze rho on
//! each subinterval, run the additive march (the delayed-average
//! convention applies to the frozen coefficients unchanged), and repeat.
//! Under exp(-alpha t) weighting with alpha above the noise Lipschitz sum
//! bound L the operator contracts in expectation, so the iteration is run
//! until the weighted distance between successive iterates drops below
//! picard_tol^2.

use std::time::Instant;

use thiserror::Error;

use crate::driver::{solve_additive_with, DriverError, NoiseKind, SimConfig, Trajectory};
use crate::grid::{inner, Field};
use crate::noise::{AdditiveNoise, BasisSet, MultiplicativeNoise, NoisePath};

/// Additive base run plus the contraction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub base: SimConfig,
    /// weight exponent; must exceed the Lipschitz sum bound L
    pub alpha: f64,
    /// stop when the weighted distance between successive iterates is
    /// at most picard_tol^2
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

pub const DEFAULT_PICARD_TOL: f64 = 1e-6;
pub const DEFAULT_PICARD_MAX_ITER: usize = 200;

impl PicardConfig {
    /// alpha defaults to twice the Lipschitz bound, giving ratio 1/2.
    pub fn new(base: SimConfig) -> Self {
        let l = build_multiplicative_noise(&base).lipschitz_bound();
        PicardConfig {
            base,
            alpha: 2.0 * l,
            picard_tol: DEFAULT_PICARD_TOL,
            picard_max_iter: DEFAULT_PICARD_MAX_ITER,
        }
    }
}

/// The multiplicative operator described by a config's noise block.
pub fn build_multiplicative_noise(cfg: &SimConfig) -> MultiplicativeNoise {
    assert_eq!(
        cfg.noise.kind,
        NoiseKind::Multiplicative,
        "config does not describe multiplicative noise"
    );
    let basis = BasisSet::trigonometric(cfg.grid, cfg.modes);
    let weights = cfg.noise.mode_weights(cfg.modes);
    MultiplicativeNoise::new(basis, weights, cfg.noise.profile, cfg.noise.lip)
}

/// Left-endpoint quadrature of the exponentially weighted squared L^2
/// distance: tau * sum_{k=0}^{N-1} exp(-alpha t_k) ||u1^k - u2^k||_2^2.
pub fn weighted_distance(t1: &Trajectory, t2: &Trajectory, alpha: f64) -> f64 {
    assert_eq!(t1.grid(), t2.grid(), "trajectories live on different grids");
    assert_eq!(
        t1.n_steps(),
        t2.n_steps(),
        "trajectories have different step counts"
    );
    let fields1: Vec<&Field> = (0..t1.n_steps()).map(|k| t1.field(k)).collect();
    let fields2: Vec<&Field> = (0..t2.n_steps()).map(|k| t2.field(k)).collect();
    weighted_distance_fields(&fields1, &fields2, t1.tau(), alpha)
}

fn weighted_distance_fields(a: &[&Field], b: &[&Field], tau: f64, alpha: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    for (k, (ua, ub)) in a.iter().zip(b).enumerate() {
        let d = ua.axpy(-1.0, ub);
        sum += (-alpha * tau * k as f64).exp() * inner(&d, &d);
    }
    tau * sum
}

/// One row of the iteration trace, emitted as CSV by the CLI.
#[derive(Debug, Clone)]
pub struct PicardTraceEntry {
    pub iteration: usize,
    pub weighted_distance: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Error)]
pub enum PicardError {
    #[error("weight exponent alpha = {alpha} must exceed the Lipschitz bound L = {bound}")]
    AlphaTooSmall { alpha: f64, bound: f64 },
    #[error("fixed-point iteration did not converge in {iterations} sweeps")]
    NonConvergence {
        iterations: usize,
        trace: Vec<PicardTraceEntry>,
    },
    #[error(transparent)]
    Driver(#[from] DriverError),
}

/// Freeze the coefficients at each subinterval's left endpoint of `states`
/// and package them as an additive operator.
pub fn freeze_coefficients(
    noise: &MultiplicativeNoise,
    states: &[Field],
    n_steps: usize,
) -> AdditiveNoise {
    assert!(states.len() >= n_steps);
    let per_interval = (0..n_steps).map(|j| noise.evaluate(&states[j])).collect();
    AdditiveNoise::piecewise_constant(noise.basis().clone(), per_interval)
}

/// Iterate the solution operator to its fixed point for one noise path.
///
/// Starts from the initial condition held constant in time; returns the
/// fixed-point trajectory and the per-iteration weighted-distance trace.
pub fn picard_solve(
    cfg: &PicardConfig,
    path: &NoisePath,
) -> Result<(Trajectory, Vec<PicardTraceEntry>), PicardError> {
    let noise = build_multiplicative_noise(&cfg.base);
    let l = noise.lipschitz_bound();
    if !(cfg.alpha > l) {
        return Err(PicardError::AlphaTooSmall {
            alpha: cfg.alpha,
            bound: l,
        });
    }
    assert!(cfg.picard_tol > 0.0);

    let mut base = cfg.base.clone();
    base.keep_fields = true;
    let n = base.steps;
    let tau = base.tau();

    let initial = base.initial_field(path.stream());
    let mut prev_states: Vec<Field> = vec![initial; n + 1];
    let mut trace = Vec::new();
    let started = Instant::now();

    for iteration in 1..=cfg.picard_max_iter {
        let frozen = freeze_coefficients(&noise, &prev_states, n);
        let traj = solve_additive_with(&base, &frozen, path)?;
        let new_states: Vec<&Field> = (0..n).map(|k| traj.field(k)).collect();
        let prev_refs: Vec<&Field> = prev_states.iter().take(n).collect();
        let distance = weighted_distance_fields(&new_states, &prev_refs, tau, cfg.alpha);
        trace.push(PicardTraceEntry {
            iteration,
            weighted_distance: distance,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        prev_states = (0..=n).map(|k| traj.field(k).clone()).collect();
        if distance <= cfg.picard_tol * cfg.picard_tol {
            return Ok((traj, trace));
        }
    }
    Err(PicardError::NonConvergence {
        iterations: cfg.picard_max_iter,
        trace,
    })
}

/// One path's outcome inside a fixed-point ensemble.
#[derive(Debug, Clone)]
pub struct PicardPathResult {
    pub trace: Vec<PicardTraceEntry>,
    /// geometric mean of successive weighted-distance ratios
    pub fitted_ratio: Option<f64>,
    /// weighted distance moved by one extra sweep at the fixed point
    pub fixed_point_move: f64,
    pub ledger: Vec<crate::driver::StepRecord>,
}

#[derive(Debug, Clone)]
pub struct PicardEnsemble {
    pub paths: Vec<PicardPathResult>,
    /// ensemble median of the per-path fitted ratios
    pub median_ratio: f64,
    pub max_fixed_point_move: f64,
}

fn fitted_ratio(trace: &[PicardTraceEntry]) -> Option<f64> {
    let ds: Vec<f64> = trace
        .iter()
        .map(|e| e.weighted_distance)
        .filter(|&d| d > 0.0)
        .collect();
    if ds.len() < 2 {
        return None;
    }
    let log_ratio: f64 = ds.windows(2).map(|w| (w[1] / w[0]).ln()).sum();
    Some((log_ratio / (ds.len() - 1) as f64).exp())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Run the fixed-point iteration on `path_count` independent streams and
/// aggregate the contraction diagnostics. Each fixed point gets one extra
/// sweep to measure how far a re-application moves it. Deterministic per
/// (cfg, path_count, base_seed) under any worker count.
pub fn picard_ensemble(
    cfg: &PicardConfig,
    path_count: usize,
    base_seed: u64,
) -> Result<PicardEnsemble, PicardError> {
    use rayon::prelude::*;

    let mut cfg = cfg.clone();
    cfg.base.seed = base_seed;
    let noise = build_multiplicative_noise(&cfg.base);
    let l = noise.lipschitz_bound();
    if !(cfg.alpha > l) {
        return Err(PicardError::AlphaTooSmall {
            alpha: cfg.alpha,
            bound: l,
        });
    }

    let results: Vec<Result<PicardPathResult, PicardError>> = (0..path_count)
        .into_par_iter()
        .map(|i| {
            let path = crate::noise::sample_path_stream(
                base_seed,
                i as u64,
                cfg.base.steps,
                cfg.base.modes,
                cfg.base.horizon,
            );
            let (fixed, trace) = picard_solve(&cfg, &path)?;
            // one extra sweep from the fixed point
            let states: Vec<Field> = (0..=cfg.base.steps)
                .map(|k| fixed.field(k).clone())
                .collect();
            let frozen = freeze_coefficients(&noise, &states, cfg.base.steps);
            let mut base = cfg.base.clone();
            base.keep_fields = true;
            let reapplied = solve_additive_with(&base, &frozen, &path)?;
            let fixed_point_move = weighted_distance(&reapplied, &fixed, cfg.alpha);
            Ok(PicardPathResult {
                fitted_ratio: fitted_ratio(&trace),
                trace,
                fixed_point_move,
                ledger: fixed.records().to_vec(),
            })
        })
        .collect();

    let mut paths = Vec::with_capacity(path_count);
    for res in results {
        paths.push(res?);
    }
    let mut ratios: Vec<f64> = paths.iter().filter_map(|p| p.fitted_ratio).collect();
    let median_ratio = median(&mut ratios);
    let max_fixed_point_move = paths.iter().map(|p| p.fixed_point_move).fold(0.0, f64::max);
    Ok(PicardEnsemble {
        paths,
        median_ratio,
        max_fixed_point_move,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{sample_config_path, solve_additive, InitKind, InitSpec, SpectrumSpec};
    use crate::grid::{norm_l2, Grid};
    use crate::noise::NoiseProfile;
    use crate::plap::PLaplaceParams;

    fn multiplicative_config(p: f64, lip: f64) -> SimConfig {
        let grid = Grid::new(1, 16, std::f64::consts::PI);
        let mut cfg = SimConfig::new(grid, PLaplaceParams::new(p), 0.5, 10);
        cfg.modes = 3;
        cfg.keep_fields = true;
        cfg.noise.kind = NoiseKind::Multiplicative;
        cfg.noise.spectrum = SpectrumSpec::PowerLaw { gamma: 1.0 };
        cfg.noise.amplitude = 0.6;
        cfg.noise.profile = NoiseProfile::Identity;
        cfg.noise.lip = lip;
        cfg.init = InitSpec {
            kind: InitKind::GaussianBump,
            amplitude: 0.8,
            width: 0.8,
        };
        cfg
    }

    #[test]
    fn weighted_distance_of_identical_trajectories_is_zero() {
        let mut cfg = multiplicative_config(2.0, 0.0);
        cfg.noise.kind = NoiseKind::Additive;
        let path = sample_config_path(&cfg, 0);
        let traj = solve_additive(&cfg, &path).unwrap();
        assert_eq!(weighted_distance(&traj, &traj, 1.0), 0.0);
    }

    #[test]
    fn zero_weight_gives_the_plain_time_integral() {
        let mut cfg = multiplicative_config(2.0, 0.0);
        cfg.noise.kind = NoiseKind::Additive;
        cfg.noise.amplitude = 0.5;
        let path = sample_config_path(&cfg, 0);
        let t1 = solve_additive(&cfg, &path).unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.init = InitSpec {
            kind: InitKind::GaussianBump,
            amplitude: 0.3,
            width: 0.8,
        };
        let t2 = solve_additive(&cfg2, &path).unwrap();
        let wd = weighted_distance(&t1, &t2, 0.0);
        let mut plain = 0.0;
        for k in 0..t1.n_steps() {
            let d = t1.field(k).axpy(-1.0, t2.field(k));
            plain += t1.tau() * inner(&d, &d);
        }
        assert!((wd - plain).abs() <= 1e-14 * plain.max(1.0));
    }

    #[test]
    fn two_step_weighted_distance_by_hand() {
        // differences with L^2 norms (1, 2), tau = 0.5, alpha = 1:
        // 0.5 * (e^0 * 1 + e^{-0.5} * 4)
        let tau = 0.5;
        let grid = Grid::new(1, 4, 1.0);
        let h = grid.spacing();
        // a single-point difference of height a has squared norm h a^2
        let a1 = (1.0 / h).sqrt();
        let a2 = (4.0 / h).sqrt();
        let mut u1 = Field::zeros(grid);
        u1.values_mut()[0] = a1;
        let mut u2 = Field::zeros(grid);
        u2.values_mut()[0] = a2;
        let zero = Field::zeros(grid);
        let wd = weighted_distance_fields(&[&u1, &u2], &[&zero, &zero], tau, 1.0);
        let expected = 0.5 * (1.0 + (-0.5f64).exp() * 4.0);
        assert!((wd - expected).abs() <= 1e-12, "{wd} vs {expected}");
    }

    #[test]
    fn weighted_and_unweighted_distances_are_equivalent_norms() {
        // e^{-alpha T} ||.||^2 <= weighted <= ||.||^2, so the unweighted
        // distance bounds the weighted one by factors 1 and e^{alpha T}.
        let mut cfg = multiplicative_config(2.0, 0.0);
        cfg.noise.kind = NoiseKind::Additive;
        cfg.noise.amplitude = 0.4;
        let path = sample_config_path(&cfg, 0);
        let t1 = solve_additive(&cfg, &path).unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.seed = 99;
        cfg2.init = InitSpec {
            kind: InitKind::RandomSmooth,
            amplitude: 0.5,
            width: 0.0,
        };
        let t2 = solve_additive(&cfg2, &path).unwrap();
        for &alpha in &[0.3, 1.0, 4.0] {
            let weighted = weighted_distance(&t1, &t2, alpha);
            let plain = weighted_distance(&t1, &t2, 0.0);
            assert!(weighted <= plain * (1.0 + 1e-12));
            assert!(plain <= (alpha * cfg.horizon).exp() * weighted * (1.0 + 1e-12));
        }
    }

    #[test]
    fn vanishing_lipschitz_constant_fixes_the_first_iterate() {
        // lip = 0 makes the solution operator constant. Starting from a
        // spatially constant state (a steady state of the flow), the first
        // sweep already reproduces it, so the trace has a single entry and
        // the trajectory is the zero-noise additive solve.
        let mut cfg = multiplicative_config(3.0, 0.0);
        cfg.init = InitSpec {
            kind: InitKind::Zero,
            amplitude: 0.0,
            width: 0.0,
        };
        let pc = PicardConfig {
            alpha: 1.0,
            picard_tol: 1e-8,
            picard_max_iter: 10,
            base: cfg.clone(),
        };
        let path = sample_config_path(&cfg, 0);
        let (traj, trace) = picard_solve(&pc, &path).unwrap();
        assert_eq!(trace.len(), 1);
        let mut additive_cfg = cfg.clone();
        additive_cfg.noise.kind = NoiseKind::Additive;
        additive_cfg.noise.amplitude = 0.0;
        let reference = solve_additive(&additive_cfg, &path).unwrap();
        for k in 0..=cfg.steps {
            assert!(norm_l2(&traj.field(k).axpy(-1.0, reference.field(k))) <= 1e-12);
        }
    }

    #[test]
    fn alpha_at_or_below_the_bound_is_rejected() {
        let cfg = multiplicative_config(2.0, 0.5);
        let l = build_multiplicative_noise(&cfg).lipschitz_bound();
        let pc = PicardConfig {
            alpha: l / 2.0,
            picard_tol: 1e-6,
            picard_max_iter: 10,
            base: cfg.clone(),
        };
        let path = sample_config_path(&cfg, 0);
        match picard_solve(&pc, &path) {
            Err(PicardError::AlphaTooSmall { alpha, bound }) => {
                assert_eq!(alpha, l / 2.0);
                assert_eq!(bound, l);
            }
            other => panic!("expected AlphaTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn iteration_converges_and_reapplication_stays_put() {
        let cfg = multiplicative_config(2.0, 0.4);
        let pc = PicardConfig::new(cfg.clone());
        assert!(pc.alpha > build_multiplicative_noise(&cfg).lipschitz_bound());
        let path = sample_config_path(&cfg, 0);
        let (fixed, trace) = picard_solve(&pc, &path).unwrap();
        assert!(trace.last().unwrap().weighted_distance <= pc.picard_tol * pc.picard_tol);

        // one extra sweep moves the fixed point by at most 2 picard_tol
        let noise = build_multiplicative_noise(&cfg);
        let states: Vec<Field> = (0..=cfg.steps).map(|k| fixed.field(k).clone()).collect();
        let frozen = freeze_coefficients(&noise, &states, cfg.steps);
        let mut base = cfg.clone();
        base.keep_fields = true;
        let reapplied = solve_additive_with(&base, &frozen, &path).unwrap();
        let moved = weighted_distance(&reapplied, &fixed, pc.alpha);
        assert!(moved <= 2.0 * pc.picard_tol, "moved {moved}");
    }

    #[test]
    fn trace_decays_roughly_geometrically() {
        let cfg = multiplicative_config(2.0, 0.5);
        let pc = PicardConfig {
            alpha: 2.0 * build_multiplicative_noise(&cfg).lipschitz_bound(),
            picard_tol: 1e-7,
            picard_max_iter: 100,
            base: cfg.clone(),
        };
        let path = sample_config_path(&cfg, 3);
        let (_, trace) = picard_solve(&pc, &path).unwrap();
        assert!(trace.len() >= 3, "need several sweeps, got {}", trace.len());
        // distances should drop by a healthy factor on average
        let first = trace[1].weighted_distance;
        let last = trace.last().unwrap().weighted_distance;
        let steps = (trace.len() - 2).max(1);
        let ratio = (last / first).powf(1.0 / steps as f64);
        assert!(ratio < 0.9, "mean ratio {ratio}");
    }
}
