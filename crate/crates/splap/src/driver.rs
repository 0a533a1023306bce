//! Marching the full discrete trajectory and its energy ledger.
//!
//! One run advances u^{k+1} = step(u^k + noise increment) for k = 0..N-1,
//! with the noise coefficients averaged over the previous subinterval
//! (zero on the first step). Every step appends a ledger row with the
//! norms, pairings and solver diagnostics the energy estimates need, so
//! the per-path tested identity and the ensemble inequalities can be
//! checked without retaining field history. Field history itself is
//! opt-in via `keep_fields`.

use thiserror::Error;

use crate::grid::{grad, inner, norm_l2, Field, Grid};
use crate::noise::{
    increment_field, sample_path_stream, AdditiveNoise, BasisSet, NoisePath, NoiseProfile,
};
use crate::plap::PLaplaceParams;
use crate::step::{
    lp_power_sum, solve_step, SolveError, StepProblem, DEFAULT_MAX_ITER, DEFAULT_TOL,
};

/// Which noise operator a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Additive,
    Multiplicative,
}

/// Relative mode weights of the coefficient spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumSpec {
    /// all modes weighted 1
    Flat,
    /// mode n weighted n^-gamma (1-based)
    PowerLaw { gamma: f64 },
}

impl SpectrumSpec {
    pub fn weight(&self, mode: usize) -> f64 {
        match self {
            SpectrumSpec::Flat => 1.0,
            SpectrumSpec::PowerLaw { gamma } => ((mode + 1) as f64).powf(-gamma),
        }
    }
}

/// Noise description as configured (the operator itself is built per run).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub spectrum: SpectrumSpec,
    pub amplitude: f64,
    /// scalar profile of multiplicative noise
    pub profile: NoiseProfile,
    /// Lipschitz constant of the multiplicative profile
    pub lip: f64,
}

impl NoiseSpec {
    pub fn additive(spectrum: SpectrumSpec, amplitude: f64) -> Self {
        NoiseSpec {
            kind: NoiseKind::Additive,
            spectrum,
            amplitude,
            profile: NoiseProfile::Identity,
            lip: 0.0,
        }
    }

    pub fn mode_weights(&self, modes: usize) -> Vec<f64> {
        (0..modes)
            .map(|n| self.amplitude * self.spectrum.weight(n))
            .collect()
    }
}

/// Initial condition description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Zero,
    GaussianBump,
    RandomSmooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub kind: InitKind,
    pub amplitude: f64,
    /// bump width; 0 means a quarter of the box half-width
    pub width: f64,
}

impl InitSpec {
    pub fn zero() -> Self {
        InitSpec {
            kind: InitKind::Zero,
            amplitude: 1.0,
            width: 0.0,
        }
    }
}

/// Full description of one time-discretized run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: Grid,
    pub params: PLaplaceParams,
    /// time horizon T; the step is tau = T / steps
    pub horizon: f64,
    pub steps: usize,
    pub modes: usize,
    pub noise: NoiseSpec,
    pub init: InitSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub eps_viscosity: f64,
    pub seed: u64,
    pub paths: usize,
    pub eps_list: Vec<f64>,
    pub keep_fields: bool,
    pub failure_budget: usize,
}

impl SimConfig {
    pub fn new(grid: Grid, params: PLaplaceParams, horizon: f64, steps: usize) -> Self {
        assert!(horizon > 0.0 && steps >= 1);
        SimConfig {
            grid,
            params,
            horizon,
            steps,
            modes: 8,
            noise: NoiseSpec::additive(SpectrumSpec::PowerLaw { gamma: 1.0 }, 0.5),
            init: InitSpec::zero(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            eps_viscosity: 0.0,
            seed: 0,
            paths: 200,
            eps_list: Vec::new(),
            keep_fields: false,
            failure_budget: 0,
        }
    }

    pub fn tau(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// The additive operator this config describes (diagonal spectrum over
    /// the trigonometric basis, constant in time).
    pub fn build_additive_noise(&self) -> AdditiveNoise {
        let basis = BasisSet::trigonometric(self.grid, self.modes);
        let weights = self.noise.mode_weights(self.modes);
        AdditiveNoise::diagonal_spectrum(basis, &weights)
    }

    /// Initial state for the path on `stream`; deterministic per
    /// (seed, stream).
    pub fn initial_field(&self, stream: u64) -> Field {
        match self.init.kind {
            InitKind::Zero => Field::zeros(self.grid),
            InitKind::GaussianBump => {
                let w = if self.init.width > 0.0 {
                    self.init.width
                } else {
                    self.grid.half_width() / 4.0
                };
                let a = self.init.amplitude;
                Field::from_fn(self.grid, |x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    a * (-r2 / (2.0 * w * w)).exp()
                })
            }
            InitKind::RandomSmooth => {
                use rand::prelude::*;
                use rand_chacha::ChaCha8Rng;
                use rand_distr::StandardNormal;
                // separate seed domain from the Brownian streams
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
                rng.set_stream(stream);
                let count = self.modes.min(BasisSet::max_modes(self.grid));
                let basis = BasisSet::trigonometric(self.grid, count);
                let mut out = Field::zeros(self.grid);
                for n in 0..count {
                    let xi: f64 = rng.sample(StandardNormal);
                    let decay = 1.0 / (n + 1) as f64;
                    out.add_scaled(self.init.amplitude * decay * xi, basis.mode(n));
                }
                out
            }
        }
    }
}

/// One ledger row; row k describes the state u^k and, for k >= 1, the step
/// that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// ||u^k||_2^2
    pub l2_sq: f64,
    /// ||grad u^k||_p^p
    pub grad_pp: f64,
    /// ||u^k||_p^p
    pub lp_pp: f64,
    /// <flux(grad u^k), grad u^k>; equals grad_pp at delta = 0
    pub dissipation: f64,
    /// ||u^k - u^{k-1}||_2^2
    pub inc_sq: f64,
    /// ||Phi dW||_2^2 of the increment that drove this step
    pub noise_sq: f64,
    /// <u^k - u^{k-1}, u^k>
    pub step_inner: f64,
    /// <Phi dW, u^k>
    pub noise_pair: f64,
    /// ||f||_2 of the step right-hand side
    pub rhs_l2: f64,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

impl StepRecord {
    fn for_state(step: usize, time: f64, u: &Field, params: PLaplaceParams) -> Self {
        let gu = grad(u);
        let g = u.grid();
        let mut dissipation = 0.0;
        let mut grad_pp = 0.0;
        for i in 0..g.len() {
            let m2 = gu.magnitude_sq(i);
            dissipation += crate::plap::flux_weight(m2, params.p, params.delta) * m2;
            grad_pp += m2.powf(0.5 * params.p);
        }
        dissipation *= g.cell_volume();
        grad_pp *= g.cell_volume();
        StepRecord {
            step,
            time,
            l2_sq: inner(u, u),
            grad_pp,
            lp_pp: lp_power_sum(u, params.p),
            dissipation,
            inc_sq: 0.0,
            noise_sq: 0.0,
            step_inner: 0.0,
            noise_pair: 0.0,
            rhs_l2: 0.0,
            solver_iterations: 0,
            solver_residual: 0.0,
        }
    }
}

/// A completed discrete path with its ledger.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    tau: f64,
    horizon: f64,
    params: PLaplaceParams,
    eps_viscosity: f64,
    initial: Field,
    final_field: Field,
    fields: Option<Vec<Field>>,
    records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn params(&self) -> PLaplaceParams {
        self.params
    }

    pub fn eps_viscosity(&self) -> f64 {
        self.eps_viscosity
    }

    pub fn n_steps(&self) -> usize {
        self.records.len() - 1
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn initial(&self) -> &Field {
        &self.initial
    }

    pub fn final_field(&self) -> &Field {
        &self.final_field
    }

    pub fn has_fields(&self) -> bool {
        self.fields.is_some()
    }

    /// State at time level k; requires `keep_fields` except for the
    /// endpoints, which are always retained.
    pub fn field(&self, k: usize) -> &Field {
        if let Some(fields) = &self.fields {
            &fields[k]
        } else if k == 0 {
            &self.initial
        } else if k == self.n_steps() {
            &self.final_field
        } else {
            panic!("field history was not kept; set keep_fields")
        }
    }

    /// Sum over steps of ||u^{k+1} - u^k||_2^2 for the increment bound.
    pub fn increment_sum(&self) -> f64 {
        self.records.iter().map(|r| r.inc_sq).sum()
    }

    /// The three time interpolants at t: piecewise right-constant,
    /// left-constant, and linear, with the endpoint conventions
    /// right(T) = u^N, left(0) = u^0, linear(T) = u^N.
    pub fn interpolants(&self, t: f64) -> (Field, Field, Field) {
        assert!(
            t >= 0.0 && t <= self.horizon * (1.0 + 1e-12),
            "time {t} outside [0, {}]",
            self.horizon
        );
        let n = self.n_steps();
        let s = (t / self.tau).clamp(0.0, n as f64);
        // snap to a node when within rounding of one
        let s = if (s - s.round()).abs() < 1e-9 {
            s.round()
        } else {
            s
        };
        let right = if s >= n as f64 {
            self.field(n).clone()
        } else {
            self.field(s.floor() as usize + 1).clone()
        };
        let left = if s <= 0.0 {
            self.field(0).clone()
        } else {
            let k = (s.ceil() as usize) - 1;
            self.field(k.min(n - 1)).clone()
        };
        let linear = if s >= n as f64 {
            self.field(n).clone()
        } else {
            let k = s.floor() as usize;
            let w = s - k as f64;
            self.field(k)
                .axpy(w, &self.field(k + 1).axpy(-1.0, self.field(k)))
        };
        (right, left, linear)
    }
}

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: SolveError,
    },
    #[error(
        "noise path has {path_steps} steps / {path_modes} modes, config wants {steps} / {modes}"
    )]
    PathMismatch {
        path_steps: usize,
        path_modes: usize,
        steps: usize,
        modes: usize,
    },
}

/// March the additive-noise trajectory for one sampled path, building the
/// operator from the config.
pub fn solve_additive(cfg: &SimConfig, path: &NoisePath) -> Result<Trajectory, DriverError> {
    let noise = cfg.build_additive_noise();
    solve_additive_with(cfg, &noise, path)
}

/// Sample the path for `stream` under this config's step/mode counts.
pub fn sample_config_path(cfg: &SimConfig, stream: u64) -> NoisePath {
    sample_path_stream(cfg.seed, stream, cfg.steps, cfg.modes, cfg.horizon)
}

/// March with an explicit (possibly frozen-coefficient) additive operator.
pub fn solve_additive_with(
    cfg: &SimConfig,
    noise: &AdditiveNoise,
    path: &NoisePath,
) -> Result<Trajectory, DriverError> {
    if path.n_steps() != cfg.steps || path.n_modes() < noise.modes() {
        return Err(DriverError::PathMismatch {
            path_steps: path.n_steps(),
            path_modes: path.n_modes(),
            steps: cfg.steps,
            modes: noise.modes(),
        });
    }
    let tau = cfg.tau();
    let initial = cfg.initial_field(path.stream());
    let mut records = Vec::with_capacity(cfg.steps + 1);
    records.push(StepRecord::for_state(0, 0.0, &initial, cfg.params));
    let mut fields = cfg.keep_fields.then(|| vec![initial.clone()]);

    let mut u = initial.clone();
    for k in 0..cfg.steps {
        // delayed average: the step from t_k to t_{k+1} sees the operator
        // value on [t_{k-1}, t_k]; the first step sees zero.
        let noise_inc = match noise.averaged_coefficients(k, cfg.steps) {
            Some(coeffs) => increment_field(coeffs, path, k),
            None => Field::zeros(cfg.grid),
        };
        let f = u.axpy(1.0, &noise_inc);
        let prob = StepProblem {
            f,
            tau,
            params: cfg.params,
            eps_viscosity: cfg.eps_viscosity,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
        };
        let (v, report) =
            solve_step(&prob, &u).map_err(|source| DriverError::Step { step: k, source })?;

        let mut rec = StepRecord::for_state(k + 1, (k + 1) as f64 * tau, &v, cfg.params);
        let dv = v.axpy(-1.0, &u);
        rec.inc_sq = inner(&dv, &dv);
        rec.noise_sq = inner(&noise_inc, &noise_inc);
        rec.step_inner = inner(&dv, &v);
        rec.noise_pair = inner(&noise_inc, &v);
        rec.rhs_l2 = norm_l2(&prob.f);
        rec.solver_iterations = report.iterations;
        rec.solver_residual = report.residual;
        records.push(rec);

        if let Some(fields) = &mut fields {
            fields.push(v.clone());
        }
        u = v;
    }

    Ok(Trajectory {
        grid: cfg.grid,
        tau,
        horizon: cfg.horizon,
        params: cfg.params,
        eps_viscosity: cfg.eps_viscosity,
        initial,
        final_field: u,
        fields,
        records,
    })
}

/// Per-step energy bookkeeping extracted from a trajectory.
#[derive(Debug, Clone)]
pub struct EnergyCheck {
    /// time level k >= 1 of the produced state u^k
    pub step: usize,
    /// <u^k - u^{k-1}, u^k> + tau <flux(grad u^k), grad u^k>
    /// + eps tau ||u^k||_p^p - <Phi dW, u^k>; solver-tolerance-sized
    pub identity_residual: f64,
    /// (1 + ||f||_2) ||u^k||_2, the natural scale of that residual
    pub residual_scale: f64,
    /// per-path 1/2 (||u^k||^2 - ||u^{k-1}||^2) + tau ||grad u^k||_p^p
    pub energy_lhs: f64,
    /// 1/2 integral of ||Phi||_HS^2 over the averaging subinterval
    pub energy_rhs: f64,
}

/// Evaluate the tested identity and per-step inequality terms on each step
/// of a completed trajectory.
pub fn check_energy_per_step(traj: &Trajectory, noise: &AdditiveNoise) -> Vec<EnergyCheck> {
    let tau = traj.tau();
    let eps = traj.eps_viscosity;
    (1..=traj.n_steps())
        .map(|k| {
            let r = &traj.records[k];
            let prev = &traj.records[k - 1];
            let identity_residual =
                r.step_inner + tau * r.dissipation + eps * tau * r.lp_pp - r.noise_pair;
            let residual_scale = (1.0 + r.rhs_l2) * r.l2_sq.sqrt();
            let energy_lhs = 0.5 * (r.l2_sq - prev.l2_sq) + tau * r.grad_pp;
            let energy_rhs = 0.5 * tau * noise.averaged_hs_norm_sq(k - 1);
            EnergyCheck {
                step: k,
                identity_residual,
                residual_scale,
                energy_lhs,
                energy_rhs,
            }
        })
        .collect()
}
