//! Monte Carlo ensembles and the expectation-level inequality checks.
//!
//! Paths are embarrassingly parallel: path i samples Brownian stream i of
//! the base seed, so the ensemble is a pure function of
//! (config, path_count, base_seed) no matter how many workers run it.
//! Reduction happens in path order with compensated summation, keeping the
//! aggregate bit-identical across schedules. Standard errors come from the
//! unbiased sample variance; every expectation-level inequality is graded
//! with a four-standard-error budget.

use rayon::prelude::*;

use crate::driver::{
    check_energy_per_step, solve_additive_with, DriverError, SimConfig, Trajectory,
};
use crate::noise::{sample_path_stream, AdditiveNoise};

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Streaming mean/variance accumulator over paths. Tracks bitwise min and
/// max so that an ensemble of identical samples reports exactly zero
/// standard error.
#[derive(Debug, Clone, Copy)]
struct Moments {
    sum: KahanSum,
    sum_sq: KahanSum,
    min: f64,
    max: f64,
    count: usize,
}

impl Default for Moments {
    fn default() -> Self {
        Moments {
            sum: KahanSum::default(),
            sum_sq: KahanSum::default(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            count: 0,
        }
    }
}

impl Moments {
    fn add(&mut self, x: f64) {
        self.sum.add(x);
        self.sum_sq.add(x * x);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
        self.count += 1;
    }

    fn mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    /// Standard error of the mean; exactly zero when all samples agree or
    /// when only one path ran.
    fn standard_error(&self) -> f64 {
        if self.count < 2 || self.min == self.max {
            return 0.0;
        }
        let n = self.count as f64;
        let var =
            ((self.sum_sq.value() - self.sum.value() * self.sum.value() / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Per-path scalars entering the ensemble aggregates.
#[derive(Debug, Clone)]
struct PathSummary {
    /// ||u^k||_2^2 per time level
    l2_sq: Vec<f64>,
    /// ||grad u^k||_p^p per time level
    grad_pp: Vec<f64>,
    /// 1/2 (||u^k||^2 - ||u^{k-1}||^2) + tau ||grad u^k||_p^p per step
    step_lhs: Vec<f64>,
    /// 1/2 (||u^j||^2 - ||u^0||^2) + tau sum_{k<=j} ||grad u^k||_p^p
    cumulative_lhs: Vec<f64>,
    /// sum_k ||u^{k+1} - u^k||^2 - (4/3) ||u^0||^2
    increment_adjusted: f64,
    /// tau sum_{k>=1} ||u^k||^2 - T ||u^0||^2
    second_moment_adjusted: f64,
    /// eps^(1/p') (tau sum_{k>=1} ||u^k||_p^p)^(1/p'); zero when eps = 0
    bound_quantity: f64,
    /// ||u^0||_2^2
    initial_sq: f64,
    /// worst |identity residual| / (tol (1 + (1+||f||) ||u^k||))
    identity_ratio: f64,
}

fn summarize_path(cfg: &SimConfig, noise: &AdditiveNoise, traj: &Trajectory) -> PathSummary {
    let tau = traj.tau();
    let records = traj.records();
    let n = traj.n_steps();
    let l2_sq: Vec<f64> = records.iter().map(|r| r.l2_sq).collect();
    let grad_pp: Vec<f64> = records.iter().map(|r| r.grad_pp).collect();
    let mut step_lhs = Vec::with_capacity(n);
    let mut cumulative_lhs = Vec::with_capacity(n);
    let mut grad_cum = KahanSum::default();
    for k in 1..=n {
        grad_cum.add(grad_pp[k]);
        step_lhs.push(0.5 * (l2_sq[k] - l2_sq[k - 1]) + tau * grad_pp[k]);
        cumulative_lhs.push(0.5 * (l2_sq[k] - l2_sq[0]) + tau * grad_cum.value());
    }
    let increment_sum = traj.increment_sum();
    let second_moment: f64 = tau * l2_sq[1..].iter().sum::<f64>();
    let lp_integral: f64 = tau * records[1..].iter().map(|r| r.lp_pp).sum::<f64>();
    let eps = traj.eps_viscosity();
    let conj_inv = (cfg.params.p - 1.0) / cfg.params.p;
    let bound_quantity = if eps > 0.0 {
        eps.powf(conj_inv) * lp_integral.powf(conj_inv)
    } else {
        0.0
    };
    let identity_ratio = check_energy_per_step(traj, noise)
        .iter()
        .map(|c| c.identity_residual.abs() / (cfg.tol * (1.0 + c.residual_scale)))
        .fold(0.0, f64::max);
    PathSummary {
        initial_sq: l2_sq[0],
        increment_adjusted: increment_sum - 4.0 / 3.0 * l2_sq[0],
        second_moment_adjusted: second_moment - traj.horizon() * l2_sq[0],
        l2_sq,
        grad_pp,
        step_lhs,
        cumulative_lhs,
        bound_quantity,
        identity_ratio,
    }
}

/// Ensemble aggregates: per-time-level means and standard errors plus the
/// scalar quantities the inequality report grades.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub path_count: usize,
    pub steps: usize,
    pub tau: f64,
    pub horizon: f64,
    pub p: f64,
    pub eps_viscosity: f64,
    pub solver_tol: f64,
    /// integral over [0, T] of the squared HS norm of the noise
    pub noise_budget: f64,
    /// per-step right-hand sides 1/2 tau ||Phi^k||_HS^2 (delayed index)
    pub step_rhs: Vec<f64>,
    pub mean_l2_sq: Vec<f64>,
    pub se_l2_sq: Vec<f64>,
    pub mean_grad_pp: Vec<f64>,
    pub se_grad_pp: Vec<f64>,
    pub mean_step_lhs: Vec<f64>,
    pub se_step_lhs: Vec<f64>,
    pub mean_cumulative_lhs: Vec<f64>,
    pub se_cumulative_lhs: Vec<f64>,
    pub mean_increment_adjusted: f64,
    pub se_increment_adjusted: f64,
    pub mean_second_moment_adjusted: f64,
    pub se_second_moment_adjusted: f64,
    pub mean_bound_quantity: f64,
    pub se_bound_quantity: f64,
    pub mean_initial_sq: f64,
    pub se_initial_sq: f64,
    /// worst per-path identity ratio (graded against 100)
    pub worst_identity_ratio: f64,
    /// paths skipped under a nonzero failure budget
    pub failed_paths: Vec<(usize, String)>,
}

/// An ensemble run: the aggregates plus every per-path ledger, in path
/// order, for the CSV writer.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub ledgers: Vec<Vec<crate::driver::StepRecord>>,
}

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("path {path} failed ({failures} failures exceed budget {budget}): {source}")]
    PathFailure {
        path: usize,
        failures: usize,
        budget: usize,
        #[source]
        source: DriverError,
    },
}

/// Run `path_count` independent paths of the additive problem and
/// aggregate. Deterministic for fixed (cfg, path_count, base_seed)
/// regardless of the worker count.
pub fn run_ensemble(
    cfg: &SimConfig,
    path_count: usize,
    base_seed: u64,
) -> Result<EnsembleRun, EnsembleError> {
    assert!(path_count >= 1);
    let mut cfg = cfg.clone();
    cfg.seed = base_seed;
    let noise = cfg.build_additive_noise();

    let results: Vec<Result<(PathSummary, Vec<crate::driver::StepRecord>), DriverError>> = (0
        ..path_count)
        .into_par_iter()
        .map(|i| {
            let path = sample_path_stream(base_seed, i as u64, cfg.steps, cfg.modes, cfg.horizon);
            let traj = solve_additive_with(&cfg, &noise, &path)?;
            let summary = summarize_path(&cfg, &noise, &traj);
            Ok((summary, traj.records().to_vec()))
        })
        .collect();

    // deterministic scan in path order
    let mut summaries = Vec::with_capacity(path_count);
    let mut ledgers = Vec::with_capacity(path_count);
    let mut failed_paths = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok((summary, ledger)) => {
                summaries.push(summary);
                ledgers.push(ledger);
            }
            Err(source) => {
                failed_paths.push((i, source.to_string()));
                if failed_paths.len() > cfg.failure_budget {
                    return Err(EnsembleError::PathFailure {
                        path: i,
                        failures: failed_paths.len(),
                        budget: cfg.failure_budget,
                        source,
                    });
                }
            }
        }
    }

    let n = cfg.steps;
    let mut l2 = vec![Moments::default(); n + 1];
    let mut gpp = vec![Moments::default(); n + 1];
    let mut step_lhs = vec![Moments::default(); n];
    let mut cum_lhs = vec![Moments::default(); n];
    let mut inc = Moments::default();
    let mut second = Moments::default();
    let mut bound = Moments::default();
    let mut init = Moments::default();
    let mut worst_identity_ratio: f64 = 0.0;
    for s in &summaries {
        for k in 0..=n {
            l2[k].add(s.l2_sq[k]);
            gpp[k].add(s.grad_pp[k]);
        }
        for k in 0..n {
            step_lhs[k].add(s.step_lhs[k]);
            cum_lhs[k].add(s.cumulative_lhs[k]);
        }
        inc.add(s.increment_adjusted);
        second.add(s.second_moment_adjusted);
        bound.add(s.bound_quantity);
        init.add(s.initial_sq);
        worst_identity_ratio = worst_identity_ratio.max(s.identity_ratio);
    }

    let tau = cfg.tau();
    let noise_budget: f64 = (0..n).map(|j| tau * noise.hs_norm_sq_on(j)).sum();
    let step_rhs: Vec<f64> = (1..=n)
        .map(|k| 0.5 * tau * noise.averaged_hs_norm_sq(k - 1))
        .collect();

    let stats = EnsembleStats {
        path_count: summaries.len(),
        steps: n,
        tau,
        horizon: cfg.horizon,
        p: cfg.params.p,
        eps_viscosity: cfg.eps_viscosity,
        solver_tol: cfg.tol,
        noise_budget,
        step_rhs,
        mean_l2_sq: l2.iter().map(Moments::mean).collect(),
        se_l2_sq: l2.iter().map(Moments::standard_error).collect(),
        mean_grad_pp: gpp.iter().map(Moments::mean).collect(),
        se_grad_pp: gpp.iter().map(Moments::standard_error).collect(),
        mean_step_lhs: step_lhs.iter().map(Moments::mean).collect(),
        se_step_lhs: step_lhs.iter().map(Moments::standard_error).collect(),
        mean_cumulative_lhs: cum_lhs.iter().map(Moments::mean).collect(),
        se_cumulative_lhs: cum_lhs.iter().map(Moments::standard_error).collect(),
        mean_increment_adjusted: inc.mean(),
        se_increment_adjusted: inc.standard_error(),
        mean_second_moment_adjusted: second.mean(),
        se_second_moment_adjusted: second.standard_error(),
        mean_bound_quantity: bound.mean(),
        se_bound_quantity: bound.standard_error(),
        mean_initial_sq: init.mean(),
        se_initial_sq: init.standard_error(),
        worst_identity_ratio,
        failed_paths,
    };
    Ok(EnsembleRun { stats, ledgers })
}

/// One graded inequality.
#[derive(Debug, Clone)]
pub struct InequalityRow {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs - lhs; may be negative up to the standard-error budget
    pub margin: f64,
    /// the four-standard-error allowance
    pub se_budget: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub rows: Vec<InequalityRow>,
}

impl InequalityReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl std::fmt::Display for InequalityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for row in &self.rows {
            writeln!(
                f,
                "{} {:<28} lhs = {: >14.6e}  rhs = {: >14.6e}  margin = {: >14.6e}  4se = {:.3e}",
                if row.pass { "PASS" } else { "FAIL" },
                row.name,
                row.lhs,
                row.rhs,
                row.margin,
                row.se_budget,
            )?;
        }
        Ok(())
    }
}

fn grade(name: &'static str, lhs: f64, rhs: f64, se_budget: f64) -> InequalityRow {
    let margin = rhs - lhs;
    InequalityRow {
        name,
        lhs,
        rhs,
        margin,
        se_budget,
        pass: margin >= -se_budget,
    }
}

/// Grade every expectation-level inequality carried by the stats. The
/// verdicts use the four-standard-error convention throughout.
pub fn inequality_report(stats: &EnsembleStats) -> InequalityReport {
    let mut rows = Vec::new();

    // per-step energy: worst step of
    // 1/2 E[||u^k||^2 - ||u^{k-1}||^2] + tau E||grad u^k||_p^p
    //   <= 1/2 int_{t_{k-2}}^{t_{k-1}} ||Phi||_HS^2
    let mut worst: Option<InequalityRow> = None;
    for k in 0..stats.steps {
        let row = grade(
            "per-step energy",
            stats.mean_step_lhs[k],
            stats.step_rhs[k],
            4.0 * stats.se_step_lhs[k],
        );
        let replace = match &worst {
            None => true,
            Some(w) => (row.margin + row.se_budget) < (w.margin + w.se_budget),
        };
        if replace {
            worst = Some(row);
        }
    }
    if let Some(w) = worst {
        rows.push(w);
    }

    // cumulative energy at every level against the full noise budget
    let mut worst: Option<InequalityRow> = None;
    for k in 0..stats.steps {
        let row = grade(
            "cumulative energy",
            stats.mean_cumulative_lhs[k],
            0.5 * stats.noise_budget,
            4.0 * stats.se_cumulative_lhs[k],
        );
        let replace = match &worst {
            None => true,
            Some(w) => (row.margin + row.se_budget) < (w.margin + w.se_budget),
        };
        if replace {
            worst = Some(row);
        }
    }
    if let Some(w) = worst {
        rows.push(w);
    }

    // increment sum with the 16/3 and 4/3 constants (the 4/3 ||u^0||^2
    // part is folded into the per-path left-hand side)
    rows.push(grade(
        "increment sum",
        stats.mean_increment_adjusted,
        16.0 / 3.0 * stats.noise_budget,
        4.0 * stats.se_increment_adjusted,
    ));

    if stats.eps_viscosity > 0.0 {
        // uniform second moment: tau sum_k E||u^k||^2 - T E||u^0||^2 <= T C_Phi
        rows.push(grade(
            "viscous second moment",
            stats.mean_second_moment_adjusted,
            stats.horizon * stats.noise_budget,
            4.0 * stats.se_second_moment_adjusted,
        ));

        // scaled regularization term against ((E||u0||^2 + C_Phi)/2)^(1/p')
        let conj_inv = (stats.p - 1.0) / stats.p;
        let rhs = ((stats.mean_initial_sq + stats.noise_budget) / 2.0).powf(conj_inv);
        let rhs_bumped = ((stats.mean_initial_sq + 4.0 * stats.se_initial_sq + stats.noise_budget)
            / 2.0)
            .powf(conj_inv);
        rows.push(grade(
            "viscous bound quantity",
            stats.mean_bound_quantity,
            rhs,
            4.0 * stats.se_bound_quantity + (rhs_bumped - rhs),
        ));
    }

    // per-path tested identity, graded against the 100x solver-tolerance
    // allowance (not a statistical bound)
    rows.push(InequalityRow {
        name: "tested identity ratio",
        lhs: stats.worst_identity_ratio,
        rhs: 100.0,
        margin: 100.0 - stats.worst_identity_ratio,
        se_budget: 0.0,
        pass: stats.worst_identity_ratio <= 100.0,
    });

    InequalityReport { rows }
}
