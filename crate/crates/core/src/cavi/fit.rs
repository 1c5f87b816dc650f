//! The coordinate-ascent driver: sweeps, convergence, restarts.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::elbo::compute_elbo;
use super::repair::repair_empty_blocks;
use super::updates::{refine_selection, reorder_clusters, update_clusters, update_gamma, update_nodes, update_noise, update_sticks, update_tau, update_theta1};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::state::{init_state, VariationalState};
use crate::tensor::{block_suffstats_unchecked, BlockSuffStats, ConnectivityTensor};

/// Absolute ELBO change treated as converged when the ELBO is near zero.
const ABS_TOL: f64 = 1e-8;
/// Relative ELBO decrease counted as a monotonicity violation.
const DROP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Reorder,
    Sticks,
    Theta1,
    Noise,
    Gamma,
    Refine,
    Clusters,
    Tau,
    Nodes,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    pub exec: Exec,
    /// Recompute the ELBO after every single update (not only after each
    /// sweep) and record the worst decrease.
    pub monitor: bool,
}

/// ELBO decreases observed between consecutive updates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityLog {
    pub checks: usize,
    pub violations: usize,
    /// Largest (ELBO_before − ELBO_after) / |ELBO_before|, negative when
    /// every update increased the bound; `None` before any check.
    pub worst_relative_drop: Option<f64>,
    pub worst_step: Option<Step>,
}

impl MonotonicityLog {
    fn new() -> Self {
        Self::default()
    }

    fn worse(&self, drop: f64) -> bool {
        self.worst_relative_drop.is_none_or(|w| drop > w)
    }

    fn record(&mut self, step: Step, before: f64, after: f64) {
        let drop = (before - after) / before.abs().max(f64::MIN_POSITIVE);
        self.checks += 1;
        if drop > DROP_TOL {
            self.violations += 1;
        }
        if self.worse(drop) {
            self.worst_relative_drop = Some(drop);
            self.worst_step = Some(step);
        }
    }

    pub(crate) fn merge(&mut self, other: &Self) {
        self.checks += other.checks;
        self.violations += other.violations;
        if let Some(d) = other.worst_relative_drop {
            if self.worse(d) {
                self.worst_relative_drop = Some(d);
                self.worst_step = other.worst_step;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub n_iter: usize,
    pub final_elbo: f64,
    pub converged: bool,
    pub wall_time_secs: f64,
    /// Index of the restart that was kept.
    pub restart_index: usize,
    /// Final ELBO of every restart, in restart order.
    pub restart_elbos: Vec<f64>,
    pub monotonicity: MonotonicityLog,
}

/// Seed of restart `k`, derived from the base seed.
pub fn restart_seed(seed: u64, k: usize) -> u64 {
    let mut z = seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Sweeper<'a> {
    config: &'a ModelConfig,
    tensor: &'a ConnectivityTensor,
    options: FitOptions,
    log: MonotonicityLog,
    last: f64,
}

impl Sweeper<'_> {
    fn checkpoint(&mut self, step: Step, state: &VariationalState, stats: &BlockSuffStats) -> Result<()> {
        if !self.options.monitor {
            return Ok(());
        }
        let now = compute_elbo(state, self.config, stats)?.total();
        self.log.record(step, self.last, now);
        self.last = now;
        Ok(())
    }

    fn sweep(&mut self, state: &mut VariationalState, stats: &mut BlockSuffStats, select: bool) -> Result<f64> {
        let (config, exec) = (self.config, self.options.exec);
        reorder_clusters(state, config, stats)?;
        self.checkpoint(Step::Reorder, state, stats)?;
        update_sticks(state, config);
        self.checkpoint(Step::Sticks, state, stats)?;
        update_theta1(state, config, stats);
        self.checkpoint(Step::Theta1, state, stats)?;
        if state.noise.is_some() {
            update_noise(state, config, stats);
            self.checkpoint(Step::Noise, state, stats)?;
        }
        if select {
            update_gamma(state, config, stats);
            self.checkpoint(Step::Gamma, state, stats)?;
            refine_selection(state, config, stats);
            self.checkpoint(Step::Refine, state, stats)?;
        }
        update_clusters(state, config, stats, exec);
        self.checkpoint(Step::Clusters, state, stats)?;
        update_tau(state, config);
        self.checkpoint(Step::Tau, state, stats)?;
        update_nodes(state, config, self.tensor, exec);
        *stats = block_suffstats_unchecked(self.tensor, &state.eta, &self.config.blocks_per_state, exec);
        let elbo = compute_elbo(state, config, stats)?.total();
        if self.options.monitor {
            self.log.record(Step::Nodes, self.last, elbo);
        }
        self.last = elbo;
        Ok(elbo)
    }
}

/// Runs coordinate ascent from `state` until the relative ELBO change
/// falls below `config.tol` or `config.max_iter` sweeps have run.
/// `config` must already be resolved against `tensor`.
pub fn run_cavi(
    state: &mut VariationalState,
    config: &ModelConfig,
    tensor: &ConnectivityTensor,
    options: FitOptions,
) -> Result<FitDiagnostics> {
    let start = Instant::now();
    let mut stats = block_suffstats_unchecked(tensor, &state.eta, &config.blocks_per_state, options.exec);
    let initial = compute_elbo(state, config, &stats)?.total();
    let mut sweeper = Sweeper {
        config,
        tensor,
        options,
        log: MonotonicityLog::new(),
        last: initial,
    };
    let mut previous = initial;
    let mut converged = false;
    let mut n_iter = 0;
    while n_iter < config.max_iter {
        let select = n_iter >= config.gamma_warmup;
        let elbo = sweeper.sweep(state, &mut stats, select)?;
        n_iter += 1;
        state.elbo_trace.push(elbo);
        let change = (elbo - previous).abs();
        previous = elbo;
        // Selection must have been active for at least one full sweep.
        if n_iter > config.gamma_warmup + 1 && (change <= config.tol * elbo.abs() || change <= ABS_TOL) {
            converged = true;
            break;
        }
    }
    state.check()?;
    Ok(FitDiagnostics {
        n_iter,
        final_elbo: previous,
        converged,
        wall_time_secs: start.elapsed().as_secs_f64(),
        restart_index: 0,
        restart_elbos: vec![previous],
        monotonicity: sweeper.log,
    })
}

/// Fits the model with default options.
pub fn fit(tensor: &ConnectivityTensor, config: &ModelConfig) -> Result<(VariationalState, FitDiagnostics)> {
    fit_with(tensor, config, FitOptions::default())
}

/// Runs `config.n_restarts` random restarts and keeps the one with the
/// highest final ELBO (lowest index on ties).
pub fn fit_with(
    tensor: &ConnectivityTensor,
    config: &ModelConfig,
    options: FitOptions,
) -> Result<(VariationalState, FitDiagnostics)> {
    let config = config.resolve(tensor)?;
    let start = Instant::now();
    let runs = par::map_range(options.exec, config.n_restarts, |k| {
        let mut state = init_state(&config, tensor, restart_seed(config.seed, k))?;
        let mut diag = run_cavi(&mut state, &config, tensor, options)?;
        if config.block_repair {
            repair_empty_blocks(&mut state, &mut diag, &config, tensor, options)?;
        }
        Ok::<_, Error>((state, diag))
    });
    let runs: Vec<_> = runs.into_iter().collect::<Result<_>>()?;
    let restart_elbos: Vec<f64> = runs.iter().map(|(_, d)| d.final_elbo).collect();
    let mut monotonicity = MonotonicityLog::new();
    for (_, d) in &runs {
        monotonicity.merge(&d.monotonicity);
    }
    let best = restart_elbos
        .iter()
        .enumerate()
        .fold(0, |best, (k, &e)| if e > restart_elbos[best] { k } else { best });
    let (state, diag) = runs.into_iter().nth(best).expect("at least one restart");
    Ok((
        state,
        FitDiagnostics {
            restart_index: best,
            restart_elbos,
            monotonicity,
            wall_time_secs: start.elapsed().as_secs_f64(),
            ..diag
        },
    ))
}
