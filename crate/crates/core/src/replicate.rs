//! End-to-end simulation study: simulate, fit, evaluate, aggregate.

use serde::{Deserialize, Serialize};

use crate::cavi::{fit_with, FitOptions, MonotonicityLog};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::metrics::{evaluate, MetricsReport};
use crate::par::{self, Exec};
use crate::selection::{select, SelectOptions};
use crate::sim::{generate_with, SimConfig};
use crate::summary::summarize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateConfig {
    pub setting: String,
    pub sim: SimConfig,
    /// Block counts and controls; `blocks_per_state` is used unless
    /// `select_grid` is given.
    pub model: ModelConfig,
    /// Per-state block-count grid for choosing the blocks of every replicate.
    pub select_grid: Option<Vec<Vec<usize>>>,
    pub n_replicates: usize,
    /// Replicate r uses seed + r for both the simulator and the fit.
    pub seed: u64,
}

impl ReplicateConfig {
    pub fn for_setting(setting: &str, n_replicates: usize, seed: u64) -> Result<Self> {
        let sim = SimConfig::setting(setting)?;
        Ok(Self {
            setting: setting.to_string(),
            model: ModelConfig::new(sim.n_blocks()),
            sim,
            select_grid: None,
            n_replicates,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub blocks: Vec<usize>,
    pub metrics: MetricsReport,
    pub n_iter: usize,
    pub final_elbo: f64,
    pub converged: bool,
    pub monotonicity: MonotonicityLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for one value.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// One row of the simulation summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub setting: String,
    pub n_replicates: usize,
    pub subtyping_ari: MeanSd,
    pub sensitivity: MeanSd,
    pub specificity: MeanSd,
    pub youden: MeanSd,
    pub auc: Option<MeanSd>,
    /// Per state.
    pub modular_ari: Vec<MeanSd>,
    pub block_selection_exact: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateTable {
    pub config: ReplicateConfig,
    pub row: TableRow,
    pub records: Vec<ReplicateRecord>,
}

impl ReplicateTable {
    /// Fit wall times, which are kept out of the table itself so that the
    /// table is reproducible.
    pub fn runtime(&self) -> MeanSd {
        let t: Vec<f64> = self.records.iter().map(|r| r.metrics.runtime_seconds).collect();
        MeanSd::of(&t)
    }

    /// The table with wall times zeroed.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.records.iter_mut().for_each(|r| r.metrics.runtime_seconds = 0.0);
        out
    }

    /// Fixed-width text rendering of the summary row.
    pub fn render(&self) -> String {
        let f = |m: &MeanSd| format!("{:.2} ({:.2})", m.mean, m.sd);
        let r = &self.row;
        let mut out = format!(
            "{:<10} {:>13} {:>13} {:>13} {:>13} {:>13}",
            "setting", "ARI", "sen", "spe", "Y-index", "AUC"
        );
        for m in 0..r.modular_ari.len() {
            out.push_str(&format!(" {:>13}", format!("modular{}", m + 1)));
        }
        out.push_str(&format!(" {:>13}\n", "time (s)"));
        out.push_str(&format!(
            "{:<10} {:>13} {:>13} {:>13} {:>13} {:>13}",
            r.setting,
            f(&r.subtyping_ari),
            f(&r.sensitivity),
            f(&r.specificity),
            f(&r.youden),
            r.auc.as_ref().map_or("-".into(), f),
        ));
        for m in &r.modular_ari {
            out.push_str(&format!(" {:>13}", f(m)));
        }
        out.push_str(&format!(" {:>13}\n", f(&self.runtime())));
        out
    }
}

fn run_one(config: &ReplicateConfig, r: usize, options: FitOptions) -> Result<ReplicateRecord> {
    let seed = config.seed.wrapping_add(r as u64);
    let sim = SimConfig { seed, ..config.sim.clone() };
    let (tensor, truth) = generate_with(&sim, options.exec)?;
    let mut model = ModelConfig { seed, ..config.model.clone() };
    if let Some(grid) = &config.select_grid {
        let report = select(
            &tensor,
            &model,
            grid,
            SelectOptions {
                fit: options,
                ..SelectOptions::default()
            },
        )?;
        model.blocks_per_state = report.chosen;
        model.dir_phi.clear();
    }
    let (state, diag) = fit_with(&tensor, &model, options)?;
    let summary = summarize(&state, &model.resolve(&tensor)?);
    let metrics = evaluate(&summary, &truth, diag.wall_time_secs)?;
    Ok(ReplicateRecord {
        replicate: r,
        seed,
        blocks: model.blocks_per_state,
        metrics,
        n_iter: diag.n_iter,
        final_elbo: diag.final_elbo,
        converged: diag.converged,
        monotonicity: diag.monotonicity,
    })
}

/// Runs every replicate (concurrently under a parallel `options.exec`)
/// and aggregates mean (sd) over replicates.
pub fn run_replicates(config: &ReplicateConfig, options: FitOptions) -> Result<ReplicateTable> {
    let records = par::map_range(options.exec, config.n_replicates, |r| run_one(config, r, options))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let col = |f: &dyn Fn(&MetricsReport) -> f64| MeanSd::of(&records.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>());
    let aucs: Option<Vec<f64>> = records.iter().map(|r| r.metrics.auc).collect();
    let n_states = records.first().map_or(0, |r| r.metrics.modular_ari.len());
    let row = TableRow {
        setting: config.setting.clone(),
        n_replicates: config.n_replicates,
        subtyping_ari: col(&|m| m.subtyping_ari),
        sensitivity: col(&|m| m.sensitivity),
        specificity: col(&|m| m.specificity),
        youden: col(&|m| m.youden),
        auc: aucs.filter(|a| !a.is_empty()).map(|a| MeanSd::of(&a)),
        modular_ari: (0..n_states).map(|m| col(&|x| x.modular_ari[m])).collect(),
        block_selection_exact: records.iter().filter(|r| r.metrics.block_selection_exact).count(),
    };
    Ok(ReplicateTable {
        config: config.clone(),
        row,
        records,
    })
}

/// Convenience for a sequential or parallel run of a named setting.
pub fn run_setting(setting: &str, n_replicates: usize, seed: u64, exec: Exec) -> Result<ReplicateTable> {
    run_replicates(
        &ReplicateConfig::for_setting(setting, n_replicates, seed)?,
        FitOptions { exec, monitor: false },
    )
}
