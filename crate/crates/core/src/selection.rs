//! Choosing the number of node blocks per state.

use serde::{Deserialize, Serialize};

use crate::cavi::{compute_elbo, fit_with, ElboTerms, FitDiagnostics, FitOptions};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::par;
use crate::state::VariationalState;
use crate::tensor::{block_suffstats, ConnectivityTensor};

/// Largest full-factorial grid fitted before switching to coordinate-wise
/// search.
pub const DEFAULT_GRID_BUDGET: usize = 64;

/// How the information criterion is formed from the ELBO pieces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// −2·E_q[log p(A | Ξ)] + 2·KL(q ‖ p(Ξ)), which equals −2·ELBO.
    #[default]
    Kl,
    /// −2·E_q[log p(A | Ξ)] + 2·E_q[log q(Ξ)], without the prior term.
    Entropy,
}

/// −2·E_q[log p(A | Ξ)] + 2·E_q[log q(Ξ)].
pub fn vbic_entropy_form(terms: &ElboTerms) -> f64 {
    -2.0 * terms.data - 2.0 * terms.entropy
}

/// −2·E_q[log p(A | Ξ)] + 2·KL(q ‖ p) = −2·ELBO.
pub fn vbic_kl_form(terms: &ElboTerms) -> f64 {
    -2.0 * terms.total()
}

/// Criterion value of a fitted state; lower is better.
pub fn vbic(
    state: &VariationalState,
    config: &ModelConfig,
    tensor: &ConnectivityTensor,
    criterion: Criterion,
) -> Result<f64> {
    let config = config.resolve(tensor)?;
    let stats = block_suffstats(tensor, &state.eta, crate::Exec::Sequential)?;
    let terms = compute_elbo(state, &config, &stats)?;
    let value = match criterion {
        Criterion::Kl => vbic_kl_form(&terms),
        Criterion::Entropy => vbic_entropy_form(&terms),
    };
    if !value.is_finite() {
        return Err(Error::Numerical {
            term: format!("information criterion ({value})"),
        });
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub blocks: Vec<usize>,
    pub vbic: Option<f64>,
    pub final_elbo: Option<f64>,
    pub elbo_terms: Option<ElboTerms>,
    pub diagnostics: Option<FitDiagnostics>,
    /// Set when the fit failed; the candidate is then skipped.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Factorial,
    Coordinate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub criterion: Criterion,
    pub strategy: Strategy,
    /// In evaluation order.
    pub candidates: Vec<Candidate>,
    pub chosen: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub struct SelectOptions {
    pub fit: FitOptions,
    pub budget: usize,
    pub criterion: Criterion,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            budget: DEFAULT_GRID_BUDGET,
            criterion: Criterion::default(),
        }
    }
}

fn evaluate(
    tensor: &ConnectivityTensor,
    base: &ModelConfig,
    blocks: &[usize],
    options: &SelectOptions,
) -> Candidate {
    let config = ModelConfig {
        blocks_per_state: blocks.to_vec(),
        dir_phi: Vec::new(),
        ..base.clone()
    };
    let run = || -> Result<(f64, ElboTerms, FitDiagnostics)> {
        let (state, diag) = fit_with(tensor, &config, options.fit)?;
        let resolved = config.resolve(tensor)?;
        let stats = block_suffstats(tensor, &state.eta, options.fit.exec)?;
        let terms = compute_elbo(&state, &resolved, &stats)?;
        let value = vbic(&state, &config, tensor, options.criterion)?;
        Ok((value, terms, diag))
    };
    match run() {
        Ok((value, terms, diag)) => Candidate {
            blocks: blocks.to_vec(),
            vbic: Some(value),
            final_elbo: Some(diag.final_elbo),
            elbo_terms: Some(terms),
            diagnostics: Some(diag),
            error: None,
        },
        Err(e) => Candidate {
            blocks: blocks.to_vec(),
            vbic: None,
            final_elbo: None,
            elbo_terms: None,
            diagnostics: None,
            error: Some(e.to_string()),
        },
    }
}

fn factorial(grid: &[Vec<usize>]) -> Vec<Vec<usize>> {
    grid.iter().fold(vec![Vec::new()], |acc, values| {
        acc.iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect()
    })
}

/// Lowest criterion value; ties go to the lexicographically smallest
/// block vector.
fn best(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates
        .iter()
        .filter(|c| c.vbic.is_some())
        .min_by(|a, b| a.vbic.unwrap().total_cmp(&b.vbic.unwrap()).then_with(|| a.blocks.cmp(&b.blocks)))
}

/// Fits every block-count vector in the per-state grid (full factorial, or
/// coordinate-wise when the factorial exceeds `options.budget`) and picks
/// the one with the lowest criterion.
pub fn select(
    tensor: &ConnectivityTensor,
    base: &ModelConfig,
    grid: &[Vec<usize>],
    options: SelectOptions,
) -> Result<SelectionReport> {
    if grid.is_empty() || grid.iter().any(Vec::is_empty) {
        return Err(Error::Config("the block grid needs at least one value per state".into()));
    }
    if grid.len() != tensor.n_states() {
        return Err(Error::Config(format!(
            "block grid covers {} states but the data has {}",
            grid.len(),
            tensor.n_states()
        )));
    }
    let grid: Vec<Vec<usize>> = grid
        .iter()
        .map(|values| {
            let mut v = values.clone();
            v.sort_unstable();
            v.dedup();
            v
        })
        .collect();
    let total: usize = grid.iter().map(Vec::len).product();
    let (strategy, candidates) = if total <= options.budget {
        let all = factorial(&grid);
        let fitted = par::map_range(options.fit.exec, all.len(), |k| evaluate(tensor, base, &all[k], &options));
        (Strategy::Factorial, fitted)
    } else {
        (Strategy::Coordinate, coordinate_search(tensor, base, &grid, &options))
    };
    let chosen = best(&candidates)
        .map(|c| c.blocks.clone())
        .ok_or_else(|| Error::Numerical {
            term: format!(
                "every candidate failed: {}",
                candidates.iter().filter_map(|c| c.error.clone()).collect::<Vec<_>>().join("; ")
            ),
        })?;
    Ok(SelectionReport {
        criterion: options.criterion,
        strategy,
        candidates,
        chosen,
    })
}

/// One pass: optimise each state's block count in turn, others held at
/// their current value (initially the grid medians).
fn coordinate_search(
    tensor: &ConnectivityTensor,
    base: &ModelConfig,
    grid: &[Vec<usize>],
    options: &SelectOptions,
) -> Vec<Candidate> {
    let mut current: Vec<usize> = grid.iter().map(|v| v[(v.len() - 1) / 2]).collect();
    let mut done: Vec<Candidate> = Vec::new();
    for m in 0..grid.len() {
        let todo: Vec<Vec<usize>> = grid[m]
            .iter()
            .map(|&s| {
                let mut b = current.clone();
                b[m] = s;
                b
            })
            .filter(|b| !done.iter().any(|c| &c.blocks == b))
            .collect();
        let fitted = par::map_range(options.fit.exec, todo.len(), |k| evaluate(tensor, base, &todo[k], options));
        done.extend(fitted);
        let line: Vec<Candidate> = done
            .iter()
            .filter(|c| (0..grid.len()).all(|x| x == m || c.blocks[x] == current[x]))
            .cloned()
            .collect();
        if let Some(c) = best(&line) {
            current = c.blocks.clone();
        }
    }
    done
}
