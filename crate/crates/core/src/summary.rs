//! Hard posterior summaries of a fitted state.

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::special::{argmax, expit};
use crate::state::VariationalState;
use crate::tensor::Family;

/// Posterior mean connectivity of one occupied cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    /// 1-based cluster label.
    pub cluster: usize,
    pub size: usize,
    /// `[m][p]`: E[μ] (continuous) or E[ρ] (binary).
    pub means: Vec<Vec<f64>>,
}

/// Labels are 1-based; block pairs are in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub cluster_of: Vec<usize>,
    pub occupied_clusters: usize,
    /// `[m][v]`
    pub block_of: Vec<Vec<usize>>,
    pub n_blocks: Vec<usize>,
    /// `[m][p]`
    pub selected: Vec<Vec<bool>>,
    /// q(γ = 1), `[m][p]`.
    pub selection_prob: Vec<Vec<f64>>,
    /// Occupied clusters in label order.
    pub profile: Vec<ClusterProfile>,
}

pub fn summarize(state: &VariationalState, config: &ModelConfig) -> FitSummary {
    let d_max = state.truncation;
    let cluster_of: Vec<usize> = state.b.chunks(d_max).map(|row| argmax(row) + 1).collect();
    let mut sizes = vec![0; d_max];
    cluster_of.iter().for_each(|&c| sizes[c - 1] += 1);

    let block_of = (0..state.n_states())
        .map(|m| state.eta[m].chunks(state.n_blocks(m)).map(|row| argmax(row) + 1).collect())
        .collect();
    // ζ > 0 is the same rule as expit(ζ) > 0.5, without rounding at the boundary.
    let selected = state.zeta.iter().map(|z| z.iter().map(|&x| x > 0.0).collect()).collect();
    let selection_prob = state.zeta.iter().map(|z| z.iter().map(|&x| expit(x)).collect()).collect();

    let profile = (0..d_max)
        .filter(|&d| sizes[d] > 0)
        .map(|d| ClusterProfile {
            cluster: d + 1,
            size: sizes[d],
            means: (0..state.n_states())
                .map(|m| {
                    let n_pairs = state.n_pairs(m);
                    (0..n_pairs)
                        .map(|p| {
                            let x = d * n_pairs + p;
                            match config.likelihood_family {
                                Family::Continuous => state.u[m][x],
                                Family::Binary => state.j[m][x] / (state.j[m][x] + state.k[m][x]),
                            }
                        })
                        .collect()
                })
                .collect(),
        })
        .collect::<Vec<_>>();

    FitSummary {
        cluster_of,
        occupied_clusters: profile.len(),
        block_of,
        n_blocks: (0..state.n_states()).map(|m| state.n_blocks(m)).collect(),
        selected,
        selection_prob,
        profile,
    }
}
