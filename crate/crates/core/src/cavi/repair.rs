//! Refilling empty node blocks.
//!
//! Coordinate ascent cannot move nodes into a block that has lost all its
//! members: the block's parameters fall back to the prior and no single
//! node gains by joining it. A typical casualty is two true modules merged
//! into one estimated block while another estimated block sits empty. The
//! move here splits an occupied block in two, hands one half to the empty
//! block, runs coordinate ascent again and keeps the result only when the
//! final ELBO is higher.

use super::fit::{run_cavi, FitDiagnostics, FitOptions};
use crate::config::ModelConfig;
use crate::error::Result;
use crate::special::argmax;
use crate::state::VariationalState;
use crate::tensor::ConnectivityTensor;

/// Expected block size below which a block counts as empty.
const EMPTY_MASS: f64 = 1.0;
/// Smallest hard block size worth splitting.
const MIN_SPLIT: usize = 4;
const KMEANS_ITERS: usize = 100;

/// Mean edge weight from node `v` to each hard block, for every subject.
fn node_features(tensor: &ConnectivityTensor, m: usize, labels: &[usize], n_blocks: usize, v: usize) -> Vec<f64> {
    let v_max = tensor.n_nodes();
    let mut out = vec![0.0; tensor.n_subjects() * n_blocks];
    let mut counts = vec![0.0; n_blocks];
    for (w, &s) in labels.iter().enumerate() {
        if w != v {
            counts[s] += 1.0;
        }
    }
    for i in 0..tensor.n_subjects() {
        let row = &tensor.slice(i, m)[v * v_max..(v + 1) * v_max];
        let feats = &mut out[i * n_blocks..(i + 1) * n_blocks];
        for (w, &s) in labels.iter().enumerate() {
            if w != v {
                feats[s] += row[w];
            }
        }
        for (f, &c) in feats.iter_mut().zip(&counts) {
            if c > 0.0 {
                *f /= c;
            }
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Deterministic 2-means: seeds at the point farthest from the mean and
/// the point farthest from that one. Returns the indices of the second group.
fn two_means(points: &[Vec<f64>]) -> Vec<usize> {
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / points.len() as f64);
    }
    let far = |from: &[f64]| {
        let d: Vec<f64> = points.iter().map(|p| sq_dist(p, from)).collect();
        // Largest distance, lowest index on ties.
        argmax(&d)
    };
    let a = far(&mean);
    let b = far(&points[a]);
    let mut centres = [points[a].clone(), points[b].clone()];
    let mut assign = vec![0usize; points.len()];
    for _ in 0..KMEANS_ITERS {
        let next: Vec<usize> = points
            .iter()
            .map(|p| usize::from(sq_dist(p, &centres[1]) < sq_dist(p, &centres[0])))
            .collect();
        let changed = next != assign;
        assign = next;
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, &g)| g == c).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            centre.iter_mut().enumerate().for_each(|(k, x)| {
                *x = members.iter().map(|p| p[k]).sum::<f64>() / members.len() as f64;
            });
        }
        if !changed {
            break;
        }
    }
    (0..points.len()).filter(|&k| assign[k] == 1).collect()
}

/// The state with block `source` of state `m` split and half its nodes
/// moved to `target`, or `None` if the split degenerates.
fn propose(
    state: &VariationalState,
    tensor: &ConnectivityTensor,
    m: usize,
    source: usize,
    target: usize,
) -> Option<VariationalState> {
    let s = state.n_blocks(m);
    let labels: Vec<usize> = state.eta[m].chunks(s).map(argmax).collect();
    let members: Vec<usize> = (0..labels.len()).filter(|&v| labels[v] == source).collect();
    if members.len() < MIN_SPLIT {
        return None;
    }
    let points: Vec<Vec<f64>> = members.iter().map(|&v| node_features(tensor, m, &labels, s, v)).collect();
    let moved = two_means(&points);
    if moved.is_empty() || moved.len() == members.len() {
        return None;
    }
    let mut next = state.clone();
    for k in moved {
        let row = &mut next.eta[m][members[k] * s..(members[k] + 1) * s];
        row.iter_mut().enumerate().for_each(|(x, e)| *e = if x == target { 1.0 } else { 0.0 });
    }
    Some(next)
}

/// Repeatedly tries every (occupied block → empty block) split in every
/// state, keeping the best improving one, until none improves. The ELBO
/// of the returned state is never lower than that of `state`.
pub(crate) fn repair_empty_blocks(
    state: &mut VariationalState,
    diag: &mut FitDiagnostics,
    config: &ModelConfig,
    tensor: &ConnectivityTensor,
    options: FitOptions,
) -> Result<()> {
    // Selection is already active; the refined state needs no warm-up.
    let config = ModelConfig {
        gamma_warmup: 0,
        ..config.clone()
    };
    let max_rounds: usize = config.blocks_per_state.iter().sum();
    for _ in 0..max_rounds {
        let mut best: Option<(VariationalState, FitDiagnostics)> = None;
        for m in 0..state.n_states() {
            let s = state.n_blocks(m);
            let mut mass = vec![0.0; s];
            for row in state.eta[m].chunks(s) {
                mass.iter_mut().zip(row).for_each(|(a, x)| *a += x);
            }
            let Some(target) = (0..s).find(|&t| mass[t] < EMPTY_MASS) else {
                continue;
            };
            for source in (0..s).filter(|&x| mass[x] >= EMPTY_MASS) {
                let Some(mut next) = propose(state, tensor, m, source, target) else {
                    continue;
                };
                next.elbo_trace.clear();
                let d = run_cavi(&mut next, &config, tensor, options)?;
                diag.monotonicity.merge(&d.monotonicity);
                diag.n_iter += d.n_iter;
                let incumbent = best.as_ref().map_or(diag.final_elbo, |(_, b)| b.final_elbo);
                if d.final_elbo > incumbent {
                    best = Some((next, d));
                }
            }
        }
        let Some((next, d)) = best else { break };
        let mut trace = std::mem::take(&mut state.elbo_trace);
        trace.extend_from_slice(&next.elbo_trace);
        *state = next;
        state.elbo_trace = trace;
        diag.final_elbo = d.final_elbo;
        diag.converged = d.converged;
    }
    Ok(())
}
