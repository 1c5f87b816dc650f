//! Clustering and selection accuracy against a known truth.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::GroundTruth;
use crate::summary::FitSummary;
use crate::tensor::PairIndex;

fn choose2(n: u64) -> i128 {
    i128::from(n) * i128::from(n.saturating_sub(1)) / 2
}

/// Hubert–Arabie adjusted Rand index. The pair counts are combined in
/// integer arithmetic and divided once, so the result is the correctly
/// rounded value of the exact index. When the expected and maximal indices
/// coincide (both partitions all-one-cluster, or both all-singletons) the
/// partitions are identical and 1 is returned.
pub fn adjusted_rand_index(x: &[usize], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("label vectors differ in length: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Dimension("adjusted Rand index needs at least two items".into()));
    }
    let mut joint: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    let index: i128 = joint.values().map(|&n| choose2(n)).sum();
    let a: i128 = rows.values().map(|&n| choose2(n)).sum();
    let b: i128 = cols.values().map(|&n| choose2(n)).sum();
    let total = choose2(x.len() as u64);
    // (index − a·b/C) / ((a + b)/2 − a·b/C), scaled by 2C.
    let num = 2 * (index * total - a * b);
    let den = total * (a + b) - 2 * a * b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    /// TP / (TP + FN); 1 when there are no true positives to find.
    pub sensitivity: f64,
    /// TN / (TN + FP); 1 when there are no true negatives.
    pub specificity: f64,
    pub youden: f64,
    pub confusion: Confusion,
}

fn check_partition(block_of: &[Vec<usize>], truth: &GroundTruth) -> Result<()> {
    if block_of.len() != truth.n_states() {
        return Err(Error::Dimension(format!(
            "estimate has {} states, truth has {}",
            block_of.len(),
            truth.n_states()
        )));
    }
    for (m, (est, tru)) in block_of.iter().zip(&truth.block_of).enumerate() {
        if est.len() != tru.len() {
            return Err(Error::Dimension(format!("state {m}: estimate has {} nodes, truth has {}", est.len(), tru.len())));
        }
    }
    Ok(())
}

/// Pair index implied by `n_pairs` flags, checked against the labels.
fn estimated_pairs(n_pairs: usize, labels: &[usize], m: usize) -> Result<PairIndex> {
    let s = ((((8 * n_pairs + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    if s == 0 || s * (s + 1) / 2 != n_pairs {
        return Err(Error::Dimension(format!("state {m}: {n_pairs} pair flags do not match any block count")));
    }
    if labels.iter().any(|&b| b == 0 || b > s) {
        return Err(Error::Dimension(format!("state {m}: block labels must lie in 1..={s}")));
    }
    Ok(PairIndex::new(s))
}

/// Edge-level selection accuracy. Each unique off-diagonal edge of each
/// state is positive in truth when its true block pair is informative, and
/// predicted positive when its estimated block pair is selected.
pub fn selection_metrics(
    selected: &[Vec<bool>],
    block_of: &[Vec<usize>],
    truth: &GroundTruth,
) -> Result<SelectionMetrics> {
    check_partition(block_of, truth)?;
    let mut c = Confusion::default();
    for m in 0..truth.n_states() {
        let pairs = estimated_pairs(selected.get(m).map_or(0, Vec::len), &block_of[m], m)?;
        let est = &block_of[m];
        let v_max = est.len();
        for v in 0..v_max {
            for w in v + 1..v_max {
                let actual = truth.informative[m][truth.pair_of(m, v, w)];
                let predicted = selected[m][pairs.index(est[v] - 1, est[w] - 1)];
                match (predicted, actual) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, false) => c.tn += 1,
                    (false, true) => c.fn_ += 1,
                }
            }
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let sensitivity = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    Ok(SelectionMetrics {
        sensitivity,
        specificity,
        youden: sensitivity + specificity - 1.0,
        confusion: c,
    })
}

/// Area under the ROC curve of edge-level scores (the selection
/// probability of each edge's estimated block pair) against the true
/// edge labels, with ties counted as one half.
pub fn selection_auc(selection_prob: &[Vec<f64>], block_of: &[Vec<usize>], truth: &GroundTruth) -> Result<Option<f64>> {
    check_partition(block_of, truth)?;
    // Edges sharing (estimated pair, true flag) share a score: count them.
    let mut groups: Vec<(f64, u64, u64)> = Vec::new();
    for m in 0..truth.n_states() {
        let pairs = estimated_pairs(selection_prob.get(m).map_or(0, Vec::len), &block_of[m], m)?;
        let mut counts = vec![(0u64, 0u64); pairs.len()];
        let est = &block_of[m];
        for v in 0..est.len() {
            for w in v + 1..est.len() {
                let p = pairs.index(est[v] - 1, est[w] - 1);
                if truth.informative[m][truth.pair_of(m, v, w)] {
                    counts[p].0 += 1;
                } else {
                    counts[p].1 += 1;
                }
            }
        }
        for (p, (pos, neg)) in counts.into_iter().enumerate() {
            groups.push((selection_prob[m][p], pos, neg));
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (n_pos, n_neg) = groups.iter().fold((0, 0), |(p, n), g| (p + g.1, n + g.2));
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let (mut below_neg, mut wins) = (0u64, 0.0);
    let mut k = 0;
    while k < groups.len() {
        let mut end = k;
        let (mut pos, mut neg) = (0, 0);
        while end < groups.len() && groups[end].0 == groups[k].0 {
            pos += groups[end].1;
            neg += groups[end].2;
            end += 1;
        }
        wins += pos as f64 * (below_neg as f64 + 0.5 * neg as f64);
        below_neg += neg;
        k = end;
    }
    Ok(Some(wins / (n_pos as f64 * n_neg as f64)))
}

/// True when, in every state, the estimated partition equals the true one
/// up to relabelling and the selected block pairs map exactly onto the
/// informative ones.
pub fn block_selection_exact(summary: &FitSummary, truth: &GroundTruth) -> bool {
    if summary.block_of.len() != truth.n_states() {
        return false;
    }
    for m in 0..truth.n_states() {
        let (est, tru) = (&summary.block_of[m], &truth.block_of[m]);
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut back: HashMap<usize, usize> = HashMap::new();
        for (&e, &t) in est.iter().zip(tru) {
            if *map.entry(e).or_insert(t) != t || *back.entry(t).or_insert(e) != e {
                return false;
            }
        }
        if map.len() != truth.n_blocks[m] {
            return false;
        }
        let est_pairs = PairIndex::new(summary.n_blocks[m]);
        let true_pairs = PairIndex::new(truth.n_blocks[m]);
        let mut mapped = vec![false; true_pairs.len()];
        for (p, &(a, b)) in est_pairs.pairs().iter().enumerate() {
            if !summary.selected[m][p] {
                continue;
            }
            match (map.get(&(a + 1)), map.get(&(b + 1))) {
                (Some(&x), Some(&y)) => mapped[true_pairs.index(x - 1, y - 1)] = true,
                // A selected pair involving an empty estimated block has no edges.
                _ => continue,
            }
        }
        if mapped != truth.informative[m] {
            return false;
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subtyping_ari: f64,
    /// Per state.
    pub modular_ari: Vec<f64>,
    pub sensitivity: f64,
    pub specificity: f64,
    pub youden: f64,
    pub edge_confusion: Confusion,
    /// Edge-level AUC of the selection probabilities; absent when the truth
    /// has only one class.
    pub auc: Option<f64>,
    pub block_selection_exact: bool,
    pub occupied_clusters: usize,
    pub runtime_seconds: f64,
}

pub fn evaluate(summary: &FitSummary, truth: &GroundTruth, runtime_seconds: f64) -> Result<MetricsReport> {
    let subtyping_ari = adjusted_rand_index(&summary.cluster_of, &truth.subtype_of)?;
    check_partition(&summary.block_of, truth)?;
    let modular_ari = summary
        .block_of
        .iter()
        .zip(&truth.block_of)
        .map(|(e, t)| adjusted_rand_index(e, t))
        .collect::<Result<Vec<_>>>()?;
    let sel = selection_metrics(&summary.selected, &summary.block_of, truth)?;
    Ok(MetricsReport {
        subtyping_ari,
        modular_ari,
        sensitivity: sel.sensitivity,
        specificity: sel.specificity,
        youden: sel.youden,
        edge_confusion: sel.confusion,
        auc: selection_auc(&summary.selection_prob, &summary.block_of, truth)?,
        block_selection_exact: block_selection_exact(summary, truth),
        occupied_clusters: summary.occupied_clusters,
        runtime_seconds,
    })
}
