//! The multi-state connectivity tensor and its expected block statistics.
//!
//! Only strictly-upper-triangle node pairs ever enter a likelihood; the
//! diagonal of every slice is carried along for storage but never read by
//! the model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// Absolute tolerance for accepting a slice as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Allowed deviation of a responsibility row sum from 1.
pub const SIMPLEX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Continuous,
    Binary,
}

/// Per-subject, per-state symmetric networks `a[i][m][v][v']`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityTensor {
    n_subjects: usize,
    n_states: usize,
    n_nodes: usize,
    family: Family,
    values: Vec<f64>,
}

impl ConnectivityTensor {
    /// Validates a raw subject-major, state-major, row-major array.
    ///
    /// Off-diagonal pairs that agree to within [`SYMMETRY_TOL`] are replaced
    /// by their average.
    pub fn validate(
        mut values: Vec<f64>,
        n_subjects: usize,
        n_states: usize,
        n_nodes: usize,
        family: Family,
    ) -> Result<Self> {
        if n_subjects == 0 || n_states == 0 || n_nodes == 0 {
            return Err(Error::Dimension(format!(
                "tensor dimensions must be positive, got N={n_subjects} M={n_states} V={n_nodes}"
            )));
        }
        let expected = n_subjects * n_states * n_nodes * n_nodes;
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "expected {expected} values for N={n_subjects} M={n_states} V={n_nodes}, got {}",
                values.len()
            )));
        }
        let vv = n_nodes * n_nodes;
        for (k, slice) in values.chunks_mut(vv).enumerate() {
            let (subject, state) = (k / n_states, k % n_states);
            let err = |row: usize, col: usize, reason: String| Error::Tensor {
                subject,
                state,
                row,
                col,
                reason,
            };
            for row in 0..n_nodes {
                for col in 0..n_nodes {
                    let a = slice[row * n_nodes + col];
                    if !a.is_finite() {
                        return Err(err(row, col, format!("non-finite value {a}")));
                    }
                    if family == Family::Binary && a != 0.0 && a != 1.0 {
                        return Err(err(row, col, format!("binary tensor holds {a}")));
                    }
                }
            }
            for row in 0..n_nodes {
                for col in row + 1..n_nodes {
                    let upper = slice[row * n_nodes + col];
                    let lower = slice[col * n_nodes + row];
                    if (upper - lower).abs() > SYMMETRY_TOL {
                        return Err(err(
                            row,
                            col,
                            format!("asymmetric pair {upper} vs {lower}"),
                        ));
                    }
                    if upper != lower {
                        let mean = 0.5 * (upper + lower);
                        slice[row * n_nodes + col] = mean;
                        slice[col * n_nodes + row] = mean;
                    }
                }
            }
        }
        Ok(Self {
            n_subjects,
            n_states,
            n_nodes,
            family,
            values,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The V×V matrix of subject `i` in state `m`.
    pub fn slice(&self, i: usize, m: usize) -> &[f64] {
        let vv = self.n_nodes * self.n_nodes;
        let start = (i * self.n_states + m) * vv;
        &self.values[start..start + vv]
    }

    pub fn get(&self, i: usize, m: usize, v: usize, w: usize) -> f64 {
        self.slice(i, m)[v * self.n_nodes + w]
    }

    /// Number of unique off-diagonal node pairs, V(V−1)/2.
    pub fn n_edges(&self) -> usize {
        self.n_nodes * (self.n_nodes - 1) / 2
    }

    /// Tensor restricted to the given subjects, in the given order.
    pub fn select_subjects(&self, subjects: &[usize]) -> Self {
        let per_subject = self.n_states * self.n_nodes * self.n_nodes;
        let mut values = Vec::with_capacity(subjects.len() * per_subject);
        for &i in subjects {
            values.extend_from_slice(&self.values[i * per_subject..(i + 1) * per_subject]);
        }
        Self {
            n_subjects: subjects.len(),
            values,
            ..*self
        }
    }

    /// Sample variance of every off-diagonal upper-triangle entry.
    pub fn pooled_edge_variance(&self) -> f64 {
        let v = self.n_nodes;
        let (mut n, mut mean, mut m2) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..self.n_subjects * self.n_states {
            let slice = &self.values[k * v * v..(k + 1) * v * v];
            for row in 0..v {
                for &a in &slice[row * v + row + 1..(row + 1) * v] {
                    n += 1.0;
                    let delta = a - mean;
                    mean += delta / n;
                    m2 += delta * (a - mean);
                }
            }
        }
        if n > 1.0 {
            m2 / (n - 1.0)
        } else {
            0.0
        }
    }
}

/// Enumerates unordered block pairs (s, s') with s ≤ s' in lexicographic
/// order: (0,0), (0,1), …, (0,S−1), (1,1), …
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    n_blocks: usize,
    pairs: Vec<(usize, usize)>,
    lookup: Vec<usize>,
}

impl PairIndex {
    pub fn new(n_blocks: usize) -> Self {
        let mut pairs = Vec::with_capacity(n_blocks * (n_blocks + 1) / 2);
        let mut lookup = vec![0; n_blocks * n_blocks];
        for s in 0..n_blocks {
            for t in s..n_blocks {
                lookup[s * n_blocks + t] = pairs.len();
                lookup[t * n_blocks + s] = pairs.len();
                pairs.push((s, t));
            }
        }
        Self {
            n_blocks,
            pairs,
            lookup,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pair index of blocks (s, t) in either order.
    pub fn index(&self, s: usize, t: usize) -> usize {
        self.lookup[s * self.n_blocks + t]
    }

    pub fn pair(&self, p: usize) -> (usize, usize) {
        self.pairs[p]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }
}

/// Expected block-pair statistics under soft node memberships.
///
/// `edge_count[m][p]` is shared by all subjects; `weighted_sum[m]` and
/// `weighted_sq_sum[m]` are laid out as `i * P_m + p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSuffStats {
    pub pairs: Vec<PairIndex>,
    pub edge_count: Vec<Vec<f64>>,
    pub weighted_sum: Vec<Vec<f64>>,
    pub weighted_sq_sum: Vec<Vec<f64>>,
}

impl BlockSuffStats {
    pub fn n_pairs(&self, m: usize) -> usize {
        self.pairs[m].len()
    }

    /// (n̂, Â, Q̂) for subject `i`, state `m`, pair `p`.
    pub fn get(&self, i: usize, m: usize, p: usize) -> (f64, f64, f64) {
        let k = i * self.pairs[m].len() + p;
        (
            self.edge_count[m][p],
            self.weighted_sum[m][k],
            self.weighted_sq_sum[m][k],
        )
    }
}

/// Checks that `eta[m]` is a V×S_m row-stochastic matrix for every state.
pub(crate) fn check_responsibilities(eta: &[Vec<f64>], n_states: usize, n_nodes: usize) -> Result<Vec<usize>> {
    if eta.len() != n_states {
        return Err(Error::Dimension(format!(
            "node responsibilities cover {} states, tensor has {n_states}",
            eta.len()
        )));
    }
    let mut blocks = Vec::with_capacity(n_states);
    for (m, rows) in eta.iter().enumerate() {
        if rows.is_empty() || rows.len() % n_nodes != 0 {
            return Err(Error::Dimension(format!(
                "state {m}: responsibility length {} is not a positive multiple of V={n_nodes}",
                rows.len()
            )));
        }
        let s = rows.len() / n_nodes;
        for (v, row) in rows.chunks(s).enumerate() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&x| x.is_nan() || x < 0.0) {
                return Err(Error::Dimension(format!(
                    "state {m}, node {v}: responsibilities {row:?} are not on the simplex"
                )));
            }
        }
        blocks.push(s);
    }
    Ok(blocks)
}

/// Expected per-block-pair edge counts, sums and sums of squares under the
/// node responsibilities `eta` (one V×S_m row-major matrix per state).
pub fn block_suffstats(tensor: &ConnectivityTensor, eta: &[Vec<f64>], exec: Exec) -> Result<BlockSuffStats> {
    let blocks = check_responsibilities(eta, tensor.n_states(), tensor.n_nodes())?;
    Ok(block_suffstats_unchecked(tensor, eta, &blocks, exec))
}

pub(crate) fn block_suffstats_unchecked(
    tensor: &ConnectivityTensor,
    eta: &[Vec<f64>],
    blocks: &[usize],
    exec: Exec,
) -> BlockSuffStats {
    let (n, n_states, v) = (tensor.n_subjects(), tensor.n_states(), tensor.n_nodes());
    let pairs: Vec<PairIndex> = blocks.iter().map(|&s| PairIndex::new(s)).collect();
    let binary = tensor.family() == Family::Binary;

    let edge_count: Vec<Vec<f64>> = (0..n_states)
        .map(|m| {
            let s = blocks[m];
            let mut col = vec![0.0; s];
            let mut cross = vec![0.0; s * s];
            for row in eta[m].chunks(s) {
                for a in 0..s {
                    col[a] += row[a];
                    for b in 0..s {
                        cross[a * s + b] += row[a] * row[b];
                    }
                }
            }
            pairs[m]
                .pairs()
                .iter()
                .map(|&(a, b)| {
                    let full = col[a] * col[b] - cross[a * s + b];
                    if a == b {
                        0.5 * full
                    } else {
                        full
                    }
                })
                .collect()
        })
        .collect();

    let per_slice = par::map_range(exec, n * n_states, |k| {
        let (i, m) = (k / n_states, k % n_states);
        project_slice(tensor.slice(i, m), &eta[m], v, blocks[m], &pairs[m], !binary)
    });

    let mut weighted_sum: Vec<Vec<f64>> = pairs.iter().map(|p| Vec::with_capacity(n * p.len())).collect();
    let mut weighted_sq_sum = weighted_sum.clone();
    for (k, (sum, sq)) in per_slice.into_iter().enumerate() {
        let m = k % n_states;
        weighted_sum[m].extend_from_slice(&sum);
        match sq {
            Some(sq) => weighted_sq_sum[m].extend_from_slice(&sq),
            None => weighted_sq_sum[m].extend_from_slice(&sum),
        }
    }
    BlockSuffStats {
        pairs,
        edge_count,
        weighted_sum,
        weighted_sq_sum,
    }
}

/// Computes ηᵀAη (and ηᵀA∘Aη) over off-diagonal entries and folds the
/// result onto unordered block pairs.
fn project_slice(
    slice: &[f64],
    eta: &[f64],
    v: usize,
    s: usize,
    pairs: &PairIndex,
    squares: bool,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut full = vec![0.0; s * s];
    let mut full_sq = vec![0.0; if squares { s * s } else { 0 }];
    let mut proj = vec![0.0; s];
    let mut proj_sq = vec![0.0; s];
    for row in 0..v {
        proj.iter_mut().for_each(|x| *x = 0.0);
        proj_sq.iter_mut().for_each(|x| *x = 0.0);
        let a_row = &slice[row * v..(row + 1) * v];
        for (col, &a) in a_row.iter().enumerate() {
            if col == row {
                continue;
            }
            let e = &eta[col * s..(col + 1) * s];
            if squares {
                let a2 = a * a;
                for b in 0..s {
                    proj[b] += a * e[b];
                    proj_sq[b] += a2 * e[b];
                }
            } else {
                for b in 0..s {
                    proj[b] += a * e[b];
                }
            }
        }
        let e_row = &eta[row * s..(row + 1) * s];
        for a in 0..s {
            for b in 0..s {
                full[a * s + b] += e_row[a] * proj[b];
                if squares {
                    full_sq[a * s + b] += e_row[a] * proj_sq[b];
                }
            }
        }
    }
    let fold = |m: &[f64]| -> Vec<f64> {
        pairs
            .pairs()
            .iter()
            .map(|&(a, b)| if a == b { 0.5 * m[a * s + a] } else { m[a * s + b] })
            .collect()
    };
    let sum = fold(&full);
    let sq = squares.then(|| fold(&full_sq));
    (sum, sq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor_from(n: usize, m: usize, v: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> ConnectivityTensor {
        let mut values = vec![0.0; n * m * v * v];
        for i in 0..n {
            for s in 0..m {
                for a in 0..v {
                    for b in a + 1..v {
                        let x = f(i, s, a, b);
                        values[((i * m + s) * v + a) * v + b] = x;
                        values[((i * m + s) * v + b) * v + a] = x;
                    }
                }
            }
        }
        ConnectivityTensor::validate(values, n, m, v, Family::Continuous).unwrap()
    }

    fn hard(labels: &[usize], s: usize) -> Vec<f64> {
        let mut eta = vec![0.0; labels.len() * s];
        for (v, &l) in labels.iter().enumerate() {
            eta[v * s + l] = 1.0;
        }
        eta
    }

    #[test]
    fn accepts_symmetric_slice() {
        let t = ConnectivityTensor::validate(vec![0.0, 0.3, 0.3, 0.0], 1, 1, 2, Family::Continuous).unwrap();
        assert_eq!(t.get(0, 0, 0, 1), 0.3);
    }

    #[test]
    fn rejects_asymmetry_and_bad_binary() {
        let err = ConnectivityTensor::validate(vec![0.0, 0.3, 0.5, 0.0], 1, 1, 2, Family::Continuous).unwrap_err();
        match err {
            Error::Tensor { row, col, .. } => assert_eq!((row, col), (0, 1)),
            other => panic!("unexpected {other:?}"),
        }
        let err = ConnectivityTensor::validate(vec![0.0, 0.5, 0.5, 0.0], 1, 1, 2, Family::Binary).unwrap_err();
        assert!(matches!(err, Error::Tensor { .. }));
        let err = ConnectivityTensor::validate(vec![0.0, f64::NAN, f64::NAN, 0.0], 1, 1, 2, Family::Continuous);
        assert!(err.is_err());
        assert!(ConnectivityTensor::validate(vec![0.0; 3], 1, 1, 2, Family::Continuous).is_err());
    }

    #[test]
    fn symmetrizes_within_tolerance() {
        let t = ConnectivityTensor::validate(vec![0.0, 0.3, 0.3 + 5e-10, 0.0], 1, 1, 2, Family::Continuous).unwrap();
        assert_eq!(t.get(0, 0, 0, 1), t.get(0, 0, 1, 0));
    }

    #[test]
    fn pair_index_is_symmetric() {
        let p = PairIndex::new(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p.pairs(), &[(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]);
        assert_eq!(p.index(2, 1), 4);
        assert_eq!(p.index(1, 2), 4);
    }

    #[test]
    fn hand_counted_edges() {
        let t = tensor_from(1, 1, 3, |_, _, _, _| 1.0);
        let st = block_suffstats(&t, &[hard(&[0, 0, 0], 1)], Exec::Sequential).unwrap();
        assert_eq!(st.edge_count[0], vec![3.0]);

        let t = tensor_from(1, 1, 4, |_, _, a, b| (a + b) as f64);
        let st = block_suffstats(&t, &[hard(&[0, 0, 1, 1], 2)], Exec::Sequential).unwrap();
        assert_eq!(st.edge_count[0], vec![1.0, 4.0, 1.0]);
        // within block 0: edge (0,1) = 1; across: (0,2)+(0,3)+(1,2)+(1,3) = 2+3+3+4; block 1: (2,3) = 5
        assert_eq!(st.weighted_sum[0], vec![1.0, 12.0, 5.0]);
        assert_eq!(st.weighted_sq_sum[0], vec![1.0, 4.0 + 9.0 + 9.0 + 16.0, 25.0]);
    }

    #[test]
    fn rejects_off_simplex_rows() {
        let t = tensor_from(1, 1, 2, |_, _, _, _| 1.0);
        assert!(block_suffstats(&t, &[vec![0.5, 0.6, 1.0, 0.0]], Exec::Sequential).is_err());
        assert!(block_suffstats(&t, &[vec![1.0, 0.0, 1.0]], Exec::Sequential).is_err());
        assert!(block_suffstats(&t, &[], Exec::Sequential).is_err());
    }
}
