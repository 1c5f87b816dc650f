//! Synthetic multi-state networks with planted subtypes, modules and
//! informative block pairs.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::tensor::{ConnectivityTensor, Family, PairIndex};

const LABEL_ATTEMPTS: usize = 100;
/// Smallest block size for which a within-block pair has an off-diagonal edge.
const MIN_BLOCK_SIZE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub n_states: usize,
    pub n_subtypes: usize,
    pub n_nodes: usize,
    /// Module membership probabilities, one row per state.
    pub node_probs: Vec<Vec<f64>>,
    pub informative_fraction: f64,
    pub family: Family,
    pub informative_means: Vec<f64>,
    pub informative_vars: Vec<f64>,
    pub noise_mean: f64,
    pub noise_var: f64,
    /// Binary family: per-subtype edge probabilities of informative pairs.
    pub informative_probs: Vec<f64>,
    /// Binary family: edge probability of noise pairs.
    pub noise_prob: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_subjects: 100,
            n_states: 2,
            n_subtypes: 3,
            n_nodes: 60,
            node_probs: vec![vec![0.25, 0.40, 0.35], vec![0.30, 0.30, 0.40]],
            informative_fraction: 0.5,
            family: Family::Continuous,
            informative_means: vec![-3.0, 2.0, 7.0],
            informative_vars: vec![3.0, 5.0, 7.0],
            noise_mean: 0.0,
            noise_var: 6.0,
            informative_probs: vec![0.2, 0.5, 0.8],
            noise_prob: 0.5,
            seed: 0,
        }
    }
}

/// Named benchmark settings: V ∈ {60, 200, 500} × {high, low} SNR.
pub const SETTINGS: [&str; 6] = ["v60-high", "v60-low", "v200-high", "v200-low", "v500-high", "v500-low"];

impl SimConfig {
    pub fn setting(name: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown setting {name:?}; expected one of {}", SETTINGS.join(", ")));
        let (nodes, snr) = name.strip_prefix('v').and_then(|s| s.split_once('-')).ok_or_else(bad)?;
        let n_nodes = match nodes {
            "60" => 60,
            "200" => 200,
            "500" => 500,
            _ => return Err(bad()),
        };
        let noise_var = match snr {
            "high" => 6.0,
            "low" => 10.0,
            _ => return Err(bad()),
        };
        Ok(Self {
            n_nodes,
            noise_var,
            ..Self::default()
        })
    }

    pub fn n_blocks(&self) -> Vec<usize> {
        self.node_probs.iter().map(Vec::len).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_subjects == 0 || self.n_states == 0 || self.n_subtypes == 0 || self.n_nodes < 2 {
            return bad("n_subjects, n_states and n_subtypes must be positive and n_nodes at least 2".into());
        }
        if self.node_probs.len() != self.n_states {
            return bad(format!("node_probs has {} rows for {} states", self.node_probs.len(), self.n_states));
        }
        for (m, row) in self.node_probs.iter().enumerate() {
            let total: f64 = row.iter().sum();
            if row.is_empty() || row.iter().any(|&p| p.is_nan() || p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return bad(format!("node_probs for state {m} is not a probability vector: {row:?}"));
            }
            if row.len() * MIN_BLOCK_SIZE > self.n_nodes {
                return bad(format!("{} nodes cannot fill {} blocks in state {m}", self.n_nodes, row.len()));
            }
        }
        if !(0.0..=1.0).contains(&self.informative_fraction) {
            return bad(format!("informative_fraction must lie in [0, 1], got {}", self.informative_fraction));
        }
        match self.family {
            Family::Continuous => {
                if self.informative_means.len() != self.n_subtypes || self.informative_vars.len() != self.n_subtypes {
                    return bad(format!("informative means and variances need {} values each", self.n_subtypes));
                }
                let all = self.informative_vars.iter().chain([&self.noise_var]);
                if all.clone().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return bad("variances must be positive".into());
                }
                if self.informative_means.iter().chain([&self.noise_mean]).any(|m| !m.is_finite()) {
                    return bad("means must be finite".into());
                }
            }
            Family::Binary => {
                if self.informative_probs.len() != self.n_subtypes {
                    return bad(format!("informative_probs needs {} values", self.n_subtypes));
                }
                if self.informative_probs.iter().chain([&self.noise_prob]).any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("edge probabilities must lie in [0, 1]".into());
                }
            }
        }
        Ok(())
    }
}

/// The planted structure behind a simulated tensor. Labels are 1-based;
/// block pairs of each state are in lexicographic order (1,1), (1,2), ….
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub subtype_of: Vec<usize>,
    /// `[m][v]`
    pub block_of: Vec<Vec<usize>>,
    pub n_blocks: Vec<usize>,
    /// `[m][p]`
    pub informative: Vec<Vec<bool>>,
    /// Edge mean of every (subtype, state, pair), `[k][m][p]`. Noise pairs
    /// carry the noise mean; for the binary family this is the edge
    /// probability.
    pub means: Vec<Vec<Vec<f64>>>,
    /// Edge variance of every (subtype, state, pair), `[k][m][p]`.
    pub vars: Vec<Vec<Vec<f64>>>,
    /// Configuration that generated the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

impl GroundTruth {
    pub fn n_subtypes(&self) -> usize {
        self.means.len()
    }

    pub fn n_states(&self) -> usize {
        self.block_of.len()
    }

    /// Zero-based true pair index of edge (v, w) in state m.
    pub fn pair_of(&self, m: usize, v: usize, w: usize) -> usize {
        PairIndex::new(self.n_blocks[m]).index(self.block_of[m][v] - 1, self.block_of[m][w] - 1)
    }

    pub fn informative_pairs(&self, m: usize) -> Vec<usize> {
        (0..self.informative[m].len()).filter(|&p| self.informative[m][p]).collect()
    }
}

fn draw_labels(rng: &mut ChaCha8Rng, probs: &[f64], n_nodes: usize, state: usize) -> Result<Vec<usize>> {
    let cumulative: Vec<f64> = probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    for _ in 0..LABEL_ATTEMPTS {
        let labels: Vec<usize> = (0..n_nodes)
            .map(|_| {
                let u: f64 = rng.random();
                cumulative.iter().position(|&c| u < c).unwrap_or(probs.len() - 1)
            })
            .collect();
        let mut sizes = vec![0; probs.len()];
        labels.iter().for_each(|&s| sizes[s] += 1);
        if sizes.iter().all(|&n| n >= MIN_BLOCK_SIZE) {
            return Ok(labels.into_iter().map(|s| s + 1).collect());
        }
    }
    Err(Error::Config(format!(
        "state {state}: no node partition with every block of size >= {MIN_BLOCK_SIZE} after {LABEL_ATTEMPTS} attempts"
    )))
}

/// Draws a tensor and its ground truth. Deterministic given `sim.seed`.
pub fn generate(sim: &SimConfig) -> Result<(ConnectivityTensor, GroundTruth)> {
    generate_with(sim, Exec::default())
}

/// As [`generate`]; the edge draws of each subject come from their own
/// stream so the result does not depend on `exec`.
pub fn generate_with(sim: &SimConfig, exec: Exec) -> Result<(ConnectivityTensor, GroundTruth)> {
    sim.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
    let (n, n_states, k_max, v_max) = (sim.n_subjects, sim.n_states, sim.n_subtypes, sim.n_nodes);
    let n_blocks = sim.n_blocks();

    let subtype_of: Vec<usize> = (0..n).map(|_| rng.random_range(0..k_max) + 1).collect();
    let block_of = (0..n_states)
        .map(|m| draw_labels(&mut rng, &sim.node_probs[m], v_max, m))
        .collect::<Result<Vec<_>>>()?;

    let (base_mean, base_var) = match sim.family {
        Family::Continuous => (sim.noise_mean, sim.noise_var),
        Family::Binary => (sim.noise_prob, sim.noise_prob * (1.0 - sim.noise_prob)),
    };
    let mut informative = Vec::with_capacity(n_states);
    let mut means = vec![Vec::with_capacity(n_states); k_max];
    let mut vars = vec![Vec::with_capacity(n_states); k_max];
    for &s in &n_blocks {
        let n_pairs = s * (s + 1) / 2;
        let n_info = (sim.informative_fraction * n_pairs as f64 - 1e-9).ceil().max(0.0) as usize;
        let mut flags = vec![false; n_pairs];
        for p in index::sample(&mut rng, n_pairs, n_info) {
            flags[p] = true;
        }
        for k in 0..k_max {
            means[k].push(vec![base_mean; n_pairs]);
            vars[k].push(vec![base_var; n_pairs]);
        }
        for p in (0..n_pairs).filter(|&p| flags[p]) {
            let mut order: Vec<usize> = (0..k_max).collect();
            order.shuffle(&mut rng);
            let mut var_order: Vec<usize> = (0..k_max).collect();
            if sim.family == Family::Continuous {
                var_order.shuffle(&mut rng);
            }
            for k in 0..k_max {
                let (mean, var) = match sim.family {
                    Family::Continuous => (sim.informative_means[order[k]], sim.informative_vars[var_order[k]]),
                    Family::Binary => {
                        let q = sim.informative_probs[order[k]];
                        (q, q * (1.0 - q))
                    }
                };
                means[k].last_mut().expect("state pushed")[p] = mean;
                vars[k].last_mut().expect("state pushed")[p] = var;
            }
        }
        informative.push(flags);
    }
    let truth = GroundTruth {
        subtype_of,
        block_of,
        n_blocks,
        informative,
        means,
        vars,
        sim: Some(sim.clone()),
    };

    let slab = n_states * v_max * v_max;
    let mut values = vec![0.0; n * slab];
    par::for_each_chunk_mut(exec, &mut values, slab, |i, out| {
        let mut rng = ChaCha8Rng::seed_from_u64(sim.seed);
        rng.set_stream(i as u64 + 1);
        let k = truth.subtype_of[i] - 1;
        for m in 0..n_states {
            let a = &mut out[m * v_max * v_max..(m + 1) * v_max * v_max];
            for v in 0..v_max {
                for w in v + 1..v_max {
                    let p = truth.pair_of(m, v, w);
                    let x = draw_edge(&mut rng, sim.family, truth.means[k][m][p], truth.vars[k][m][p]);
                    a[v * v_max + w] = x;
                    a[w * v_max + v] = x;
                }
            }
        }
    });
    let tensor = ConnectivityTensor::validate(values, n, n_states, v_max, sim.family)?;
    Ok((tensor, truth))
}

fn draw_edge(rng: &mut ChaCha8Rng, family: Family, mean: f64, var: f64) -> f64 {
    match family {
        Family::Continuous => Normal::new(mean, var.sqrt()).expect("validated variance").sample(rng),
        Family::Binary => f64::from(u8::from(Bernoulli::new(mean).expect("validated probability").sample(rng))),
    }
}
