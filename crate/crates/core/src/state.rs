//! The variational state: every parameter of the factorised posterior.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{AlphaMode, ModelConfig, NoiseMode};
use crate::error::{Error, Result};
use crate::special::softmax_in_place;
use crate::tensor::{ConnectivityTensor, Family};

/// Symmetric Dirichlet concentration used to draw initial node rows.
const INIT_ETA_CONCENTRATION: f64 = 5.0;

/// Parameters of one set of block-pair factors: Normal-Inverse-Gamma
/// (u, r, g, h) for the continuous family or Beta (j, k) for the binary
/// family. Each vector is indexed `[m][d * P_m + p]`; the unused family's
/// vectors are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFactors {
    pub u: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub n_subjects: usize,
    pub truncation: usize,
    /// Dirichlet parameters of q(τ_m), `[m][s]`.
    pub t: Vec<Vec<f64>>,
    /// Node responsibilities, `[m][v * S_m + s]`.
    pub eta: Vec<Vec<f64>>,
    /// Beta parameters of q(w'_d) for d < D.
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    /// Unnormalised log cluster weights, `[i * D + d]`.
    pub b: Vec<f64>,
    /// Selection logits, `[m][p]`.
    pub zeta: Vec<Vec<f64>>,
    /// Informative-component NIG factors, `[m][d * P_m + p]`.
    pub u: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    /// Informative-component Beta factors, `[m][d * P_m + p]`.
    pub j: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    /// Learned noise component, `[m][p]`; absent for fixed noise.
    pub noise: Option<BlockFactors>,
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    pub elbo_trace: Vec<f64>,
}

impl VariationalState {
    pub fn n_states(&self) -> usize {
        self.t.len()
    }

    pub fn n_blocks(&self, m: usize) -> usize {
        self.t[m].len()
    }

    pub fn n_pairs(&self, m: usize) -> usize {
        let s = self.n_blocks(m);
        s * (s + 1) / 2
    }

    pub fn n_nodes(&self) -> usize {
        self.eta[0].len() / self.n_blocks(0)
    }

    /// Row-wise softmax of `b`.
    pub fn responsibilities(&self) -> Vec<f64> {
        let mut r = self.b.clone();
        for row in r.chunks_mut(self.truncation) {
            softmax_in_place(row);
        }
        r
    }

    /// Checks shapes, positivity and simplex constraints.
    pub fn check(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::Numerical { term: what.to_string() });
        let d = self.truncation;
        if self.e.len() != d - 1 || self.f.len() != d - 1 || self.b.len() != self.n_subjects * d {
            return fail("state shape (sticks / cluster logits)");
        }
        let pos = |xs: &[f64]| xs.iter().all(|&x| x.is_finite() && x > 0.0);
        if !pos(&self.e) || !pos(&self.f) || !self.b.iter().all(|x| x.is_finite()) {
            return fail("stick parameters");
        }
        for m in 0..self.n_states() {
            if !pos(&self.t[m]) {
                return fail("block proportion parameters t");
            }
            let s = self.n_blocks(m);
            for row in self.eta[m].chunks(s) {
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-8 || row.iter().any(|&x| x.is_nan() || x < 0.0) {
                    return fail("node responsibilities eta");
                }
            }
            if !self.zeta[m].iter().all(|x| x.is_finite()) {
                return fail("selection logits zeta");
            }
            let all = [&self.r, &self.g, &self.h, &self.j, &self.k];
            if all.iter().any(|v| !v.is_empty() && !pos(&v[m])) {
                return fail("block-pair factor parameters");
            }
        }
        if !(self.alpha_shape > 0.0 && self.alpha_rate > 0.0) {
            return fail("concentration factor");
        }
        Ok(())
    }
}

fn prior_block(config: &ModelConfig, family: Family, count: &[usize]) -> BlockFactors {
    let fill = |x: f64| count.iter().map(|&n| vec![x; n]).collect::<Vec<_>>();
    match family {
        Family::Continuous => BlockFactors {
            u: fill(0.0),
            r: fill(config.nig_lambda),
            g: fill(config.nig_a),
            h: fill(config.nig_b),
            j: Vec::new(),
            k: Vec::new(),
        },
        Family::Binary => BlockFactors {
            u: Vec::new(),
            r: Vec::new(),
            g: Vec::new(),
            h: Vec::new(),
            j: fill(config.beta_a0),
            k: fill(config.beta_b0),
        },
    }
}

/// Random initial state: Dirichlet(5) node rows, standard-normal cluster
/// logits, flat sticks, neutral selection and block-pair factors at the
/// prior.
pub fn init_state(config: &ModelConfig, tensor: &ConnectivityTensor, seed: u64) -> Result<VariationalState> {
    if config.n_states() != tensor.n_states() {
        return Err(Error::Dimension(format!(
            "config has {} states, data has {}",
            config.n_states(),
            tensor.n_states()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, v, d) = (tensor.n_subjects(), tensor.n_nodes(), config.truncation);
    let family = tensor.family();
    let gamma = Gamma::new(INIT_ETA_CONCENTRATION, 1.0).expect("valid gamma");

    let mut eta = Vec::with_capacity(config.n_states());
    let mut t = Vec::with_capacity(config.n_states());
    for (m, &s) in config.blocks_per_state.iter().enumerate() {
        let mut rows = vec![0.0; v * s];
        for row in rows.chunks_mut(s) {
            if s == 1 {
                row[0] = 1.0;
                continue;
            }
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = gamma.sample(&mut rng);
                total += *x;
            }
            row.iter_mut().for_each(|x| *x /= total);
        }
        let phi = config.phi(m);
        let mut tm = phi.clone();
        for row in rows.chunks(s) {
            for (a, x) in row.iter().enumerate() {
                tm[a] += x;
            }
        }
        eta.push(rows);
        t.push(tm);
    }
    let b: Vec<f64> = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

    let pairs: Vec<usize> = config.blocks_per_state.iter().map(|&s| s * (s + 1) / 2).collect();
    let informative: Vec<usize> = pairs.iter().map(|p| p * d).collect();
    let slab = prior_block(config, family, &informative);
    let noise = match config.noise_mode {
        NoiseMode::Learned => Some(prior_block(config, family, &pairs)),
        NoiseMode::Fixed => None,
    };
    let (alpha_shape, alpha_rate) = match config.alpha_mode {
        AlphaMode::Learned { shape, rate } => (shape, rate),
        AlphaMode::Fixed { value } => (value, 1.0),
    };
    Ok(VariationalState {
        n_subjects: n,
        truncation: d,
        t,
        eta,
        e: vec![1.0; d - 1],
        f: vec![1.0; d - 1],
        b,
        zeta: pairs.iter().map(|&p| vec![0.0; p]).collect(),
        u: slab.u,
        r: slab.r,
        g: slab.g,
        h: slab.h,
        j: slab.j,
        k: slab.k,
        noise,
        alpha_shape,
        alpha_rate,
        elbo_trace: Vec::new(),
    })
}
