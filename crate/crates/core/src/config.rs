//! Model structure, prior hyperparameters and inference controls.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ConnectivityTensor, Family};

/// Treatment of the DP concentration α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum AlphaMode {
    /// α held at a constant.
    Fixed { value: f64 },
    /// α ~ Gamma(shape, rate) with a variational Gamma factor.
    Learned { shape: f64, rate: f64 },
}

impl Default for AlphaMode {
    fn default() -> Self {
        AlphaMode::Learned {
            shape: 1.0,
            rate: 1.0,
        }
    }
}

/// Treatment of the subject-invariant noise component of each block pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    /// Per-(state, block pair) parameters with their own variational factor
    /// under the same base measure as the informative component.
    #[default]
    Learned,
    /// Constants `noise_mean` / `noise_var` (continuous) or `noise_prob`
    /// (binary).
    Fixed,
}

fn default_truncation() -> usize {
    20
}
fn default_lambda() -> f64 {
    1.0
}
fn default_ten() -> f64 {
    10.0
}
fn default_one() -> f64 {
    1.0
}
fn default_half() -> f64 {
    0.5
}
fn default_max_iter() -> usize {
    500
}
fn default_tol() -> f64 {
    1e-6
}
fn default_restarts() -> usize {
    10
}
fn default_warmup() -> usize {
    10
}
fn default_true() -> bool {
    true
}
fn default_family() -> Family {
    Family::Continuous
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub blocks_per_state: Vec<usize>,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "default_family")]
    pub likelihood_family: Family,
    /// NIG base measure NIG(0, λ, α₁/2, β₁/2).
    #[serde(default = "default_lambda")]
    pub nig_lambda: f64,
    #[serde(default = "default_ten")]
    pub nig_a: f64,
    #[serde(default = "default_ten")]
    pub nig_b: f64,
    /// Beta(α₀, β₀) base measure for the binary family.
    #[serde(default = "default_one")]
    pub beta_a0: f64,
    #[serde(default = "default_one")]
    pub beta_b0: f64,
    /// Dirichlet prior on block proportions, one vector per state. Empty
    /// means a flat prior.
    #[serde(default)]
    pub dir_phi: Vec<Vec<f64>>,
    #[serde(default = "default_half")]
    pub gamma_prior_prob: f64,
    #[serde(default)]
    pub alpha_mode: AlphaMode,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default)]
    pub noise_mean: f64,
    /// Fixed-noise variance; `None` resolves to twice the pooled edge
    /// variance of the data.
    #[serde(default)]
    pub noise_var: Option<f64>,
    #[serde(default = "default_half")]
    pub noise_prob: f64,
    /// Sweeps during which the selection indicators stay at their
    /// initial value so that subject clusters can form first.
    #[serde(default = "default_warmup")]
    pub gamma_warmup: usize,
    /// After convergence, try to refill empty node blocks by splitting an
    /// occupied one; a split is kept only when it raises the ELBO.
    #[serde(default = "default_true")]
    pub block_repair: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_restarts")]
    pub n_restarts: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(blocks_per_state: Vec<usize>) -> Self {
        Self {
            blocks_per_state,
            truncation: default_truncation(),
            likelihood_family: Family::Continuous,
            nig_lambda: 1.0,
            nig_a: 10.0,
            nig_b: 10.0,
            beta_a0: 1.0,
            beta_b0: 1.0,
            dir_phi: Vec::new(),
            gamma_prior_prob: 0.5,
            alpha_mode: AlphaMode::default(),
            noise_mode: NoiseMode::default(),
            noise_mean: 0.0,
            noise_var: None,
            noise_prob: 0.5,
            gamma_warmup: default_warmup(),
            block_repair: true,
            max_iter: default_max_iter(),
            tol: default_tol(),
            n_restarts: default_restarts(),
            seed: 0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.blocks_per_state.len()
    }

    /// φ_m, flat when not configured.
    pub fn phi(&self, m: usize) -> Vec<f64> {
        match self.dir_phi.get(m) {
            Some(p) => p.clone(),
            None => vec![1.0; self.blocks_per_state[m]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.blocks_per_state.is_empty() {
            return bad("blocks_per_state must name at least one state".into());
        }
        if self.blocks_per_state.contains(&0) {
            return bad(format!("every state needs at least one block: {:?}", self.blocks_per_state));
        }
        if self.truncation < 2 {
            return bad(format!("truncation must be at least 2, got {}", self.truncation));
        }
        let positive = [
            ("nig_lambda", self.nig_lambda),
            ("nig_a", self.nig_a),
            ("nig_b", self.nig_b),
            ("beta_a0", self.beta_a0),
            ("beta_b0", self.beta_b0),
            ("tol", self.tol),
        ];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        for (name, p) in [("gamma_prior_prob", self.gamma_prior_prob), ("noise_prob", self.noise_prob)] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {p}"));
            }
        }
        if !self.noise_mean.is_finite() {
            return bad("noise_mean must be finite".into());
        }
        if let Some(v) = self.noise_var {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("noise_var must be positive, got {v}"));
            }
        }
        match self.alpha_mode {
            AlphaMode::Fixed { value } if !(value.is_finite() && value > 0.0) => {
                return bad(format!("fixed alpha must be positive, got {value}"));
            }
            AlphaMode::Learned { shape, rate } if !(shape > 0.0 && rate > 0.0) => {
                return bad(format!("alpha prior must be positive, got shape {shape} rate {rate}"));
            }
            _ => {}
        }
        if !self.dir_phi.is_empty() {
            if self.dir_phi.len() != self.n_states() {
                return bad(format!(
                    "dir_phi has {} states, blocks_per_state has {}",
                    self.dir_phi.len(),
                    self.n_states()
                ));
            }
            for (m, phi) in self.dir_phi.iter().enumerate() {
                if phi.len() != self.blocks_per_state[m] || phi.iter().any(|&x| x.is_nan() || x <= 0.0) {
                    return bad(format!("dir_phi for state {m} must hold {} positive values", self.blocks_per_state[m]));
                }
            }
        }
        if self.max_iter == 0 || self.n_restarts == 0 {
            return bad("max_iter and n_restarts must be positive".into());
        }
        Ok(())
    }

    /// Validates against a tensor and fills data-dependent defaults.
    pub fn resolve(&self, tensor: &ConnectivityTensor) -> Result<Self> {
        self.validate()?;
        if self.n_states() != tensor.n_states() {
            return Err(Error::Config(format!(
                "blocks given for {} states but the data has {} states",
                self.n_states(),
                tensor.n_states()
            )));
        }
        if tensor.n_nodes() < 2 {
            return Err(Error::Config("at least two nodes are required".into()));
        }
        let mut out = self.clone();
        out.likelihood_family = tensor.family();
        if out.dir_phi.is_empty() {
            out.dir_phi = out.blocks_per_state.iter().map(|&s| vec![1.0; s]).collect();
        }
        if out.noise_var.is_none() {
            let pooled = tensor.pooled_edge_variance();
            out.noise_var = Some(if pooled > 0.0 { 2.0 * pooled } else { 1.0 });
        }
        Ok(out)
    }

    /// Fixed-noise variance after resolution.
    pub fn noise_variance(&self) -> f64 {
        self.noise_var.unwrap_or(1.0)
    }
}
