//! Expected log-densities of the block-pair components under q.

use crate::config::{AlphaMode, ModelConfig};
use crate::special::{
    beta_expected_logs_unchecked, digamma_unchecked, fixed_normal_block_loglik, fixed_normal_coefficients,
    nig_expectations_unchecked, NigExpectations,
};
use crate::state::{BlockFactors, VariationalState};
use crate::tensor::{BlockSuffStats, Family};

/// One block-pair component as seen by the rest of the model: either a
/// variational factor summarised by its moments, or fixed constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    Normal(NigExpectations),
    Bernoulli { e_log: f64, e_log1m: f64 },
    FixedNormal { mean: f64, var: f64 },
}

impl Component {
    /// Expected log-likelihood of a block with expected count `n`, sum `sum`
    /// and sum of squares `sum_sq`.
    #[inline]
    pub fn block_loglik(&self, n: f64, sum: f64, sum_sq: f64) -> f64 {
        match *self {
            Component::Normal(m) => m.block_loglik(n, sum, sum_sq),
            Component::Bernoulli { e_log, e_log1m } => sum * e_log + (n - sum) * e_log1m,
            Component::FixedNormal { mean, var } => fixed_normal_block_loglik(mean, var, n, sum, sum_sq),
        }
    }

    /// Pointwise expected log-density c0 + c1·a + c2·a².
    #[inline]
    pub fn coefficients(&self) -> [f64; 3] {
        match *self {
            Component::Normal(m) => m.pointwise_coefficients(),
            Component::Bernoulli { e_log, e_log1m } => [e_log1m, e_log - e_log1m, 0.0],
            Component::FixedNormal { mean, var } => fixed_normal_coefficients(mean, var),
        }
    }
}

type Params<'a> = [&'a [Vec<f64>]; 6];

fn components(family: Family, [u, r, g, h, j, k]: Params<'_>, m: usize) -> Vec<Component> {
    match family {
        Family::Continuous => (0..u[m].len())
            .map(|x| Component::Normal(nig_expectations_unchecked(u[m][x], r[m][x], g[m][x], h[m][x])))
            .collect(),
        Family::Binary => (0..j[m].len())
            .map(|x| {
                let (e_log, e_log1m) = beta_expected_logs_unchecked(j[m][x], k[m][x]);
                Component::Bernoulli { e_log, e_log1m }
            })
            .collect(),
    }
}

pub(crate) fn informative_params(s: &VariationalState) -> Params<'_> {
    [&s.u, &s.r, &s.g, &s.h, &s.j, &s.k]
}

pub(crate) fn noise_params(f: &BlockFactors) -> Params<'_> {
    [&f.u, &f.r, &f.g, &f.h, &f.j, &f.k]
}

/// Component moments for every (state, cluster, pair) plus the noise
/// component of every (state, pair).
#[derive(Debug, Clone)]
pub struct Moments {
    /// `[m][d * P_m + p]`
    pub informative: Vec<Vec<Component>>,
    /// `[m][p]`
    pub noise: Vec<Vec<Component>>,
}

impl Moments {
    pub fn new(state: &VariationalState, config: &ModelConfig) -> Self {
        let family = config.likelihood_family;
        let informative = (0..state.n_states())
            .map(|m| components(family, informative_params(state), m))
            .collect();
        let noise = (0..state.n_states())
            .map(|m| match &state.noise {
                Some(f) => components(family, noise_params(f), m),
                None => {
                    let fixed = match family {
                        Family::Continuous => Component::FixedNormal {
                            mean: config.noise_mean,
                            var: config.noise_variance(),
                        },
                        Family::Binary => Component::Bernoulli {
                            e_log: config.noise_prob.ln(),
                            e_log1m: (1.0 - config.noise_prob).ln(),
                        },
                    };
                    vec![fixed; state.n_pairs(m)]
                }
            })
            .collect();
        Self { informative, noise }
    }
}

/// Expected log-likelihoods of one block pair for one subject: under the
/// informative component of cluster `d` and under the noise component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockLoglik {
    pub informative: f64,
    pub noise: f64,
}

/// E_q[log f(A_{im,ss'} | θ)] for subject `i`, cluster `d`, state `m` and
/// blocks (s, s').
#[allow(clippy::too_many_arguments)]
pub fn expected_block_loglik(
    state: &VariationalState,
    config: &ModelConfig,
    stats: &BlockSuffStats,
    i: usize,
    d: usize,
    m: usize,
    s: usize,
    s_prime: usize,
) -> BlockLoglik {
    let moments = Moments::new(state, config);
    let p = stats.pairs[m].index(s, s_prime);
    let (n, sum, sq) = stats.get(i, m, p);
    let n_pairs = stats.n_pairs(m);
    BlockLoglik {
        informative: moments.informative[m][d * n_pairs + p].block_loglik(n, sum, sq),
        noise: moments.noise[m][p].block_loglik(n, sum, sq),
    }
}

/// E_q[α].
pub(crate) fn alpha_mean(state: &VariationalState, config: &ModelConfig) -> f64 {
    match config.alpha_mode {
        AlphaMode::Fixed { value } => value,
        AlphaMode::Learned { .. } => state.alpha_shape / state.alpha_rate,
    }
}

/// E_q[ln α].
pub(crate) fn alpha_log_mean(state: &VariationalState, config: &ModelConfig) -> f64 {
    match config.alpha_mode {
        AlphaMode::Fixed { value } => value.ln(),
        AlphaMode::Learned { .. } => digamma_unchecked(state.alpha_shape) - state.alpha_rate.ln(),
    }
}

/// (E[ln w'_d], E[ln(1 − w'_d)]) for d < D.
pub(crate) fn stick_logs(state: &VariationalState) -> Vec<(f64, f64)> {
    state
        .e
        .iter()
        .zip(&state.f)
        .map(|(&e, &f)| beta_expected_logs_unchecked(e, f))
        .collect()
}

/// E[ln w_d] = E[ln w'_d] + Σ_{l<d} E[ln(1 − w'_l)], with w'_D ≡ 1.
pub(crate) fn expected_log_weights(state: &VariationalState) -> Vec<f64> {
    let logs = stick_logs(state);
    let mut out = Vec::with_capacity(state.truncation);
    let mut carry = 0.0;
    for &(el, el1m) in &logs {
        out.push(el + carry);
        carry += el1m;
    }
    out.push(carry);
    out
}
