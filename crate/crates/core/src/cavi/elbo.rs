//! Closed-form evidence lower bound.
//!
//! The bound is kept as three sums so that model selection can reuse the
//! pieces: the expected data log-likelihood E_q[log p(A | Ξ)], the expected
//! log prior E_q[log p(Ξ)] and the entropy −E_q[log q(Ξ)].

use serde::{Deserialize, Serialize};

use super::moments::{
    alpha_log_mean, alpha_mean, expected_log_weights, informative_params, noise_params, stick_logs, Component, Moments,
};
use crate::config::{AlphaMode, ModelConfig};
use crate::error::{Error, Result};
use crate::special::{
    beta_entropy, beta_expected_log_density, dirichlet_entropy, dirichlet_expected_log_density,
    dirichlet_expected_log_unchecked, expit, gamma_entropy, ln_gamma_unchecked, nig_entropy, nig_expected_log_prior,
    xlogx,
};
use crate::state::VariationalState;
use crate::tensor::BlockSuffStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    /// E_q[log p(A | Ξ)]
    pub data: f64,
    /// E_q[log p(Ξ)]
    pub log_prior: f64,
    /// −E_q[log q(Ξ)]
    pub entropy: f64,
}

impl ElboTerms {
    pub fn total(&self) -> f64 {
        self.data + self.log_prior + self.entropy
    }
}

struct Accumulator {
    terms: ElboTerms,
}

impl Accumulator {
    fn add(&mut self, name: &str, data: f64, log_prior: f64, entropy: f64) -> Result<()> {
        for (part, x) in [("data", data), ("log prior", log_prior), ("entropy", entropy)] {
            if !x.is_finite() {
                return Err(Error::Numerical {
                    term: format!("ELBO {part} term for {name} ({x})"),
                });
            }
        }
        self.terms.data += data;
        self.terms.log_prior += log_prior;
        self.terms.entropy += entropy;
        Ok(())
    }
}

/// Expected data log-likelihood, given precomputed moments and
/// responsibilities.
pub(crate) fn data_term(state: &VariationalState, moments: &Moments, resp: &[f64], stats: &BlockSuffStats) -> f64 {
    let d_max = state.truncation;
    let mut total = 0.0;
    for m in 0..state.n_states() {
        let n_pairs = stats.n_pairs(m);
        for p in 0..n_pairs {
            let q = expit(state.zeta[m][p]);
            let q0 = expit(-state.zeta[m][p]);
            for i in 0..state.n_subjects {
                let (n, sum, sq) = stats.get(i, m, p);
                let mut informative = 0.0;
                for d in 0..d_max {
                    let r = resp[i * d_max + d];
                    if r > 0.0 {
                        informative += r * moments.informative[m][d * n_pairs + p].block_loglik(n, sum, sq);
                    }
                }
                total += q * informative + q0 * moments.noise[m][p].block_loglik(n, sum, sq);
            }
        }
    }
    total
}

fn row(v: &[Vec<f64>], m: usize) -> &[f64] {
    v.get(m).map_or(&[], |x| x.as_slice())
}

fn block_factor_terms(
    acc: &mut Accumulator,
    name: &str,
    config: &ModelConfig,
    components: &[Component],
    params: [&[f64]; 6],
) -> Result<()> {
    let [_, r, g, h, j, k] = params;
    let (mut prior, mut entropy) = (0.0, 0.0);
    for (x, c) in components.iter().enumerate() {
        match *c {
            Component::Normal(mom) => {
                prior += nig_expected_log_prior(&mom, config.nig_lambda, config.nig_a, config.nig_b);
                entropy += nig_entropy(r[x], g[x], h[x]);
            }
            Component::Bernoulli { e_log, e_log1m } => {
                prior += beta_expected_log_density(config.beta_a0, config.beta_b0, e_log, e_log1m);
                entropy += beta_entropy(j[x], k[x]);
            }
            Component::FixedNormal { .. } => {}
        }
    }
    acc.add(name, 0.0, prior, entropy)
}

/// The ELBO of `state`, split into data, prior and entropy sums.
pub fn compute_elbo(state: &VariationalState, config: &ModelConfig, stats: &BlockSuffStats) -> Result<ElboTerms> {
    let moments = Moments::new(state, config);
    let resp = state.responsibilities();
    elbo_with(state, config, stats, &moments, &resp)
}

pub(crate) fn elbo_with(
    state: &VariationalState,
    config: &ModelConfig,
    stats: &BlockSuffStats,
    moments: &Moments,
    resp: &[f64],
) -> Result<ElboTerms> {
    let mut acc = Accumulator {
        terms: ElboTerms {
            data: 0.0,
            log_prior: 0.0,
            entropy: 0.0,
        },
    };
    acc.add("data", data_term(state, moments, resp, stats), 0.0, 0.0)?;

    for m in 0..state.n_states() {
        let e_log_tau = dirichlet_expected_log_unchecked(&state.t[m]);
        let phi = config.phi(m);
        acc.add(
            "block proportions",
            0.0,
            dirichlet_expected_log_density(&phi, &e_log_tau),
            dirichlet_entropy(&state.t[m], &e_log_tau),
        )?;
        let s = state.n_blocks(m);
        let (mut prior, mut entropy) = (0.0, 0.0);
        for row in state.eta[m].chunks(s) {
            for (x, el) in row.iter().zip(&e_log_tau) {
                prior += x * el;
                entropy -= xlogx(*x);
            }
        }
        acc.add("node memberships", 0.0, prior, entropy)?;

        let (mut prior, mut entropy) = (0.0, 0.0);
        let (ln_pi, ln_1m_pi) = (config.gamma_prior_prob.ln(), (1.0 - config.gamma_prior_prob).ln());
        for &z in &state.zeta[m] {
            let (q, q0) = (expit(z), expit(-z));
            prior += q * ln_pi + q0 * ln_1m_pi;
            entropy -= xlogx(q) + xlogx(q0);
        }
        acc.add("selection indicators", 0.0, prior, entropy)?;

        let [u, r, g, h, j, k] = informative_params(state);
        
        block_factor_terms(
            &mut acc,
            "informative block parameters",
            config,
            &moments.informative[m],
            [u, r, g, h, j, k].map(|v| row(v, m)),
        )?;
        if let Some(noise) = &state.noise {
            let [u, r, g, h, j, k] = noise_params(noise);
            block_factor_terms(
                &mut acc,
                "noise block parameters",
                config,
                &moments.noise[m],
                [u, r, g, h, j, k].map(|v| row(v, m)),
            )?;
        }
    }

    let e_alpha = alpha_mean(state, config);
    let e_log_alpha = alpha_log_mean(state, config);
    let (mut prior, mut entropy) = (0.0, 0.0);
    for (x, &(_, el1m)) in stick_logs(state).iter().enumerate() {
        prior += e_log_alpha + (e_alpha - 1.0) * el1m;
        entropy += beta_entropy(state.e[x], state.f[x]);
    }
    acc.add("stick proportions", 0.0, prior, entropy)?;

    if let AlphaMode::Learned { shape, rate } = config.alpha_mode {
        let prior = shape * rate.ln() - ln_gamma_unchecked(shape) + (shape - 1.0) * e_log_alpha - rate * e_alpha;
        acc.add(
            "concentration",
            0.0,
            prior,
            gamma_entropy(state.alpha_shape, state.alpha_rate),
        )?;
    }

    let log_w = expected_log_weights(state);
    let (mut prior, mut entropy) = (0.0, 0.0);
    for row in resp.chunks(state.truncation) {
        for (r, lw) in row.iter().zip(&log_w) {
            prior += r * lw;
            entropy -= xlogx(*r);
        }
    }
    acc.add("cluster memberships", 0.0, prior, entropy)?;
    Ok(acc.terms)
}
