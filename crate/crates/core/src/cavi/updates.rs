//! Closed-form coordinate updates. Each one replaces a single factor with
//! the maximiser of the ELBO over that factor's family, all others fixed.

use super::elbo::compute_elbo;
use super::moments::{alpha_mean, expected_log_weights, Component, Moments};
use crate::config::{AlphaMode, ModelConfig};
use crate::error::Result;
use crate::par::{self, Exec};
use crate::special::{
    beta_entropy, beta_expected_log_density, beta_expected_logs_unchecked, dirichlet_expected_log_unchecked, expit, logit,
    nig_entropy, nig_expectations_unchecked, nig_expected_log_prior, softmax_in_place, xlogx,
};
use crate::state::{BlockFactors, VariationalState};
use crate::tensor::{BlockSuffStats, ConnectivityTensor, Family, PairIndex};

/// Floor on the NIG rate parameter h.
pub const RATE_FLOOR: f64 = 1e-10;

const ALPHA_INNER_MAX: usize = 1000;
const ALPHA_INNER_TOL: f64 = 1e-14;

/// q(w'_d) for d < D, and q(α) when it is learned.
///
/// With a learned α the stick factors and q(α) depend on each other, so the
/// two closed forms are alternated until E[α] stops moving.
pub fn update_sticks(state: &mut VariationalState, config: &ModelConfig) {
    let d_max = state.truncation;
    let resp = state.responsibilities();
    let mut mass = vec![0.0; d_max];
    for row in resp.chunks(d_max) {
        for (acc, r) in mass.iter_mut().zip(row) {
            *acc += r;
        }
    }
    let mut tail = vec![0.0; d_max];
    for d in (0..d_max - 1).rev() {
        tail[d] = tail[d + 1] + mass[d + 1];
    }
    for _ in 0..ALPHA_INNER_MAX {
        let e_alpha = alpha_mean(state, config);
        for d in 0..d_max - 1 {
            state.e[d] = 1.0 + mass[d];
            state.f[d] = e_alpha + tail[d];
        }
        let AlphaMode::Learned { shape, rate } = config.alpha_mode else {
            break;
        };
        let log_rest: f64 = state
            .e
            .iter()
            .zip(&state.f)
            .map(|(&e, &f)| beta_expected_logs_unchecked(e, f).1)
            .sum();
        state.alpha_shape = shape + (d_max - 1) as f64;
        state.alpha_rate = rate - log_rest;
        let updated = state.alpha_shape / state.alpha_rate;
        if (updated - e_alpha).abs() <= ALPHA_INNER_TOL * e_alpha {
            break;
        }
    }
}

/// Weighted conjugate update of a set of Normal-Inverse-Gamma factors:
/// prior NIG(0, λ, α₁/2, β₁/2) and data weight / sum / sum of squares.
fn nig_posterior(config: &ModelConfig, weight: f64, sum: f64, sum_sq: f64) -> (f64, f64, f64, f64) {
    let r = config.nig_lambda + weight;
    let u = sum / r;
    let g = config.nig_a + weight;
    let h = (config.nig_b + sum_sq - r * u * u).max(RATE_FLOOR);
    (u, r, g, h)
}

/// Per-cluster weighted statistics Σ_i r_id (n̂, Â, Q̂) for one state and pair.
fn cluster_sums(resp: &[f64], d_max: usize, stats: &BlockSuffStats, m: usize, p: usize) -> Vec<[f64; 3]> {
    let n_subjects = resp.len() / d_max;
    let mut out = vec![[0.0; 3]; d_max];
    for i in 0..n_subjects {
        let (n, sum, sq) = stats.get(i, m, p);
        for (d, acc) in out.iter_mut().enumerate() {
            let r = resp[i * d_max + d];
            acc[0] += r * n;
            acc[1] += r * sum;
            acc[2] += r * sq;
        }
    }
    out
}

/// q(μ, σ²) of every informative (cluster, state, pair), continuous family.
pub fn update_theta1_normal(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats) {
    let resp = state.responsibilities();
    let d_max = state.truncation;
    for m in 0..state.n_states() {
        let n_pairs = stats.n_pairs(m);
        for p in 0..n_pairs {
            let q = expit(state.zeta[m][p]);
            for (d, [w, sum, sq]) in cluster_sums(&resp, d_max, stats, m, p).into_iter().enumerate() {
                let (u, r, g, h) = nig_posterior(config, q * w, q * sum, q * sq);
                let x = d * n_pairs + p;
                state.u[m][x] = u;
                state.r[m][x] = r;
                state.g[m][x] = g;
                state.h[m][x] = h;
            }
        }
    }
}

/// q(ρ) of every informative (cluster, state, pair), binary family.
pub fn update_theta1_bernoulli(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats) {
    let resp = state.responsibilities();
    let d_max = state.truncation;
    for m in 0..state.n_states() {
        let n_pairs = stats.n_pairs(m);
        for p in 0..n_pairs {
            let q = expit(state.zeta[m][p]);
            for (d, [w, sum, _]) in cluster_sums(&resp, d_max, stats, m, p).into_iter().enumerate() {
                let x = d * n_pairs + p;
                state.j[m][x] = config.beta_a0 + q * sum;
                state.k[m][x] = config.beta_b0 + q * (w - sum);
            }
        }
    }
}

/// Informative-component update for whichever family the config names.
pub fn update_theta1(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats) {
    match config.likelihood_family {
        Family::Continuous => update_theta1_normal(state, config, stats),
        Family::Binary => update_theta1_bernoulli(state, config, stats),
    }
}

/// q(θ⁰) of every (state, pair) when the noise component is learned; every
/// subject contributes with weight 1 − q(γ = 1). No-op for fixed noise.
pub fn update_noise(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats) {
    let Some(mut noise) = state.noise.take() else {
        return;
    };
    for m in 0..state.n_states() {
        let n_pairs = stats.n_pairs(m);
        for p in 0..n_pairs {
            let q0 = expit(-state.zeta[m][p]);
            let (mut w, mut sum, mut sq) = (0.0, 0.0, 0.0);
            for i in 0..state.n_subjects {
                let (n, a, a2) = stats.get(i, m, p);
                w += n;
                sum += a;
                sq += a2;
            }
            write_noise(&mut noise, config, m, p, q0 * w, q0 * sum, q0 * sq);
        }
    }
    state.noise = Some(noise);
}

fn write_noise(noise: &mut BlockFactors, config: &ModelConfig, m: usize, p: usize, w: f64, sum: f64, sq: f64) {
    match config.likelihood_family {
        Family::Continuous => {
            let (u, r, g, h) = nig_posterior(config, w, sum, sq);
            noise.u[m][p] = u;
            noise.r[m][p] = r;
            noise.g[m][p] = g;
            noise.h[m][p] = h;
        }
        Family::Binary => {
            noise.j[m][p] = config.beta_a0 + sum;
            noise.k[m][p] = config.beta_b0 + (w - sum);
        }
    }
}

/// Selection logits: ζ = logit(π) + Σ_i [Σ_d r_id Ê1 − Ê0].
pub fn update_gamma(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats) {
    let moments = Moments::new(state, config);
    let resp = state.responsibilities();
    let d_max = state.truncation;
    let prior = logit(config.gamma_prior_prob);
    for m in 0..state.n_states() {
        let n_pairs = stats.n_pairs(m);
        for p in 0..n_pairs {
            let mut z = prior;
            for i in 0..state.n_subjects {
                let (n, sum, sq) = stats.get(i, m, p);
                let mut informative = 0.0;
                for d in 0..d_max {
                    informative += resp[i * d_max + d] * moments.informative[m][d * n_pairs + p].block_loglik(n, sum, sq);
                }
                z += informative - moments.noise[m][p].block_loglik(n, sum, sq);
            }
            state.zeta[m][p] = z;
        }
    }
}

/// Cluster logits: b_id = E[ln w_d] + Σ_m Σ_p q(γ_mp = 1) Ê1_idmp.
pub fn update_clusters(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats, exec: Exec) {
    let moments = Moments::new(state, config);
    let log_w = expected_log_weights(state);
    let d_max = state.truncation;
    let q: Vec<Vec<f64>> = state.zeta.iter().map(|z| z.iter().map(|&x| expit(x)).collect()).collect();
    let rows = par::map_range(exec, state.n_subjects, |i| {
        let mut row = log_w.clone();
        for (m, qm) in q.iter().enumerate() {
            let n_pairs = qm.len();
            for (p, &qp) in qm.iter().enumerate() {
                let (n, sum, sq) = stats.get(i, m, p);
                for (d, b) in row.iter_mut().enumerate() {
                    *b += qp * moments.informative[m][d * n_pairs + p].block_loglik(n, sum, sq);
                }
            }
        }
        row
    });
    for (i, row) in rows.into_iter().enumerate() {
        state.b[i * d_max..(i + 1) * d_max].copy_from_slice(&row);
    }
}

/// q(τ_m): t_ms = φ_ms + Σ_v η_mvs.
pub fn update_tau(state: &mut VariationalState, config: &ModelConfig) {
    for m in 0..state.n_states() {
        let s = state.n_blocks(m);
        let mut t = config.phi(m);
        for row in state.eta[m].chunks(s) {
            for (acc, x) in t.iter_mut().zip(row) {
                *acc += x;
            }
        }
        state.t[m] = t;
    }
}

/// Expected mixture log-likelihood of every node pair under every block
/// pair for one state: `L[v][w][p]`, summed over subjects. It does not
/// depend on the node responsibilities, so one table serves a whole sweep
/// of node updates.
#[derive(Debug, Clone)]
pub struct EdgeTable {
    n_nodes: usize,
    pairs: PairIndex,
    values: Vec<f64>,
}

impl EdgeTable {
    pub fn build(
        state: &VariationalState,
        config: &ModelConfig,
        tensor: &ConnectivityTensor,
        m: usize,
        exec: Exec,
    ) -> Self {
        let moments = Moments::new(state, config);
        Self::with_moments(state, tensor, m, &moments, &state.responsibilities(), exec)
    }

    pub(crate) fn with_moments(
        state: &VariationalState,
        tensor: &ConnectivityTensor,
        m: usize,
        moments: &Moments,
        resp: &[f64],
        exec: Exec,
    ) -> Self {
        let v_max = tensor.n_nodes();
        let pairs = PairIndex::new(state.n_blocks(m));
        let n_pairs = pairs.len();
        let d_max = state.truncation;
        let informative: Vec<[f64; 3]> = moments.informative[m].iter().map(|c| c.coefficients()).collect();
        let noise: Vec<[f64; 3]> = moments.noise[m].iter().map(|c| c.coefficients()).collect();

        // Per-subject coefficients of the pointwise mixture log-density,
        // laid out [i][c][p].
        let mut coef = vec![0.0; state.n_subjects * 3 * n_pairs];
        let mut constant = vec![0.0; n_pairs];
        for i in 0..state.n_subjects {
            let base = i * 3 * n_pairs;
            for p in 0..n_pairs {
                let q = expit(state.zeta[m][p]);
                let q0 = expit(-state.zeta[m][p]);
                let mut k = [0.0; 3];
                for d in 0..d_max {
                    let r = resp[i * d_max + d];
                    let c = informative[d * n_pairs + p];
                    for x in 0..3 {
                        k[x] += r * c[x];
                    }
                }
                for x in 0..3 {
                    coef[base + x * n_pairs + p] = q * k[x] + q0 * noise[p][x];
                }
                constant[p] += coef[base + p];
            }
        }
        let squares = tensor.family() == Family::Continuous;

        let row_len = v_max * n_pairs;
        let mut values = vec![0.0; v_max * row_len];
        par::for_each_chunk_mut(exec, &mut values, row_len, |v, row| {
            for i in 0..state.n_subjects {
                let a_row = &tensor.slice(i, m)[v * v_max..(v + 1) * v_max];
                let base = i * 3 * n_pairs;
                let k1 = &coef[base + n_pairs..base + 2 * n_pairs];
                let k2 = &coef[base + 2 * n_pairs..base + 3 * n_pairs];
                for w in v + 1..v_max {
                    let a = a_row[w];
                    let out = &mut row[w * n_pairs..(w + 1) * n_pairs];
                    if squares {
                        let a2 = a * a;
                        for p in 0..n_pairs {
                            out[p] += k1[p] * a + k2[p] * a2;
                        }
                    } else {
                        for p in 0..n_pairs {
                            out[p] += k1[p] * a;
                        }
                    }
                }
            }
            for w in v + 1..v_max {
                for p in 0..n_pairs {
                    row[w * n_pairs + p] += constant[p];
                }
            }
        });
        for v in 0..v_max {
            for w in 0..v {
                for p in 0..n_pairs {
                    values[(v * v_max + w) * n_pairs + p] = values[(w * v_max + v) * n_pairs + p];
                }
            }
        }
        Self {
            n_nodes: v_max,
            pairs,
            values,
        }
    }

    /// L for node pair (v, w) under block pair p.
    pub fn get(&self, v: usize, w: usize, p: usize) -> f64 {
        self.values[(v * self.n_nodes + w) * self.pairs.len() + p]
    }

    /// Unnormalised log responsibilities of node `v`.
    pub fn node_scores(&self, eta: &[f64], v: usize, e_log_tau: &[f64]) -> Vec<f64> {
        let s = self.pairs.n_blocks();
        let n_pairs = self.pairs.len();
        let mut scores = e_log_tau.to_vec();
        for w in 0..self.n_nodes {
            if w == v {
                continue;
            }
            let l = &self.values[(v * self.n_nodes + w) * n_pairs..(v * self.n_nodes + w + 1) * n_pairs];
            let e = &eta[w * s..(w + 1) * s];
            for a in 0..s {
                let mut x = 0.0;
                for b in 0..s {
                    x += e[b] * l[self.pairs.index(a, b)];
                }
                scores[a] += x;
            }
        }
        scores
    }
}

/// Re-optimises the responsibility row of node `v` in state `m`.
pub fn update_node_row(state: &mut VariationalState, table: &EdgeTable, m: usize, v: usize) {
    let s = state.n_blocks(m);
    let e_log_tau = dirichlet_expected_log_unchecked(&state.t[m]);
    let mut scores = table.node_scores(&state.eta[m], v, &e_log_tau);
    softmax_in_place(&mut scores);
    state.eta[m][v * s..(v + 1) * s].copy_from_slice(&scores);
}

/// Sequential node updates, in node order, for every state.
pub fn update_nodes(state: &mut VariationalState, config: &ModelConfig, tensor: &ConnectivityTensor, exec: Exec) {
    let moments = Moments::new(state, config);
    let resp = state.responsibilities();
    for m in 0..state.n_states() {
        if state.n_blocks(m) == 1 {
            continue;
        }
        let table = EdgeTable::with_moments(state, tensor, m, &moments, &resp, exec);
        for v in 0..tensor.n_nodes() {
            update_node_row(state, &table, m, v);
        }
    }
}

/// Parameters of one block-pair factor: (u, r, g, h) for NIG or (j, k, ·, ·)
/// for Beta.
type FactorParams = [f64; 4];

/// Everything attached to a single (state, pair): ζ, the informative
/// factor of every cluster and the noise factor.
#[derive(Debug, Clone)]
struct PairFactors {
    zeta: f64,
    informative: Vec<FactorParams>,
    noise: Option<FactorParams>,
}

struct PairProblem<'a> {
    config: &'a ModelConfig,
    /// Σ_i r_id (n̂, Â, Q̂) per cluster.
    cluster: Vec<[f64; 3]>,
    /// Σ_i (n̂, Â, Q̂).
    total: [f64; 3],
    fixed_noise: Option<Component>,
}

impl PairProblem<'_> {
    fn posterior(&self, weight: f64, [n, sum, sq]: [f64; 3]) -> FactorParams {
        match self.config.likelihood_family {
            Family::Continuous => {
                let (u, r, g, h) = nig_posterior(self.config, weight * n, weight * sum, weight * sq);
                [u, r, g, h]
            }
            Family::Binary => [
                self.config.beta_a0 + weight * sum,
                self.config.beta_b0 + weight * (n - sum),
                0.0,
                0.0,
            ],
        }
    }

    fn component(&self, x: &FactorParams) -> Component {
        match self.config.likelihood_family {
            Family::Continuous => Component::Normal(nig_expectations_unchecked(x[0], x[1], x[2], x[3])),
            Family::Binary => {
                let (e_log, e_log1m) = beta_expected_logs_unchecked(x[0], x[1]);
                Component::Bernoulli { e_log, e_log1m }
            }
        }
    }

    fn noise_component(&self, f: &PairFactors) -> Component {
        match (&f.noise, self.fixed_noise) {
            (Some(x), _) => self.component(x),
            (None, Some(c)) => c,
            (None, None) => unreachable!("noise is either learned or fixed"),
        }
    }

    /// Prior plus entropy of one factor.
    fn factor_terms(&self, x: &FactorParams) -> f64 {
        let c = self.config;
        match self.component(x) {
            Component::Normal(m) => nig_expected_log_prior(&m, c.nig_lambda, c.nig_a, c.nig_b) + nig_entropy(x[1], x[2], x[3]),
            Component::Bernoulli { e_log, e_log1m } => {
                beta_expected_log_density(c.beta_a0, c.beta_b0, e_log, e_log1m) + beta_entropy(x[0], x[1])
            }
            Component::FixedNormal { .. } => 0.0,
        }
    }

    /// The (Ê1 summed over clusters, Ê0) totals of the pair.
    fn logliks(&self, f: &PairFactors) -> (f64, f64) {
        let informative = f
            .informative
            .iter()
            .zip(&self.cluster)
            .map(|(x, &[n, sum, sq])| self.component(x).block_loglik(n, sum, sq))
            .sum();
        let [n, sum, sq] = self.total;
        (informative, self.noise_component(f).block_loglik(n, sum, sq))
    }

    /// Every ELBO term that involves this pair's factors.
    fn local_elbo(&self, f: &PairFactors) -> f64 {
        let (e1, e0) = self.logliks(f);
        let (q, q0) = (expit(f.zeta), expit(-f.zeta));
        let pi = self.config.gamma_prior_prob;
        let mut total = q * e1 + q0 * e0 + q * pi.ln() + q0 * (1.0 - pi).ln() - xlogx(q) - xlogx(q0);
        total += f.informative.iter().map(|x| self.factor_terms(x)).sum::<f64>();
        if let Some(x) = &f.noise {
            total += self.factor_terms(x);
        }
        total
    }

    /// Alternates the pair's three updates from q(γ = 1) = `q_start`.
    fn ascend(&self, q_start: f64, learned_noise: bool) -> PairFactors {
        let mut q = q_start;
        let mut f = PairFactors {
            zeta: logit(q_start.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)),
            informative: Vec::new(),
            noise: None,
        };
        for _ in 0..PAIR_ASCENT_MAX {
            f.informative = self.cluster.iter().map(|&s| self.posterior(q, s)).collect();
            f.noise = learned_noise.then(|| self.posterior(1.0 - q, self.total));
            let (e1, e0) = self.logliks(&f);
            f.zeta = logit(self.config.gamma_prior_prob) + e1 - e0;
            let next = expit(f.zeta);
            let done = (next - q).abs() <= 1e-12;
            q = next;
            if done {
                break;
            }
        }
        f
    }
}

const PAIR_ASCENT_MAX: usize = 200;

/// Pair-local search over the selection indicator.
///
/// The per-factor updates of ζ, Θ¹ and Θ⁰ can lock a pair into whichever
/// component wins the first comparison: once q(γ) saturates, the losing
/// component's factor sees no data and falls back to its prior. For each
/// (state, pair) this step re-optimises the three factors jointly from
/// q(γ = 1) = 0 and from q(γ = 1) = 1 and keeps whichever of the two, or
/// the current factors, has the largest ELBO. It never lowers the ELBO.
pub fn refine_selection(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats) {
    let resp = state.responsibilities();
    let d_max = state.truncation;
    let learned_noise = state.noise.is_some();
    let moments = if learned_noise { None } else { Some(Moments::new(state, config)) };
    for m in 0..state.n_states() {
        let n_pairs = stats.n_pairs(m);
        for p in 0..n_pairs {
            let cluster = cluster_sums(&resp, d_max, stats, m, p);
            let mut total = [0.0; 3];
            for i in 0..state.n_subjects {
                let (n, sum, sq) = stats.get(i, m, p);
                total[0] += n;
                total[1] += sum;
                total[2] += sq;
            }
            let problem = PairProblem {
                config,
                cluster,
                total,
                fixed_noise: moments.as_ref().map(|mo| mo.noise[m][p]),
            };
            let read = |params: [&Vec<Vec<f64>>; 4], x: usize| -> FactorParams {
                std::array::from_fn(|c| params[c].get(m).map_or(0.0, |v| v[x]))
            };
            let slab = match config.likelihood_family {
                Family::Continuous => [&state.u, &state.r, &state.g, &state.h],
                Family::Binary => [&state.j, &state.k, &state.j, &state.k],
            };
            let current = PairFactors {
                zeta: state.zeta[m][p],
                informative: (0..d_max).map(|d| read(slab, d * n_pairs + p)).collect(),
                noise: state.noise.as_ref().map(|nf| {
                    let f = match config.likelihood_family {
                        Family::Continuous => [&nf.u, &nf.r, &nf.g, &nf.h],
                        Family::Binary => [&nf.j, &nf.k, &nf.j, &nf.k],
                    };
                    read(f, p)
                }),
            };
            let mut best = problem.local_elbo(&current);
            let mut chosen = None;
            for q_start in [0.0, 1.0] {
                let candidate = problem.ascend(q_start, learned_noise);
                let value = problem.local_elbo(&candidate);
                if value > best {
                    best = value;
                    chosen = Some(candidate);
                }
            }
            let Some(f) = chosen else { continue };
            state.zeta[m][p] = f.zeta;
            for (d, x) in f.informative.iter().enumerate() {
                let i = d * n_pairs + p;
                match config.likelihood_family {
                    Family::Continuous => {
                        [state.u[m][i], state.r[m][i], state.g[m][i], state.h[m][i]] = *x;
                    }
                    Family::Binary => {
                        state.j[m][i] = x[0];
                        state.k[m][i] = x[1];
                    }
                }
            }
            if let (Some(nf), Some(x)) = (state.noise.as_mut(), f.noise) {
                match config.likelihood_family {
                    Family::Continuous => [nf.u[m][p], nf.r[m][p], nf.g[m][p], nf.h[m][p]] = x,
                    Family::Binary => {
                        nf.j[m][p] = x[0];
                        nf.k[m][p] = x[1];
                    }
                }
            }
        }
    }
}

/// Relabels subject clusters in order of decreasing expected size, then
/// refreshes the sticks. Stick-breaking weights are not exchangeable, so a
/// solution whose large clusters sit on late sticks can be improved by a
/// pure permutation that coordinate updates cannot reach. The move is kept
/// only when it raises the ELBO; returns whether it was kept.
pub fn reorder_clusters(state: &mut VariationalState, config: &ModelConfig, stats: &BlockSuffStats) -> Result<bool> {
    let d_max = state.truncation;
    let resp = state.responsibilities();
    let mut mass = vec![0.0; d_max];
    for row in resp.chunks(d_max) {
        mass.iter_mut().zip(row).for_each(|(a, r)| *a += r);
    }
    let mut order: Vec<usize> = (0..d_max).collect();
    order.sort_by(|&a, &b| mass[b].total_cmp(&mass[a]).then(a.cmp(&b)));
    if order.iter().enumerate().all(|(k, &d)| k == d) {
        return Ok(false);
    }
    let before = compute_elbo(state, config, stats)?.total();
    let mut next = state.clone();
    for (row, old) in next.b.chunks_mut(d_max).zip(state.b.chunks(d_max)) {
        for (k, &d) in order.iter().enumerate() {
            row[k] = old[d];
        }
    }
    for m in 0..state.n_states() {
        let n_pairs = state.n_pairs(m);
        let fields = [
            (&mut next.u, &state.u),
            (&mut next.r, &state.r),
            (&mut next.g, &state.g),
            (&mut next.h, &state.h),
            (&mut next.j, &state.j),
            (&mut next.k, &state.k),
        ];
        for (dst, src) in fields {
            if src.is_empty() {
                continue;
            }
            for (k, &d) in order.iter().enumerate() {
                dst[m][k * n_pairs..(k + 1) * n_pairs].copy_from_slice(&src[m][d * n_pairs..(d + 1) * n_pairs]);
            }
        }
    }
    update_sticks(&mut next, config);
    let after = compute_elbo(&next, config, stats)?.total();
    if after > before {
        *state = next;
        return Ok(true);
    }
    Ok(false)
}
