//! Independent oracles shared by the integration suites. Nothing here calls
//! into the code paths it is used to check, apart from the ELBO itself.

#![allow(dead_code)]

use msfc_core::cavi::{compute_elbo, update_clusters, update_gamma, update_node_row, update_noise, update_sticks, update_tau};
use msfc_core::cavi::{update_theta1_bernoulli, update_theta1_normal, EdgeTable};
use msfc_core::sim::GroundTruth;
use msfc_core::{block_suffstats, init_state, AlphaMode, ConnectivityTensor, Exec, Family, ModelConfig, NoiseMode, VariationalState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

// ---------------------------------------------------------------- special

/// Lanczos approximation (g = 7, nine coefficients), accurate to ~1e-15
/// relative for x ≥ 0.5.
pub fn lanczos_ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - lanczos_ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (k, c) in C.iter().enumerate().skip(1) {
        a += c / (x + k as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    lanczos_ln_gamma(a) + lanczos_ln_gamma(b) - lanczos_ln_gamma(a + b)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

// ---------------------------------------------------------------- data

/// Symmetric random tensor with zero diagonal. Continuous entries are
/// normal around a per-(subject, state) offset; binary entries are fair
/// coin flips.
pub fn random_tensor(rng: &mut impl Rng, n: usize, m: usize, v: usize, family: Family) -> ConnectivityTensor {
    let mut values = vec![0.0; n * m * v * v];
    for i in 0..n {
        for s in 0..m {
            let base = (i * m + s) * v * v;
            let shift = rng.random_range(-3.0..3.0);
            let noise = Normal::new(shift, 1.5).unwrap();
            for a in 0..v {
                for b in a + 1..v {
                    let x = match family {
                        Family::Continuous => noise.sample(rng),
                        Family::Binary => f64::from(u8::from(rng.random_bool(0.5))),
                    };
                    values[base + a * v + b] = x;
                    values[base + b * v + a] = x;
                }
            }
        }
    }
    ConnectivityTensor::validate(values, n, m, v, family).unwrap()
}

/// A small random problem and a generic (non-stationary) state for it.
pub struct Micro {
    pub tensor: ConnectivityTensor,
    pub config: ModelConfig,
    pub state: VariationalState,
}

pub fn micro_instance(seed: u64, family: Family, force_two_blocks: bool) -> Micro {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let v = rng.random_range(3..=6);
    let m = rng.random_range(1..=2);
    let tensor = random_tensor(&mut rng, n, m, v, family);
    let blocks: Vec<usize> = (0..m)
        .map(|_| if force_two_blocks { 2 } else { rng.random_range(1..=2) })
        .collect();
    let mut config = ModelConfig::new(blocks);
    config.truncation = rng.random_range(2..=3);
    config.alpha_mode = if rng.random_bool(0.5) {
        AlphaMode::Fixed { value: rng.random_range(0.5..2.0) }
    } else {
        AlphaMode::Learned { shape: 1.0, rate: 1.0 }
    };
    config.noise_mode = if rng.random_bool(0.5) { NoiseMode::Learned } else { NoiseMode::Fixed };
    config.gamma_prior_prob = rng.random_range(0.2..0.8);
    let config = config.resolve(&tensor).unwrap();
    let mut state = init_state(&config, &tensor, rng.random()).unwrap();
    scramble(&mut state, &config, &mut rng);
    Micro { tensor, config, state }
}

/// Moves every factor to a random admissible point.
pub fn scramble(state: &mut VariationalState, config: &ModelConfig, rng: &mut impl Rng) {
    let mut pos = |xs: &mut Vec<f64>| xs.iter_mut().for_each(|x| *x = rng.random_range(0.5..4.0));
    pos(&mut state.e);
    pos(&mut state.f);
    state.t.iter_mut().for_each(&mut pos);
    state.r.iter_mut().for_each(&mut pos);
    state.g.iter_mut().for_each(&mut pos);
    state.h.iter_mut().for_each(&mut pos);
    state.j.iter_mut().for_each(&mut pos);
    state.k.iter_mut().for_each(&mut pos);
    if let Some(n) = state.noise.as_mut() {
        n.r.iter_mut().for_each(&mut pos);
        n.g.iter_mut().for_each(&mut pos);
        n.h.iter_mut().for_each(&mut pos);
        n.j.iter_mut().for_each(&mut pos);
        n.k.iter_mut().for_each(&mut pos);
        n.u.iter_mut().flatten().for_each(|x| *x = rng.random_range(-2.0..2.0));
    }
    state.u.iter_mut().flatten().for_each(|x| *x = rng.random_range(-2.0..2.0));
    state.zeta.iter_mut().flatten().for_each(|x| *x = rng.random_range(-2.0..2.0));
    state.b.iter_mut().for_each(|x| *x = rng.random_range(-1.5..1.5));
    if matches!(config.alpha_mode, AlphaMode::Learned { .. }) {
        state.alpha_shape = rng.random_range(0.5..4.0);
        state.alpha_rate = rng.random_range(0.5..4.0);
    }
}

pub fn elbo(state: &VariationalState, config: &ModelConfig, tensor: &ConnectivityTensor) -> f64 {
    let stats = block_suffstats(tensor, &state.eta, Exec::Sequential).unwrap();
    compute_elbo(state, config, &stats).unwrap().total()
}

// ---------------------------------------------------------------- stationarity

#[derive(Debug, Clone, Copy)]
pub enum Field {
    E,
    F,
    AlphaShape,
    AlphaRate,
    B,
    Zeta,
    T,
    U,
    R,
    G,
    H,
    J,
    K,
    NoiseU,
    NoiseR,
    NoiseG,
    NoiseH,
    NoiseJ,
    NoiseK,
}

/// One unconstrained coordinate of the variational parameters: additive
/// for real parameters, multiplicative (log scale) for positive ones, and
/// a softmax logit for a node responsibility entry.
#[derive(Debug, Clone, Copy)]
pub enum Coord {
    Linear(Field, usize, usize),
    Log(Field, usize, usize),
    EtaLogit { m: usize, v: usize, s: usize },
}

fn slot(state: &mut VariationalState, field: Field, m: usize, x: usize) -> &mut f64 {
    fn noise(s: &mut VariationalState) -> &mut msfc_core::state::BlockFactors {
        s.noise.as_mut().expect("learned noise")
    }
    match field {
        Field::E => &mut state.e[x],
        Field::F => &mut state.f[x],
        Field::AlphaShape => &mut state.alpha_shape,
        Field::AlphaRate => &mut state.alpha_rate,
        Field::B => &mut state.b[x],
        Field::Zeta => &mut state.zeta[m][x],
        Field::T => &mut state.t[m][x],
        Field::U => &mut state.u[m][x],
        Field::R => &mut state.r[m][x],
        Field::G => &mut state.g[m][x],
        Field::H => &mut state.h[m][x],
        Field::J => &mut state.j[m][x],
        Field::K => &mut state.k[m][x],
        Field::NoiseU => &mut noise(state).u[m][x],
        Field::NoiseR => &mut noise(state).r[m][x],
        Field::NoiseG => &mut noise(state).g[m][x],
        Field::NoiseH => &mut noise(state).h[m][x],
        Field::NoiseJ => &mut noise(state).j[m][x],
        Field::NoiseK => &mut noise(state).k[m][x],
    }
}

fn shifted(state: &VariationalState, c: Coord, h: f64) -> VariationalState {
    let mut s = state.clone();
    match c {
        Coord::Linear(f, m, x) => *slot(&mut s, f, m, x) += h,
        Coord::Log(f, m, x) => *slot(&mut s, f, m, x) *= h.exp(),
        Coord::EtaLogit { m, v, s: b } => {
            let k = s.n_blocks(m);
            let row = &mut s.eta[m][v * k..(v + 1) * k];
            row[b] *= h.exp();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= total);
        }
    }
    s
}

/// Central-difference gradient of the ELBO along each coordinate.
pub fn fd_gradient(state: &VariationalState, config: &ModelConfig, tensor: &ConnectivityTensor, coords: &[Coord]) -> Vec<f64> {
    let h = 1e-5;
    coords
        .iter()
        .map(|&c| {
            let up = elbo(&shifted(state, c, h), config, tensor);
            let down = elbo(&shifted(state, c, -h), config, tensor);
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn per_state(state: &VariationalState, len: impl Fn(usize) -> usize, make: impl Fn(usize, usize) -> Vec<Coord>) -> Vec<Coord> {
    let mut out = Vec::new();
    for m in 0..state.n_states() {
        for x in 0..len(m) {
            out.extend(make(m, x));
        }
    }
    out
}

/// The seven coordinate updates, plus the learned-noise update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Sticks,
    Theta1Normal,
    Theta1Bernoulli,
    Gamma,
    Clusters,
    Tau,
    Nodes,
    Noise,
}

pub const SEVEN_UPDATES: [Update; 7] = [
    Update::Sticks,
    Update::Theta1Normal,
    Update::Theta1Bernoulli,
    Update::Gamma,
    Update::Clusters,
    Update::Tau,
    Update::Nodes,
];

/// Applies `update` to a fresh micro-instance and returns the infinity
/// norm of the ELBO gradient over the updated factor's coordinates.
pub fn stationarity_residual(update: Update, seed: u64, family: Family) -> f64 {
    residual(update, seed, family, true)
}

/// The same gradient at the scrambled point, before the update runs.
pub fn control_residual(update: Update, seed: u64, family: Family) -> f64 {
    residual(update, seed, family, false)
}

fn residual(update: Update, seed: u64, family: Family, apply: bool) -> f64 {
    let Micro { tensor, config, mut state } = micro_instance(seed, family, update == Update::Nodes);
    let before = state.clone();
    let stats = block_suffstats(&tensor, &state.eta, Exec::Sequential).unwrap();
    let d = state.truncation;
    let coords: Vec<Coord> = match update {
        Update::Sticks => {
            update_sticks(&mut state, &config);
            let mut c: Vec<Coord> = (0..d - 1)
                .flat_map(|x| [Coord::Log(Field::E, 0, x), Coord::Log(Field::F, 0, x)])
                .collect();
            if matches!(config.alpha_mode, AlphaMode::Learned { .. }) {
                c.push(Coord::Log(Field::AlphaShape, 0, 0));
                c.push(Coord::Log(Field::AlphaRate, 0, 0));
            }
            c
        }
        Update::Theta1Normal => {
            assert_eq!(family, Family::Continuous);
            update_theta1_normal(&mut state, &config, &stats);
            per_state(&state, |m| state.u[m].len(), |m, x| {
                vec![
                    Coord::Linear(Field::U, m, x),
                    Coord::Log(Field::R, m, x),
                    Coord::Log(Field::G, m, x),
                    Coord::Log(Field::H, m, x),
                ]
            })
        }
        Update::Theta1Bernoulli => {
            assert_eq!(family, Family::Binary);
            update_theta1_bernoulli(&mut state, &config, &stats);
            per_state(&state, |m| state.j[m].len(), |m, x| vec![Coord::Log(Field::J, m, x), Coord::Log(Field::K, m, x)])
        }
        Update::Gamma => {
            update_gamma(&mut state, &config, &stats);
            per_state(&state, |m| state.zeta[m].len(), |m, x| vec![Coord::Linear(Field::Zeta, m, x)])
        }
        Update::Clusters => {
            update_clusters(&mut state, &config, &stats, Exec::Sequential);
            (0..state.b.len()).map(|x| Coord::Linear(Field::B, 0, x)).collect()
        }
        Update::Tau => {
            update_tau(&mut state, &config);
            per_state(&state, |m| state.t[m].len(), |m, x| vec![Coord::Log(Field::T, m, x)])
        }
        Update::Nodes => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let m = rng.random_range(0..state.n_states());
            let v = rng.random_range(0..tensor.n_nodes());
            let table = EdgeTable::build(&state, &config, &tensor, m, Exec::Sequential);
            update_node_row(&mut state, &table, m, v);
            (0..state.n_blocks(m)).map(|s| Coord::EtaLogit { m, v, s }).collect()
        }
        Update::Noise => {
            if state.noise.is_none() {
                return 0.0;
            }
            update_noise(&mut state, &config, &stats);
            let n = state.noise.as_ref().unwrap();
            match family {
                Family::Continuous => per_state(&state, |m| n.u[m].len(), |m, x| {
                    vec![
                        Coord::Linear(Field::NoiseU, m, x),
                        Coord::Log(Field::NoiseR, m, x),
                        Coord::Log(Field::NoiseG, m, x),
                        Coord::Log(Field::NoiseH, m, x),
                    ]
                }),
                Family::Binary => per_state(&state, |m| n.j[m].len(), |m, x| {
                    vec![Coord::Log(Field::NoiseJ, m, x), Coord::Log(Field::NoiseK, m, x)]
                }),
            }
        }
    };
    if !apply {
        state = before;
    }
    fd_gradient(&state, &config, &tensor, &coords)
        .into_iter()
        .fold(0.0, |acc, g| acc.max(g.abs()))
}

/// Families an update applies to.
pub fn families(update: Update) -> &'static [Family] {
    match update {
        Update::Theta1Normal => &[Family::Continuous],
        Update::Theta1Bernoulli => &[Family::Binary],
        _ => &[Family::Continuous, Family::Binary],
    }
}

// ---------------------------------------------------------------- enumeration

/// Log marginal likelihood of one set of edge values under the conjugate
/// prior of the model's edge parameters: μ | σ² ~ N(0, σ²/λ),
/// σ² ~ IG(α₁/2, β₁/2) for the continuous family; ρ ~ Beta(α₀, β₀) for
/// the binary family.
pub fn conjugate_log_marginal(xs: &[f64], config: &ModelConfig, family: Family) -> f64 {
    let n = xs.len() as f64;
    match family {
        Family::Continuous => {
            let (lambda, a, b) = (config.nig_lambda, config.nig_a, config.nig_b);
            let sum: f64 = xs.iter().sum();
            let sq: f64 = xs.iter().map(|x| x * x).sum();
            let post_rate = b + sq - sum * sum / (lambda + n);
            -0.5 * n * (2.0 * std::f64::consts::PI).ln() + 0.5 * (lambda / (lambda + n)).ln()
                + 0.5 * a * (0.5 * b).ln()
                - 0.5 * (a + n) * (0.5 * post_rate).ln()
                + lanczos_ln_gamma(0.5 * (a + n))
                - lanczos_ln_gamma(0.5 * a)
        }
        Family::Binary => {
            let ones: f64 = xs.iter().sum();
            ln_beta(config.beta_a0 + ones, config.beta_b0 + n - ones) - ln_beta(config.beta_a0, config.beta_b0)
        }
    }
}

/// Log density of edges under the fixed noise component.
fn fixed_noise_log_density(xs: &[f64], config: &ModelConfig, family: Family) -> f64 {
    match family {
        Family::Continuous => {
            let var = config.noise_var.expect("resolved config");
            xs.iter()
                .map(|x| -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (x - config.noise_mean).powi(2) / (2.0 * var))
                .sum()
        }
        Family::Binary => xs
            .iter()
            .map(|&x| if x > 0.5 { config.noise_prob.ln() } else { (1.0 - config.noise_prob).ln() })
            .sum(),
    }
}

fn for_each_label(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut labels = vec![0; n];
    loop {
        f(&labels);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact log p(A) for a single-state model with fixed α, by enumerating
/// subject clusters, node blocks and selection indicators and integrating
/// every continuous parameter analytically. Requires a resolved config.
pub fn exact_log_evidence(tensor: &ConnectivityTensor, config: &ModelConfig) -> f64 {
    assert_eq!(tensor.n_states(), 1);
    let AlphaMode::Fixed { value: alpha } = config.alpha_mode else {
        panic!("enumeration needs a fixed concentration");
    };
    let (n, v, d_max, s) = (tensor.n_subjects(), tensor.n_nodes(), config.truncation, config.blocks_per_state[0]);
    let family = tensor.family();
    let phi = config.phi(0);
    let n_pairs = s * (s + 1) / 2;
    // Position of (lo, hi), lo ≤ hi, in the lexicographic list of pairs.
    let pair_of = |a: usize, b: usize| {
        let (lo, hi) = (a.min(b), a.max(b));
        (0..lo).map(|x| s - x).sum::<usize>() + hi - lo
    };
    // Check the pair map is a bijection onto 0..P before relying on it.
    let mut seen = vec![false; n_pairs];
    for a in 0..s {
        for b in a..s {
            seen[pair_of(a, b)] = true;
        }
    }
    assert!(seen.iter().all(|&x| x));

    let mut terms = Vec::new();
    for_each_label(n, d_max, |z| {
        // Truncated stick-breaking: E[∏ w_{z_i}] as a product of Beta ratios.
        let mut counts = vec![0.0; d_max];
        z.iter().for_each(|&d| counts[d] += 1.0);
        let mut log_pz = 0.0;
        for d in 0..d_max - 1 {
            let rest: f64 = counts[d + 1..].iter().sum();
            log_pz += ln_beta(1.0 + counts[d], alpha + rest) - ln_beta(1.0, alpha);
        }
        for_each_label(v, s, |c| {
            let mut nc = vec![0.0; s];
            c.iter().for_each(|&b| nc[b] += 1.0);
            let phi_sum: f64 = phi.iter().sum();
            let log_pc = lanczos_ln_gamma(phi_sum) - lanczos_ln_gamma(phi_sum + v as f64)
                + (0..s).map(|b| lanczos_ln_gamma(phi[b] + nc[b]) - lanczos_ln_gamma(phi[b])).sum::<f64>();
            // edges[p][d] and all[p]
            let mut by_cluster = vec![vec![Vec::new(); d_max]; n_pairs];
            let mut pooled = vec![Vec::new(); n_pairs];
            for i in 0..n {
                for a in 0..v {
                    for b in a + 1..v {
                        let x = tensor.get(i, 0, a, b);
                        let p = pair_of(c[a], c[b]);
                        by_cluster[p][z[i]].push(x);
                        pooled[p].push(x);
                    }
                }
            }
            let slab: Vec<f64> = (0..n_pairs)
                .map(|p| by_cluster[p].iter().map(|xs| conjugate_log_marginal(xs, config, family)).sum())
                .collect();
            let spike: Vec<f64> = (0..n_pairs)
                .map(|p| match config.noise_mode {
                    NoiseMode::Learned => conjugate_log_marginal(&pooled[p], config, family),
                    NoiseMode::Fixed => fixed_noise_log_density(&pooled[p], config, family),
                })
                .collect();
            for_each_label(n_pairs, 2, |gamma| {
                let mut lp = log_pz + log_pc;
                for p in 0..n_pairs {
                    if gamma[p] == 1 {
                        lp += config.gamma_prior_prob.ln() + slab[p];
                    } else {
                        lp += (1.0 - config.gamma_prior_prob).ln() + spike[p];
                    }
                }
                terms.push(lp);
            });
        });
    });
    log_sum_exp(&terms)
}

// ---------------------------------------------------------------- metrics

/// ARI from the four pair-agreement counts over all unordered item pairs.
pub fn brute_force_ari(x: &[usize], y: &[usize]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0i128, 0i128, 0i128, 0i128);
    for a in 0..x.len() {
        for b in a + 1..x.len() {
            match (x[a] == x[b], y[a] == y[b]) {
                (true, true) => n11 += 1,
                (true, false) => n10 += 1,
                (false, true) => n01 += 1,
                (false, false) => n00 += 1,
            }
        }
    }
    let num = 2 * (n00 * n11 - n01 * n10);
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if den == 0 {
        return 1.0;
    }
    num as f64 / den as f64
}

/// Edge-by-edge confusion counts (tp, fp, tn, fn) of block-pair selection.
/// Labels are 1-based; `selected[m]` is indexed by the position of
/// (min, max) in the lexicographic list of estimated block pairs.
pub fn brute_force_confusion(selected: &[Vec<bool>], block_of: &[Vec<usize>], truth: &GroundTruth) -> [u64; 4] {
    let mut out = [0u64; 4];
    for m in 0..truth.block_of.len() {
        let s_est = ((((8 * selected[m].len() + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
        let est_pairs: Vec<(usize, usize)> = (1..=s_est).flat_map(|a| (a..=s_est).map(move |b| (a, b))).collect();
        let s_true = truth.n_blocks[m];
        let true_pairs: Vec<(usize, usize)> = (1..=s_true).flat_map(|a| (a..=s_true).map(move |b| (a, b))).collect();
        let v = block_of[m].len();
        for a in 0..v {
            for b in 0..v {
                if a >= b {
                    continue;
                }
                let key = |l: &[usize]| (l[a].min(l[b]), l[a].max(l[b]));
                let pe = est_pairs.iter().position(|&p| p == key(&block_of[m])).unwrap();
                let pt = true_pairs.iter().position(|&p| p == key(&truth.block_of[m])).unwrap();
                let predicted = selected[m][pe];
                let actual = truth.informative[m][pt];
                let slot = match (predicted, actual) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, false) => 2,
                    (false, true) => 3,
                };
                out[slot] += 1;
            }
        }
    }
    out
}

/// A random truth and a random estimate over the same nodes.
pub fn random_selection_case(rng: &mut impl Rng) -> (GroundTruth, Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let n_states = rng.random_range(1..=2);
    let v = rng.random_range(2..=8);
    let mut truth = GroundTruth {
        subtype_of: vec![1, 1],
        block_of: Vec::new(),
        n_blocks: Vec::new(),
        informative: Vec::new(),
        means: Vec::new(),
        vars: Vec::new(),
        sim: None,
    };
    let mut est = Vec::new();
    let mut selected = Vec::new();
    for _ in 0..n_states {
        let s_true = rng.random_range(1..=3);
        truth.block_of.push((0..v).map(|_| rng.random_range(1..=s_true)).collect());
        truth.n_blocks.push(s_true);
        truth.informative.push((0..s_true * (s_true + 1) / 2).map(|_| rng.random_bool(0.5)).collect());
        let s_est = rng.random_range(1..=4);
        est.push((0..v).map(|_| rng.random_range(1..=s_est)).collect());
        selected.push((0..s_est * (s_est + 1) / 2).map(|_| rng.random_bool(0.5)).collect());
    }
    (truth, est, selected)
}

// ---------------------------------------------------------------- simulator

/// A configured edge mean compared with its sample counterpart.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub label: String,
    pub configured: f64,
    pub empirical: f64,
    pub standard_error: f64,
}

impl MomentCheck {
    pub fn z(&self) -> f64 {
        (self.empirical - self.configured) / self.standard_error
    }
}

/// Every informative (subtype, state, pair) mean and the pooled noise mean
/// of a simulated tensor, next to the sample means of the edges they
/// generated. Standard errors use the configured variances.
pub fn simulator_moments(tensor: &ConnectivityTensor, truth: &GroundTruth) -> Vec<MomentCheck> {
    let v = tensor.n_nodes();
    let mut out = Vec::new();
    let (mut noise_sum, mut noise_n, mut noise_var, mut noise_mean) = (0.0, 0.0, 0.0, 0.0);
    for m in 0..truth.block_of.len() {
        let n_pairs = truth.informative[m].len();
        let mut sums = vec![vec![0.0; n_pairs]; truth.means.len()];
        let mut counts = vec![vec![0.0; n_pairs]; truth.means.len()];
        for i in 0..tensor.n_subjects() {
            let k = truth.subtype_of[i] - 1;
            for a in 0..v {
                for b in a + 1..v {
                    let (x, y) = (truth.block_of[m][a], truth.block_of[m][b]);
                    let (lo, hi) = (x.min(y), x.max(y));
                    let s = truth.n_blocks[m];
                    let p = (1..lo).map(|z| s - z + 1).sum::<usize>() + hi - lo;
                    let val = tensor.get(i, m, a, b);
                    if truth.informative[m][p] {
                        sums[k][p] += val;
                        counts[k][p] += 1.0;
                    } else {
                        noise_sum += val;
                        noise_n += 1.0;
                        noise_var = truth.vars[k][m][p];
                        noise_mean = truth.means[k][m][p];
                    }
                }
            }
        }
        for k in 0..truth.means.len() {
            for p in (0..n_pairs).filter(|&p| truth.informative[m][p] && counts[k][p] > 0.0) {
                out.push(MomentCheck {
                    label: format!("subtype {} state {} pair {}", k + 1, m + 1, p + 1),
                    configured: truth.means[k][m][p],
                    empirical: sums[k][p] / counts[k][p],
                    standard_error: (truth.vars[k][m][p] / counts[k][p]).sqrt(),
                });
            }
        }
    }
    if noise_n > 0.0 {
        out.push(MomentCheck {
            label: "noise".into(),
            configured: noise_mean,
            empirical: noise_sum / noise_n,
            standard_error: (noise_var / noise_n).sqrt(),
        });
    }
    out
}
