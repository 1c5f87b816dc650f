//! Special functions and closed-form expectations under the variational
//! families (Dirichlet, Beta, Gamma, Normal-Inverse-Gamma).
//!
//! Everything here is a pure function of its arguments. The entropy and
//! expected-log-density helpers at the bottom are shared by the ELBO and by
//! the per-factor updates.

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this the recurrence shifts arguments upward before the asymptotic
/// series is applied.
const ASYMPTOTIC_CUTOFF: f64 = 6.0;

fn check_positive(name: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { name, value: x })
    }
}

/// Digamma ψ(x) for x > 0.
///
/// Shifts x up to at least 6 with ψ(x) = ψ(x+1) − 1/x, then uses the
/// asymptotic expansion ln x − 1/(2x) − Σ B₂ₖ/(2k x²ᵏ).
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma argument", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < ASYMPTOTIC_CUTOFF {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B2/2, B4/4, ..., B14/14
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - series
}

/// Natural log of the gamma function for x > 0.
///
/// Stirling series on x ≥ 6, with ln Γ(x) = ln Γ(x+n) − ln(x(x+1)…(x+n−1))
/// below that. The shift product is accumulated multiplicatively and logged
/// once.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive("ln_gamma argument", x)?;
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(mut x: f64) -> f64 {
    let mut prod = 1.0;
    while x < ASYMPTOTIC_CUTOFF {
        prod *= x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k} / (2k (2k-1)) for k = 1..8
    let series = inv
        * (1.0 / 12.0
            - inv2
                * (1.0 / 360.0
                    - inv2
                        * (1.0 / 1260.0
                            - inv2
                                * (1.0 / 1680.0
                                    - inv2
                                        * (1.0 / 1188.0
                                            - inv2
                                                * (691.0 / 360360.0
                                                    - inv2 * (1.0 / 156.0 - inv2 * 3617.0 / 122400.0)))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series - prod.ln()
}

/// ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b).
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma_unchecked(a) + ln_gamma_unchecked(b) - ln_gamma_unchecked(a + b)
}

/// E[ln τₛ] under τ ~ Dir(t): ψ(tₛ) − ψ(Σ t).
pub fn dirichlet_expected_log(t: &[f64]) -> Result<Vec<f64>> {
    if t.is_empty() {
        return Err(Error::Domain {
            name: "dirichlet parameter vector length",
            value: 0.0,
        });
    }
    for &x in t {
        check_positive("dirichlet parameter", x)?;
    }
    Ok(dirichlet_expected_log_unchecked(t))
}

pub(crate) fn dirichlet_expected_log_unchecked(t: &[f64]) -> Vec<f64> {
    let total = digamma_unchecked(t.iter().sum());
    t.iter().map(|&x| digamma_unchecked(x) - total).collect()
}

/// (E[ln w], E[ln(1 − w)]) under w ~ Beta(e, f).
pub fn beta_expected_logs(e: f64, f: f64) -> Result<(f64, f64)> {
    check_positive("beta shape e", e)?;
    check_positive("beta shape f", f)?;
    Ok(beta_expected_logs_unchecked(e, f))
}

pub(crate) fn beta_expected_logs_unchecked(e: f64, f: f64) -> (f64, f64) {
    let total = digamma_unchecked(e + f);
    (digamma_unchecked(e) - total, digamma_unchecked(f) - total)
}

/// Moments of (μ, σ²) under σ² ~ IG(g/2, h/2), μ | σ² ~ N(u, σ²/r).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NigExpectations {
    /// E[1/σ²]
    pub e_inv_var: f64,
    /// E[μ/σ²]
    pub e_mean_over_var: f64,
    /// E[μ²/σ²]
    pub e_meansq_over_var: f64,
    /// E[ln σ²]
    pub e_log_var: f64,
}

impl NigExpectations {
    /// Expected log-density of a single observation `a`, as a quadratic
    /// c0 + c1·a + c2·a².
    pub fn pointwise_coefficients(&self) -> [f64; 3] {
        [
            -0.5 * (LN_2PI + self.e_log_var + self.e_meansq_over_var),
            self.e_mean_over_var,
            -0.5 * self.e_inv_var,
        ]
    }

    /// Expected log-likelihood of a block with (expected) count `n`, sum `sum`
    /// and sum of squares `sum_sq`.
    pub fn block_loglik(&self, n: f64, sum: f64, sum_sq: f64) -> f64 {
        -0.5 * (n * LN_2PI + n * self.e_log_var + self.e_inv_var * sum_sq
            - 2.0 * self.e_mean_over_var * sum
            + n * self.e_meansq_over_var)
    }
}

/// Moments of the Normal-Inverse-Gamma factor parameterised by (u, r, g, h).
pub fn nig_expectations(u: f64, r: f64, g: f64, h: f64) -> Result<NigExpectations> {
    if !u.is_finite() {
        return Err(Error::Domain {
            name: "nig location u",
            value: u,
        });
    }
    check_positive("nig precision scale r", r)?;
    check_positive("nig shape g", g)?;
    check_positive("nig rate h", h)?;
    Ok(nig_expectations_unchecked(u, r, g, h))
}

pub(crate) fn nig_expectations_unchecked(u: f64, r: f64, g: f64, h: f64) -> NigExpectations {
    let e_inv_var = g / h;
    NigExpectations {
        e_inv_var,
        e_mean_over_var: u * e_inv_var,
        e_meansq_over_var: u * u * e_inv_var + 1.0 / r,
        e_log_var: (0.5 * h).ln() - digamma_unchecked(0.5 * g),
    }
}

/// Expected log-density of a fixed Normal(mean, var) component, as the
/// quadratic coefficients c0 + c1·a + c2·a².
pub(crate) fn fixed_normal_coefficients(mean: f64, var: f64) -> [f64; 3] {
    [
        -0.5 * (LN_2PI + var.ln() + mean * mean / var),
        mean / var,
        -0.5 / var,
    ]
}

pub(crate) fn fixed_normal_block_loglik(mean: f64, var: f64, n: f64, sum: f64, sum_sq: f64) -> f64 {
    -0.5 * (n * (LN_2PI + var.ln()) + (sum_sq - 2.0 * mean * sum + n * mean * mean) / var)
}

/// Logistic sigmoid.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// In-place softmax with max subtraction; returns log Σ exp of the input.
pub(crate) fn softmax_in_place(xs: &mut [f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
    max + total.ln()
}

/// Index of the largest element, lowest index on ties.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// x ln x with the 0 ln 0 = 0 convention.
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

// ---- entropies and expected log densities -------------------------------

pub(crate) fn beta_entropy(e: f64, f: f64) -> f64 {
    ln_beta(e, f) - (e - 1.0) * digamma_unchecked(e) - (f - 1.0) * digamma_unchecked(f)
        + (e + f - 2.0) * digamma_unchecked(e + f)
}

pub(crate) fn beta_expected_log_density(a: f64, b: f64, e_log: f64, e_log1m: f64) -> f64 {
    -ln_beta(a, b) + (a - 1.0) * e_log + (b - 1.0) * e_log1m
}

pub(crate) fn dirichlet_entropy(t: &[f64], e_log: &[f64]) -> f64 {
    let total: f64 = t.iter().sum();
    let mut h = -ln_gamma_unchecked(total);
    for (&ts, &el) in t.iter().zip(e_log) {
        h += ln_gamma_unchecked(ts) - (ts - 1.0) * el;
    }
    h
}

pub(crate) fn dirichlet_expected_log_density(phi: &[f64], e_log: &[f64]) -> f64 {
    let total: f64 = phi.iter().sum();
    let mut v = ln_gamma_unchecked(total);
    for (&p, &el) in phi.iter().zip(e_log) {
        v += -ln_gamma_unchecked(p) + (p - 1.0) * el;
    }
    v
}

/// Entropy of Gamma(shape, rate).
pub(crate) fn gamma_entropy(shape: f64, rate: f64) -> f64 {
    shape - rate.ln() + ln_gamma_unchecked(shape) + (1.0 - shape) * digamma_unchecked(shape)
}

/// Entropy of σ² ~ IG(g/2, h/2), μ | σ² ~ N(u, σ²/r).
pub(crate) fn nig_entropy(r: f64, g: f64, h: f64) -> f64 {
    let a = 0.5 * g;
    let b = 0.5 * h;
    let e_log_var = b.ln() - digamma_unchecked(a);
    let ig = a + b.ln() + ln_gamma_unchecked(a) - (1.0 + a) * digamma_unchecked(a);
    ig + 0.5 * (LN_2PI + 1.0) + 0.5 * e_log_var - 0.5 * r.ln()
}

/// E_q[ln NIG(μ, σ²; 0, λ, α/2, β/2)] given the moments of q.
pub(crate) fn nig_expected_log_prior(m: &NigExpectations, lambda: f64, alpha: f64, beta: f64) -> f64 {
    let a0 = 0.5 * alpha;
    let b0 = 0.5 * beta;
    a0 * b0.ln() - ln_gamma_unchecked(a0) - (a0 + 1.0) * m.e_log_var - b0 * m.e_inv_var - HALF_LN_2PI
        + 0.5 * lambda.ln()
        - 0.5 * m.e_log_var
        - 0.5 * lambda * m.e_meansq_over_var
}
