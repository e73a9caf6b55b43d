//! Kullback-Leibler and density power divergences between empirical and
//! model probability pairs, and the weighted objective minimized by the
//! estimator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{cell_prob_pair, empirical_prob_pair, DeviceData, ProbPair, ThetaParams};

/// Model probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before
/// logs or negative powers are taken.
pub const PROB_FLOOR: f64 = 1e-12;

/// DPD tuning parameter `β ≥ 0`; `β = 0` is the Kullback-Leibler (maximum
/// likelihood) case.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TuningBeta(f64);

impl TuningBeta {
    pub const MLE: TuningBeta = TuningBeta(0.0);

    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::Domain(format!("tuning parameter must be finite and non-negative, got {beta}")));
        }
        Ok(Self(beta))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_mle(self) -> bool {
        self.0 == 0.0
    }
}

impl TryFrom<f64> for TuningBeta {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TuningBeta> for f64 {
    fn from(b: TuningBeta) -> f64 {
        b.0
    }
}

impl std::fmt::Display for TuningBeta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

fn xlogy_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).ln()
    }
}

/// `Σ_j p̂_j ln(p̂_j / π_j)` with `0 ln 0 = 0`; `+∞` when `π_j = 0 < p̂_j`.
pub fn kl_divergence(p_hat: ProbPair, pi: ProbPair) -> f64 {
    xlogy_ratio(p_hat.p1, pi.p1) + xlogy_ratio(p_hat.p2, pi.p2)
}

/// Density power divergence `d_β(p̂, π)`; delegates to [`kl_divergence`] at
/// `β = 0`.
pub fn dpd(p_hat: ProbPair, pi: ProbPair, beta: TuningBeta) -> f64 {
    let b = beta.value();
    if b == 0.0 {
        return kl_divergence(p_hat, pi);
    }
    reduced(p_hat, pi, b) + (p_hat.p1.powf(b + 1.0) + p_hat.p2.powf(b + 1.0)) / b
}

/// `d_β` without the term that depends on `p̂` only. Defined for `β > 0`.
pub fn dpd_reduced(p_hat: ProbPair, pi: ProbPair, beta: TuningBeta) -> Result<f64> {
    if beta.is_mle() {
        return Err(Error::Domain("the reduced DPD is defined for beta > 0 only".into()));
    }
    Ok(reduced(p_hat, pi, beta.value()))
}

fn reduced(p_hat: ProbPair, pi: ProbPair, b: f64) -> f64 {
    (pi.p1.powf(b + 1.0) + pi.p2.powf(b + 1.0)) - (b + 1.0) / b * (p_hat.p1 * pi.p1.powf(b) + p_hat.p2 * pi.p2.powf(b))
}

/// Weighted objective `Σ_{K_is>0} (K_is/K) d*_β(p̂_is, π_is(θ))`, or the
/// weighted Kullback-Leibler divergence when `β = 0`.
pub fn weighted_objective(data: &DeviceData, theta: &ThetaParams, beta: TuningBeta) -> Result<f64> {
    let plan = data.plan();
    let total = plan.total_devices() as f64;
    let mut sum = 0.0;
    for (i, s) in plan.active_cells() {
        let weight = plan.group_size(i, s) as f64 / total;
        let p_hat = empirical_prob_pair(data, i, s)?;
        let pi = clamped_pair(cell_prob_pair(theta, plan, i, s)?);
        let term = if beta.is_mle() { kl_divergence(p_hat, pi) } else { reduced(p_hat, pi, beta.value()) };
        sum += weight * term;
    }
    Ok(sum)
}

pub(crate) fn clamped_pair(pi: ProbPair) -> ProbPair {
    let p1 = clamp_prob(pi.p1);
    ProbPair { p1, p2: 1.0 - p1 }
}

/// Binomial log-likelihood `Σ n ln(1 − R) + (K − n) ln R`, omitting the
/// combinatorial constant.
pub fn log_likelihood(data: &DeviceData, theta: &ThetaParams) -> Result<f64> {
    let plan = data.plan();
    let mut sum = 0.0;
    for (i, s) in plan.active_cells() {
        let pi = clamped_pair(cell_prob_pair(theta, plan, i, s)?);
        let n = data.failure_count(i, s) as f64;
        let k = plan.group_size(i, s) as f64;
        if n > 0.0 {
            sum += n * pi.p1.ln();
        }
        if k > n {
            sum += (k - n) * pi.p2.ln();
        }
    }
    Ok(sum)
}
