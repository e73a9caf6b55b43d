//! Proportional hazards model for one-shot device data.
//!
//! The baseline reliability at the inspection times is parameterized by an
//! unconstrained vector `η ∈ R^I` through
//!
//! ```text
//! γ(η) = 1 − exp(−exp(η)),    G_i = ∏_{m ≥ i} γ(η_m),    R_0(IT_i) = 1 − G_i
//! ```
//!
//! so any finite `η` yields `1 > R_0(IT_1) > … > R_0(IT_I) > 0`. Stress acts
//! through the log-linear multiplier `λ(x; α) = exp(αᵀx)` and
//! `R(IT_i, x) = (1 − G_i)^λ`.
//!
//! Indices `i` (inspection time) and `s` (stress level) are zero-based.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model parameters `θ = (η, α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub eta: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl ThetaParams {
    pub fn new(eta: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::Argument("eta must have at least one entry".into()));
        }
        if eta.iter().chain(alpha.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("theta entries must be finite".into()));
        }
        Ok(Self { eta, alpha })
    }

    /// Total parameter count `I + J`.
    pub fn dim(&self) -> usize {
        self.eta.len() + self.alpha.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.eta.iter().chain(self.alpha.iter()).copied().collect()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_vec(self.to_vec())
    }

    /// Splits a stacked `(η, α)` vector whose first `n_eta` entries are `η`.
    pub fn from_slice(v: &[f64], n_eta: usize) -> Result<Self> {
        if n_eta > v.len() {
            return Err(Error::Argument(format!("cannot split {} values with {} baseline parameters", v.len(), n_eta)));
        }
        Self::new(v[..n_eta].to_vec(), v[n_eta..].to_vec())
    }

    pub(crate) fn check_plan(&self, plan: &TestPlan) -> Result<()> {
        if self.eta.len() != plan.n_times() || self.alpha.len() != plan.n_factors() {
            return Err(Error::Argument(format!(
                "theta has (I, J) = ({}, {}) but the plan has ({}, {})",
                self.eta.len(),
                self.alpha.len(),
                plan.n_times(),
                plan.n_factors()
            )));
        }
        Ok(())
    }
}

/// Design of a one-shot life test: inspection times, stress levels and the
/// number of devices `K_is` inspected at each (time, stress) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestPlan {
    inspection_times: Vec<f64>,
    stress_levels: Vec<Vec<f64>>,
    group_sizes: Vec<Vec<u64>>,
}

impl TestPlan {
    /// `group_sizes` is indexed `[i][s]`. Cells with `K_is = 0` are allowed and
    /// are skipped by every sum over cells.
    pub fn new(inspection_times: Vec<f64>, stress_levels: Vec<Vec<f64>>, group_sizes: Vec<Vec<u64>>) -> Result<Self> {
        if inspection_times.is_empty() {
            return Err(Error::Validation("at least one inspection time is required".into()));
        }
        if inspection_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Validation("inspection times must be finite and positive".into()));
        }
        if inspection_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("inspection times must be strictly increasing".into()));
        }
        if stress_levels.is_empty() {
            return Err(Error::Validation("at least one stress level is required".into()));
        }
        let j = stress_levels[0].len();
        if stress_levels.iter().any(|x| x.len() != j) {
            return Err(Error::Validation("all stress vectors must have the same length".into()));
        }
        if stress_levels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("stress levels must be finite".into()));
        }
        if group_sizes.len() != inspection_times.len() || group_sizes.iter().any(|row| row.len() != stress_levels.len()) {
            return Err(Error::Validation(format!(
                "group sizes must form a {}x{} matrix",
                inspection_times.len(),
                stress_levels.len()
            )));
        }
        if group_sizes.iter().flatten().all(|&k| k == 0) {
            return Err(Error::Validation("at least one cell must have devices on test".into()));
        }
        Ok(Self { inspection_times, stress_levels, group_sizes })
    }

    /// Same stresses and times with every group of size `k`.
    pub fn balanced(inspection_times: Vec<f64>, stress_levels: Vec<Vec<f64>>, k: u64) -> Result<Self> {
        let sizes = vec![vec![k; stress_levels.len()]; inspection_times.len()];
        Self::new(inspection_times, stress_levels, sizes)
    }

    /// Copy of the plan with every group size multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Result<Self> {
        let sizes = self.group_sizes.iter().map(|row| row.iter().map(|k| k * factor).collect()).collect();
        Self::new(self.inspection_times.clone(), self.stress_levels.clone(), sizes)
    }

    pub fn inspection_times(&self) -> &[f64] {
        &self.inspection_times
    }

    pub fn stress_levels(&self) -> &[Vec<f64>] {
        &self.stress_levels
    }

    pub fn stress(&self, s: usize) -> &[f64] {
        &self.stress_levels[s]
    }

    pub fn group_sizes(&self) -> &[Vec<u64>] {
        &self.group_sizes
    }

    pub fn group_size(&self, i: usize, s: usize) -> u64 {
        self.group_sizes[i][s]
    }

    /// `I`
    pub fn n_times(&self) -> usize {
        self.inspection_times.len()
    }

    /// `S`
    pub fn n_stresses(&self) -> usize {
        self.stress_levels.len()
    }

    /// `J`
    pub fn n_factors(&self) -> usize {
        self.stress_levels[0].len()
    }

    /// Parameter count `I + J`.
    pub fn n_params(&self) -> usize {
        self.n_times() + self.n_factors()
    }

    /// Total number of devices `K`.
    pub fn total_devices(&self) -> u64 {
        self.group_sizes.iter().flatten().sum()
    }

    /// Cells `(i, s)` with `K_is > 0`, in row-major order.
    pub fn active_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_times())
            .flat_map(move |i| (0..self.n_stresses()).map(move |s| (i, s)))
            .filter(move |&(i, s)| self.group_sizes[i][s] > 0)
    }

    pub(crate) fn check_cell(&self, i: usize, s: usize) -> Result<()> {
        if i >= self.n_times() || s >= self.n_stresses() {
            return Err(Error::Argument(format!(
                "cell ({i}, {s}) outside a {}x{} plan",
                self.n_times(),
                self.n_stresses()
            )));
        }
        Ok(())
    }

    /// Index of an inspection time equal to `t` (exact match).
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.inspection_times.iter().position(|&it| it == t)
    }
}

/// Observed failure counts `n_is` for a [`TestPlan`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceData {
    plan: TestPlan,
    failures: Vec<Vec<u64>>,
}

impl DeviceData {
    pub fn new(plan: TestPlan, failures: Vec<Vec<u64>>) -> Result<Self> {
        if failures.len() != plan.n_times() || failures.iter().any(|row| row.len() != plan.n_stresses()) {
            return Err(Error::Validation(format!(
                "failure counts must form a {}x{} matrix",
                plan.n_times(),
                plan.n_stresses()
            )));
        }
        for (i, row) in failures.iter().enumerate() {
            for (s, &n) in row.iter().enumerate() {
                let k = plan.group_size(i, s);
                if n > k {
                    return Err(Error::Validation(format!("cell ({i}, {s}): {n} failures out of {k} devices")));
                }
            }
        }
        Ok(Self { plan, failures })
    }

    pub fn plan(&self) -> &TestPlan {
        &self.plan
    }

    pub fn failures(&self) -> &[Vec<u64>] {
        &self.failures
    }

    pub fn failure_count(&self, i: usize, s: usize) -> u64 {
        self.failures[i][s]
    }

    /// True when every active cell has `n_is ∈ {0, K_is}`.
    pub fn all_cells_degenerate(&self) -> bool {
        self.plan.active_cells().all(|(i, s)| {
            let n = self.failures[i][s];
            n == 0 || n == self.plan.group_size(i, s)
        })
    }
}

/// Failure/survival probability pair `(p1, p2)` of a cell, `p1 + p2 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbPair {
    pub p1: f64,
    pub p2: f64,
}

impl ProbPair {
    /// Pair from a failure probability.
    pub fn from_failure(p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) {
            return Err(Error::Domain(format!("probability must lie in [0, 1], got {p1}")));
        }
        Ok(Self { p1, p2: 1.0 - p1 })
    }

    /// Pair from a reliability (survival probability).
    pub fn from_reliability(r: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("probability must lie in [0, 1], got {r}")));
        }
        Ok(Self { p1: 1.0 - r, p2: r })
    }
}

/// Weibull lifetime model with common shape `τ = exp(b)` and scale
/// `a(x) = exp(c0 + Σ c_j x_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullTruth {
    pub b: f64,
    pub c0: f64,
    pub c: Vec<f64>,
}

impl WeibullTruth {
    pub fn new(b: f64, c0: f64, c: Vec<f64>) -> Result<Self> {
        if !b.is_finite() || !c0.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("Weibull parameters must be finite".into()));
        }
        Ok(Self { b, c0, c })
    }

    pub fn shape(&self) -> f64 {
        self.b.exp()
    }

    pub fn scale(&self, x: &[f64]) -> Result<f64> {
        Ok((self.c0 + dot(&self.c, x)?).exp())
    }

    /// `exp(−(t/a(x))^τ)`
    pub fn survival(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok((-self.cumulative_hazard(t, x)?).exp())
    }

    /// `1 − exp(−(t/a(x))^τ)`
    pub fn failure_prob(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(-(-self.cumulative_hazard(t, x)?).exp_m1())
    }

    fn cumulative_hazard(&self, t: f64, x: &[f64]) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        let tau = self.shape();
        // (t/a)^τ = exp(τ (ln t − ln a))
        Ok((tau * (t.ln() - self.c0 - dot(&self.c, x)?)).exp())
    }
}

fn dot(a: &[f64], x: &[f64]) -> Result<f64> {
    if a.len() != x.len() {
        return Err(Error::Argument(format!("length mismatch: {} coefficients vs {} stresses", a.len(), x.len())));
    }
    Ok(a.iter().zip(x).map(|(a, x)| a * x).sum())
}

/// `γ(η) = 1 − exp(−exp(η))`.
pub fn gamma_from_eta(eta: f64) -> Result<f64> {
    if !eta.is_finite() {
        return Err(Error::Domain(format!("eta must be finite, got {eta}")));
    }
    Ok(-(-eta.exp()).exp_m1())
}

/// `G_i = ∏_{m=i}^{I−1} γ(η_m)`; the baseline reliability is `1 − G_i`.
pub fn cumulative_g(eta: &[f64], i: usize) -> Result<f64> {
    if i >= eta.len() {
        return Err(Error::Argument(format!("index {i} out of range for {} inspection times", eta.len())));
    }
    eta[i..].iter().try_fold(1.0, |acc, &e| Ok(acc * gamma_from_eta(e)?))
}

/// `λ(x; α) = exp(αᵀx)`.
pub fn stress_multiplier(alpha: &[f64], x: &[f64]) -> Result<f64> {
    Ok(dot(alpha, x)?.exp())
}

/// `R(IT_i, x; θ) = (1 − G_i)^λ(x; α)`; `x` may be any stress vector, not
/// only a design level.
pub fn cell_reliability(theta: &ThetaParams, plan: &TestPlan, i: usize, x: &[f64]) -> Result<f64> {
    theta.check_plan(plan)?;
    let g = cumulative_g(&theta.eta, i)?;
    let lambda = stress_multiplier(&theta.alpha, x)?;
    Ok((lambda * (-g).ln_1p()).exp())
}

/// Model probabilities `(1 − R, R)` of cell `(i, s)`.
pub fn cell_prob_pair(theta: &ThetaParams, plan: &TestPlan, i: usize, s: usize) -> Result<ProbPair> {
    plan.check_cell(i, s)?;
    let r = cell_reliability(theta, plan, i, plan.stress(s))?;
    Ok(ProbPair { p1: 1.0 - r, p2: r })
}

/// Empirical proportions `(n/K, (K − n)/K)` of cell `(i, s)`.
pub fn empirical_prob_pair(data: &DeviceData, i: usize, s: usize) -> Result<ProbPair> {
    data.plan.check_cell(i, s)?;
    let k = data.plan.group_size(i, s);
    if k == 0 {
        return Err(Error::EmptyCell { i, s });
    }
    let p1 = data.failures[i][s] as f64 / k as f64;
    Ok(ProbPair { p1, p2: 1.0 - p1 })
}

/// Proportional hazards parameters equivalent to a Weibull lifetime model
/// with common shape, evaluated on the plan's inspection times.
pub fn weibull_to_ph(truth: &WeibullTruth, plan: &TestPlan) -> Result<ThetaParams> {
    if truth.c.len() != plan.n_factors() {
        return Err(Error::Argument(format!(
            "Weibull truth has {} stress coefficients, plan has {} factors",
            truth.c.len(),
            plan.n_factors()
        )));
    }
    let tau = truth.shape();
    let times = plan.inspection_times();
    let last = times.len() - 1;
    // Baseline failure probability 1 − R_0(t) = 1 − exp(−t^τ exp(−τ c0)).
    let baseline_failure = |t: f64| -(-(tau * (t.ln() - truth.c0)).exp()).exp_m1();
    let mut eta = Vec::with_capacity(times.len());
    for i in 0..last {
        let ratio = baseline_failure(times[i]) / baseline_failure(times[i + 1]);
        eta.push((-(-ratio).ln_1p()).ln());
    }
    eta.push(tau * (times[last].ln() - truth.c0));
    let alpha = truth.c.iter().map(|c| -tau * c).collect();
    ThetaParams::new(eta, alpha)
}

/// Source of a reliability curve for [`reliability_at_time`].
#[derive(Debug, Clone, Copy)]
pub enum LifetimeModel<'a> {
    Weibull(&'a WeibullTruth),
    ProportionalHazards(&'a ThetaParams),
}

/// Reliability at time `t` under stress `x0`.
///
/// A Weibull model is defined for every `t > 0`. A fitted proportional
/// hazards model is identified only at the plan's inspection times; any other
/// `t` is refused with [`Error::UnsupportedTime`].
pub fn reliability_at_time(model: LifetimeModel<'_>, t: f64, x0: &[f64], plan: &TestPlan) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    match model {
        LifetimeModel::Weibull(w) => w.survival(t, x0),
        LifetimeModel::ProportionalHazards(theta) => {
            let i = plan.time_index(t).ok_or(Error::UnsupportedTime(t))?;
            cell_reliability(theta, plan, i, x0)
        }
    }
}

/// Per-cell reliability and its gradient `∂R/∂θ = (δ(η), δ(α))`.
#[derive(Debug, Clone)]
pub(crate) struct CellSensitivity {
    pub reliability: f64,
    pub grad: Vec<f64>,
}

/// Reliability at `(IT_i, x)` together with its derivative with respect to
/// `(η, α)`.
pub(crate) fn cell_sensitivity(theta: &ThetaParams, i: usize, x: &[f64]) -> Result<CellSensitivity> {
    let n_eta = theta.eta.len();
    if i >= n_eta {
        return Err(Error::Argument(format!("index {i} out of range for {n_eta} inspection times")));
    }
    let gammas = theta.eta.iter().map(|&e| gamma_from_eta(e)).collect::<Result<Vec<_>>>()?;
    let g: f64 = gammas[i..].iter().product();
    let lambda = stress_multiplier(&theta.alpha, x)?;
    let log_base = (-g).ln_1p();
    let reliability = (lambda * log_base).exp();
    // λ (1 − G_i)^{λ−1}
    let outer = lambda * ((lambda - 1.0) * log_base).exp();
    let mut grad = vec![0.0; theta.dim()];
    for u in i..n_eta {
        // ∂γ/∂η_u = exp(η_u − exp(η_u)); the remaining factors of G_i are kept
        // as an explicit product so γ(η_u) never appears in a denominator.
        let d_gamma = (theta.eta[u] - theta.eta[u].exp()).exp();
        let others: f64 = gammas[i..].iter().enumerate().filter(|&(m, _)| m + i != u).map(|(_, g)| g).product();
        grad[u] = -outer * d_gamma * others;
    }
    let scale = reliability * log_base * lambda;
    for (j, &xj) in x.iter().enumerate() {
        grad[n_eta + j] = scale * xj;
    }
    Ok(CellSensitivity { reliability, grad })
}
