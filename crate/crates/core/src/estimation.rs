//! Weighted minimum DPD estimation: the analytic estimating equations and the
//! optimizer driver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::divergence::{clamped_pair, kl_divergence, TuningBeta};
use crate::error::{Error, Result};
use crate::model::{cell_sensitivity, empirical_prob_pair, DeviceData, ProbPair, TestPlan, ThetaParams};
use crate::optim::{self, BfgsOptions};

/// Base seed for the random restart offsets; restart `k` uses `RESTART_SEED + k`.
const RESTART_SEED: u64 = 0x005e_ed0f_0a5e;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Starting point; the pooled-proportion initializer is used when absent.
    pub initial_theta: Option<ThetaParams>,
    /// Additional randomized starts around the initial point.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 500, gradient_tolerance: 1e-8, initial_theta: None, restarts: 3 }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Validation("gradient tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Dimensions of the data a fit was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataSummary {
    pub n_times: usize,
    pub n_stresses: usize,
    pub n_factors: usize,
    pub total_devices: u64,
}

impl DataSummary {
    pub fn of(plan: &TestPlan) -> Self {
        Self {
            n_times: plan.n_times(),
            n_stresses: plan.n_stresses(),
            n_factors: plan.n_factors(),
            total_devices: plan.total_devices(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// Fewer non-empty cells than parameters.
    FewInformativeCells { cells: usize, params: usize },
    /// Every cell has either no failures or only failures.
    BoundaryData,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub theta_hat: ThetaParams,
    pub beta: TuningBeta,
    pub objective: f64,
    /// Largest absolute component of the objective gradient at `theta_hat`.
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
    pub data: DataSummary,
    pub warnings: Vec<FitWarning>,
}

/// `∂R(IT_i, x_s)/∂η` (length `I`).
pub fn delta_eta(theta: &ThetaParams, plan: &TestPlan, i: usize, s: usize) -> Result<Vec<f64>> {
    theta.check_plan(plan)?;
    plan.check_cell(i, s)?;
    let mut g = cell_sensitivity(theta, i, plan.stress(s))?.grad;
    g.truncate(theta.eta.len());
    Ok(g)
}

/// `∂R(IT_i, x_s)/∂α = R log(1 − G_i) λ x_s` (length `J`).
pub fn delta_alpha(theta: &ThetaParams, plan: &TestPlan, i: usize, s: usize) -> Result<Vec<f64>> {
    theta.check_plan(plan)?;
    plan.check_cell(i, s)?;
    let g = cell_sensitivity(theta, i, plan.stress(s))?.grad;
    Ok(g[theta.eta.len()..].to_vec())
}

/// Objective and gradient in one pass over the cells.
pub(crate) fn objective_and_gradient(data: &DeviceData, theta: &ThetaParams, beta: TuningBeta) -> Result<(f64, Vec<f64>)> {
    theta.check_plan(data.plan())?;
    let plan = data.plan();
    let total = plan.total_devices() as f64;
    let b = beta.value();
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.dim()];
    for (i, s) in plan.active_cells() {
        let weight = plan.group_size(i, s) as f64 / total;
        let p_hat = empirical_prob_pair(data, i, s)?;
        let sens = cell_sensitivity(theta, i, plan.stress(s))?;
        let pi = clamped_pair(ProbPair { p1: 1.0 - sens.reliability, p2: sens.reliability });
        value += weight
            * if beta.is_mle() {
                kl_divergence(p_hat, pi)
            } else {
                (pi.p1.powf(b + 1.0) + pi.p2.powf(b + 1.0)) - (b + 1.0) / b * (p_hat.p1 * pi.p1.powf(b) + p_hat.p2 * pi.p2.powf(b))
            };
        // ∂d*/∂θ = (β+1)(π1 − p̂1)(π1^{β−1} + π2^{β−1}) ∂π1/∂θ with ∂π1/∂θ = −∂R/∂θ.
        let coef = -weight * (b + 1.0) * (pi.p1 - p_hat.p1) * (pi.p1.powf(b - 1.0) + pi.p2.powf(b - 1.0));
        for (gk, dk) in grad.iter_mut().zip(&sens.grad) {
            *gk += coef * dk;
        }
    }
    Ok((value, grad))
}

/// Gradient of [`crate::divergence::weighted_objective`] with respect to `(η, α)`.
pub fn objective_gradient(data: &DeviceData, theta: &ThetaParams, beta: TuningBeta) -> Result<Vec<f64>> {
    Ok(objective_and_gradient(data, theta, beta)?.1)
}

/// Starting point from pooled failure fractions with `α = 0`.
pub fn default_initial_theta(data: &DeviceData) -> ThetaParams {
    let plan = data.plan();
    let n_times = plan.n_times();
    let mut g_hat = Vec::with_capacity(n_times);
    let mut running_max = 0.0_f64;
    for i in 0..n_times {
        let (fails, tested) = (0..plan.n_stresses())
            .fold((0u64, 0u64), |(f, k), s| (f + data.failure_count(i, s), k + plan.group_size(i, s)));
        let frac = if tested > 0 { fails as f64 / tested as f64 } else { running_max };
        running_max = running_max.max(frac.clamp(0.01, 0.99));
        g_hat.push(running_max);
    }
    // γ_I = G_I and γ_i = G_i / G_{i+1}; ratios are kept below 1 so η stays finite.
    let eta = (0..n_times)
        .map(|i| {
            let gamma = if i + 1 == n_times { g_hat[i] } else { (g_hat[i] / g_hat[i + 1]).min(0.99) };
            (-(-gamma).ln_1p()).ln()
        })
        .collect();
    ThetaParams { eta, alpha: vec![0.0; plan.n_factors()] }
}

fn restart_points(init: &ThetaParams, restarts: usize) -> Vec<ThetaParams> {
    let mut starts = vec![init.clone()];
    for k in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED.wrapping_add(k as u64));
        let eta = init.eta.iter().map(|e| e + rng.random_range(-1.0..1.0)).collect();
        let alpha = init.alpha.iter().map(|_| rng.random_range(-0.05..0.05)).collect();
        starts.push(ThetaParams { eta, alpha });
    }
    starts
}

/// Weighted minimum DPD estimate `θ̂_β` (the MLE when `β = 0`).
///
/// Each start is minimized by BFGS over all of `R^{I+J}`; the lowest
/// objective among converged runs wins, ties going to the smaller gradient
/// and then to the earlier start. When no start converges the best attempt
/// is returned with `converged = false`.
pub fn fit(data: &DeviceData, beta: TuningBeta, options: &FitOptions) -> Result<FitResult> {
    options.validate()?;
    let plan = data.plan();
    let init = match &options.initial_theta {
        Some(t) => {
            t.check_plan(plan)?;
            t.clone()
        }
        None => default_initial_theta(data),
    };
    let mut warnings = Vec::new();
    let cells = plan.active_cells().count();
    if cells < plan.n_params() {
        log::warn!("only {cells} informative cells for {} parameters", plan.n_params());
        warnings.push(FitWarning::FewInformativeCells { cells, params: plan.n_params() });
    }
    if data.all_cells_degenerate() {
        warnings.push(FitWarning::BoundaryData);
    }

    let n_eta = plan.n_times();
    // α is optimized as α_j·s_j with s_j the largest |x_sj|, which puts all
    // coordinates on a comparable scale.
    let scales: Vec<f64> = (0..plan.n_factors())
        .map(|j| plan.stress_levels().iter().fold(0.0_f64, |m, x| m.max(x[j].abs())))
        .map(|s| if s > 0.0 { s } else { 1.0 })
        .collect();
    let max_scale = scales.iter().copied().fold(1.0, f64::max);
    let to_theta = |x: &[f64]| ThetaParams {
        eta: x[..n_eta].to_vec(),
        alpha: x[n_eta..].iter().zip(&scales).map(|(u, s)| u / s).collect(),
    };
    let objective = |x: &[f64]| {
        let (v, mut g) = objective_and_gradient(data, &to_theta(x), beta).ok()?;
        for (gj, s) in g[n_eta..].iter_mut().zip(&scales) {
            *gj /= s;
        }
        Some((v, g))
    };
    let bfgs = BfgsOptions { max_iterations: options.max_iterations, gradient_tolerance: options.gradient_tolerance / max_scale };

    let mut best: Option<Run> = None;
    let mut total_iterations = 0;
    for start in restart_points(&init, options.restarts) {
        let x0: Vec<f64> = start.eta.iter().copied().chain(start.alpha.iter().zip(&scales).map(|(a, s)| a * s)).collect();
        let Some(m) = optim::minimize(objective, &x0, bfgs) else {
            continue;
        };
        total_iterations += m.iterations;
        let theta = to_theta(&m.x);
        let gradient_norm = objective_and_gradient(data, &theta, beta)?.1.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
        let run = Run { theta, value: m.value, gradient_norm, converged: gradient_norm <= options.gradient_tolerance };
        if best.as_ref().is_none_or(|b| run.is_better(b)) {
            best = Some(run);
        }
    }
    let best = best.ok_or_else(|| Error::Validation("objective is not finite at any starting point".into()))?;
    if !best.converged {
        log::warn!("fit at beta={beta} did not converge (gradient {:.3e})", best.gradient_norm);
    }
    Ok(FitResult {
        theta_hat: best.theta,
        beta,
        objective: best.value,
        gradient_norm: best.gradient_norm,
        converged: best.converged,
        iterations: total_iterations,
        data: DataSummary::of(plan),
        warnings,
    })
}

struct Run {
    theta: ThetaParams,
    value: f64,
    gradient_norm: f64,
    converged: bool,
}

impl Run {
    fn is_better(&self, incumbent: &Run) -> bool {
        if self.converged != incumbent.converged {
            return self.converged;
        }
        let tie = 1e-12 * incumbent.value.abs().max(1.0);
        if self.value < incumbent.value - tie {
            return true;
        }
        if self.value > incumbent.value + tie {
            return false;
        }
        self.gradient_norm < incumbent.gradient_norm
    }
}
