//! Goodness of fit through the maximum cell discrepancy, and selection of
//! the tuning parameter.

use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::TuningBeta;
use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitResult};
use crate::inference::sandwich_sigma;
use crate::model::{cell_reliability, DeviceData, ThetaParams};
use crate::special::binomial_interval_prob;

/// Slack added before rounding the acceptance bounds so that a cell whose
/// discrepancy equals the statistic is not pushed outside by rounding.
const BOUND_SLACK: f64 = 1e-9;

/// Default Warwick–Jones pilot.
pub const DEFAULT_PILOT_BETA: f64 = 0.5;

/// `0, 0.01, …, 1`.
pub fn default_grid() -> Vec<TuningBeta> {
    (0..=100).map(|k| TuningBeta::new(k as f64 / 100.0).expect("grid point in range")).collect()
}

fn expected_failures(data: &DeviceData, theta: &ThetaParams) -> Result<Vec<Vec<f64>>> {
    theta.check_plan(data.plan())?;
    let plan = data.plan();
    (0..plan.n_times())
        .map(|i| {
            (0..plan.n_stresses())
                .map(|s| Ok(plan.group_size(i, s) as f64 * (1.0 - cell_reliability(theta, plan, i, plan.stress(s))?)))
                .collect()
        })
        .collect()
}

/// `M(θ) = max |n_is − K_is(1 − R(IT_i, x_s; θ))|` over non-empty cells.
pub fn distance_at(data: &DeviceData, theta: &ThetaParams) -> Result<f64> {
    let expected = expected_failures(data, theta)?;
    Ok(data
        .plan()
        .active_cells()
        .map(|(i, s)| (data.failure_count(i, s) as f64 - expected[i][s]).abs())
        .fold(0.0, f64::max))
}

/// `M_β` for a fit on `data`.
pub fn distance_statistic(data: &DeviceData, fit: &FitResult) -> Result<f64> {
    distance_at(data, &fit.theta_hat)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub m_stat: f64,
    pub p_value: f64,
    /// `Φ_is = max(0, ⌈K_is π_is − M⌉)`.
    pub lower_bounds: Vec<Vec<u64>>,
    /// `Ψ_is = min(K_is, ⌊K_is π_is + M⌋)`.
    pub upper_bounds: Vec<Vec<u64>>,
}

/// Acceptance bounds and `1 − ∏ Pr(Φ_is ≤ n_is ≤ Ψ_is)` under `θ`.
pub fn gof_at(data: &DeviceData, theta: &ThetaParams, m_stat: f64) -> Result<GofResult> {
    if !(m_stat >= 0.0) || !m_stat.is_finite() {
        return Err(Error::Domain(format!("distance statistic must be finite and nonnegative, got {m_stat}")));
    }
    let plan = data.plan();
    let expected = expected_failures(data, theta)?;
    let mut lower_bounds = vec![vec![0; plan.n_stresses()]; plan.n_times()];
    let mut upper_bounds = lower_bounds.clone();
    let mut inside = 1.0;
    for (i, s) in plan.active_cells() {
        let k = plan.group_size(i, s);
        let mean = expected[i][s];
        let slack = BOUND_SLACK * mean.abs().max(1.0);
        let lo = (mean - m_stat - slack).ceil().max(0.0) as u64;
        let hi = ((mean + m_stat + slack).floor().min(k as f64)).max(0.0) as u64;
        lower_bounds[i][s] = lo.min(k);
        upper_bounds[i][s] = hi;
        let pi = expected[i][s] / k as f64;
        inside *= if lo > hi { 0.0 } else { binomial_interval_prob(lo as i64, hi as i64, k, pi.clamp(0.0, 1.0))? };
    }
    Ok(GofResult { m_stat, p_value: (1.0 - inside).clamp(0.0, 1.0), lower_bounds, upper_bounds })
}

/// Exact p-value of the observed distance `m_stat` for a fit.
pub fn exact_pvalue(data: &DeviceData, fit: &FitResult, m_stat: f64) -> Result<f64> {
    Ok(gof_at(data, &fit.theta_hat, m_stat)?.p_value)
}

/// Distance statistic and its exact p-value in one call.
pub fn goodness_of_fit(data: &DeviceData, fit: &FitResult) -> Result<GofResult> {
    let m = distance_statistic(data, fit)?;
    gof_at(data, &fit.theta_hat, m)
}

/// Estimated MSE `‖θ_β − θ_P‖² + trace(Σ_β(θ_β))/K` for a fitted `θ_β`.
pub fn mse_hat_at(data: &DeviceData, theta_beta: &ThetaParams, beta: TuningBeta, theta_pilot: &ThetaParams) -> Result<f64> {
    theta_pilot.check_plan(data.plan())?;
    let bias: f64 = theta_beta.to_vec().iter().zip(theta_pilot.to_vec()).map(|(a, b)| (a - b).powi(2)).sum();
    let sigma = sandwich_sigma(data.plan(), theta_beta, beta)?.sigma;
    Ok(bias + sigma.trace() / data.plan().total_devices() as f64)
}

/// Fits at `beta` and returns the estimated MSE against the pilot.
pub fn mse_hat(data: &DeviceData, beta: TuningBeta, theta_pilot: &ThetaParams, options: &FitOptions) -> Result<f64> {
    let f = fit(data, beta, options)?;
    mse_hat_at(data, &f.theta_hat, beta, theta_pilot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningCriterion {
    Distance,
    WarwickJones,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningSelection {
    pub grid: Vec<TuningBeta>,
    /// Score per grid point; `None` where the fit was excluded.
    pub scores: Vec<Option<f64>>,
    pub chosen_beta: TuningBeta,
    pub criterion: TuningCriterion,
    pub pilot_beta: Option<TuningBeta>,
    pub excluded: Vec<TuningBeta>,
}

fn check_grid(grid: &[TuningBeta]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("tuning grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[0].value() < w[1].value())) {
        return Err(Error::Argument("tuning grid must be strictly ascending".into()));
    }
    Ok(())
}

fn select(
    grid: &[TuningBeta],
    scores: Vec<Option<f64>>,
    criterion: TuningCriterion,
    pilot_beta: Option<TuningBeta>,
) -> Result<TuningSelection> {
    let mut chosen: Option<(usize, f64)> = None;
    for (k, s) in scores.iter().enumerate() {
        if let Some(v) = s {
            if chosen.is_none_or(|(_, best)| *v < best) {
                chosen = Some((k, *v));
            }
        }
    }
    let (k, _) = chosen.ok_or_else(|| Error::Validation("no grid point produced a usable fit".into()))?;
    let excluded = grid.iter().zip(&scores).filter(|(_, s)| s.is_none()).map(|(b, _)| *b).collect();
    Ok(TuningSelection { grid: grid.to_vec(), scores, chosen_beta: grid[k], criterion, pilot_beta, excluded })
}

/// Chooses the grid point whose fit has the smallest distance statistic.
/// Non-converged fits are excluded with a warning; ties go to the smaller β.
pub fn select_beta_distance(data: &DeviceData, grid: &[TuningBeta], options: &FitOptions) -> Result<TuningSelection> {
    check_grid(grid)?;
    let scores = grid
        .par_iter()
        .map(|&b| {
            let f = fit(data, b, options)?;
            if !f.converged {
                log::warn!("excluding beta={b}: fit did not converge");
                return Ok(None);
            }
            Ok(Some(distance_statistic(data, &f)?))
        })
        .collect::<Result<Vec<_>>>()?;
    select(grid, scores, TuningCriterion::Distance, None)
}

/// Warwick–Jones selection: minimizes the estimated MSE against the fit at
/// `pilot_beta`.
pub fn select_beta_wj(data: &DeviceData, grid: &[TuningBeta], pilot_beta: TuningBeta, options: &FitOptions) -> Result<TuningSelection> {
    check_grid(grid)?;
    let pilot = fit(data, pilot_beta, options)?;
    let scores = grid
        .par_iter()
        .map(|&b| {
            let f = fit(data, b, options)?;
            if !f.converged {
                log::warn!("excluding beta={b}: fit did not converge");
                return Ok(None);
            }
            match mse_hat_at(data, &f.theta_hat, b, &pilot.theta_hat) {
                Ok(v) => Ok(Some(v)),
                Err(Error::IllConditioned { condition }) => {
                    log::warn!("excluding beta={b}: J condition number {condition:.3e}");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    select(grid, scores, TuningCriterion::WarwickJones, Some(pilot_beta))
}
