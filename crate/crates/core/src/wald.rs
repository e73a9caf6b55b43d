//! Wald-type tests of affine hypotheses `Lθ = ℓ` built on the weighted
//! minimum DPD estimator, and the asymptotic power approximation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::divergence::TuningBeta;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::inference::{sandwich_sigma, SandwichCov};
use crate::model::{TestPlan, ThetaParams};
use crate::special::{chisq_quantile, chisq_sf, std_normal_cdf};

/// Relative singular-value threshold for the rank check.
const RANK_TOL: f64 = 1e-10;

/// Hypothesis `m(θ) = Lθ − ℓ = 0` with `L` of full row rank.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineConstraint {
    l: DMatrix<f64>,
    ell: DVector<f64>,
    labels: Option<Vec<String>>,
}

impl AffineConstraint {
    pub fn new(rows: Vec<Vec<f64>>, ell: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::DegenerateConstraint("constraint has no rows".into()));
        }
        let n = rows[0].len();
        if n == 0 || rows.iter().any(|row| row.len() != n) {
            return Err(Error::Argument("constraint rows must have equal, nonzero length".into()));
        }
        if ell.len() != r {
            return Err(Error::Argument(format!("right-hand side has length {}, expected {r}", ell.len())));
        }
        if rows.iter().flatten().chain(&ell).any(|v| !v.is_finite()) {
            return Err(Error::Argument("constraint entries must be finite".into()));
        }
        if let Some(lab) = &labels {
            if lab.len() != r {
                return Err(Error::Argument("one label per constraint row is required".into()));
            }
        }
        if r > n {
            return Err(Error::DegenerateConstraint(format!("{r} constraints on {n} parameters")));
        }
        let l = DMatrix::from_row_iterator(r, n, rows.into_iter().flatten());
        let sv = l.clone().svd(false, false).singular_values;
        let max = sv.max();
        if max == 0.0 || sv.iter().any(|s| *s <= RANK_TOL * max) {
            return Err(Error::DegenerateConstraint("constraint matrix is not of full row rank".into()));
        }
        Ok(Self { l, ell: DVector::from_vec(ell), labels })
    }

    /// `θ_index = value`.
    pub fn coordinate(n_params: usize, index: usize, value: f64) -> Result<Self> {
        if index >= n_params {
            return Err(Error::Argument(format!("parameter index {index} out of range")));
        }
        let mut row = vec![0.0; n_params];
        row[index] = 1.0;
        Self::new(vec![row], vec![value], None)
    }

    pub fn rank(&self) -> usize {
        self.l.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.ell
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// `m(θ) = Lθ − ℓ`.
    pub fn residual(&self, theta: &ThetaParams) -> Result<DVector<f64>> {
        if theta.dim() != self.l.ncols() {
            return Err(Error::Argument(format!("constraint has {} columns, θ has {}", self.l.ncols(), theta.dim())));
        }
        Ok(&self.l * theta.to_dvector() - &self.ell)
    }

    /// Inverse of `L Σ Lᵀ`. Singularity is judged on the correlation form
    /// so that rescaling constraint rows does not change the verdict.
    fn middle_inverse(&self, sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let a = &self.l * sigma * self.l.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let d = a.diagonal();
        if d.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::DegenerateConstraint("L Σ Lᵀ has a nonpositive diagonal".into()));
        }
        let inv_sd = d.map(|v| 1.0 / v.sqrt());
        let corr = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * inv_sd[i] * inv_sd[j]);
        let cond = crate::inference::condition_number(&corr);
        if !(cond < crate::inference::MAX_CONDITION) {
            return Err(Error::DegenerateConstraint(format!("L Σ Lᵀ is singular (condition {cond:.3e})")));
        }
        let corr_inv = corr
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::DegenerateConstraint("L Σ Lᵀ is not positive definite".into()))?;
        Ok(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| corr_inv[(i, j)] * inv_sd[i] * inv_sd[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RejectDecision {
    pub level: f64,
    pub critical_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub reject_at: Option<RejectDecision>,
    pub beta: TuningBeta,
}

impl WaldResult {
    /// Adds the decision of the level-`level` test (reject when `W_K > χ²_{r,level}`).
    pub fn at_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::Domain(format!("test level must be in (0,1), got {level}")));
        }
        let critical_value = chisq_quantile(1.0 - level, self.dof as u32)?;
        self.reject_at = Some(RejectDecision { level, critical_value, reject: self.statistic > critical_value });
        Ok(self)
    }
}

/// `W_K = K m(θ̂)ᵀ (L Σ_β Lᵀ)⁻¹ m(θ̂)` referred to `χ²_r`.
pub fn wald_statistic(fit: &FitResult, cov: &SandwichCov, constraint: &AffineConstraint) -> Result<WaldResult> {
    if cov.beta != fit.beta {
        return Err(Error::Argument(format!("covariance computed at beta={}, fit at beta={}", cov.beta, fit.beta)));
    }
    let m = constraint.residual(&fit.theta_hat)?;
    let a_inv = constraint.middle_inverse(&cov.sigma)?;
    let statistic = (fit.data.total_devices as f64 * (m.transpose() * a_inv * &m)[(0, 0)]).max(0.0);
    let dof = constraint.rank();
    Ok(WaldResult { statistic, dof, p_value: chisq_sf(statistic, dof as u32)?, reject_at: None, beta: fit.beta })
}

/// `ℓ_β(θ, θ*) = m(θ)ᵀ (L Σ_β(θ*) Lᵀ)⁻¹ m(θ)`.
pub fn ell_beta(theta: &ThetaParams, theta_star: &ThetaParams, plan: &TestPlan, constraint: &AffineConstraint, beta: TuningBeta) -> Result<f64> {
    let sigma = sandwich_sigma(plan, theta_star, beta)?.sigma;
    let m = constraint.residual(theta)?;
    Ok((m.transpose() * constraint.middle_inverse(&sigma)? * &m)[(0, 0)])
}

struct PowerParts {
    ell: f64,
    sigma2: f64,
}

fn power_parts(theta_star: &ThetaParams, plan: &TestPlan, constraint: &AffineConstraint, beta: TuningBeta) -> Result<PowerParts> {
    let sigma = sandwich_sigma(plan, theta_star, beta)?.sigma;
    let m = constraint.residual(theta_star)?;
    let a_inv = constraint.middle_inverse(&sigma)?;
    let grad = constraint.matrix().transpose() * (&a_inv * &m) * 2.0;
    Ok(PowerParts {
        ell: (m.transpose() * &a_inv * &m)[(0, 0)],
        sigma2: (grad.transpose() * sigma * &grad)[(0, 0)].max(0.0),
    })
}

/// `σ²_{W,β}(θ*) = gᵀ Σ_β(θ*) g` with `g = ∂ℓ_β/∂θ = 2Lᵀ(LΣLᵀ)⁻¹m(θ*)`.
pub fn power_sigma(theta_star: &ThetaParams, plan: &TestPlan, constraint: &AffineConstraint, beta: TuningBeta) -> Result<f64> {
    Ok(power_parts(theta_star, plan, constraint, beta)?.sigma2)
}

/// Approximate power `1 − Φ((χ²_{r,level}/√K − √K ℓ_β(θ*,θ*))/σ)` at an
/// alternative `θ*`, with `K` the total number of devices in `plan`.
pub fn power_approx(theta_star: &ThetaParams, plan: &TestPlan, constraint: &AffineConstraint, beta: TuningBeta, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("test level must be in (0,1), got {level}")));
    }
    let parts = power_parts(theta_star, plan, constraint, beta)?;
    if !(parts.sigma2 > 0.0) {
        return Err(Error::PowerUndefined);
    }
    let k = plan.total_devices() as f64;
    let crit = chisq_quantile(1.0 - level, constraint.rank() as u32)?;
    let z = (crit / k.sqrt() - k.sqrt() * parts.ell) / parts.sigma2.sqrt();
    Ok(1.0 - std_normal_cdf(z))
}
