//! Sandwich covariance of the weighted minimum DPD estimator and confidence
//! intervals for fitted reliabilities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::divergence::{clamp_prob, TuningBeta};
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::model::{cell_sensitivity, TestPlan, ThetaParams};
use crate::special::std_normal_quantile;

/// Largest condition number of `J` accepted before inversion.
pub const MAX_CONDITION: f64 = 1e12;

/// Accumulates `Σ (K_is/K) κ(R_is) d dᵀ` with `d = ∂R_is/∂θ`.
fn assemble(plan: &TestPlan, theta: &ThetaParams, kernel: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    theta.check_plan(plan)?;
    let n = theta.dim();
    let total = plan.total_devices() as f64;
    let mut m = DMatrix::zeros(n, n);
    for (i, s) in plan.active_cells() {
        let sens = cell_sensitivity(theta, i, plan.stress(s))?;
        let d = DVector::from_vec(sens.grad);
        let w = plan.group_size(i, s) as f64 / total * kernel(clamp_prob(sens.reliability));
        m.ger(w, &d, &d, 1.0);
    }
    Ok(m)
}

/// `J_β(θ) = Σ (K_is/K) Δ_is [(1−R)^{β−1} + R^{β−1}]`.
pub fn matrix_j(plan: &TestPlan, theta: &ThetaParams, beta: TuningBeta) -> Result<DMatrix<f64>> {
    let b = beta.value();
    assemble(plan, theta, |r| (1.0 - r).powf(b - 1.0) + r.powf(b - 1.0))
}

/// `K_β(θ) = Σ (K_is/K) Δ_is (1−R)R [(1−R)^{β−1} + R^{β−1}]²`.
pub fn matrix_k(plan: &TestPlan, theta: &ThetaParams, beta: TuningBeta) -> Result<DMatrix<f64>> {
    let b = beta.value();
    assemble(plan, theta, |r| (1.0 - r) * r * ((1.0 - r).powf(b - 1.0) + r.powf(b - 1.0)).powi(2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCov {
    pub j_mat: DMatrix<f64>,
    pub k_mat: DMatrix<f64>,
    /// `J⁻¹ K J⁻¹`, the covariance of `√K(θ̂_β − θ)`.
    pub sigma: DMatrix<f64>,
    pub beta: TuningBeta,
    /// Spectral condition number of `J`.
    pub condition: f64,
}

impl SandwichCov {
    /// Standard errors of the parameters on the finite-sample scale.
    pub fn standard_errors(&self, total_devices: u64) -> Vec<f64> {
        self.sigma.diagonal().iter().map(|v| (v.max(0.0) / total_devices as f64).sqrt()).collect()
    }
}

/// Row-major copy of a matrix.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn condition_number(sym: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(sym.clone()).eigenvalues;
    let max = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if min <= 0.0 || max == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `Σ_β = J⁻¹ K J⁻¹` at `θ`, inverting the symmetrized `J` by Cholesky.
pub fn sandwich_sigma(plan: &TestPlan, theta: &ThetaParams, beta: TuningBeta) -> Result<SandwichCov> {
    let j_mat = symmetrize(&matrix_j(plan, theta, beta)?);
    let k_mat = symmetrize(&matrix_k(plan, theta, beta)?);
    let condition = condition_number(&j_mat);
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let chol = j_mat.clone().cholesky().ok_or(Error::IllConditioned { condition })?;
    let j_inv = chol.inverse();
    let sigma = symmetrize(&(&j_inv * &k_mat * &j_inv));
    Ok(SandwichCov { j_mat, k_mat, sigma, beta, condition })
}

/// Delta-method standard error of `R(IT_i, x0; θ̂)`, `sqrt(Pᵀ Σ P / K)`.
pub fn reliability_se(fit: &FitResult, cov: &SandwichCov, i: usize, x0: &[f64], plan: &TestPlan) -> Result<f64> {
    fit.theta_hat.check_plan(plan)?;
    if i >= plan.n_times() {
        return Err(Error::Argument(format!("inspection index {i} out of range")));
    }
    if x0.len() != plan.n_factors() {
        return Err(Error::Argument(format!("stress vector has {} factors, expected {}", x0.len(), plan.n_factors())));
    }
    let p = DVector::from_vec(cell_sensitivity(&fit.theta_hat, i, x0)?.grad);
    let var = (p.transpose() * &cov.sigma * &p)[(0, 0)] / plan.total_devices() as f64;
    Ok(var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Plain,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReliabilityCI {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    pub se: f64,
    /// Set when a plain interval had to be clipped to `[0, 1]`.
    pub clipped: bool,
}

fn z_for(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level must be in (0,1), got {level}")));
    }
    std_normal_quantile(0.5 + level / 2.0)
}

fn estimate_and_se(fit: &FitResult, cov: &SandwichCov, i: usize, x0: &[f64], plan: &TestPlan) -> Result<(f64, f64)> {
    let se = reliability_se(fit, cov, i, x0, plan)?;
    let r = cell_sensitivity(&fit.theta_hat, i, x0)?.reliability;
    Ok((r, se))
}

/// Wald interval `R̂ ± z se`, clipped to `[0, 1]`.
pub fn ci_plain(fit: &FitResult, cov: &SandwichCov, i: usize, x0: &[f64], plan: &TestPlan, level: f64) -> Result<ReliabilityCI> {
    let z = z_for(level)?;
    let (r, se) = estimate_and_se(fit, cov, i, x0, plan)?;
    let (lo, hi) = (r - z * se, r + z * se);
    Ok(ReliabilityCI {
        estimate: r,
        lower: lo.max(0.0),
        upper: hi.min(1.0),
        level,
        method: CiMethod::Plain,
        se,
        clipped: lo < 0.0 || hi > 1.0,
    })
}

/// Logit-transformed interval `(R̂/(R̂+(1−R̂)T), R̂/(R̂+(1−R̂)/T))` with
/// `T = exp(z se / (R̂(1−R̂)))`.
pub fn ci_logit(fit: &FitResult, cov: &SandwichCov, i: usize, x0: &[f64], plan: &TestPlan, level: f64) -> Result<ReliabilityCI> {
    let z = z_for(level)?;
    let (r, se) = estimate_and_se(fit, cov, i, x0, plan)?;
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::BoundaryEstimate(r));
    }
    let t = (z * se / (r * (1.0 - r))).exp();
    Ok(ReliabilityCI {
        estimate: r,
        lower: r / (r + (1.0 - r) * t),
        upper: r / (r + (1.0 - r) / t),
        level,
        method: CiMethod::Logit,
        se,
        clipped: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::log_likelihood;
    use crate::estimation::{fit, FitOptions};
    use crate::fixtures::electric_current;
    use crate::model::DeviceData;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn beta(b: f64) -> TuningBeta {
        TuningBeta::new(b).unwrap()
    }

    fn random_theta(rng: &mut ChaCha8Rng) -> ThetaParams {
        ThetaParams::new(
            (0..3).map(|_| rng.random_range(-3.0..1.0)).collect(),
            (0..2).map(|_| rng.random_range(-0.01..0.04)).collect(),
        )
        .unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn k_equals_j_at_mle() {
        let plan = electric_current().plan().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let theta = random_theta(&mut rng);
            let j = matrix_j(&plan, &theta, TuningBeta::MLE).unwrap();
            let k = matrix_k(&plan, &theta, TuningBeta::MLE).unwrap();
            assert!(max_abs(&(&j - &k)) <= 1e-10 * max_abs(&j).max(1.0));
        }
    }

    #[test]
    fn matrices_are_symmetric_psd() {
        let plan = electric_current().plan().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let theta = random_theta(&mut rng);
            let b = beta(rng.random_range(0.0..1.0));
            for m in [matrix_j(&plan, &theta, b).unwrap(), matrix_k(&plan, &theta, b).unwrap()] {
                assert!(max_abs(&(&m - m.transpose())) <= 1e-10);
                let min_eig = SymmetricEigen::new(m.clone()).eigenvalues.min();
                assert!(min_eig >= -1e-10 * max_abs(&m).max(1.0), "{min_eig}");
            }
        }
    }

    #[test]
    fn matches_naive_accumulation() {
        let plan = electric_current().plan().clone();
        let theta = ThetaParams::new(vec![0.13, 0.53, -2.18], vec![0.023, 0.018]).unwrap();
        let b = 0.4;
        let j = matrix_j(&plan, &theta, beta(b)).unwrap();
        let n = theta.dim();
        let mut naive = vec![vec![0.0; n]; n];
        for i in 0..3 {
            for s in 0..4 {
                let sens = cell_sensitivity(&theta, i, plan.stress(s)).unwrap();
                let r = sens.reliability;
                let kern = (1.0 - r).powf(b - 1.0) + r.powf(b - 1.0);
                for a in 0..n {
                    for c in 0..n {
                        naive[a][c] += plan.group_size(i, s) as f64 / plan.total_devices() as f64 * kern * sens.grad[a] * sens.grad[c];
                    }
                }
            }
        }
        for a in 0..n {
            for c in 0..n {
                assert!((j[(a, c)] - naive[a][c]).abs() <= 1e-12 * naive[a][c].abs().max(1.0));
            }
        }
    }

    #[test]
    fn single_cell_k_has_rank_one() {
        let plan = TestPlan::balanced(vec![2.0, 5.0], vec![vec![1.0]], 10).unwrap();
        let plan = TestPlan::new(plan.inspection_times().to_vec(), plan.stress_levels().to_vec(), vec![vec![10], vec![0]]).unwrap();
        let theta = ThetaParams::new(vec![-1.0, -0.5], vec![0.2]).unwrap();
        let k = matrix_k(&plan, &theta, beta(0.3)).unwrap();
        let eig = SymmetricEigen::new(k.clone()).eigenvalues;
        let big = eig.iter().filter(|v| v.abs() > 1e-12 * max_abs(&k)).count();
        assert!(big <= 1);
    }

    #[test]
    fn j_is_fisher_information_at_the_mle() {
        let data = electric_current();
        let f = fit(&data, TuningBeta::MLE, &FitOptions::default()).unwrap();
        let plan = data.plan();
        let j = matrix_j(plan, &f.theta_hat, TuningBeta::MLE).unwrap();
        // Expected information: Σ K_is δδᵀ / (R(1−R)), divided by K.
        let mut fisher = DMatrix::zeros(5, 5);
        for (i, s) in plan.active_cells() {
            let sens = cell_sensitivity(&f.theta_hat, i, plan.stress(s)).unwrap();
            let d = DVector::from_vec(sens.grad);
            let r = sens.reliability;
            fisher.ger(plan.group_size(i, s) as f64 / (r * (1.0 - r)), &d, &d, 1.0);
        }
        fisher /= plan.total_devices() as f64;
        assert!(max_abs(&(&j - &fisher)) <= 1e-12 * max_abs(&fisher));
        // Smoke check against the observed information from finite differences.
        let x = f.theta_hat.to_vec();
        let nll = |v: &[f64]| -log_likelihood(&data, &ThetaParams::from_slice(v, 3).unwrap()).unwrap() / plan.total_devices() as f64;
        let mut hess = DMatrix::zeros(5, 5);
        let h = [1e-4, 1e-4, 1e-4, 1e-6, 1e-6];
        for a in 0..5 {
            for c in 0..5 {
                let at = |da: f64, dc: f64| {
                    let mut v = x.clone();
                    v[a] += da;
                    v[c] += dc;
                    nll(&v)
                };
                hess[(a, c)] = (at(h[a], h[c]) - at(h[a], -h[c]) - at(-h[a], h[c]) + at(-h[a], -h[c])) / (4.0 * h[a] * h[c]);
            }
        }
        let rel = max_abs(&(&hess - &j)) / max_abs(&j);
        assert!(rel < 0.25, "observed vs expected information differ by {rel}");
    }

    #[test]
    fn sandwich_at_mle_is_inverse_j() {
        let plan = electric_current().plan().clone();
        let theta = ThetaParams::new(vec![0.13, 0.53, -2.18], vec![0.023, 0.018]).unwrap();
        let cov = sandwich_sigma(&plan, &theta, TuningBeta::MLE).unwrap();
        let prod = &cov.sigma * &cov.j_mat;
        assert!(max_abs(&(prod - DMatrix::identity(5, 5))) < 1e-8);
        assert!(max_abs(&(&cov.sigma - cov.sigma.transpose())) <= 1e-8);
        let cov = sandwich_sigma(&plan, &theta, beta(0.6)).unwrap();
        let jinv = cov.j_mat.clone().try_inverse().unwrap();
        let resid = &cov.sigma - &jinv * &cov.k_mat * &jinv;
        assert!(max_abs(&resid) <= 1e-8 * max_abs(&cov.sigma));
    }

    #[test]
    fn ill_conditioned_j_is_reported() {
        // One stress level cannot identify α.
        let plan = TestPlan::balanced(vec![2.0, 5.0], vec![vec![1.0]], 10).unwrap();
        let plan = TestPlan::new(plan.inspection_times().to_vec(), vec![vec![0.0]], plan.group_sizes().to_vec()).unwrap();
        let theta = ThetaParams::new(vec![-1.0, -0.5], vec![0.0]).unwrap();
        assert!(matches!(sandwich_sigma(&plan, &theta, TuningBeta::MLE), Err(Error::IllConditioned { .. })));
    }

    fn ec_fit(b: f64) -> (DeviceData, FitResult, SandwichCov) {
        let data = electric_current();
        let f = fit(&data, beta(b), &FitOptions::default()).unwrap();
        let cov = sandwich_sigma(data.plan(), &f.theta_hat, f.beta).unwrap();
        (data, f, cov)
    }

    #[test]
    fn intervals_are_ordered_and_nested() {
        let (data, f, cov) = ec_fit(0.0);
        let plan = data.plan();
        let mut last_width = 0.0;
        for level in [0.5, 0.8, 0.9, 0.95, 0.99] {
            let logit = ci_logit(&f, &cov, 0, &[25.0, 35.0], plan, level).unwrap();
            assert!(0.0 < logit.lower && logit.lower <= logit.estimate && logit.estimate <= logit.upper && logit.upper < 1.0);
            let plain = ci_plain(&f, &cov, 0, &[25.0, 35.0], plan, level).unwrap();
            let width = plain.upper - plain.lower;
            assert!(width > last_width);
            last_width = width;
        }
        assert!(ci_plain(&f, &cov, 0, &[25.0, 35.0], plan, 1.0).is_err());
    }

    #[test]
    fn zero_covariance_gives_degenerate_intervals() {
        let (data, f, mut cov) = ec_fit(0.0);
        cov.sigma.fill(0.0);
        let plan = data.plan();
        for ci in [
            ci_plain(&f, &cov, 2, &[25.0, 35.0], plan, 0.95).unwrap(),
            ci_logit(&f, &cov, 2, &[25.0, 35.0], plan, 0.95).unwrap(),
        ] {
            assert_eq!(ci.se, 0.0);
            assert_eq!((ci.lower, ci.upper), (ci.estimate, ci.estimate));
        }
    }

    #[test]
    fn se_scales_with_root_sample_size() {
        let data = electric_current();
        let theta = ThetaParams::new(vec![0.13, 0.53, -2.18], vec![0.023, 0.018]).unwrap();
        let f = FitResult {
            theta_hat: theta.clone(),
            beta: TuningBeta::MLE,
            objective: 0.0,
            gradient_norm: 0.0,
            converged: true,
            iterations: 0,
            data: crate::estimation::DataSummary::of(data.plan()),
            warnings: vec![],
        };
        let se = |r: u64| {
            let plan = data.plan().scaled(r).unwrap();
            let cov = sandwich_sigma(&plan, &theta, beta(0.3)).unwrap();
            reliability_se(&f, &cov, 1, &[25.0, 35.0], &plan).unwrap()
        };
        let base = se(1);
        for r in [4, 9] {
            assert!((se(r) * (r as f64).sqrt() / base - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn plain_and_logit_midpoints_converge() {
        let theta = ThetaParams::new(vec![-0.5, 0.0, -1.5], vec![0.02, 0.01]).unwrap();
        let base = electric_current().plan().clone();
        let mut gaps = Vec::new();
        for k in [100u64, 10_000, 1_000_000] {
            let plan = base.scaled(k / 10).unwrap();
            let cov = sandwich_sigma(&plan, &theta, TuningBeta::MLE).unwrap();
            let f = FitResult {
                theta_hat: theta.clone(),
                beta: TuningBeta::MLE,
                objective: 0.0,
                gradient_norm: 0.0,
                converged: true,
                iterations: 0,
                data: crate::estimation::DataSummary::of(&plan),
                warnings: vec![],
            };
            let p = ci_plain(&f, &cov, 1, &[25.0, 35.0], &plan, 0.95).unwrap();
            let l = ci_logit(&f, &cov, 1, &[25.0, 35.0], &plan, 0.95).unwrap();
            gaps.push(((p.lower + p.upper) - (l.lower + l.upper)).abs() / 2.0);
        }
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    }
}
