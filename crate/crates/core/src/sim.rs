//! Monte Carlo experiments with Weibull-generated one-shot data: bias and MSE
//! of the estimators, and empirical level and power of the Wald-type test.
//!
//! Cell counts are drawn directly as `Binomial(K_is, F(IT_i; x_s))`. Every
//! (replicate, cell) pair owns a ChaCha stream keyed by the master seed, so a
//! run is reproducible whatever the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::divergence::TuningBeta;
use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions};
use crate::inference::sandwich_sigma;
use crate::model::{weibull_to_ph, DeviceData, TestPlan, ThetaParams, WeibullTruth};
use crate::wald::{wald_statistic, AffineConstraint};

/// Inspection times of the simulation designs.
pub const DESIGN_TIMES: [f64; 3] = [2.0, 5.0, 8.0];
/// Stress conditions `(x1, x2)` of the simulation designs.
pub const DESIGN_STRESSES: [[f64; 2]; 4] = [[55.0, 70.0], [55.0, 100.0], [85.0, 70.0], [85.0, 100.0]];
/// Zero-based outlying cell: last inspection time, last stress condition.
pub const CONTAMINATED_CELL: (usize, usize) = (2, 3);
/// Null value of `α_1` in the level study.
pub const WALD_NULL_ALPHA1: f64 = 0.04946;
/// Stress coefficients of the alternative in the power study (`α_1 = 0.05276`).
pub const POWER_C: [f64; 2] = [-0.032, -0.028];
/// Normal operating condition at which `R(15, x0)` is reported.
pub const NORMAL_CONDITION: [f64; 2] = [25.0, 35.0];
/// Default tuning parameters of the experiments.
pub const DEFAULT_BETAS: [f64; 4] = [0.0, 0.2, 0.4, 0.6];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contamination {
    pub cell: (usize, usize),
    pub truth_tilde: WeibullTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimDesign {
    pub plan: TestPlan,
    pub truth: WeibullTruth,
    pub contamination: Option<Contamination>,
    pub replicates: usize,
    pub betas: Vec<TuningBeta>,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Validation("at least one replicate is required".into()));
        }
        if self.betas.is_empty() {
            return Err(Error::Validation("at least one tuning parameter is required".into()));
        }
        if self.truth.c.len() != self.plan.n_factors() {
            return Err(Error::Validation("truth has the wrong number of stress coefficients".into()));
        }
        if let Some(c) = &self.contamination {
            let (i, s) = c.cell;
            if i >= self.plan.n_times() || s >= self.plan.n_stresses() {
                return Err(Error::Validation(format!("contaminated cell ({i},{s}) outside the plan")));
            }
            if c.truth_tilde.c.len() != self.plan.n_factors() {
                return Err(Error::Validation("contaminating truth has the wrong number of stress coefficients".into()));
            }
        }
        Ok(())
    }

    /// Proportional hazards parameters implied by the Weibull truth.
    pub fn true_theta(&self) -> Result<ThetaParams> {
        weibull_to_ph(&self.truth, &self.plan)
    }

    fn failure_probs(&self) -> Result<Vec<Vec<f64>>> {
        let plan = &self.plan;
        (0..plan.n_times())
            .map(|i| {
                (0..plan.n_stresses())
                    .map(|s| {
                        let truth = match &self.contamination {
                            Some(c) if c.cell == (i, s) => &c.truth_tilde,
                            _ => &self.truth,
                        };
                        truth.failure_prob(plan.inspection_times()[i], plan.stress(s))
                    })
                    .collect()
            })
            .collect()
    }
}

fn design_plan(sizes: Vec<Vec<u64>>) -> Result<TestPlan> {
    TestPlan::new(DESIGN_TIMES.to_vec(), DESIGN_STRESSES.iter().map(|x| x.to_vec()).collect(), sizes)
}

fn default_betas() -> Vec<TuningBeta> {
    DEFAULT_BETAS.iter().map(|&b| TuningBeta::new(b).expect("valid default beta")).collect()
}

/// Contaminating shape for a given shape parameter `b`.
fn paired_b_tilde(b: f64) -> f64 {
    if b < 0.25 {
        0.05
    } else {
        0.45
    }
}

/// Balanced design with `k_cell` devices per cell, truth `(b, c0, c = (−0.03, −0.03))`
/// and, if requested, the outlying last cell drawn with `c̃ = (−0.027, −0.027)`.
pub fn balanced_design(k_cell: u64, b: f64, c0: f64, contaminated: bool) -> Result<SimDesign> {
    let plan = design_plan(vec![vec![k_cell; 4]; 3])?;
    let contamination = if contaminated {
        Some(Contamination { cell: CONTAMINATED_CELL, truth_tilde: WeibullTruth::new(paired_b_tilde(b), c0, vec![-0.027, -0.027])? })
    } else {
        None
    };
    Ok(SimDesign {
        plan,
        truth: WeibullTruth::new(b, c0, vec![-0.03, -0.03])?,
        contamination,
        replicates: 1000,
        betas: default_betas(),
        seed: 0,
    })
}

/// Shape and intercept of the unbalanced design.
pub const UNBALANCED_B: f64 = 0.5;
pub const UNBALANCED_C0: f64 = 6.5;

/// Unbalanced design with group sizes `(10r, 15r, 20r, 30r)` at every
/// inspection time. Contamination changes only `c̃_2 = −0.027` in the outlying cell.
pub fn unbalanced_design(r: u64, contaminated: bool) -> Result<SimDesign> {
    if r == 0 {
        return Err(Error::Validation("replication factor must be positive".into()));
    }
    let plan = design_plan(vec![vec![10 * r, 15 * r, 20 * r, 30 * r]; 3])?;
    let contamination = if contaminated {
        Some(Contamination { cell: CONTAMINATED_CELL, truth_tilde: WeibullTruth::new(UNBALANCED_B, UNBALANCED_C0, vec![-0.03, -0.027])? })
    } else {
        None
    };
    Ok(SimDesign {
        plan,
        truth: WeibullTruth::new(UNBALANCED_B, UNBALANCED_C0, vec![-0.03, -0.03])?,
        contamination,
        replicates: 500,
        betas: default_betas(),
        seed: 0,
    })
}

/// Generator for one (replicate, cell) pair: the master seed is the ChaCha
/// key and the pair index selects the stream.
fn cell_rng(seed: u64, replicate: usize, cell: usize, n_cells: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 * n_cells as u64 + cell as u64);
    rng
}

fn draw(design: &SimDesign, probs: &[Vec<f64>], replicate: usize) -> Result<DeviceData> {
    let plan = &design.plan;
    let n_cells = plan.n_times() * plan.n_stresses();
    let failures = (0..plan.n_times())
        .map(|i| {
            (0..plan.n_stresses())
                .map(|s| {
                    let k = plan.group_size(i, s);
                    let dist = Binomial::new(k, probs[i][s]).map_err(|e| Error::Domain(e.to_string()))?;
                    Ok(dist.sample(&mut cell_rng(design.seed, replicate, i * plan.n_stresses() + s, n_cells)))
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<u64>>>>()?;
    DeviceData::new(plan.clone(), failures)
}

/// Cell counts of replicate `replicate`; deterministic in `(design.seed, replicate)`.
pub fn generate_dataset(design: &SimDesign, replicate: usize) -> Result<DeviceData> {
    design.validate()?;
    draw(design, &design.failure_probs()?, replicate)
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSummary {
    pub beta: TuningBeta,
    /// Replicates that contributed to the statistics below.
    pub used: usize,
    /// Replicates excluded because the fit (or its covariance) failed.
    pub failed: usize,
    /// Mean of `θ̂ − θ*`, ordered `η_1..η_I, α_1..α_J`; empty for test studies.
    pub bias: Vec<f64>,
    pub mse: Vec<f64>,
    pub level: Option<f64>,
    pub power: Option<f64>,
    /// Replicates used for the power estimate.
    pub power_used: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub replicates: usize,
    pub seed: u64,
    pub parameter_names: Vec<String>,
    pub true_theta: ThetaParams,
    /// `R(15, x0)` under the Weibull truth; the fitted model is not evaluated there.
    pub true_reliability_15: f64,
    pub per_beta: Vec<BetaSummary>,
}

fn parameter_names(plan: &TestPlan) -> Vec<String> {
    (1..=plan.n_times()).map(|i| format!("eta{i}")).chain((1..=plan.n_factors()).map(|j| format!("alpha{j}"))).collect()
}

fn summary_shell(design: &SimDesign) -> Result<McSummary> {
    let x0: Vec<f64> = if design.plan.n_factors() == NORMAL_CONDITION.len() { NORMAL_CONDITION.to_vec() } else { vec![0.0; design.plan.n_factors()] };
    Ok(McSummary {
        replicates: design.replicates,
        seed: design.seed,
        parameter_names: parameter_names(&design.plan),
        true_theta: design.true_theta()?,
        true_reliability_15: design.truth.survival(15.0, &x0)?,
        per_beta: Vec::new(),
    })
}

/// Runs `f` on every replicate in parallel and returns the results in
/// replicate order.
fn per_replicate<T: Send>(design: &SimDesign, f: impl Fn(&DeviceData) -> T + Sync) -> Result<Vec<T>> {
    let probs = design.failure_probs()?;
    (0..design.replicates)
        .into_par_iter()
        .map(|rep| draw(design, &probs, rep).map(|d| f(&d)))
        .collect()
}

/// Bias and MSE of `θ̂_β` for every β of the design, over converged replicates.
pub fn mc_bias_mse(design: &SimDesign, options: &FitOptions) -> Result<McSummary> {
    design.validate()?;
    let mut summary = summary_shell(design)?;
    let truth = summary.true_theta.to_vec();
    let estimates = per_replicate(design, |data| {
        design
            .betas
            .iter()
            .map(|&b| fit(data, b, options).ok().filter(|f| f.converged).map(|f| f.theta_hat.to_vec()))
            .collect::<Vec<_>>()
    })?;
    for (k, &beta) in design.betas.iter().enumerate() {
        let mut bias = vec![KahanSum::default(); truth.len()];
        let mut sq = vec![KahanSum::default(); truth.len()];
        let mut used = 0;
        for est in estimates.iter().filter_map(|e| e[k].as_ref()) {
            used += 1;
            for (p, (e, t)) in est.iter().zip(&truth).enumerate() {
                bias[p].add(e - t);
                sq[p].add((e - t).powi(2));
            }
        }
        let failed = design.replicates - used;
        if failed > 0 {
            log::warn!("beta={beta}: {failed} of {} replicates excluded", design.replicates);
        }
        let mean = |acc: &Vec<KahanSum>| acc.iter().map(|a| if used > 0 { a.sum / used as f64 } else { f64::NAN }).collect();
        summary.per_beta.push(BetaSummary {
            beta,
            used,
            failed,
            bias: mean(&bias),
            mse: mean(&sq),
            level: None,
            power: None,
            power_used: None,
        });
    }
    Ok(summary)
}

/// Per-β rejection decisions for one dataset; `None` where the test could not be formed.
fn decisions(data: &DeviceData, betas: &[TuningBeta], constraint: &AffineConstraint, critical: f64, options: &FitOptions) -> Vec<Option<bool>> {
    betas
        .iter()
        .map(|&b| {
            let f = fit(data, b, options).ok().filter(|f| f.converged)?;
            let cov = sandwich_sigma(data.plan(), &f.theta_hat, b).ok()?;
            let w = wald_statistic(&f, &cov, constraint).ok()?;
            Some(w.statistic > critical)
        })
        .collect()
}

fn rejection_rates(outcomes: &[Vec<Option<bool>>], k: usize) -> (usize, f64) {
    let used: Vec<bool> = outcomes.iter().filter_map(|o| o[k]).collect();
    let rate = if used.is_empty() { f64::NAN } else { used.iter().filter(|r| **r).count() as f64 / used.len() as f64 };
    (used.len(), rate)
}

/// Seed of the power study, kept apart from the level study's streams.
fn power_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Empirical level of the Wald-type test of `constraint` at nominal `level`
/// under the design truth and, when `power_truth` is given, empirical power
/// under that alternative (same plan and contamination).
pub fn mc_level_power(
    design: &SimDesign,
    constraint: &AffineConstraint,
    level: f64,
    power_truth: Option<&WeibullTruth>,
    options: &FitOptions,
) -> Result<McSummary> {
    design.validate()?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("test level must be in (0,1), got {level}")));
    }
    let critical = crate::special::chisq_quantile(1.0 - level, constraint.rank() as u32)?;
    let mut summary = summary_shell(design)?;
    let null = per_replicate(design, |d| decisions(d, &design.betas, constraint, critical, options))?;
    let alt = match power_truth {
        Some(t) => {
            let alt_design = SimDesign { truth: t.clone(), seed: power_seed(design.seed), ..design.clone() };
            alt_design.validate()?;
            Some(per_replicate(&alt_design, |d| decisions(d, &design.betas, constraint, critical, options))?)
        }
        None => None,
    };
    for (k, &beta) in design.betas.iter().enumerate() {
        let (used, rate) = rejection_rates(&null, k);
        let (power_used, power) = match &alt {
            Some(a) => {
                let (u, p) = rejection_rates(a, k);
                (Some(u), Some(p))
            }
            None => (None, None),
        };
        summary.per_beta.push(BetaSummary {
            beta,
            used,
            failed: design.replicates - used,
            bias: Vec::new(),
            mse: Vec::new(),
            level: Some(rate),
            power,
            power_used,
        });
    }
    Ok(summary)
}

/// The default null hypothesis `α_1 = 0.04946` for a design.
pub fn default_wald_constraint(plan: &TestPlan) -> Result<AffineConstraint> {
    AffineConstraint::new(
        vec![(0..plan.n_params()).map(|k| if k == plan.n_times() { 1.0 } else { 0.0 }).collect()],
        vec![WALD_NULL_ALPHA1],
        Some(vec!["alpha1".into()]),
    )
}

/// Alternative truth of the power study for a design's `(b, c0)`.
pub fn default_power_truth(design: &SimDesign) -> Result<WeibullTruth> {
    WeibullTruth::new(design.truth.b, design.truth.c0, POWER_C.to_vec())
}
