//! TOML experiment definitions for `oneshot simulate`.
//!
//! ```toml
//! preset = "balanced"          # balanced | unbalanced | custom
//! replicates = 200
//! betas = [0.0, 0.6]
//! seed = 42
//! contaminated = true
//!
//! [balanced]
//! k_cell = 50                  # or a list, e.g. [50, 70, 100]
//! b = 0.0
//! c0 = 6.0
//!
//! [study]
//! bias_mse = true
//! level_power = false
//! ```
//!
//! Cell indices in `[custom.contamination]` are zero-based `(time, stress)`.

use oneshot_core::sim::{balanced_design, unbalanced_design, Contamination, SimDesign, POWER_C, UNBALANCED_B, UNBALANCED_C0, WALD_NULL_ALPHA1};
use oneshot_core::{TestPlan, TuningBeta, WeibullTruth};
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Balanced,
    Unbalanced,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Balanced => "balanced",
            Preset::Unbalanced => "unbalanced",
            Preset::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalancedSection {
    pub k_cell: OneOrMany<u64>,
    pub b: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnbalancedSection {
    pub r: OneOrMany<u64>,
    pub b: Option<f64>,
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSection {
    pub b: f64,
    pub c0: f64,
    pub c: Vec<f64>,
}

impl TruthSection {
    fn build(&self) -> Result<WeibullTruth> {
        Ok(WeibullTruth::new(self.b, self.c0, self.c.clone())?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSection {
    pub cell: (usize, usize),
    pub b: f64,
    pub c0: f64,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSection {
    pub times: Vec<f64>,
    pub stresses: Vec<Vec<f64>>,
    /// `group_sizes[i][s]`.
    pub group_sizes: Vec<Vec<u64>>,
    pub truth: TruthSection,
    pub contamination: Option<ContaminationSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "yes")]
    pub bias_mse: bool,
    #[serde(default)]
    pub level_power: bool,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Null value of `α_1`.
    #[serde(default = "default_null_alpha1")]
    pub null_alpha1: f64,
    /// Stress coefficients of the power alternative; `b` and `c0` follow the design.
    #[serde(default = "default_power_c")]
    pub power_c: Vec<f64>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { bias_mse: true, level_power: false, level: default_level(), null_alpha1: default_null_alpha1(), power_c: default_power_c() }
    }
}

fn yes() -> bool {
    true
}

fn default_level() -> f64 {
    0.05
}

fn default_null_alpha1() -> f64 {
    WALD_NULL_ALPHA1
}

fn default_power_c() -> Vec<f64> {
    POWER_C.to_vec()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub preset: Preset,
    pub replicates: Option<usize>,
    pub betas: Option<Vec<f64>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub contaminated: bool,
    pub balanced: Option<BalancedSection>,
    pub unbalanced: Option<UnbalancedSection>,
    pub custom: Option<CustomSection>,
    #[serde(default)]
    pub study: StudySection,
}

/// One design of a (possibly swept) experiment.
#[derive(Debug, Clone)]
pub struct PlannedRun {
    pub label: String,
    pub sweep: Option<(String, f64)>,
    pub design: SimDesign,
}

impl SimConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let section_present = match self.preset {
            Preset::Balanced => self.balanced.is_some(),
            Preset::Unbalanced => self.unbalanced.is_some(),
            Preset::Custom => self.custom.is_some(),
        };
        if !section_present {
            return Err(CliError::Config(format!("preset \"{0}\" requires a [{0}] section", self.preset.name())));
        }
        if self.replicates == Some(0) {
            return Err(CliError::Config("replicates must be at least 1".into()));
        }
        if !(self.study.level > 0.0 && self.study.level < 1.0) {
            return Err(CliError::Config(format!("study.level must be in (0,1), got {}", self.study.level)));
        }
        if !self.study.bias_mse && !self.study.level_power {
            return Err(CliError::Config("study enables neither bias_mse nor level_power".into()));
        }
        Ok(())
    }

    /// Designs to run, with `seed` overriding the configured one.
    pub fn designs(&self, seed: u64) -> Result<Vec<PlannedRun>> {
        let mut runs = match self.preset {
            Preset::Balanced => {
                let sec = self.balanced.as_ref().expect("checked");
                let ks = sec.k_cell.to_vec();
                let sweep = ks.len() > 1;
                ks.into_iter()
                    .map(|k| {
                        Ok(PlannedRun {
                            label: format!("balanced k_cell={k}"),
                            sweep: sweep.then(|| ("k_cell".to_string(), k as f64)),
                            design: balanced_design(k, sec.b, sec.c0, self.contaminated)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Preset::Unbalanced => {
                let sec = self.unbalanced.as_ref().expect("checked");
                let rs = sec.r.to_vec();
                let sweep = rs.len() > 1;
                rs.into_iter()
                    .map(|r| {
                        let mut design = unbalanced_design(r, self.contaminated)?;
                        let (b, c0) = (sec.b.unwrap_or(UNBALANCED_B), sec.c0.unwrap_or(UNBALANCED_C0));
                        design.truth.b = b;
                        design.truth.c0 = c0;
                        if let Some(c) = design.contamination.as_mut() {
                            c.truth_tilde.b = b;
                            c.truth_tilde.c0 = c0;
                        }
                        Ok(PlannedRun { label: format!("unbalanced r={r}"), sweep: sweep.then(|| ("r".to_string(), r as f64)), design })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            Preset::Custom => {
                let sec = self.custom.as_ref().expect("checked");
                let plan = TestPlan::new(sec.times.clone(), sec.stresses.clone(), sec.group_sizes.clone())?;
                let contamination = match (&sec.contamination, self.contaminated) {
                    (Some(c), true) => Some(Contamination { cell: c.cell, truth_tilde: WeibullTruth::new(c.b, c.c0, c.c.clone())? }),
                    (None, true) => return Err(CliError::Config("contaminated = true needs [custom.contamination]".into())),
                    (_, false) => None,
                };
                let design = SimDesign {
                    plan,
                    truth: sec.truth.build()?,
                    contamination,
                    replicates: 1000,
                    betas: oneshot_core::sim::DEFAULT_BETAS.iter().map(|&b| TuningBeta::new(b)).collect::<oneshot_core::Result<_>>()?,
                    seed: 0,
                };
                vec![PlannedRun { label: "custom".into(), sweep: None, design }]
            }
        };
        for run in &mut runs {
            if let Some(n) = self.replicates {
                run.design.replicates = n;
            }
            if let Some(betas) = &self.betas {
                run.design.betas = betas.iter().map(|&b| TuningBeta::new(b)).collect::<oneshot_core::Result<_>>()?;
            }
            run.design.seed = seed;
            run.design.validate()?;
        }
        Ok(runs)
    }
}
