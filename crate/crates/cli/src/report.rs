//! JSON analysis report.

use oneshot_core::{DataSummary, FitResult, GofResult, McSummary, ReliabilityCI, TuningBeta, TuningSelection, WaldResult};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

/// Significant digits of numbers in non-raw output.
pub const SIGNIFICANT_DIGITS: usize = 6;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    /// SHA-256 of the input file bytes (data or configuration).
    pub input_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(input: &[u8], seed: Option<u64>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            input_sha256: hex::encode(Sha256::digest(input)),
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitEntry {
    #[serde(flatten)]
    pub fit: FitResult,
    /// Asymptotic standard errors `sqrt(diag Σ / K)`, absent when the
    /// sandwich matrix could not be formed.
    pub standard_errors: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CiEntry {
    pub beta: TuningBeta,
    pub time: f64,
    pub stress: Vec<f64>,
    pub intervals: Vec<ReliabilityCI>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Hypothesis {
    pub labels: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaldEntry {
    pub hypothesis: Hypothesis,
    #[serde(flatten)]
    pub result: WaldResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct GofEntry {
    pub beta: TuningBeta,
    #[serde(flatten)]
    pub result: GofResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationRun {
    pub label: String,
    /// Sweep variable and its value for this run, if any.
    pub sweep: Option<SweepPoint>,
    pub total_devices: u64,
    pub contaminated: bool,
    pub bias_mse: Option<McSummary>,
    pub level_power: Option<McSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Simulation {
    pub preset: String,
    pub test_level: Option<f64>,
    pub runs: Vec<SimulationRun>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub command: String,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub confidence_intervals: Vec<CiEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub wald: Vec<WaldEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub goodness_of_fit: Vec<GofEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningSelection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<Simulation>,
}

impl AnalysisReport {
    pub fn new(command: &str, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            provenance,
            data: None,
            fits: Vec::new(),
            confidence_intervals: Vec::new(),
            wald: Vec::new(),
            goodness_of_fit: Vec::new(),
            tuning: None,
            simulation: None,
        }
    }

    /// Pretty JSON, numbers rounded to [`SIGNIFICANT_DIGITS`] unless `raw`.
    pub fn to_json(&self, raw: bool) -> String {
        let mut v = serde_json::to_value(self).expect("report is serializable");
        if !raw {
            round_value(&mut v, SIGNIFICANT_DIGITS);
        }
        let mut s = serde_json::to_string_pretty(&v).expect("value is serializable");
        s.push('\n');
        s
    }
}

/// Rounds `x` to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

fn round_value(v: &mut Value, digits: usize) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x, digits))) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| round_value(x, digits)),
        Value::Object(map) => map.values_mut().for_each(|x| round_value(x, digits)),
        _ => {}
    }
}
