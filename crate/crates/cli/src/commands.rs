use std::fmt::Write as _;
use std::path::Path;

use oneshot_core::adequacy::{default_grid, goodness_of_fit, select_beta_distance, select_beta_wj};
use oneshot_core::estimation::fit;
use oneshot_core::inference::{ci_logit, ci_plain, matrix_rows, sandwich_sigma};
use oneshot_core::io::read_device_csv;
use oneshot_core::sim::{mc_bias_mse, mc_level_power};
use oneshot_core::{AffineConstraint, DataSummary, DeviceData, FitOptions, McSummary, TuningBeta, WeibullTruth};

use crate::args::{CiArgs, CriterionArg, DataArgs, FitArgs, MethodArg, SimulateArgs, TuneArgs, WaldArgs, DEFAULT_SEED};
use crate::config::SimConfig;
use crate::error::{CliError, Result};
use crate::hypothesis::{parameter_names, parse_row};
use crate::report::{AnalysisReport, CiEntry, FitEntry, GofEntry, Hypothesis, Provenance, Simulation, SimulationRun, SweepPoint, WaldEntry};

/// Result of a command: the report, optional plot CSV, and the
/// non-convergence message that turns the exit status to 3.
#[derive(Debug)]
pub struct Outcome {
    pub report: AnalysisReport,
    pub plot_csv: Option<String>,
    pub non_convergence: Option<String>,
}

impl Outcome {
    fn done(report: AnalysisReport) -> Self {
        Self { report, plot_csv: None, non_convergence: None }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path.display().to_string(), e))
}

fn load(args: &DataArgs) -> Result<(DeviceData, Vec<u8>, FitOptions)> {
    let bytes = read_input(&args.data)?;
    let data = read_device_csv(bytes.as_slice())?;
    let options = FitOptions { max_iterations: args.max_iterations, gradient_tolerance: args.tolerance, ..FitOptions::default() };
    options.validate()?;
    Ok((data, bytes, options))
}

fn betas(values: &[f64]) -> Result<Vec<TuningBeta>> {
    if values.is_empty() {
        return Err(CliError::Usage("at least one --beta is required".into()));
    }
    Ok(values.iter().map(|&b| TuningBeta::new(b)).collect::<oneshot_core::Result<_>>()?)
}

fn not_converged(entries: &[FitEntry]) -> Option<String> {
    let bad: Vec<String> = entries.iter().filter(|e| !e.fit.converged).map(|e| e.fit.beta.to_string()).collect();
    (!bad.is_empty()).then(|| format!("optimizer did not converge for beta = {}", bad.join(", ")))
}

/// Fits every requested β; standard errors are attached to converged fits.
fn fit_all(data: &DeviceData, args: &FitArgs, options: &FitOptions) -> Result<Vec<FitEntry>> {
    betas(&args.beta)?
        .into_iter()
        .map(|b| {
            let f = fit(data, b, options)?;
            let standard_errors = if f.converged {
                sandwich_sigma(data.plan(), &f.theta_hat, b).ok().map(|c| c.standard_errors(data.plan().total_devices()))
            } else {
                None
            };
            Ok(FitEntry { fit: f, standard_errors })
        })
        .collect()
}

fn data_report(command: &str, data: &DeviceData, input: &[u8]) -> AnalysisReport {
    let mut report = AnalysisReport::new(command, Provenance::new(input, None));
    report.data = Some(DataSummary::of(data.plan()));
    report
}

pub fn fit_cmd(args: &FitArgs) -> Result<Outcome> {
    let (data, input, options) = load(&args.data)?;
    let mut report = data_report("fit", &data, &input);
    report.fits = fit_all(&data, args, &options)?;
    let non_convergence = not_converged(&report.fits);
    Ok(Outcome { report, plot_csv: None, non_convergence })
}

pub fn gof_cmd(args: &FitArgs) -> Result<Outcome> {
    let (data, input, options) = load(&args.data)?;
    let mut report = data_report("gof", &data, &input);
    report.fits = fit_all(&data, args, &options)?;
    let non_convergence = not_converged(&report.fits);
    for entry in report.fits.iter().filter(|e| e.fit.converged) {
        report.goodness_of_fit.push(GofEntry { beta: entry.fit.beta, result: goodness_of_fit(&data, &entry.fit)? });
    }
    Ok(Outcome { report, plot_csv: None, non_convergence })
}

pub fn ci_cmd(args: &CiArgs) -> Result<Outcome> {
    let (data, input, options) = load(&args.fit.data)?;
    let plan = data.plan();
    if args.stress.len() != plan.n_factors() {
        return Err(CliError::Usage(format!("--stress needs {} values, got {}", plan.n_factors(), args.stress.len())));
    }
    let times: Vec<f64> = if args.time.is_empty() { plan.inspection_times().to_vec() } else { args.time.clone() };
    let indices = times
        .iter()
        .map(|&t| plan.time_index(t).ok_or(oneshot_core::Error::UnsupportedTime(t)))
        .collect::<oneshot_core::Result<Vec<_>>>()?;
    let mut report = data_report("ci", &data, &input);
    report.fits = fit_all(&data, &args.fit, &options)?;
    if let Some(msg) = not_converged(&report.fits) {
        return Ok(Outcome { report, plot_csv: None, non_convergence: Some(msg) });
    }
    for entry in &report.fits {
        let f = &entry.fit;
        let cov = sandwich_sigma(plan, &f.theta_hat, f.beta)?;
        for (&t, &i) in times.iter().zip(&indices) {
            let mut intervals = Vec::new();
            if matches!(args.method, MethodArg::Plain | MethodArg::Both) {
                intervals.push(ci_plain(f, &cov, i, &args.stress, plan, args.level)?);
            }
            if matches!(args.method, MethodArg::Logit | MethodArg::Both) {
                intervals.push(ci_logit(f, &cov, i, &args.stress, plan, args.level)?);
            }
            report.confidence_intervals.push(CiEntry { beta: f.beta, time: t, stress: args.stress.clone(), intervals });
        }
    }
    Ok(Outcome::done(report))
}

pub fn wald_cmd(args: &WaldArgs) -> Result<Outcome> {
    let (data, input, options) = load(&args.fit.data)?;
    let plan = data.plan();
    let names = parameter_names(plan.n_times(), plan.n_factors());
    let rows = args.hypotheses.iter().map(|h| parse_row(h, &names)).collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = args.hypotheses.iter().map(|h| h.trim().to_string()).collect();
    let constraint = AffineConstraint::new(
        rows.iter().map(|r| r.coefficients.clone()).collect(),
        rows.iter().map(|r| r.rhs).collect(),
        Some(labels.clone()),
    )?;
    let hypothesis = Hypothesis { labels, matrix: matrix_rows(constraint.matrix()), rhs: constraint.rhs().iter().copied().collect() };
    let mut report = data_report("wald", &data, &input);
    report.fits = fit_all(&data, &args.fit, &options)?;
    if let Some(msg) = not_converged(&report.fits) {
        return Ok(Outcome { report, plot_csv: None, non_convergence: Some(msg) });
    }
    for entry in &report.fits {
        let cov = sandwich_sigma(plan, &entry.fit.theta_hat, entry.fit.beta)?;
        let result = oneshot_core::wald::wald_statistic(&entry.fit, &cov, &constraint)?.at_level(args.level)?;
        report.wald.push(WaldEntry { hypothesis: hypothesis.clone(), result });
    }
    Ok(Outcome::done(report))
}

pub fn tune_cmd(args: &TuneArgs) -> Result<Outcome> {
    let (data, input, options) = load(&args.data)?;
    let grid = if args.grid.is_empty() { default_grid() } else { betas(&args.grid)? };
    let selection = match args.criterion {
        CriterionArg::Distance => select_beta_distance(&data, &grid, &options)?,
        CriterionArg::WarwickJones => select_beta_wj(&data, &grid, TuningBeta::new(args.pilot)?, &options)?,
    };
    let mut report = data_report("tune", &data, &input);
    let chosen = FitArgs { data: args.data.clone(), beta: vec![selection.chosen_beta.value()] };
    report.fits = fit_all(&data, &chosen, &options)?;
    report.tuning = Some(selection);
    let non_convergence = not_converged(&report.fits);
    Ok(Outcome { report, plot_csv: None, non_convergence })
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<Outcome> {
    let input = read_input(&args.config)?;
    let text = std::str::from_utf8(&input).map_err(|e| CliError::Config(e.to_string()))?;
    let mut cfg = SimConfig::parse(text)?;
    if let Some(n) = args.replicates {
        if n == 0 {
            return Err(CliError::Usage("--replicates must be at least 1".into()));
        }
        cfg.replicates = Some(n);
    }
    let seed = args.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let options = FitOptions::default();
    let study = &cfg.study;
    let mut runs = Vec::new();
    for planned in cfg.designs(seed)? {
        let design = &planned.design;
        let bias_mse = if study.bias_mse { Some(mc_bias_mse(design, &options)?) } else { None };
        let level_power = if study.level_power {
            let plan = &design.plan;
            let row = (0..plan.n_params()).map(|k| if k == plan.n_times() { 1.0 } else { 0.0 }).collect();
            let constraint = AffineConstraint::new(vec![row], vec![study.null_alpha1], Some(vec![format!("alpha1={}", study.null_alpha1)]))?;
            let alternative = WeibullTruth::new(design.truth.b, design.truth.c0, study.power_c.clone())?;
            if alternative.c.len() != plan.n_factors() {
                return Err(CliError::Config(format!("study.power_c needs {} values", plan.n_factors())));
            }
            Some(mc_level_power(design, &constraint, study.level, Some(&alternative), &options)?)
        } else {
            None
        };
        runs.push(SimulationRun {
            label: planned.label.clone(),
            sweep: planned.sweep.clone().map(|(name, value)| SweepPoint { name, value }),
            total_devices: design.plan.total_devices(),
            contaminated: design.contamination.is_some(),
            bias_mse,
            level_power,
        });
    }
    let mut report = AnalysisReport::new("simulate", Provenance::new(&input, Some(seed)));
    report.simulation = Some(Simulation { preset: cfg.preset.name().to_string(), test_level: study.level_power.then_some(study.level), runs });
    let plot_csv = args.emit_plot_data.as_ref().map(|_| plot_data(report.simulation.as_ref().expect("set above")));
    Ok(Outcome { report, plot_csv, non_convergence: None })
}

fn push_summary_rows(out: &mut String, sweep: &str, x: Option<f64>, summary: &McSummary, error_metrics: bool) {
    for b in &summary.per_beta {
        let series = format!("beta={}", b.beta);
        let x = x.unwrap_or(b.beta.value());
        if error_metrics {
            for (p, name) in summary.parameter_names.iter().enumerate() {
                let _ = writeln!(out, "{sweep},{x},{series},bias,{name},{}", b.bias[p]);
                let _ = writeln!(out, "{sweep},{x},{series},mse,{name},{}", b.mse[p]);
            }
        }
        if let Some(level) = b.level {
            let _ = writeln!(out, "{sweep},{x},{series},level,,{level}");
        }
        if let Some(power) = b.power {
            let _ = writeln!(out, "{sweep},{x},{series},power,,{power}");
        }
    }
}

/// Long-format CSV of a simulation: x is the swept design variable, or β
/// when nothing is swept.
pub fn plot_data(sim: &Simulation) -> String {
    let mut out = String::from("sweep,x,series,metric,parameter,value\n");
    for run in &sim.runs {
        let (sweep, x) = match &run.sweep {
            Some(p) => (p.name.as_str(), Some(p.value)),
            None => ("beta", None),
        };
        if let Some(s) = &run.bias_mse {
            push_summary_rows(&mut out, sweep, x, s, true);
        }
        if let Some(s) = &run.level_power {
            push_summary_rows(&mut out, sweep, x, s, false);
        }
    }
    out
}
