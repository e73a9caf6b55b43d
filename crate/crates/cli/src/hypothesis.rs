//! Parser for linear hypotheses written as `2*eta1 - alpha2 = 0.3`.

use crate::error::{CliError, Result};

/// One row `Σ coef·θ_k = rhs` over the named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub coefficients: Vec<f64>,
    pub rhs: f64,
}

/// Parameter names `eta1..etaI, alpha1..alphaJ`.
pub fn parameter_names(n_times: usize, n_factors: usize) -> Vec<String> {
    (1..=n_times).map(|i| format!("eta{i}")).chain((1..=n_factors).map(|j| format!("alpha{j}"))).collect()
}

fn bad(text: &str, why: &str) -> CliError {
    CliError::Usage(format!("cannot parse hypothesis \"{text}\": {why}"))
}

/// Splits `lhs` into signed terms, leaving exponent signs such as `1e-3` intact.
fn terms(lhs: &str) -> Vec<(f64, String)> {
    let mut out = Vec::new();
    let mut sign = 1.0;
    let mut cur = String::new();
    for c in lhs.chars() {
        let in_exponent = matches!(cur.trim_end().chars().last(), Some('e' | 'E'))
            && cur.trim().trim_end_matches(['e', 'E']).chars().last().is_some_and(|d| d.is_ascii_digit() || d == '.');
        if (c == '+' || c == '-') && !in_exponent {
            if !cur.trim().is_empty() {
                out.push((sign, cur.trim().to_string()));
            }
            sign = if c == '-' { -1.0 } else { 1.0 };
            cur.clear();
        } else {
            cur.push(c);
        }
    }
    if !cur.trim().is_empty() {
        out.push((sign, cur.trim().to_string()));
    }
    out
}

pub fn parse_row(text: &str, names: &[String]) -> Result<LinearRow> {
    let (lhs, rhs) = text.split_once('=').ok_or_else(|| bad(text, "expected `=`"))?;
    let rhs: f64 = rhs.trim().parse().map_err(|_| bad(text, "right-hand side must be a number"))?;
    let mut coefficients = vec![0.0; names.len()];
    let parts = terms(lhs);
    if parts.is_empty() {
        return Err(bad(text, "left-hand side is empty"));
    }
    for (sign, term) in parts {
        let (coef, name) = match term.split_once('*') {
            Some((c, n)) => (c.trim().parse::<f64>().map_err(|_| bad(text, &format!("bad coefficient in `{term}`")))?, n.trim()),
            None => (1.0, term.as_str()),
        };
        let k = names.iter().position(|n| n == name).ok_or_else(|| bad(text, &format!("unknown parameter `{name}`")))?;
        coefficients[k] += sign * coef;
    }
    if !rhs.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(bad(text, "coefficients must be finite"));
    }
    Ok(LinearRow { coefficients, rhs })
}
