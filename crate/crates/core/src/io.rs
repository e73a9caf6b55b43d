//! Device data in CSV form: one row per cell with columns
//! `inspection_time, x1..xJ, tested, failures`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{DeviceData, TestPlan};

struct Row {
    line: usize,
    time: f64,
    stress: Vec<f64>,
    tested: u64,
    failures: u64,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn check_header(header: &csv::StringRecord) -> Result<usize> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let n = cols.len();
    if n < 4 || cols[0] != "inspection_time" || cols[n - 2] != "tested" || cols[n - 1] != "failures" {
        return Err(parse_err(1, "header must be inspection_time,x1..xJ,tested,failures"));
    }
    for (j, c) in cols[1..n - 2].iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(parse_err(1, format!("expected column x{}, found {c}", j + 1)));
        }
    }
    Ok(n - 3)
}

/// Reads device data from CSV text. Cells of the time × stress grid that are
/// absent from the file get no devices. Duplicate cells are rejected.
pub fn read_device_csv<R: Read>(reader: R) -> Result<DeviceData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.is_empty() {
        return Err(parse_err(1, "file is empty"));
    }
    let n_factors = check_header(&header)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let float = |k: usize, name: &str| -> Result<f64> {
            let v: f64 = rec[k].parse().map_err(|_| parse_err(line, format!("{name} is not a number: {:?}", &rec[k])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{name} must be finite")));
            }
            Ok(v)
        };
        let count = |k: usize, name: &str| -> Result<u64> {
            rec[k].parse().map_err(|_| parse_err(line, format!("{name} is not a nonnegative integer: {:?}", &rec[k])))
        };
        let time = float(0, "inspection_time")?;
        if !(time > 0.0) {
            return Err(parse_err(line, "inspection_time must be positive"));
        }
        let stress = (0..n_factors).map(|j| float(j + 1, &format!("x{}", j + 1))).collect::<Result<Vec<_>>>()?;
        let tested = count(n_factors + 1, "tested")?;
        let failures = count(n_factors + 2, "failures")?;
        if failures > tested {
            return Err(Error::Validation(format!("line {line}: {failures} failures out of {tested} tested")));
        }
        rows.push(Row { line, time, stress, tested, failures });
    }
    if rows.is_empty() {
        return Err(parse_err(2, "no data rows"));
    }
    assemble(rows)
}

fn assemble(rows: Vec<Row>) -> Result<DeviceData> {
    let mut times: Vec<f64> = Vec::new();
    let mut stresses: Vec<Vec<f64>> = Vec::new();
    for r in &rows {
        if !times.contains(&r.time) {
            times.push(r.time);
        }
        if !stresses.contains(&r.stress) {
            stresses.push(r.stress.clone());
        }
    }
    times.sort_by(f64::total_cmp);
    let mut sizes = vec![vec![0; stresses.len()]; times.len()];
    let mut failures = sizes.clone();
    let mut seen = vec![vec![None; stresses.len()]; times.len()];
    for r in rows {
        let i = times.iter().position(|&t| t == r.time).expect("time collected above");
        let s = stresses.iter().position(|x| *x == r.stress).expect("stress collected above");
        if let Some(first) = seen[i][s] {
            return Err(parse_err(r.line, format!("duplicate cell (first given on line {first})")));
        }
        seen[i][s] = Some(r.line);
        sizes[i][s] = r.tested;
        failures[i][s] = r.failures;
    }
    let plan = TestPlan::new(times, stresses, sizes)?;
    DeviceData::new(plan, failures)
}

pub fn parse_device_csv(path: impl AsRef<Path>) -> Result<DeviceData> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_device_csv(file)
}

/// Writes one row per cell, ordered by inspection time and then stress level.
pub fn write_device_csv<W: Write>(data: &DeviceData, writer: W) -> Result<()> {
    let plan = data.plan();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    let mut header = vec!["inspection_time".to_string()];
    header.extend((1..=plan.n_factors()).map(|j| format!("x{j}")));
    header.extend(["tested".to_string(), "failures".to_string()]);
    w.write_record(&header).map_err(io_err)?;
    for (i, t) in plan.inspection_times().iter().enumerate() {
        for s in 0..plan.n_stresses() {
            let mut rec = vec![t.to_string()];
            rec.extend(plan.stress(s).iter().map(f64::to_string));
            rec.push(plan.group_size(i, s).to_string());
            rec.push(data.failure_count(i, s).to_string());
            w.write_record(&rec).map_err(io_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn device_csv_string(data: &DeviceData) -> Result<String> {
    let mut buf = Vec::new();
    write_device_csv(data, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}
