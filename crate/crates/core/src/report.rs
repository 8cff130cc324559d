//! Report files: convergence reports as JSON or CSV.
//!
//! JSON uses serde_json's shortest round-trip float formatting, CSV uses
//! 17 significant digits; both parse back to the identical `f64`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::convergence::ConvergenceReport;
use crate::error::{Error, Result};
use crate::path::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown report format '{s}' (csv or json)"))),
        }
    }
}

fn check_emittable(report: &ConvergenceReport) -> Result<()> {
    report.validate()?;
    if report
        .values
        .iter()
        .flatten()
        .chain(&report.times)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Validation(format!(
            "report '{}' holds non-finite values",
            report.quantity
        )));
    }
    Ok(())
}

/// Writes `report` in `format`. CSV is long-form: `level,time,value`.
pub fn emit_report<W: Write>(report: &ConvergenceReport, format: Format, mut out: W) -> Result<()> {
    check_emittable(report)?;
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["level", "time", "value"])?;
            for (l, row) in report.levels.iter().zip(&report.values) {
                for (t, v) in report.times.iter().zip(row) {
                    w.write_record([l.to_string(), fmt_f64(*t), fmt_f64(*v)])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Writes to a file, choosing the format from its extension.
pub fn write_report_file(report: &ConvergenceReport, path: &Path) -> Result<()> {
    let format: Format = path.extension().and_then(|e| e.to_str()).unwrap_or("").parse()?;
    let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    emit_report(report, format, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Parses and validates a JSON report.
pub fn parse_report_json<R: Read>(input: R) -> Result<ConvergenceReport> {
    let r: ConvergenceReport = serde_json::from_reader(input)?;
    r.validate()?;
    if r.converged.len() != r.times.len() {
        return Err(Error::Validation("converged flags must match target times".into()));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_bitwise() {
        let r = ConvergenceReport::scalar("x", vec![4], 1.0, vec![0.1 + 0.2])
            .unwrap()
            .with_meta(Some("abc".into()), Some(7));
        let mut buf = Vec::new();
        emit_report(&r, Format::Json, &mut buf).unwrap();
        let back = parse_report_json(&buf[..]).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.values[0][0].to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn empty_levels_rejected() {
        let r = ConvergenceReport {
            quantity: "x".into(),
            levels: vec![],
            times: vec![1.0],
            values: vec![],
            converged: vec![false],
            config_hash: None,
            seed: None,
        };
        assert!(emit_report(&r, Format::Json, Vec::new()).is_err());
        assert!(parse_report_json(r#"{"quantity":"x","levels":[],"times":[1.0],"values":[],"converged":[false],"config_hash":null,"seed":null}"#.as_bytes()).is_err());
    }

    #[test]
    fn csv_long_form() {
        let r = ConvergenceReport::new("x", vec![1, 2], vec![0.5, 1.0], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        emit_report(&r, Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "level,time,value");
        assert_eq!(lines.len(), 5);
        let v: f64 = lines[4].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v, 4.0);
    }

    #[test]
    fn non_finite_rejected() {
        let r = ConvergenceReport::scalar("x", vec![1], 1.0, vec![f64::NAN]).unwrap();
        assert!(emit_report(&r, Format::Json, Vec::new()).is_err());
    }
}
