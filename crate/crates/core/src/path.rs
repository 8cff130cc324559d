//! Sampled trajectories and CSV ingestion.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TimeGridSequence;

/// A trajectory sampled on the finest grid of a [`TimeGridSequence`].
///
/// Values are stored per component. A path built with [`SampledPath::price`]
/// is flagged as a price path and every value is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grids: Arc<TimeGridSequence>,
    components: Vec<Vec<f64>>,
    labels: Vec<String>,
    price: bool,
}

impl SampledPath {
    pub fn new(grids: Arc<TimeGridSequence>, components: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::validation("path needs at least one component"));
        }
        for (k, c) in components.iter().enumerate() {
            if c.len() != grids.len() {
                return Err(Error::validation(format!(
                    "component {k} has {} values, grid has {} points",
                    c.len(),
                    grids.len()
                )));
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "component {k} is not finite at t={}",
                    grids.times()[i]
                )));
            }
        }
        let labels = if labels.is_empty() {
            (0..components.len()).map(|k| format!("x{k}")).collect()
        } else if labels.len() == components.len() {
            labels
        } else {
            return Err(Error::validation("label count does not match component count"));
        };
        Ok(SampledPath {
            grids,
            components,
            labels,
            price: false,
        })
    }

    /// Scalar convenience constructor.
    pub fn scalar(grids: Arc<TimeGridSequence>, values: Vec<f64>, label: &str) -> Result<Self> {
        Self::new(grids, vec![values], vec![label.to_string()])
    }

    /// Like [`SampledPath::new`] but flags the path as a price path.
    pub fn price(grids: Arc<TimeGridSequence>, components: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let mut p = Self::new(grids, components, labels)?;
        p.check_positive()?;
        p.price = true;
        Ok(p)
    }

    /// Validates positivity and flags the path as a price path.
    pub fn into_price(mut self) -> Result<Self> {
        self.check_positive()?;
        self.price = true;
        Ok(self)
    }

    pub fn grids(&self) -> &Arc<TimeGridSequence> {
        &self.grids
    }

    pub fn times(&self) -> &[f64] {
        self.grids.times()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn is_price(&self) -> bool {
        self.price
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn component_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub(crate) fn check_component(&self, k: usize) -> Result<()> {
        if k < self.dim() {
            Ok(())
        } else {
            Err(Error::config(format!(
                "component {k} out of range (dim {})",
                self.dim()
            )))
        }
    }

    /// Errors on the first value that is not strictly positive.
    pub fn check_positive(&self) -> Result<()> {
        for c in &self.components {
            if let Some(i) = c.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::NonPositivePrice {
                    time: self.times()[i],
                    value: c[i],
                });
            }
        }
        Ok(())
    }

    pub fn min_value(&self) -> f64 {
        self.components.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute value over all components.
    pub fn max_abs(&self) -> f64 {
        self.components.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Componentwise natural log; requires strictly positive values.
    pub fn log(&self) -> Result<SampledPath> {
        self.check_positive()?;
        let components = self
            .components
            .iter()
            .map(|c| c.iter().map(|v| v.ln()).collect())
            .collect();
        let labels = self.labels.iter().map(|l| format!("log{l}")).collect();
        SampledPath::new(self.grids.clone(), components, labels)
    }

    /// Single-component view of component `k`.
    pub fn select(&self, k: usize) -> Result<SampledPath> {
        self.check_component(k)?;
        Ok(SampledPath {
            grids: self.grids.clone(),
            components: vec![self.components[k].clone()],
            labels: vec![self.labels[k].clone()],
            price: self.price,
        })
    }

    /// Concatenates the components of paths sharing one grid sequence.
    pub fn stack(paths: &[&SampledPath]) -> Result<SampledPath> {
        let first = paths.first().ok_or_else(|| Error::validation("nothing to stack"))?;
        let mut components = Vec::new();
        let mut labels = Vec::new();
        for p in paths {
            if p.grids.times() != first.grids.times() {
                return Err(Error::validation("stacked paths must share a grid"));
            }
            components.extend(p.components.iter().cloned());
            labels.extend(p.labels.iter().cloned());
        }
        SampledPath::new(first.grids.clone(), components, labels)
    }
}

/// A path read from disk, on its own time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPath {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    pub components: Vec<Vec<f64>>,
}

/// Reads a path CSV: header `t,<name>[,<name>...]`, strictly increasing times.
pub fn read_path_csv<R: Read>(reader: R) -> Result<RawPath> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "t" {
        return Err(Error::validation("path CSV header must be `t,<name>[,<name>...]`"));
    }
    let labels: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut components = vec![Vec::new(); labels.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != headers.len() {
            return Err(Error::validation(format!(
                "row {}: expected {} fields",
                row + 1,
                headers.len()
            )));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::validation(format!("row {}: bad number `{s}`", row + 1)))
        };
        let t = parse(&rec[0])?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(Error::validation(format!(
                    "row {}: time {t} not strictly increasing after {prev}",
                    row + 1
                )));
            }
        }
        times.push(t);
        for (k, field) in rec.iter().skip(1).enumerate() {
            components[k].push(parse(field)?);
        }
    }
    if times.is_empty() {
        return Err(Error::validation("path CSV has no rows"));
    }
    Ok(RawPath {
        times,
        labels,
        components,
    })
}

pub fn load_path_csv(file: impl AsRef<Path>) -> Result<RawPath> {
    let f = std::fs::File::open(file.as_ref()).map_err(|e| Error::Io(format!("{}: {e}", file.as_ref().display())))?;
    read_path_csv(f)
}

/// Aligns a raw path to the finest grid by picking the row at each grid time.
///
/// Every grid time must appear in the input within `tolerance`. With
/// `price = true` the result is validated and flagged as a price path.
pub fn resample_to_grids(
    raw: &RawPath,
    grids: Arc<TimeGridSequence>,
    tolerance: f64,
    price: bool,
) -> Result<SampledPath> {
    let mut rows = Vec::with_capacity(grids.len());
    let mut j = 0;
    for &t in grids.times() {
        while j < raw.times.len() && raw.times[j] < t - tolerance {
            j += 1;
        }
        if j == raw.times.len() || (raw.times[j] - t).abs() > tolerance {
            return Err(Error::MissingGridTime { time: t, tolerance });
        }
        rows.push(j);
    }
    let components = raw
        .components
        .iter()
        .map(|c| rows.iter().map(|&j| c[j]).collect())
        .collect();
    if price {
        SampledPath::price(grids, components, raw.labels.clone())
    } else {
        SampledPath::new(grids, components, raw.labels.clone())
    }
}

/// Writes a path CSV with full round-trip precision.
pub fn write_path_csv<W: std::io::Write>(path: &SampledPath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(path.labels().iter().cloned());
    w.write_record(&header)?;
    for (i, t) in path.times().iter().enumerate() {
        let mut rec = vec![fmt_f64(*t)];
        rec.extend(path.components().iter().map(|c| fmt_f64(c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
