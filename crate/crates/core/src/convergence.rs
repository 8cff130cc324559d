//! Per-level convergence reports.
//!
//! Every "tends to zero as the grid refines" statement in the crate is
//! reported as a [`ConvergenceReport`]: one row of values per refinement
//! level, one column per target time, plus diagnostics over the last few
//! level transitions. Changes between levels are measured relative to
//! `max(|value|, 1)`, so quantities that converge to zero are judged by
//! their absolute change.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative-change tolerance for convergence flags.
pub const DEFAULT_TOLERANCE: f64 = 1e-2;
/// Default number of trailing level transitions inspected.
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub quantity: String,
    pub levels: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[l][j]`: value at level `levels[l]` and time `times[j]`.
    pub values: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDiagnostic {
    pub last: f64,
    pub max_relative_change: f64,
    pub converged: bool,
    /// Values never increase from one level to the next.
    pub monotone_nonincreasing: bool,
    /// Least-squares slope of `log2 |value|` against level; `None` if a value is zero.
    pub log2_slope: Option<f64>,
}

impl ConvergenceReport {
    /// Builds a report and fills the convergence flags with the default
    /// tolerance and window (flags are `false` when there are too few levels).
    pub fn new(
        quantity: impl Into<String>,
        levels: Vec<usize>,
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mut r = ConvergenceReport {
            quantity: quantity.into(),
            levels,
            times,
            values,
            converged: Vec::new(),
            config_hash: None,
            seed: None,
        };
        r.validate()?;
        let window = DEFAULT_WINDOW.min(r.levels.len().saturating_sub(1));
        r.converged = if window == 0 {
            vec![false; r.times.len()]
        } else {
            r.diagnose(DEFAULT_TOLERANCE, window)?
                .iter()
                .map(|d| d.converged)
                .collect()
        };
        Ok(r)
    }

    /// Scalar-per-level report: one target time.
    pub fn scalar(quantity: impl Into<String>, levels: Vec<usize>, time: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(
            quantity,
            levels,
            vec![time],
            values.into_iter().map(|v| vec![v]).collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::validation("report has no levels"));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("report levels must be strictly increasing"));
        }
        if self.values.len() != self.levels.len() || self.values.iter().any(|r| r.len() != self.times.len()) {
            return Err(Error::validation("report values must be levels x times"));
        }
        Ok(())
    }

    pub fn with_meta(mut self, config_hash: Option<String>, seed: Option<u64>) -> Self {
        self.config_hash = config_hash;
        self.seed = seed;
        self
    }

    /// Column of values for target `j` across levels.
    pub fn series(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[j]).collect()
    }

    /// Value at `level` for target `j`.
    pub fn at(&self, level: usize, j: usize) -> Option<f64> {
        self.levels.iter().position(|&l| l == level).map(|i| self.values[i][j])
    }

    pub fn last(&self, j: usize) -> f64 {
        self.values.last().unwrap()[j]
    }

    pub fn diagnose(&self, tolerance: f64, window: usize) -> Result<Vec<TargetDiagnostic>> {
        if !(tolerance > 0.0) {
            return Err(Error::config("tolerance must be > 0"));
        }
        if window == 0 || self.levels.len() < window + 1 {
            return Err(Error::config(format!(
                "need at least {} levels for window {window}, have {}",
                window + 1,
                self.levels.len()
            )));
        }
        Ok((0..self.times.len())
            .map(|j| diagnose_series(&self.levels, &self.series(j), tolerance, window))
            .collect())
    }
}

fn diagnose_series(levels: &[usize], v: &[f64], tolerance: f64, window: usize) -> TargetDiagnostic {
    let n = v.len();
    let max_relative_change = (n - 1 - window..n - 1)
        .map(|i| (v[i + 1] - v[i]).abs() / v[i + 1].abs().max(v[i].abs()).max(1.0))
        .fold(0.0, f64::max);
    TargetDiagnostic {
        last: v[n - 1],
        max_relative_change,
        converged: max_relative_change < tolerance,
        monotone_nonincreasing: v.windows(2).all(|w| w[1] <= w[0]),
        log2_slope: log2_slope(levels, v),
    }
}

/// Least-squares slope of `log2 |v|` against level.
pub fn log2_slope(levels: &[usize], v: &[f64]) -> Option<f64> {
    if v.len() < 2 || v.iter().any(|x| *x == 0.0 || !x.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = levels.iter().map(|&l| l as f64).collect();
    let ys: Vec<f64> = v.iter().map(|x| x.abs().log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Some(sxy / sxx)
}

/// "Trending down": the last value is below the first and the log-log
/// regression slope is negative. A zero final value counts as trending down
/// when the first value is nonzero.
pub fn trends_down(levels: &[usize], v: &[f64]) -> bool {
    let (first, last) = (v[0].abs(), v[v.len() - 1].abs());
    if last == 0.0 {
        return first > 0.0;
    }
    last < first && log2_slope(levels, v).is_some_and(|s| s < 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_zero_converged() {
        let r = ConvergenceReport::scalar("zero", vec![0, 1, 2, 3], 1.0, vec![0.0; 4]).unwrap();
        let d = r.diagnose(1e-2, 3).unwrap();
        assert!(d[0].converged);
        assert_eq!(d[0].last, 0.0);
        assert!(r.converged[0]);
    }

    #[test]
    fn geometric_decay_converges_once_small() {
        let levels: Vec<usize> = (0..=12).collect();
        let v: Vec<f64> = levels.iter().map(|&n| 2f64.powi(-(n as i32))).collect();
        let r = ConvergenceReport::scalar("qv", levels.clone(), 1.0, v.clone()).unwrap();
        assert!(r.diagnose(1e-2, 3).unwrap()[0].converged);
        let early = ConvergenceReport::scalar("qv", levels[..6].to_vec(), 1.0, v[..6].to_vec()).unwrap();
        assert!(!early.diagnose(1e-2, 3).unwrap()[0].converged);
        let d = r.diagnose(1e-2, 3).unwrap()[0];
        assert!(d.monotone_nonincreasing);
        assert!((d.log2_slope.unwrap() + 1.0).abs() < 1e-12);
        assert!(trends_down(&levels, &v));
    }

    #[test]
    fn too_few_levels() {
        let r = ConvergenceReport::scalar("x", vec![3, 4], 1.0, vec![1.0, 2.0]).unwrap();
        assert!(r.diagnose(1e-2, 3).is_err());
        assert_eq!(r.converged, vec![false]);
    }

    #[test]
    fn empty_levels_rejected() {
        assert!(ConvergenceReport::new("x", vec![], vec![1.0], vec![]).is_err());
        assert!(ConvergenceReport::scalar("x", vec![2, 2], 1.0, vec![1.0, 1.0]).is_err());
    }
}
