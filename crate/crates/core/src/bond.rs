//! Piecewise-constant short rates and the bond price path `B_t = exp(∫_0^t r_s ds)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGridSequence;
use crate::path::SampledPath;

/// Piecewise-constant rate: `rates[j]` applies on `[starts[j], starts[j+1])`,
/// the last segment runs to `end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    starts: Vec<f64>,
    rates: Vec<f64>,
    end: f64,
}

impl RateFunction {
    pub fn new(starts: Vec<f64>, rates: Vec<f64>, end: f64) -> Result<Self> {
        if starts.is_empty() || starts.len() != rates.len() {
            return Err(Error::config("rate function needs one rate per breakpoint"));
        }
        if starts[0] != 0.0 {
            return Err(Error::config("first rate breakpoint must be 0"));
        }
        if starts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("rate breakpoints must be strictly increasing"));
        }
        if !(end > *starts.last().unwrap()) || rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::config("rate domain end must follow the last breakpoint"));
        }
        Ok(RateFunction { starts, rates, end })
    }

    pub fn constant(rate: f64, end: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![rate], end)
    }

    pub fn zero(end: f64) -> Self {
        RateFunction {
            starts: vec![0.0],
            rates: vec![0.0],
            end,
        }
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Right-continuous rate at `t`.
    pub fn rate_at(&self, t: f64) -> f64 {
        let j = self.starts.partition_point(|&s| s <= t).saturating_sub(1);
        self.rates[j]
    }

    /// `∫_0^t r_s ds` in closed form.
    pub fn integral(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (j, (&s, &r)) in self.starts.iter().zip(&self.rates).enumerate() {
            if s >= t {
                break;
            }
            let e = self.starts.get(j + 1).copied().unwrap_or(f64::INFINITY).min(t);
            acc += r * (e - s);
        }
        acc
    }

    /// `B_t` as a product of per-segment exponentials; the oracle for [`bond_path`].
    pub fn bond_product(&self, t: f64) -> f64 {
        let mut acc = 1.0;
        for (j, (&s, &r)) in self.starts.iter().zip(&self.rates).enumerate() {
            if s >= t {
                break;
            }
            let e = self.starts.get(j + 1).copied().unwrap_or(f64::INFINITY).min(t);
            acc *= (r * (e - s)).exp();
        }
        acc
    }
}

/// Bond path on the finest grid, labelled `B`.
pub fn bond_path(rate: &RateFunction, grids: &Arc<TimeGridSequence>) -> Result<SampledPath> {
    // tolerate the last time stamp sitting a rounding error past the domain end
    if rate.end() < grids.horizon() * (1.0 - 4.0 * f64::EPSILON) {
        return Err(Error::validation(format!(
            "rate defined up to {} but horizon is {}",
            rate.end(),
            grids.horizon()
        )));
    }
    let values = grids.times().iter().map(|&t| rate.integral(t).exp()).collect();
    SampledPath::price(grids.clone(), vec![values], vec!["B".into()])
}

/// `∫_0^t r_s ds` sampled on the finest grid.
pub fn log_bond_values(rate: &RateFunction, grids: &TimeGridSequence) -> Vec<f64> {
    grids.times().iter().map(|&t| rate.integral(t)).collect()
}
