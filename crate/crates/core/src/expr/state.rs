//! Finite-variation state builders over a driving path.

use std::borrow::Cow;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::SampledPath;
use crate::series::LevelSeries;
use crate::sum::KahanSum;

/// A driver component, optionally taken in logarithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Source {
    Driver(usize),
    LogDriver(usize),
}

impl Source {
    pub fn component(&self) -> usize {
        match self {
            Source::Driver(k) | Source::LogDriver(k) => *k,
        }
    }

    pub fn values<'a>(&self, driver: &'a SampledPath) -> Result<Cow<'a, [f64]>> {
        match self {
            Source::Driver(k) => {
                driver.check_component(*k)?;
                Ok(Cow::Borrowed(driver.component(*k)))
            }
            Source::LogDriver(k) => {
                driver.check_component(*k)?;
                let times = driver.times();
                driver
                    .component(*k)
                    .iter()
                    .zip(times)
                    .map(|(&v, &t)| {
                        if v > 0.0 {
                            Ok(v.ln())
                        } else {
                            Err(Error::Domain {
                                time: t,
                                what: format!("log of driver value {v:e}"),
                            })
                        }
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Cow::Owned)
            }
        }
    }

    pub(crate) fn render(&self, labels: &[String]) -> String {
        match self {
            Source::Driver(k) => labels[*k].clone(),
            Source::LogDriver(k) => format!("log{}", labels[*k]),
        }
    }
}

/// One component of the state vector `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateBuilder {
    /// `a_t = t`.
    Clock,
    /// `a_t = B_t`.
    Bond,
    /// `a_t = log B_t`.
    LogBond,
    /// Cumulative quadratic variation of the source along the binding level.
    Qv(Source),
    /// Windowed integral `∫_{(t-δ)+}^t src ds`, trapezoidal on the finest grid
    /// with linear interpolation at the window's left edge. Not divided by `δ`:
    /// wrap it in `div(.., δ)` for the mean.
    MovingAverage { source: Source, window: f64 },
    /// Maximum of the finest-grid samples in `[(t-δ)+, t]`.
    RunningMax { source: Source, window: f64 },
    /// Piecewise-linear function of time through `(t, v)` knots, flat outside.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl StateBuilder {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            StateBuilder::Clock | StateBuilder::Bond | StateBuilder::LogBond => Ok(()),
            StateBuilder::Qv(s) => check_source(s, dim),
            StateBuilder::MovingAverage { source, window } | StateBuilder::RunningMax { source, window } => {
                check_source(source, dim)?;
                if !(*window > 0.0 && window.is_finite()) {
                    return Err(Error::config(format!("window must be > 0, got {window}")));
                }
                Ok(())
            }
            StateBuilder::PiecewiseLinear(knots) => {
                if knots.is_empty() {
                    return Err(Error::config("pwlin needs at least one knot"));
                }
                if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
                    return Err(Error::config("pwlin knots must be finite"));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::config("pwlin knot times must be strictly increasing"));
                }
                Ok(())
            }
        }
    }

    pub fn needs_bond(&self) -> bool {
        matches!(self, StateBuilder::Bond | StateBuilder::LogBond)
    }

    /// Values on every finest-grid point. `qv_level` selects the level of the
    /// quadratic-variation sums; the other builders do not depend on it.
    pub fn values(&self, driver: &SampledPath, log_bond: Option<&[f64]>, qv_level: usize) -> Result<Vec<f64>> {
        let times = driver.times();
        match self {
            StateBuilder::Clock => Ok(times.to_vec()),
            StateBuilder::Bond | StateBuilder::LogBond => {
                let lb = log_bond.ok_or_else(|| Error::config("bond state requires a rate function"))?;
                Ok(if matches!(self, StateBuilder::Bond) {
                    lb.iter().map(|v| v.exp()).collect()
                } else {
                    lb.to_vec()
                })
            }
            StateBuilder::Qv(src) => {
                let grids = driver.grids();
                grids.check_level(qv_level)?;
                let v = src.values(driver)?;
                let s = LevelSeries::accumulate(qv_level, grids.level(qv_level), |i, j| {
                    let d = v[j] - v[i];
                    d * d
                });
                Ok(s.on_finest(times.len()))
            }
            StateBuilder::MovingAverage { source, window } => {
                Ok(moving_average(times, &source.values(driver)?, *window))
            }
            StateBuilder::RunningMax { source, window } => Ok(running_max(times, &source.values(driver)?, *window)),
            StateBuilder::PiecewiseLinear(knots) => Ok(times.iter().map(|&t| piecewise_linear(knots, t)).collect()),
        }
    }

    pub(crate) fn render(&self, labels: &[String]) -> String {
        match self {
            StateBuilder::Clock => "clock".into(),
            StateBuilder::Bond => "bond".into(),
            StateBuilder::LogBond => "logbond".into(),
            StateBuilder::Qv(s) => format!("qv({})", s.render(labels)),
            StateBuilder::MovingAverage { source, window } => format!("movavg({}, {window})", source.render(labels)),
            StateBuilder::RunningMax { source, window } => format!("runmax({}, {window})", source.render(labels)),
            StateBuilder::PiecewiseLinear(knots) => {
                let parts: Vec<String> = knots.iter().map(|(t, v)| format!("{t}, {v}")).collect();
                format!("pwlin({})", parts.join(", "))
            }
        }
    }
}

fn check_source(s: &Source, dim: usize) -> Result<()> {
    if s.component() >= dim {
        return Err(Error::config(format!(
            "source component {} out of range for dimension {dim}",
            s.component()
        )));
    }
    Ok(())
}

/// `∫_{(t-δ)+}^t v ds` with the trapezoid rule on the sample grid.
pub fn moving_average(times: &[f64], v: &[f64], window: f64) -> Vec<f64> {
    let n = times.len();
    // cum[j] = ∫_0^{t_j} v, trapezoid.
    let mut cum = Vec::with_capacity(n);
    let mut acc = KahanSum::new();
    cum.push(0.0);
    for j in 1..n {
        acc.add(0.5 * (v[j] + v[j - 1]) * (times[j] - times[j - 1]));
        cum.push(acc.value());
    }
    let integral_to = |s: f64, hint: usize| -> f64 {
        // s lies in [times[hint], times[hint + 1]).
        let j = hint;
        if j + 1 >= n {
            return cum[n - 1];
        }
        let h = times[j + 1] - times[j];
        let u = s - times[j];
        cum[j] + u * (v[j] + 0.5 * (v[j + 1] - v[j]) * u / h)
    };
    let mut out = Vec::with_capacity(n);
    let mut lo = 0usize;
    for j in 0..n {
        let t = times[j];
        let start = (t - window).max(0.0);
        while lo + 1 < n && times[lo + 1] <= start {
            lo += 1;
        }
        out.push(cum[j] - integral_to(start, lo));
    }
    out
}

/// Running maximum of samples with time in `[(t-δ)+, t]` (monotone deque).
pub fn running_max(times: &[f64], v: &[f64], window: f64) -> Vec<f64> {
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut out = Vec::with_capacity(times.len());
    for j in 0..times.len() {
        while dq.back().is_some_and(|&b| v[b] <= v[j]) {
            dq.pop_back();
        }
        dq.push_back(j);
        let start = times[j] - window;
        while dq.front().is_some_and(|&f| times[f] < start) {
            dq.pop_front();
        }
        out.push(v[*dq.front().unwrap()]);
    }
    out
}

pub fn piecewise_linear(knots: &[(f64, f64)], t: f64) -> f64 {
    let p = knots.partition_point(|k| k.0 <= t);
    if p == 0 {
        return knots[0].1;
    }
    if p == knots.len() {
        return knots[p - 1].1;
    }
    let (t0, v0) = knots[p - 1];
    let (t1, v1) = knots[p];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}
