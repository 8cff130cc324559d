//! CPPI/DPPI with rebalancing restricted to a date set, exposing gap risk.
//!
//! Holdings are reset only at rebalance dates and held constant in between;
//! the portfolio is marked to market on every finest-grid point. Once the
//! cushion at a rebalance date is `<= 0`, the strategy moves everything into
//! the bond and stays there, carrying the (possibly negative) cushion.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generate::{generate, GeneratorConfig};
use crate::grid::TimeGridSequence;
use crate::par::{try_map, Execution};
use crate::path::{fmt_f64, SampledPath};
use crate::strategy::{bond_values, StrategyConfig, StrategyTrajectory};

/// Rebalance dates as finest-grid indices, strictly increasing, starting at 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RebalanceSchedule {
    dates: Vec<usize>,
}

impl RebalanceSchedule {
    pub fn new(dates: Vec<usize>, grid_len: usize) -> Result<Self> {
        if dates.first() != Some(&0) {
            return Err(Error::validation("schedule must start at index 0"));
        }
        if dates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("schedule dates must be strictly increasing"));
        }
        if *dates.last().unwrap() >= grid_len {
            return Err(Error::validation("schedule date beyond the finest grid"));
        }
        Ok(RebalanceSchedule { dates })
    }

    /// Every finest-grid point.
    pub fn full(grid_len: usize) -> Self {
        RebalanceSchedule {
            dates: (0..grid_len).collect(),
        }
    }

    /// Every `stride`-th finest-grid point.
    pub fn every(stride: usize, grid_len: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::config("stride must be >= 1"));
        }
        Ok(RebalanceSchedule {
            dates: (0..grid_len).step_by(stride).collect(),
        })
    }

    /// The points of one grid level.
    pub fn level(grids: &TimeGridSequence, n: usize) -> Result<Self> {
        grids.check_level(n)?;
        Ok(RebalanceSchedule {
            dates: grids.level(n).to_vec(),
        })
    }

    /// Dates given as times, each matched to a finest-grid point within `tol`.
    pub fn from_times(times: &[f64], grids: &TimeGridSequence, tol: f64) -> Result<Self> {
        let dates = times
            .iter()
            .map(|&t| {
                grids.index_of(t, tol).ok_or(Error::MissingGridTime {
                    time: t,
                    tolerance: tol,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(dates, grids.len())
    }

    pub fn dates(&self) -> &[usize] {
        &self.dates
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// `min_cushion < 0`.
    pub breached: bool,
    pub first_breach_time: Option<f64>,
    pub min_cushion: f64,
    /// Cushion at each rebalance date (rebalancing does not change it).
    pub cushion_at_dates: Vec<f64>,
    pub terminal_value: f64,
    /// Time at which the strategy moved fully into the bond, if it did.
    pub delevered_at: Option<f64>,
}

/// A discretely rebalanced run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteRun {
    /// Post-rebalance state at the schedule dates.
    pub trajectory: StrategyTrajectory,
    pub gap: GapReport,
    /// Mark-to-market value on every finest-grid point, and the holdings in
    /// force over `[t_i, t_{i+1})`.
    pub value: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

pub fn simulate_discrete(
    s: &SampledPath,
    config: &StrategyConfig,
    schedule: &RebalanceSchedule,
) -> Result<DiscreteRun> {
    config.validate()?;
    if s.dim() != 1 {
        return Err(Error::config("strategies take a scalar price path"));
    }
    let grids = s.grids();
    let n = grids.len();
    if *schedule.dates.last().unwrap() >= n {
        return Err(Error::validation("schedule does not fit the path's grid"));
    }
    let sv = s.component(0);
    if let Some(i) = sv.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositivePrice {
            time: s.times()[i],
            value: sv[i],
        });
    }
    let b = bond_values(&config.rate, grids);
    let mspec = config.multiplier_spec(&s.labels()[0])?;
    let mvals = crate::strategy::multiplier_values(&mspec, s, &config.rate)?;
    let times = grids.times();
    let floor_at = |i: usize| config.alpha * config.v0 * b[i];

    let mut value = vec![0.0; n];
    let mut xi_path = vec![0.0; n];
    let mut eta_path = vec![0.0; n];
    let d = &schedule.dates;
    let k = d.len();
    let (mut tt, mut tc, mut tv, mut tf, mut tx, mut te, mut tm) = (
        Vec::with_capacity(k),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
        Vec::new(),
    );
    let mut cushion_at_dates = Vec::with_capacity(k);
    let mut min_cushion = f64::INFINITY;
    let mut first_breach_time = None;
    let mut delevered_at: Option<f64> = None;
    value[0] = config.v0;
    let mut record = |i: usize, vi: f64| {
        let ci = vi - floor_at(i);
        min_cushion = min_cushion.min(ci);
        if ci < 0.0 && first_breach_time.is_none() {
            first_breach_time = Some(times[i]);
        }
    };
    record(0, config.v0);

    for (q, &date) in d.iter().enumerate() {
        let v = value[date];
        let fl = floor_at(date);
        let c = v - fl;
        if delevered_at.is_none() && c <= 0.0 && config.alpha < 1.0 {
            delevered_at = Some(times[date]);
        }
        let m = if delevered_at.is_some() { 0.0 } else { mvals[date] };
        let (xi, eta) = if delevered_at.is_some() {
            (0.0, v / b[date])
        } else {
            (m * c / sv[date], (v - m * c) / b[date])
        };
        cushion_at_dates.push(c);
        tt.push(times[date]);
        tc.push(c);
        tv.push(v);
        tf.push(fl);
        tx.push(xi);
        te.push(eta);
        tm.push(m);
        let end = d.get(q + 1).copied().unwrap_or(n - 1);
        for i in date..=end {
            xi_path[i] = xi;
            eta_path[i] = eta;
        }
        for i in date + 1..=end {
            value[i] = xi * sv[i] + eta * b[i];
            record(i, value[i]);
        }
    }
    let trajectory = StrategyTrajectory {
        times: tt,
        cushion: tc,
        value: tv,
        floor: tf,
        xi: tx,
        eta: te,
        m: tm,
    };
    Ok(DiscreteRun {
        trajectory,
        gap: GapReport {
            breached: min_cushion < 0.0,
            first_breach_time,
            min_cushion,
            cushion_at_dates,
            terminal_value: value[n - 1],
            delevered_at,
        },
        value,
        xi: xi_path,
        eta: eta_path,
    })
}

/// Single-period relative drop `1/m` beyond which an `m`-levered cushion turns negative.
pub fn gap_threshold(m: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::validation(format!("multiplier must be > 0, got {m}")));
    }
    Ok(1.0 / m)
}

/// Largest relative drop `1 - S_{d_{k+1}} / S_{d_k}` over consecutive schedule dates.
pub fn max_period_drop(s: &[f64], schedule: &RebalanceSchedule) -> f64 {
    let mut dates = schedule.dates.clone();
    if *dates.last().unwrap() != s.len() - 1 {
        dates.push(s.len() - 1);
    }
    dates.windows(2).map(|w| 1.0 - s[w[1]] / s[w[0]]).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: f64,
    /// Rebalance every `stride` finest-grid steps.
    pub stride: usize,
    pub runs: usize,
    pub breaches: usize,
    pub frequency: f64,
    /// Largest single-period relative drop over all runs.
    pub max_period_drop: f64,
}

pub const SWEEP_HEADER: [&str; 6] = ["m", "stride", "runs", "breaches", "frequency", "max_period_drop"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, m: f64, stride: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.m == m && r.stride == stride)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SWEEP_HEADER)?;
        for r in &self.rows {
            w.write_record([
                fmt_f64(r.m),
                r.stride.to_string(),
                r.runs.to_string(),
                r.breaches.to_string(),
                fmt_f64(r.frequency),
                fmt_f64(r.max_period_drop),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Breach frequencies over seeds for every `(m, stride)` pair. Paths come from
/// `generator` with each seed substituted; seeds run under `exec`.
pub fn gap_risk_sweep(
    generator: &GeneratorConfig,
    seeds: &[u64],
    grids: &Arc<TimeGridSequence>,
    base: &StrategyConfig,
    multipliers: &[f64],
    strides: &[usize],
    exec: Execution,
) -> Result<SweepTable> {
    if seeds.is_empty() {
        return Err(Error::config("sweep needs at least one seed"));
    }
    let schedules = strides
        .iter()
        .map(|&st| RebalanceSchedule::every(st, grids.len()))
        .collect::<Result<Vec<_>>>()?;
    // per seed: [m][stride] -> (breached, max drop)
    let per_seed = try_map(exec, seeds, |&seed| {
        let path = generate(&generator.with_seed(seed), grids)?;
        multipliers
            .iter()
            .map(|&m| {
                let cfg = StrategyConfig {
                    multiplier: crate::strategy::Multiplier::Constant(m),
                    ..base.clone()
                };
                schedules
                    .iter()
                    .map(|sch| {
                        let run = simulate_discrete(&path, &cfg, sch)?;
                        Ok((run.gap.breached, max_period_drop(path.component(0), sch)))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    for (a, &m) in multipliers.iter().enumerate() {
        for (b, &stride) in strides.iter().enumerate() {
            let breaches = per_seed.iter().filter(|r| r[a][b].0).count();
            let max_drop = per_seed.iter().map(|r| r[a][b].1).fold(0.0, f64::max);
            rows.push(SweepRow {
                m,
                stride,
                runs: seeds.len(),
                breaches,
                frequency: breaches as f64 / seeds.len() as f64,
                max_period_drop: max_drop,
            });
        }
    }
    Ok(SweepTable { rows })
}
