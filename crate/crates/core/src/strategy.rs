//! Closed-form CPPI and DPPI trajectories, allocations and their checks.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::bond::{log_bond_values, RateFunction};
use crate::convergence::ConvergenceReport;
use crate::error::{Error, Result};
use crate::expr::{Expr, FunctionalSpec};
use crate::grid::TimeGridSequence;
use crate::ito::{canonical_integral, covariation_stieltjes, stieltjes_integral, IntegrandForm};
use crate::path::{fmt_f64, SampledPath};
use crate::series::LevelSeries;
use crate::sum::ksum;

/// Risky-asset exposure as a multiple of the cushion.
#[derive(Debug, Clone, PartialEq)]
pub enum Multiplier {
    Constant(f64),
    /// `m_t = g(A_t, S_t)`, required to stay `>= 0` along the path.
    Function(FunctionalSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub v0: f64,
    pub alpha: f64,
    pub multiplier: Multiplier,
    pub rate: RateFunction,
}

impl StrategyConfig {
    pub fn constant(v0: f64, alpha: f64, m: f64, rate: RateFunction) -> Self {
        StrategyConfig {
            v0,
            alpha,
            multiplier: Multiplier::Constant(m),
            rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(Error::config(format!("V0 must be > 0, got {}", self.v0)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        match &self.multiplier {
            Multiplier::Constant(m) if !(*m >= 0.0 && m.is_finite()) => {
                Err(Error::config(format!("multiplier must be >= 0, got {m}")))
            }
            Multiplier::Function(spec) if spec.dim_x() != 1 => {
                Err(Error::config("multiplier spec must take the scalar price as driver"))
            }
            _ => Ok(()),
        }
    }

    /// `C_0 = (1 - α) V0`.
    pub fn initial_cushion(&self) -> f64 {
        (1.0 - self.alpha) * self.v0
    }

    /// The multiplier as a spec over the price path.
    pub fn multiplier_spec(&self, label: &str) -> Result<FunctionalSpec> {
        match &self.multiplier {
            Multiplier::Constant(m) => FunctionalSpec::of_driver(Expr::c(*m), label),
            Multiplier::Function(s) => Ok(s.clone()),
        }
    }
}

/// Per-grid-time strategy series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyTrajectory {
    pub times: Vec<f64>,
    pub cushion: Vec<f64>,
    pub value: Vec<f64>,
    pub floor: Vec<f64>,
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
    pub m: Vec<f64>,
}

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "C", "V", "floor", "xi", "eta", "m"];

impl StrategyTrajectory {
    /// Builds `V = C + αV0B`, `ξ = mC/S`, `η = (V - mC)/B` from a cushion.
    pub fn from_cushion(
        times: Vec<f64>,
        cushion: Vec<f64>,
        s: &[f64],
        b: &[f64],
        m: Vec<f64>,
        config: &StrategyConfig,
    ) -> Self {
        let floor: Vec<f64> = b.iter().map(|b| config.alpha * config.v0 * b).collect();
        let value: Vec<f64> = cushion.iter().zip(&floor).map(|(c, f)| c + f).collect();
        let xi = m.iter().zip(&cushion).zip(s).map(|((m, c), s)| m * c / s).collect();
        let eta = value
            .iter()
            .zip(&m)
            .zip(&cushion)
            .zip(b)
            .map(|(((v, m), c), b)| (v - m * c) / b)
            .collect();
        StrategyTrajectory {
            times,
            cushion,
            value,
            floor,
            xi,
            eta,
            m,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|ξS + ηB - V|` over the trajectory.
    pub fn allocation_error(&self, s: &[f64], b: &[f64]) -> f64 {
        (0..self.len())
            .map(|i| (self.xi[i] * s[i] + self.eta[i] * b[i] - self.value[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRAJECTORY_HEADER)?;
        for i in 0..self.len() {
            w.write_record(
                [
                    self.times[i],
                    self.cushion[i],
                    self.value[i],
                    self.floor[i],
                    self.xi[i],
                    self.eta[i],
                    self.m[i],
                ]
                .map(fmt_f64),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn price_and_bond(s: &SampledPath, rate: &RateFunction) -> Result<(Vec<f64>, Vec<f64>)> {
    if s.dim() != 1 {
        return Err(Error::config("strategies take a scalar price path"));
    }
    let sv = s.component(0);
    if let Some(i) = sv.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositivePrice {
            time: s.times()[i],
            value: sv[i],
        });
    }
    let grids = s.grids();
    if rate.end() < grids.horizon() * (1.0 - 4.0 * f64::EPSILON) {
        return Err(Error::validation(format!(
            "rate defined up to {} but horizon is {}",
            rate.end(),
            grids.horizon()
        )));
    }
    Ok((sv.to_vec(), log_bond_values(rate, grids)))
}

/// CPPI with constant `m`:
/// `C_t = (1-α)V0 (S_t/S0)^m B_t^{1-m} exp(-½ m(m-1) [log S]_t)`, evaluated in
/// log form with `[log S]` the cumulative sums of `qv_level` (a step function
/// on the finest grid).
pub fn cppi_closed_form(s: &SampledPath, config: &StrategyConfig, qv_level: usize) -> Result<StrategyTrajectory> {
    config.validate()?;
    let m = match config.multiplier {
        Multiplier::Constant(m) => m,
        Multiplier::Function(_) => return Err(Error::config("CPPI needs a constant multiplier")),
    };
    let (sv, lb) = price_and_bond(s, &config.rate)?;
    let grids = s.grids();
    grids.check_level(qv_level)?;
    let logs: Vec<f64> = sv.iter().map(|v| v.ln()).collect();
    let qv = LevelSeries::accumulate(qv_level, grids.level(qv_level), |i, j| {
        let d = logs[j] - logs[i];
        d * d
    })
    .on_finest(grids.len());
    let c0 = config.initial_cushion();
    let cushion: Vec<f64> = if c0 == 0.0 {
        vec![0.0; sv.len()]
    } else {
        let lc0 = c0.ln();
        (0..sv.len())
            .map(|i| (lc0 + m * (logs[i] - logs[0]) + (1.0 - m) * lb[i] - 0.5 * m * (m - 1.0) * qv[i]).exp())
            .collect()
    };
    let b: Vec<f64> = lb.iter().map(|v| v.exp()).collect();
    Ok(StrategyTrajectory::from_cushion(
        grids.times().to_vec(),
        cushion,
        &sv,
        &b,
        vec![m; sv.len()],
        config,
    ))
}

/// CPPI at the finest level.
pub fn cppi(s: &SampledPath, config: &StrategyConfig) -> Result<StrategyTrajectory> {
    cppi_closed_form(s, config, s.grids().finest_level())
}

/// DPPI: `C_t = (1-α)V0 exp(∫ m/S dS - ½ ∫ m²/S² d[S] + ∫ (1-m) r ds)` with
/// the Itô sum, the `d[S]` point-mass sum and the left-endpoint rate sum
/// `Σ (1 - m_{t_i}) (log B_{t_{i+1}} - log B_{t_i})` all at the finest level.
pub fn dppi_closed_form(s: &SampledPath, config: &StrategyConfig) -> Result<StrategyTrajectory> {
    config.validate()?;
    let (sv, lb) = price_and_bond(s, &config.rate)?;
    let grids = s.grids();
    let fin = grids.finest_level();
    let label = s.labels()[0].clone();
    let mspec = config.multiplier_spec(&label)?;
    let m = multiplier_values(&mspec, s, &config.rate)?;

    let c0 = config.initial_cushion();
    let cushion = if c0 == 0.0 {
        vec![0.0; sv.len()]
    } else {
        let over_s = FunctionalSpec::new(
            mspec.expr().clone() / Expr::x(0),
            mspec.states().to_vec(),
            mspec.labels().to_vec(),
        )?;
        let ito = canonical_integral(&over_s, IntegrandForm::Value, s, Some(&config.rate), "I")?;
        let m2: Vec<f64> = m.iter().zip(&sv).map(|(m, s)| (m / s) * (m / s)).collect();
        let qv_term = covariation_stieltjes(&m2, s, 0, 0, &[fin])?.levels[0].on_finest(grids.len());
        let one_minus: Vec<f64> = m.iter().map(|m| 1.0 - m).collect();
        let rate_term = stieltjes_integral(&one_minus, &lb, grids, &[fin])?.levels[0].on_finest(grids.len());
        let lc0 = c0.ln();
        let iv = ito.component(0);
        (0..sv.len())
            .map(|i| (lc0 + iv[i] - 0.5 * qv_term[i] + rate_term[i]).exp())
            .collect()
    };
    let b: Vec<f64> = lb.iter().map(|v| v.exp()).collect();
    Ok(StrategyTrajectory::from_cushion(
        grids.times().to_vec(),
        cushion,
        &sv,
        &b,
        m,
        config,
    ))
}

/// Multiplier values on the finest grid, rejecting negative evaluations.
pub fn multiplier_values(spec: &FunctionalSpec, s: &SampledPath, rate: &RateFunction) -> Result<Vec<f64>> {
    let m = spec.bind_finest(s, Some(rate))?.values()?;
    check_nonnegative(&m, s.times())?;
    Ok(m)
}

fn check_nonnegative(m: &[f64], times: &[f64]) -> Result<()> {
    if let Some(i) = m.iter().position(|&v| !(v >= 0.0)) {
        return Err(Error::NegativeMultiplier {
            time: times[i],
            value: m[i],
        });
    }
    Ok(())
}

/// `max_t |V_t - V_0 - Σ ξ_{t_i} ΔS - Σ η_{t_i} ΔB| / V_0` per level.
pub fn self_financing_residual(
    traj: &StrategyTrajectory,
    s: &[f64],
    b: &[f64],
    grids: &TimeGridSequence,
    levels: &[usize],
) -> Result<ConvergenceReport> {
    if traj.len() != grids.len() || s.len() != grids.len() || b.len() != grids.len() {
        return Err(Error::validation(
            "trajectory, prices and grid must have the same length",
        ));
    }
    let v0 = traj.value[0];
    let values = levels
        .iter()
        .map(|&n| {
            grids.check_level(n)?;
            let gains = LevelSeries::accumulate(n, grids.level(n), |i, j| {
                ksum([traj.xi[i] * (s[j] - s[i]), traj.eta[i] * (b[j] - b[i])])
            });
            Ok(gains
                .indices
                .iter()
                .zip(&gains.values)
                .map(|(&i, g)| ((traj.value[i] - v0) - g).abs() / v0)
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    ConvergenceReport::scalar(
        "self-financing residual sup_t / V0",
        levels.to_vec(),
        grids.horizon(),
        values,
    )
}

/// `min_t (V_t - floor_t)` and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FloorMargin {
    pub min_margin: f64,
    pub time: f64,
    pub min_cushion: f64,
}

pub fn floor_check(traj: &StrategyTrajectory) -> FloorMargin {
    let mut best = FloorMargin {
        min_margin: f64::INFINITY,
        time: 0.0,
        min_cushion: f64::INFINITY,
    };
    for i in 0..traj.len() {
        let margin = traj.value[i] - traj.floor[i];
        if margin < best.min_margin {
            best.min_margin = margin;
            best.time = traj.times[i];
        }
        best.min_cushion = best.min_cushion.min(traj.cushion[i]);
    }
    best
}

/// Discrete feedback cushion against the closed form, per level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackReport {
    /// `max_t |Ĉ_t - C_t| / C_0` per level.
    pub report: ConvergenceReport,
    /// The feedback cushion reached `<= 0` somewhere on the level.
    pub breached: Vec<bool>,
}

/// Iterates `Ĉ_{t_{i+1}} = Ĉ_{t_i} + (m_{t_i} Ĉ_{t_i} / S_{t_i}) ΔS + (1 - m_{t_i}) Ĉ_{t_i} r_{t_i} Δt`
/// on each level and compares with the finest-level DPPI closed form. The
/// multiplier is bound with the level's own quadratic-variation states.
pub fn feedback_convergence(s: &SampledPath, config: &StrategyConfig, levels: &[usize]) -> Result<FeedbackReport> {
    let closed = dppi_closed_form(s, config)?;
    let grids = s.grids();
    let mspec = config.multiplier_spec(&s.labels()[0])?;
    let sv = s.component(0);
    let times = grids.times();
    let c0 = config.initial_cushion();
    let mut values = Vec::with_capacity(levels.len());
    let mut breached = Vec::with_capacity(levels.len());
    for &n in levels {
        grids.check_level(n)?;
        let idx = grids.level(n);
        let m = mspec
            .bind(s, Some(&config.rate), n)?
            .series_at(mspec.expr(), idx.iter().copied())?;
        check_nonnegative(&m, &idx.iter().map(|&i| times[i]).collect::<Vec<_>>())?;
        let mut c = c0;
        let mut gap: f64 = 0.0;
        let mut hit = false;
        for p in 0..idx.len() - 1 {
            let (i, j) = (idx[p], idx[p + 1]);
            let r = config.rate.rate_at(times[i]);
            c = c + m[p] * c / sv[i] * (sv[j] - sv[i]) + (1.0 - m[p]) * c * r * (times[j] - times[i]);
            hit |= c <= 0.0;
            gap = gap.max((c - closed.cushion[j]).abs());
        }
        values.push(if c0 == 0.0 { 0.0 } else { gap / c0 });
        breached.push(hit);
    }
    let report = ConvergenceReport::scalar(
        "feedback cushion gap sup_t / C0",
        levels.to_vec(),
        grids.horizon(),
        values,
    )?;
    Ok(FeedbackReport { report, breached })
}

/// Bond path values `B_t` on the finest grid of `grids`.
pub fn bond_values(rate: &RateFunction, grids: &Arc<TimeGridSequence>) -> Vec<f64> {
    log_bond_values(rate, grids).into_iter().map(f64::exp).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{gen_gbm, inject_jumps, Jump};
    use crate::grid::dyadic_grids;

    fn gbm(level: usize, seed: u64) -> SampledPath {
        gen_gbm(0.2, 0.0, 100.0, seed, &Arc::new(dyadic_grids(1.0, level).unwrap())).unwrap()
    }

    #[test]
    fn scalar_closed_form_oracle() {
        // S0 = 100, S_t = 110, B = 1, [log S]_t = 0.04, m = 3, alpha = 0.8, V0 = 100.
        let want = 20.0 * 1.1f64.powi(3) * (-0.12f64).exp();
        assert!((want - 23.6098).abs() < 1e-4);
        let g = Arc::new(dyadic_grids(1.0, 1).unwrap());
        // Level-1 path 100 -> x -> 110 with log-QV 0.04 at T.
        let l1 = (110f64 / 100.0).ln();
        // Solve a^2 + (l1 - a)^2 = 0.04 for the midpoint log-return a.
        let a = (l1 + (2.0 * 0.04 - l1 * l1).sqrt()) / 2.0;
        let s = SampledPath::price(g.clone(), vec![vec![100.0, 100.0 * a.exp(), 110.0]], vec!["S".into()]).unwrap();
        let cfg = StrategyConfig::constant(100.0, 0.8, 3.0, RateFunction::zero(1.0));
        let t = cppi(&s, &cfg).unwrap();
        assert!((t.cushion[2] - want).abs() < 1e-12 * want, "{} vs {want}", t.cushion[2]);
    }

    #[test]
    fn degenerate_multipliers() {
        let s = gbm(8, 1);
        let r = RateFunction::constant(0.03, 1.0).unwrap();
        let b = bond_values(&r, s.grids());
        let m0 = cppi(&s, &StrategyConfig::constant(100.0, 0.5, 0.0, r.clone())).unwrap();
        for (c, bi) in m0.cushion.iter().zip(&b) {
            assert!((c - 50.0 * bi).abs() < 1e-13 * 50.0 * bi);
        }
        let z = RateFunction::zero(1.0);
        let m1 = cppi(&s, &StrategyConfig::constant(100.0, 0.5, 1.0, z)).unwrap();
        let sv = s.component(0);
        for i in 0..s.len() {
            assert!((m1.cushion[i] - 50.0 * sv[i] / sv[0]).abs() < 1e-13 * m1.cushion[i]);
        }
        let a1 = cppi(&s, &StrategyConfig::constant(100.0, 1.0, 3.0, r.clone())).unwrap();
        assert!(a1.cushion.iter().all(|&c| c == 0.0));
        assert!(a1.xi.iter().all(|&x| x == 0.0));
        assert_eq!(floor_check(&a1).min_margin, 0.0);
    }

    #[test]
    fn decomposition_and_allocation() {
        let s = gbm(10, 2);
        let r = RateFunction::constant(0.02, 1.0).unwrap();
        let cfg = StrategyConfig::constant(100.0, 0.8, 3.0, r.clone());
        let t = cppi(&s, &cfg).unwrap();
        let b = bond_values(&r, s.grids());
        for i in 0..t.len() {
            assert_eq!(t.value[i], t.cushion[i] + t.floor[i]);
        }
        assert!(t.allocation_error(s.component(0), &b) <= 16.0 * f64::EPSILON * 100.0);
    }

    #[test]
    fn dppi_zero_multiplier_is_bond() {
        let s = gbm(8, 3);
        let r = RateFunction::new(vec![0.0, 0.5], vec![0.02, 0.04], 1.0).unwrap();
        let cfg = StrategyConfig::constant(100.0, 0.5, 0.0, r.clone());
        let t = dppi_closed_form(&s, &cfg).unwrap();
        let b = bond_values(&r, s.grids());
        for (c, bi) in t.cushion.iter().zip(&b) {
            assert!((c - 50.0 * bi).abs() < 1e-13 * 50.0 * bi);
        }
    }

    #[test]
    fn glidepath_ends_flat() {
        let s = gbm(10, 4);
        let spec = FunctionalSpec::parse("mul(const 5, sub(const 1, div(clock, const 1)))", &["S"]).unwrap();
        let cfg = StrategyConfig {
            v0: 100.0,
            alpha: 0.8,
            multiplier: Multiplier::Function(spec),
            rate: RateFunction::constant(0.02, 1.0).unwrap(),
        };
        let t = dppi_closed_form(&s, &cfg).unwrap();
        assert_eq!(*t.xi.last().unwrap(), 0.0);
        assert!(floor_check(&t).min_margin > 0.0);
    }

    #[test]
    fn negative_multiplier_rejected() {
        let s = gbm(6, 5);
        let spec = FunctionalSpec::parse("sub(const 0.5, clock)", &["S"]).unwrap();
        let cfg = StrategyConfig {
            v0: 100.0,
            alpha: 0.8,
            multiplier: Multiplier::Function(spec),
            rate: RateFunction::zero(1.0),
        };
        assert!(matches!(
            dppi_closed_form(&s, &cfg),
            Err(Error::NegativeMultiplier { .. })
        ));
    }

    #[test]
    fn crash_path_keeps_floor() {
        let g = Arc::new(dyadic_grids(1.0, 10).unwrap());
        let s = gen_gbm(0.2, 0.0, 100.0, 6, &g).unwrap();
        let s = inject_jumps(&s, &[Jump { time: 0.5, factor: 0.6 }]).unwrap();
        let cfg = StrategyConfig::constant(100.0, 0.8, 4.0, RateFunction::zero(1.0));
        assert!(floor_check(&cppi(&s, &cfg).unwrap()).min_margin > 0.0);
        assert!(floor_check(&dppi_closed_form(&s, &cfg).unwrap()).min_margin > 0.0);
    }

    #[test]
    fn alpha_one_residual_is_rounding() {
        let s = gbm(10, 7);
        let r = RateFunction::constant(0.02, 1.0).unwrap();
        let cfg = StrategyConfig::constant(100.0, 1.0, 3.0, r.clone());
        let t = cppi(&s, &cfg).unwrap();
        let b = bond_values(&r, s.grids());
        let rep = self_financing_residual(&t, s.component(0), &b, s.grids(), &[2, 6, 10]).unwrap();
        assert!(rep.series(0).iter().all(|&v| v < 1e-14));
    }
}
