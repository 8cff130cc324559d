//! Quadratic variation, covariation and realized variance along a grid sequence.

use crate::convergence::ConvergenceReport;
use crate::error::{Error, Result};
use crate::path::SampledPath;
use crate::series::LevelSeries;
use crate::sum::ulps_of;

/// Per-level cumulative sums of squared increments of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct QVEstimate {
    pub label: String,
    pub levels: Vec<LevelSeries>,
    pub targets: Vec<f64>,
    pub converged: Vec<bool>,
}

/// Per-level cumulative cross-increment sums for a component pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariationEstimate {
    pub labels: (String, String),
    /// `Σ ΔX^k ΔX^m`.
    pub direct: Vec<LevelSeries>,
    /// `½([X^k+X^m] - ([X^k] + [X^m]))` from separately accumulated sums.
    pub polarized: Vec<LevelSeries>,
    pub targets: Vec<f64>,
    pub converged: Vec<bool>,
    /// Largest gap between the two routes, in ulps of the polarized terms' magnitude.
    pub polarization_ulps: f64,
    /// `|[X^k,X^m]_t| <= sqrt([X^k]_t [X^m]_t)` at every level and point.
    pub cauchy_schwarz_holds: bool,
}

/// Log-price quadratic variation together with the Stieltjes form `∫ S^-2 d[S]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedVariance {
    pub log_qv: QVEstimate,
    pub stieltjes: Vec<LevelSeries>,
    /// `|[log S]_T - ∫_0^T S^-2 d[S]|` per level.
    pub discrepancy: Vec<f64>,
}

fn qv_levels(values: &[f64], path: &SampledPath) -> Vec<LevelSeries> {
    let grids = path.grids();
    (0..grids.num_levels())
        .map(|n| {
            LevelSeries::accumulate(n, grids.level(n), |i, j| {
                let d = values[j] - values[i];
                d * d
            })
        })
        .collect()
}

fn report_for(
    quantity: &str,
    levels: &[LevelSeries],
    path: &SampledPath,
    targets: &[f64],
) -> Result<ConvergenceReport> {
    let times = path.times();
    ConvergenceReport::new(
        quantity,
        levels.iter().map(|s| s.level).collect(),
        targets.to_vec(),
        levels
            .iter()
            .map(|s| targets.iter().map(|&t| s.at_time(times, t)).collect())
            .collect(),
    )
}

fn check_targets(path: &SampledPath, targets: &[f64]) -> Result<()> {
    let h = path.grids().horizon();
    if targets.is_empty() || targets.iter().any(|t| !(*t >= 0.0 && *t <= h)) {
        return Err(Error::config(format!("target times must lie in [0, {h}]")));
    }
    Ok(())
}

impl QVEstimate {
    pub fn finest(&self) -> &LevelSeries {
        self.levels.last().unwrap()
    }

    pub fn level(&self, n: usize) -> &LevelSeries {
        &self.levels[n]
    }

    /// Terminal value at each level.
    pub fn terminal_values(&self) -> Vec<f64> {
        self.levels.iter().map(LevelSeries::terminal).collect()
    }

    pub fn report(&self, times: &[f64]) -> Result<ConvergenceReport> {
        let mut r = ConvergenceReport::new(
            format!("qv[{}]", self.label),
            self.levels.iter().map(|s| s.level).collect(),
            self.targets.clone(),
            self.levels
                .iter()
                .map(|s| self.targets.iter().map(|&t| s.at_time(times, t)).collect())
                .collect(),
        )?;
        r.converged = self.converged.clone();
        Ok(r)
    }
}

/// Quadratic variation of component `k` at every level, target time `T`.
pub fn quad_variation(path: &SampledPath, k: usize) -> Result<QVEstimate> {
    quad_variation_at(path, k, &[path.grids().horizon()])
}

pub fn quad_variation_at(path: &SampledPath, k: usize, targets: &[f64]) -> Result<QVEstimate> {
    path.check_component(k)?;
    check_targets(path, targets)?;
    let levels = qv_levels(path.component(k), path);
    let label = path.labels()[k].clone();
    let converged = report_for("qv", &levels, path, targets)?.converged;
    Ok(QVEstimate {
        label,
        levels,
        targets: targets.to_vec(),
        converged,
    })
}

/// Covariation of components `k` and `m` by cross products and by polarization.
pub fn covariation(path: &SampledPath, k: usize, m: usize) -> Result<CovariationEstimate> {
    covariation_at(path, k, m, &[path.grids().horizon()])
}

pub fn covariation_at(path: &SampledPath, k: usize, m: usize, targets: &[f64]) -> Result<CovariationEstimate> {
    path.check_component(k)?;
    path.check_component(m)?;
    check_targets(path, targets)?;
    let (xk, xm) = (path.component(k), path.component(m));
    let grids = path.grids();
    // Increments of X^k + X^m as sums of increments: forming the sum path
    // first would cost an ulp of the level per point, not of the increment.
    let q_plus: Vec<LevelSeries> = (0..grids.num_levels())
        .map(|n| {
            LevelSeries::accumulate(n, grids.level(n), |i, j| {
                let d = (xk[j] - xk[i]) + (xm[j] - xm[i]);
                d * d
            })
        })
        .collect();
    let q_k = qv_levels(xk, path);
    let q_m = qv_levels(xm, path);

    let mut direct = Vec::with_capacity(grids.num_levels());
    let mut polarized = Vec::with_capacity(grids.num_levels());
    let mut polarization_ulps: f64 = 0.0;
    let mut cauchy_schwarz_holds = true;
    for n in 0..grids.num_levels() {
        let d = LevelSeries::accumulate(n, grids.level(n), |i, j| (xk[j] - xk[i]) * (xm[j] - xm[i]));
        let values: Vec<f64> = (0..d.values.len())
            .map(|j| 0.5 * (q_plus[n].values[j] - (q_k[n].values[j] + q_m[n].values[j])))
            .collect();
        for (j, &pol) in values.iter().enumerate() {
            let scale = q_plus[n].values[j].max(q_k[n].values[j] + q_m[n].values[j]);
            polarization_ulps = polarization_ulps.max(ulps_of(d.values[j] - pol, scale));
            let bound = (q_k[n].values[j] * q_m[n].values[j]).sqrt();
            if d.values[j].abs() > bound * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                cauchy_schwarz_holds = false;
            }
        }
        polarized.push(LevelSeries {
            level: n,
            indices: d.indices.clone(),
            values,
        });
        direct.push(d);
    }
    let converged = report_for("cov", &direct, path, targets)?.converged;
    Ok(CovariationEstimate {
        labels: (path.labels()[k].clone(), path.labels()[m].clone()),
        direct,
        polarized,
        targets: targets.to_vec(),
        converged,
        polarization_ulps,
        cauchy_schwarz_holds,
    })
}

impl CovariationEstimate {
    pub fn terminal_values(&self) -> Vec<f64> {
        self.direct.iter().map(LevelSeries::terminal).collect()
    }

    pub fn report(&self, times: &[f64]) -> Result<ConvergenceReport> {
        let mut r = ConvergenceReport::new(
            format!("cov[{},{}]", self.labels.0, self.labels.1),
            self.direct.iter().map(|s| s.level).collect(),
            self.targets.clone(),
            self.direct
                .iter()
                .map(|s| self.targets.iter().map(|&t| s.at_time(times, t)).collect())
                .collect(),
        )?;
        r.converged = self.converged.clone();
        Ok(r)
    }
}

/// Realized variance `[log S]` of a strictly positive component, cross-checked
/// against `∫ S^-2 d[S]` with `d[S]` the level's squared increments.
pub fn realized_variance(price: &SampledPath, k: usize) -> Result<RealizedVariance> {
    price.check_component(k)?;
    let s = price.component(k);
    if let Some(i) = s.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositivePrice {
            time: price.times()[i],
            value: s[i],
        });
    }
    let logs: Vec<f64> = s.iter().map(|v| v.ln()).collect();
    let levels = qv_levels(&logs, price);
    let targets = vec![price.grids().horizon()];
    let converged = report_for("rv", &levels, price, &targets)?.converged;
    let log_qv = QVEstimate {
        label: format!("log{}", price.labels()[k]),
        levels,
        targets,
        converged,
    };
    let grids = price.grids();
    let stieltjes: Vec<LevelSeries> = (0..grids.num_levels())
        .map(|n| {
            LevelSeries::accumulate(n, grids.level(n), |i, j| {
                let d = s[j] - s[i];
                d * d / (s[i] * s[i])
            })
        })
        .collect();
    let discrepancy = log_qv
        .levels
        .iter()
        .zip(&stieltjes)
        .map(|(a, b)| (a.terminal() - b.terminal()).abs())
        .collect();
    Ok(RealizedVariance {
        log_qv,
        stieltjes,
        discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{gen_deterministic, gen_gbm, DeterministicShape};
    use crate::grid::dyadic_grids;
    use std::sync::Arc;

    fn linear(level: usize) -> SampledPath {
        let g = Arc::new(dyadic_grids(1.0, level).unwrap());
        gen_deterministic(&DeterministicShape::Linear { start: 0.0, slope: 1.0 }, &[], &g).unwrap()
    }

    #[test]
    fn linear_path_qv_is_mesh() {
        let p = linear(12);
        let q = quad_variation(&p, 0).unwrap();
        for n in 0..=12 {
            assert_eq!(q.level(n).terminal(), 2f64.powi(-(n as i32)), "level {n}");
        }
        assert!(q.converged[0]);
    }

    #[test]
    fn constant_path_zero_qv() {
        let g = Arc::new(dyadic_grids(1.0, 6).unwrap());
        let p = gen_deterministic(&DeterministicShape::Constant { value: 5.0 }, &[], &g).unwrap();
        let q = quad_variation(&p, 0).unwrap();
        assert!(q.levels.iter().all(|s| s.values.iter().all(|&v| v == 0.0)));
        let rv = realized_variance(&p.into_price().unwrap(), 0).unwrap();
        assert!(rv.log_qv.terminal_values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cumulative_paths_nondecreasing() {
        let g = Arc::new(dyadic_grids(1.0, 10).unwrap());
        let p = gen_gbm(0.3, 0.1, 100.0, 5, &g).unwrap();
        let q = quad_variation(&p, 0).unwrap();
        for s in &q.levels {
            assert_eq!(s.values[0], 0.0);
            assert!(s.values.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn self_covariation_is_qv() {
        let g = Arc::new(dyadic_grids(1.0, 10).unwrap());
        let p = gen_gbm(0.3, 0.0, 100.0, 9, &g).unwrap();
        let q = quad_variation(&p, 0).unwrap();
        let c = covariation(&p, 0, 0).unwrap();
        for n in 0..=10 {
            assert_eq!(c.direct[n].values, q.levels[n].values);
            assert_eq!(c.polarized[n].values, q.levels[n].values);
        }
    }

    #[test]
    fn negated_component_gives_negative_qv() {
        let g = Arc::new(dyadic_grids(1.0, 10).unwrap());
        let p = gen_gbm(0.3, 0.0, 100.0, 2, &g).unwrap();
        let neg: Vec<f64> = p.component(0).iter().map(|v| -v).collect();
        let pair = SampledPath::new(g.clone(), vec![p.component(0).to_vec(), neg], vec![]).unwrap();
        let c = covariation(&pair, 0, 1).unwrap();
        let q = quad_variation(&pair, 0).unwrap();
        for n in 0..=10 {
            for (a, b) in c.direct[n].values.iter().zip(&q.levels[n].values) {
                assert_eq!(*a, -*b);
            }
        }
        assert!(c.polarization_ulps <= 8.0);
    }

    #[test]
    fn realized_variance_rejects_nonpositive() {
        let g = Arc::new(dyadic_grids(1.0, 2).unwrap());
        let p = SampledPath::scalar(g, vec![1.0, 2.0, -1.0, 3.0, 4.0], "S").unwrap();
        assert!(matches!(realized_variance(&p, 0), Err(Error::NonPositivePrice { .. })));
    }

    #[test]
    fn bad_component_is_config_error() {
        let p = linear(3);
        assert!(quad_variation(&p, 1).is_err());
        assert!(covariation(&p, 0, 2).is_err());
    }
}
