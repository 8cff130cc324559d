//! Synthetic trajectories: GBM, exponentiated fBm, deterministic shapes and
//! paths with injected jumps.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm;
use crate::grid::TimeGridSequence;
use crate::path::SampledPath;
use crate::rng::{normals, streams};
use crate::sum::KahanSum;

/// A multiplicative jump: values at times `>= time` are multiplied by `factor`.
///
/// A 40% crash is `factor = 0.6`. The time must be a finest-grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum DeterministicShape {
    Constant {
        value: f64,
    },
    Linear {
        start: f64,
        slope: f64,
    },
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// Piecewise-linear interpolation through `(t, value)` knots, held flat
    /// outside the knot range.
    Piecewise {
        knots: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorKind {
    Gbm {
        sigma: f64,
        #[serde(default)]
        mu: f64,
        s0: f64,
    },
    Fbm {
        hurst: f64,
        s0: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    Deterministic {
        #[serde(flatten)]
        shape: DeterministicShape,
        #[serde(default)]
        jumps: Vec<Jump>,
    },
    /// GBM sample with jumps injected at grid points.
    JumpDiffusionSampled {
        sigma: f64,
        #[serde(default)]
        mu: f64,
        s0: f64,
        jumps: Vec<Jump>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn gbm(sigma: f64, mu: f64, s0: f64, seed: u64) -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Gbm { sigma, mu, s0 },
            seed,
        }
    }

    pub fn fbm(hurst: f64, s0: f64, seed: u64) -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Fbm { hurst, s0, sigma: 1.0 },
            seed,
        }
    }

    pub fn deterministic(shape: DeterministicShape, jumps: Vec<Jump>) -> Self {
        GeneratorConfig {
            kind: GeneratorKind::Deterministic { shape, jumps },
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GeneratorConfig {
            kind: self.kind.clone(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_sigma = |sigma: f64| {
            if sigma >= 0.0 && sigma.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("sigma must be >= 0, got {sigma}")))
            }
        };
        let check_s0 = |s0: f64| {
            if s0 > 0.0 && s0.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("s0 must be > 0, got {s0}")))
            }
        };
        match &self.kind {
            GeneratorKind::Gbm { sigma, s0, .. } => {
                check_sigma(*sigma)?;
                check_s0(*s0)
            }
            GeneratorKind::Fbm { hurst, s0, sigma } => {
                if !(*hurst > 0.5 && *hurst < 1.0) {
                    return Err(Error::config(format!("fbm needs H in (0.5, 1), got {hurst}")));
                }
                check_sigma(*sigma)?;
                check_s0(*s0)
            }
            GeneratorKind::Deterministic { jumps, .. } => check_jumps(jumps),
            GeneratorKind::JumpDiffusionSampled { sigma, s0, jumps, .. } => {
                check_sigma(*sigma)?;
                check_s0(*s0)?;
                check_jumps(jumps)
            }
        }
    }
}

fn check_jumps(jumps: &[Jump]) -> Result<()> {
    for j in jumps {
        if !(j.factor.is_finite() && j.factor >= 0.0) {
            return Err(Error::config(format!("jump factor must be >= 0, got {}", j.factor)));
        }
    }
    Ok(())
}

/// Generates the path described by `config` on the finest grid.
pub fn generate(config: &GeneratorConfig, grids: &Arc<TimeGridSequence>) -> Result<SampledPath> {
    config.validate()?;
    match &config.kind {
        GeneratorKind::Gbm { sigma, mu, s0 } => gen_gbm(*sigma, *mu, *s0, config.seed, grids),
        GeneratorKind::Fbm { hurst, s0, sigma } => gen_fbm(*hurst, *s0, *sigma, config.seed, grids),
        GeneratorKind::Deterministic { shape, jumps } => gen_deterministic(shape, jumps, grids),
        GeneratorKind::JumpDiffusionSampled { sigma, mu, s0, jumps } => {
            let p = gen_gbm(*sigma, *mu, *s0, config.seed, grids)?;
            inject_jumps(&p, jumps)
        }
    }
}

/// Exact-in-law GBM: `S_{i+1} = S_i exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z_i)`.
pub fn gen_gbm(sigma: f64, mu: f64, s0: f64, seed: u64, grids: &Arc<TimeGridSequence>) -> Result<SampledPath> {
    let times = grids.times();
    let z = normals(seed, streams::GBM, times.len() - 1);
    let mut log = KahanSum::new();
    let mut values = Vec::with_capacity(times.len());
    values.push(s0);
    for (w, zi) in times.windows(2).zip(z) {
        let dt = w[1] - w[0];
        log.add((mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * zi);
        values.push(s0 * log.value().exp());
    }
    SampledPath::price(grids.clone(), vec![values], vec!["S".into()])
}

/// Scaled Brownian motion `sigma W_t`, `W_0 = 0`.
pub fn gen_brownian(sigma: f64, seed: u64, grids: &Arc<TimeGridSequence>) -> Result<SampledPath> {
    let times = grids.times();
    let z = normals(seed, streams::BROWNIAN, times.len() - 1);
    let mut acc = KahanSum::new();
    let mut values = Vec::with_capacity(times.len());
    values.push(0.0);
    for (w, zi) in times.windows(2).zip(z) {
        acc.add(sigma * (w[1] - w[0]).sqrt() * zi);
        values.push(acc.value());
    }
    SampledPath::scalar(grids.clone(), values, "W")
}

/// Price path `s0 exp(sigma B^H_t)` driven by exact fBm.
pub fn gen_fbm(hurst: f64, s0: f64, sigma: f64, seed: u64, grids: &Arc<TimeGridSequence>) -> Result<SampledPath> {
    let b = fbm::fbm_values(hurst, grids, seed)?;
    fbm_price(b, s0, sigma, grids)
}

/// Batch of fBm price paths sharing one factorization pass.
pub fn gen_fbm_batch(
    hurst: f64,
    s0: f64,
    sigma: f64,
    seeds: &[u64],
    grids: &Arc<TimeGridSequence>,
) -> Result<Vec<SampledPath>> {
    fbm::fbm_batch(hurst, grids, seeds)?
        .into_iter()
        .map(|b| fbm_price(b, s0, sigma, grids))
        .collect()
}

/// Raw fBm `B^H` as a path labelled `BH`.
pub fn gen_fbm_raw(hurst: f64, seed: u64, grids: &Arc<TimeGridSequence>) -> Result<SampledPath> {
    SampledPath::scalar(grids.clone(), fbm::fbm_values(hurst, grids, seed)?, "BH")
}

fn fbm_price(b: Vec<f64>, s0: f64, sigma: f64, grids: &Arc<TimeGridSequence>) -> Result<SampledPath> {
    let values = b.into_iter().map(|x| s0 * (sigma * x).exp()).collect();
    SampledPath::price(grids.clone(), vec![values], vec!["S".into()])
}

impl DeterministicShape {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DeterministicShape::Constant { value } => *value,
            DeterministicShape::Linear { start, slope } => start + slope * t,
            DeterministicShape::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => offset + amplitude * (std::f64::consts::TAU * frequency * t + phase).sin(),
            DeterministicShape::Piecewise { knots } => {
                let j = knots.partition_point(|k| k.0 <= t);
                if j == 0 {
                    knots[0].1
                } else if j == knots.len() {
                    knots[j - 1].1
                } else {
                    let (t0, v0) = knots[j - 1];
                    let (t1, v1) = knots[j];
                    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let DeterministicShape::Piecewise { knots } = self {
            if knots.is_empty() || knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(Error::config("piecewise knots must be non-empty with increasing times"));
            }
        }
        Ok(())
    }
}

/// Pointwise evaluation of a deterministic shape, then jump injection.
pub fn gen_deterministic(
    shape: &DeterministicShape,
    jumps: &[Jump],
    grids: &Arc<TimeGridSequence>,
) -> Result<SampledPath> {
    shape.validate()?;
    let values = grids.times().iter().map(|&t| shape.eval(t)).collect();
    let p = SampledPath::scalar(grids.clone(), values, "X")?;
    inject_jumps(&p, jumps)
}

/// Applies multiplicative jumps to every component. Jump times must be
/// points of the finest grid (matched to 1e-12 of the horizon).
pub fn inject_jumps(path: &SampledPath, jumps: &[Jump]) -> Result<SampledPath> {
    check_jumps(jumps)?;
    let grids = path.grids();
    let tol = 1e-12 * grids.horizon();
    let mut components = path.components().to_vec();
    for j in jumps {
        let i = grids
            .index_of(j.time, tol)
            .ok_or_else(|| Error::validation(format!("jump time {} is not a finest-grid point", j.time)))?;
        for c in components.iter_mut() {
            c[i..].iter_mut().for_each(|v| *v *= j.factor);
        }
    }
    let out = SampledPath::new(grids.clone(), components, path.labels().to_vec())?;
    if path.is_price() {
        out.into_price()
    } else {
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::dyadic_grids;

    fn grids(level: usize) -> Arc<TimeGridSequence> {
        Arc::new(dyadic_grids(1.0, level).unwrap())
    }

    #[test]
    fn zero_vol_gbm_is_exponential() {
        let g = grids(8);
        let p = gen_gbm(0.0, 0.05, 100.0, 3, &g).unwrap();
        for (i, &t) in g.times().iter().enumerate() {
            let e = 100.0 * (0.05 * t).exp();
            assert!((p.component(0)[i] - e).abs() <= 4.0 * f64::EPSILON * e);
        }
        let flat = gen_gbm(0.0, 0.0, 100.0, 3, &g).unwrap();
        assert!(flat.component(0).iter().all(|&v| v == 100.0));
    }

    #[test]
    fn gbm_is_deterministic_per_seed() {
        let g = grids(10);
        let a = gen_gbm(0.2, 0.0, 100.0, 7, &g).unwrap();
        let b = gen_gbm(0.2, 0.0, 100.0, 7, &g).unwrap();
        assert_eq!(a, b);
        assert!(a.is_price() && a.min_value() > 0.0);
        assert_ne!(a, gen_gbm(0.2, 0.0, 100.0, 8, &g).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(GeneratorConfig::gbm(-0.1, 0.0, 100.0, 1).validate().is_err());
        assert!(GeneratorConfig::gbm(0.1, 0.0, 0.0, 1).validate().is_err());
        assert!(GeneratorConfig::fbm(0.5, 1.0, 1).validate().is_err());
        assert!(GeneratorConfig::fbm(1.0, 1.0, 1).validate().is_err());
        assert!(GeneratorConfig::fbm(0.8, 1.0, 1).validate().is_ok());
    }

    #[test]
    fn linear_and_constant() {
        let g = grids(4);
        let lin = gen_deterministic(&DeterministicShape::Linear { start: 0.0, slope: 1.0 }, &[], &g).unwrap();
        assert_eq!(lin.component(0), g.times());
        let c = gen_deterministic(&DeterministicShape::Constant { value: 3.0 }, &[], &g).unwrap();
        assert!(c.component(0).windows(2).all(|w| w[1] - w[0] == 0.0));
    }

    #[test]
    fn crash_injection() {
        let g = grids(2);
        let p = gen_deterministic(
            &DeterministicShape::Constant { value: 100.0 },
            &[Jump { time: 0.5, factor: 0.6 }],
            &g,
        )
        .unwrap();
        assert_eq!(p.component(0), &[100.0, 100.0, 60.0, 60.0, 60.0]);
    }

    #[test]
    fn off_grid_jump_rejected() {
        let g = grids(2);
        let r = gen_deterministic(
            &DeterministicShape::Constant { value: 100.0 },
            &[Jump { time: 0.3, factor: 0.6 }],
            &g,
        );
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn piecewise_and_sinusoid() {
        let shape = DeterministicShape::Piecewise {
            knots: vec![(0.0, 1.0), (0.5, 3.0), (1.0, 2.0)],
        };
        assert_eq!(shape.eval(0.25), 2.0);
        assert_eq!(shape.eval(0.75), 2.5);
        assert_eq!(shape.eval(2.0), 2.0);
        let s = DeterministicShape::Sinusoid {
            offset: 1.0,
            amplitude: 2.0,
            frequency: 1.0,
            phase: 0.0,
        };
        assert!((s.eval(0.25) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn generator_config_serde() {
        let cfg: GeneratorConfig = serde_json::from_str(r#"{"kind":"gbm","sigma":0.2,"s0":100,"seed":7}"#).unwrap();
        assert_eq!(cfg, GeneratorConfig::gbm(0.2, 0.0, 100.0, 7));
        let det: GeneratorConfig = serde_json::from_str(
            r#"{"kind":"deterministic","shape":"constant","value":100,"jumps":[{"time":0.5,"factor":0.6}]}"#,
        )
        .unwrap();
        assert!(matches!(det.kind, GeneratorKind::Deterministic { ref jumps, .. } if jumps.len() == 1));
    }

    #[test]
    fn fbm_price_is_positive() {
        let g = grids(8);
        let p = gen_fbm(0.8, 50.0, 1.0, 4, &g).unwrap();
        assert!(p.is_price());
        assert_eq!(p.component(0)[0], 50.0);
    }
}
