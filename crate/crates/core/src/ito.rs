//! Pathwise Itô and Stieltjes integrals as left-endpoint Riemann sums, and
//! numerical checks of the Itô formula, integral covariation and associativity.
//!
//! Integrands with quadratic-variation states are bound level by level: at
//! level `N` the state uses the level-`N` sums. Integral paths that feed into
//! further checks ("canonical" paths) are the finest-level sums.

use std::sync::Arc;

use serde::Serialize;

use crate::bond::RateFunction;
use crate::convergence::ConvergenceReport;
use crate::error::{Error, Result};
use crate::expr::{BoundSpec, FunctionalSpec};
use crate::grid::TimeGridSequence;
use crate::path::SampledPath;
use crate::quadvar::{covariation, quad_variation};
use crate::series::LevelSeries;
use crate::sum::{cumulative, ksum};

/// How a spec turns into an integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntegrandForm {
    /// `ξ = g(A, X)`; scalar drivers only.
    Value,
    /// `ξ = ∇_x g(A, X)`, integrated as `∇_x g · dX`.
    Gradient,
}

/// Per-level cumulative integral values at the level's grid points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegralPath {
    pub integrand: String,
    pub driver: String,
    pub levels: Vec<LevelSeries>,
}

impl IntegralPath {
    pub fn level(&self, n: usize) -> Option<&LevelSeries> {
        self.levels.iter().find(|s| s.level == n)
    }

    pub fn level_numbers(&self) -> Vec<usize> {
        self.levels.iter().map(|s| s.level).collect()
    }

    pub fn terminal_values(&self) -> Vec<f64> {
        self.levels.iter().map(LevelSeries::terminal).collect()
    }

    /// Values at the target times, one row per level.
    pub fn report(&self, quantity: &str, grids: &TimeGridSequence, targets: &[f64]) -> Result<ConvergenceReport> {
        let times = grids.times();
        ConvergenceReport::new(
            quantity,
            self.level_numbers(),
            targets.to_vec(),
            self.levels
                .iter()
                .map(|s| targets.iter().map(|&t| s.at_time(times, t)).collect())
                .collect(),
        )
    }

    /// The finest-level integral as a scalar path.
    pub fn to_path(&self, grids: &Arc<TimeGridSequence>, label: &str) -> Result<SampledPath> {
        let fin = self
            .level(grids.finest_level())
            .ok_or_else(|| Error::config("integral path lacks the finest level"))?;
        SampledPath::scalar(grids.clone(), fin.on_finest(grids.len()), label)
    }
}

fn check_levels(grids: &TimeGridSequence, levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::config("no levels requested"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("levels must be strictly increasing"));
    }
    for &n in levels {
        grids.check_level(n)?;
    }
    Ok(())
}

fn check_form(spec: &FunctionalSpec, form: IntegrandForm) -> Result<()> {
    if form == IntegrandForm::Value && spec.dim_x() != 1 {
        return Err(Error::config(
            "vector drivers integrate only the gradient form of a spec; componentwise integrals are not exposed",
        ));
    }
    Ok(())
}

/// Integrand components `[k][p]` at the given finest indices.
fn integrand_at(b: &BoundSpec, form: IntegrandForm, idx: &[usize]) -> Result<Vec<Vec<f64>>> {
    let spec = b.spec();
    match form {
        IntegrandForm::Value => Ok(vec![b.series_at(spec.expr(), idx.iter().copied())?]),
        IntegrandForm::Gradient => (0..spec.dim_x())
            .map(|k| b.series_at(spec.grad_x(k), idx.iter().copied()))
            .collect(),
    }
}

/// Binds once when no state depends on the level, else per level.
struct Binder<'a> {
    spec: &'a FunctionalSpec,
    driver: &'a SampledPath,
    rate: Option<&'a RateFunction>,
    shared: Option<BoundSpec<'a>>,
}

impl<'a> Binder<'a> {
    fn new(spec: &'a FunctionalSpec, driver: &'a SampledPath, rate: Option<&'a RateFunction>) -> Result<Self> {
        let shared = if spec.has_qv_state() {
            None
        } else {
            Some(spec.bind_finest(driver, rate)?)
        };
        Ok(Binder {
            spec,
            driver,
            rate,
            shared,
        })
    }

    fn with<T>(&self, level: usize, f: impl FnOnce(&BoundSpec) -> Result<T>) -> Result<T> {
        match &self.shared {
            Some(b) => f(b),
            None => f(&self.spec.bind(self.driver, self.rate, level)?),
        }
    }
}

fn dot_increments(xi: &[Vec<f64>], driver: &SampledPath, idx: &[usize]) -> Vec<f64> {
    let comps = driver.components();
    (0..idx.len() - 1)
        .map(|p| {
            let (i, j) = (idx[p], idx[p + 1]);
            xi.iter().zip(comps).map(|(x, c)| x[p] * (c[j] - c[i])).sum()
        })
        .collect()
}

/// `Σ_{t_{i+1} <= t} ξ_{t_i} (X_{t_{i+1}} - X_{t_i})` at each requested level.
pub fn ito_integral(
    spec: &FunctionalSpec,
    form: IntegrandForm,
    driver: &SampledPath,
    rate: Option<&RateFunction>,
    levels: &[usize],
) -> Result<IntegralPath> {
    check_form(spec, form)?;
    let grids = driver.grids();
    check_levels(grids, levels)?;
    let binder = Binder::new(spec, driver, rate)?;
    let series = levels
        .iter()
        .map(|&n| {
            let idx = grids.level(n);
            let xi = binder.with(n, |b| integrand_at(b, form, idx))?;
            let incs = dot_increments(&xi, driver, idx);
            Ok(LevelSeries {
                level: n,
                indices: idx.to_vec(),
                values: cumulative(incs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntegralPath {
        integrand: match form {
            IntegrandForm::Value => spec.to_string(),
            IntegrandForm::Gradient => format!("grad {spec}"),
        },
        driver: driver.labels().join(","),
        levels: series,
    })
}

/// The finest-level integral `∫ ξ dX` as a path on the finest grid.
pub fn canonical_integral(
    spec: &FunctionalSpec,
    form: IntegrandForm,
    driver: &SampledPath,
    rate: Option<&RateFunction>,
    label: &str,
) -> Result<SampledPath> {
    let grids = driver.grids();
    ito_integral(spec, form, driver, rate, &[grids.finest_level()])?.to_path(grids, label)
}

/// Left-endpoint Riemann–Stieltjes sums of finest-grid integrand samples
/// against a finite-variation integrator sampled on the same grid.
pub fn stieltjes_integral(
    integrand: &[f64],
    integrator: &[f64],
    grids: &TimeGridSequence,
    levels: &[usize],
) -> Result<IntegralPath> {
    if integrand.len() != grids.len() || integrator.len() != grids.len() {
        return Err(Error::validation(
            "integrand and integrator must be sampled on the finest grid",
        ));
    }
    check_levels(grids, levels)?;
    Ok(IntegralPath {
        integrand: "samples".into(),
        driver: "finite-variation samples".into(),
        levels: levels
            .iter()
            .map(|&n| LevelSeries::accumulate(n, grids.level(n), |i, j| integrand[i] * (integrator[j] - integrator[i])))
            .collect(),
    })
}

/// `∫ g d[X^k, X^m]` with `d[X^k, X^m]` the level's point masses
/// `ΔX^k ΔX^m` placed at left endpoints.
pub fn covariation_stieltjes(
    integrand: &[f64],
    path: &SampledPath,
    k: usize,
    m: usize,
    levels: &[usize],
) -> Result<IntegralPath> {
    path.check_component(k)?;
    path.check_component(m)?;
    let grids = path.grids();
    if integrand.len() != grids.len() {
        return Err(Error::validation("integrand must be sampled on the finest grid"));
    }
    check_levels(grids, levels)?;
    let (xk, xm) = (path.component(k), path.component(m));
    Ok(IntegralPath {
        integrand: "samples".into(),
        driver: format!("[{},{}]", path.labels()[k], path.labels()[m]),
        levels: levels
            .iter()
            .map(|&n| {
                LevelSeries::accumulate(n, grids.level(n), |i, j| {
                    integrand[i] * (xk[j] - xk[i]) * (xm[j] - xm[i])
                })
            })
            .collect(),
    })
}

/// Per-level Itô-formula residual paths and their sup norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItoResidual {
    /// `R_N(t)` at the level's grid points.
    pub residuals: Vec<LevelSeries>,
    /// `f(A_T, X_T)` per level.
    pub terminal_value: Vec<f64>,
    pub report: ConvergenceReport,
}

/// `R_N(t) = f(A_t,X_t) - f(A_0,X_0) - Σ_k ∫ f_{a^k} dA^k - ∫ ∇_x f · dX
///  - ½ Σ_{k,m} ∫ f_{x^k x^m} d[X^k,X^m]`, all sums at level `N`.
pub fn ito_formula_residual(
    f: &FunctionalSpec,
    driver: &SampledPath,
    rate: Option<&RateFunction>,
    levels: &[usize],
) -> Result<ItoResidual> {
    let grids = driver.grids();
    check_levels(grids, levels)?;
    let binder = Binder::new(f, driver, rate)?;
    let (da, dx) = (f.dim_a(), f.dim_x());
    let comps = driver.components();
    let mut residuals = Vec::with_capacity(levels.len());
    let mut terminal_value = Vec::with_capacity(levels.len());
    for &n in levels {
        let idx = grids.level(n);
        let (vals, incs) = binder.with(n, |b| {
            let at = |e| b.series_at(e, idx.iter().copied());
            let fv = at(f.expr())?;
            let fa: Vec<Vec<f64>> = (0..da).map(|k| at(f.grad_a(k))).collect::<Result<_>>()?;
            let fx: Vec<Vec<f64>> = (0..dx).map(|k| at(f.grad_x(k))).collect::<Result<_>>()?;
            let fxx: Vec<Vec<Vec<f64>>> = (0..dx)
                .map(|k| (0..dx).map(|m| at(f.hess_x(k, m))).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            let incs: Vec<f64> = (0..idx.len() - 1)
                .map(|p| {
                    let (i, j) = (idx[p], idx[p + 1]);
                    let mut terms = Vec::with_capacity(da + dx + dx * dx);
                    for (k, g) in fa.iter().enumerate() {
                        let s = b.state(k);
                        terms.push(g[p] * (s[j] - s[i]));
                    }
                    for k in 0..dx {
                        let dk = comps[k][j] - comps[k][i];
                        terms.push(fx[k][p] * dk);
                        for m in 0..dx {
                            terms.push(0.5 * fxx[k][m][p] * dk * (comps[m][j] - comps[m][i]));
                        }
                    }
                    ksum(terms)
                })
                .collect();
            Ok((fv, incs))
        })?;
        let recon = cumulative(incs);
        let values: Vec<f64> = vals.iter().zip(&recon).map(|(v, r)| (v - vals[0]) - r).collect();
        terminal_value.push(*vals.last().unwrap());
        residuals.push(LevelSeries {
            level: n,
            indices: idx.to_vec(),
            values,
        });
    }
    let report = ConvergenceReport::scalar(
        format!("ito residual sup_t |R_N| for {f}"),
        levels.to_vec(),
        grids.horizon(),
        residuals.iter().map(LevelSeries::max_abs).collect(),
    )?;
    Ok(ItoResidual {
        residuals,
        terminal_value,
        report,
    })
}

/// Two sides of an identity evaluated per level at `T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub levels: Vec<usize>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Magnitude the gap is measured against.
    pub scale: Vec<f64>,
    /// `|lhs - rhs| / scale` per level (0 when both sides coincide).
    pub report: ConvergenceReport,
}

impl IdentityCheck {
    fn build(
        quantity: String,
        levels: Vec<usize>,
        lhs: Vec<f64>,
        rhs: Vec<f64>,
        scale: Vec<f64>,
        t: f64,
    ) -> Result<Self> {
        let rel = lhs
            .iter()
            .zip(&rhs)
            .zip(&scale)
            .map(|((l, r), s)| {
                let gap = (l - r).abs();
                if gap == 0.0 {
                    0.0
                } else {
                    gap / s
                }
            })
            .collect();
        let report = ConvergenceReport::scalar(quantity, levels.clone(), t, rel)?;
        Ok(IdentityCheck {
            levels,
            lhs,
            rhs,
            scale,
            report,
        })
    }

    pub fn absolute_gaps(&self) -> Vec<f64> {
        self.lhs.iter().zip(&self.rhs).map(|(l, r)| (l - r).abs()).collect()
    }

    pub fn relative_gaps(&self) -> Vec<f64> {
        self.report.series(0)
    }

    pub fn relative_gap_at(&self, level: usize) -> Option<f64> {
        self.report.at(level, 0)
    }
}

/// Covariation of `Y¹ = ∫ξ dX` and `Y² = ∫ζ dX` two ways per level `N`:
/// the cross-increment sum of the finest-level integral paths sampled at
/// level `N`, against `Σ_{k,m} ∫ ξ^k ζ^m d[X^k,X^m]` with level-`N` point
/// masses. The gap is relative to `sqrt([Y¹]_T [Y²]_T)`.
pub fn integral_covariation_check(
    xi: (&FunctionalSpec, IntegrandForm),
    zeta: (&FunctionalSpec, IntegrandForm),
    driver: &SampledPath,
    rate: Option<&RateFunction>,
    levels: &[usize],
) -> Result<IdentityCheck> {
    let grids = driver.grids();
    check_levels(grids, levels)?;
    check_form(xi.0, xi.1)?;
    check_form(zeta.0, zeta.1)?;
    let y1 = canonical_integral(xi.0, xi.1, driver, rate, "Y1")?;
    let y2 = canonical_integral(zeta.0, zeta.1, driver, rate, "Y2")?;
    let ys = SampledPath::stack(&[&y1, &y2])?;
    let cov = covariation(&ys, 0, 1)?;
    let q1 = quad_variation(&ys, 0)?;
    let q2 = quad_variation(&ys, 1)?;

    let all: Vec<usize> = (0..grids.len()).collect();
    let bx = xi.0.bind_finest(driver, rate)?;
    let bz = zeta.0.bind_finest(driver, rate)?;
    let gx = integrand_at(&bx, xi.1, &all)?;
    let gz = integrand_at(&bz, zeta.1, &all)?;
    let comps = driver.components();

    let mut lhs = Vec::new();
    let mut rhs = Vec::new();
    let mut scale = Vec::new();
    for &n in levels {
        lhs.push(cov.direct[n].terminal());
        scale.push((q1.levels[n].terminal() * q2.levels[n].terminal()).abs().sqrt());
        let idx = grids.level(n);
        rhs.push(ksum(idx.windows(2).map(|w| {
            let (i, j) = (w[0], w[1]);
            let mut s = 0.0;
            for (k, ck) in comps.iter().enumerate() {
                for (m, cm) in comps.iter().enumerate() {
                    s += gx[k][i] * gz[m][i] * (ck[j] - ck[i]) * (cm[j] - cm[i]);
                }
            }
            s
        })));
    }
    IdentityCheck::build(
        format!("integral covariation relative gap [{}, {}]", xi.0, zeta.0),
        levels.to_vec(),
        lhs,
        rhs,
        scale,
        grids.horizon(),
    )
}

/// Compares `Σ_ℓ ∫ η^ℓ dY^ℓ` (sums over increments of the finest-level
/// integral paths `Y^ℓ = ∫ ξ^ℓ dX`, sampled at level `N`) with
/// `∫ Σ_ℓ η^ℓ ξ^ℓ dX` at level `N`. The outer specs are functions of the
/// `Y` vector, labelled `Y1, Y2, ...`, bound at level `N`. The gap is
/// relative to the larger of `|lhs|`, `|rhs|` and `sqrt` of the quadratic
/// variation of the right-hand integral.
pub fn associativity_check(
    inner: &[(&FunctionalSpec, IntegrandForm)],
    outer: &[&FunctionalSpec],
    driver: &SampledPath,
    rate: Option<&RateFunction>,
    levels: &[usize],
) -> Result<IdentityCheck> {
    if inner.is_empty() || inner.len() != outer.len() {
        return Err(Error::config("need one outer integrand per inner integrand"));
    }
    let grids = driver.grids();
    check_levels(grids, levels)?;
    let labels = y_labels(inner.len());
    let ys: Vec<SampledPath> = inner
        .iter()
        .zip(&labels)
        .map(|((s, f), l)| canonical_integral(s, *f, driver, rate, l))
        .collect::<Result<_>>()?;
    let y = SampledPath::stack(&ys.iter().collect::<Vec<_>>())?;
    for o in outer {
        if o.labels() != labels.as_slice() {
            return Err(Error::config(format!(
                "outer integrands must be specs over labels {labels:?}"
            )));
        }
    }
    let all: Vec<usize> = (0..grids.len()).collect();
    let inner_vals: Vec<Vec<Vec<f64>>> = inner
        .iter()
        .map(|(s, f)| {
            check_form(s, *f)?;
            integrand_at(&s.bind_finest(driver, rate)?, *f, &all)
        })
        .collect::<Result<_>>()?;
    let binders: Vec<Binder> = outer.iter().map(|o| Binder::new(o, &y, rate)).collect::<Result<_>>()?;
    let comps = driver.components();

    let (mut lhs, mut rhs, mut scale) = (Vec::new(), Vec::new(), Vec::new());
    for &n in levels {
        let idx = grids.level(n);
        let eta: Vec<Vec<f64>> = binders
            .iter()
            .map(|b| b.with(n, |bs| bs.series_at(bs.spec().expr(), idx.iter().copied())))
            .collect::<Result<_>>()?;
        let mut l_terms = Vec::with_capacity(idx.len());
        let mut r_terms = Vec::with_capacity(idx.len());
        for p in 0..idx.len() - 1 {
            let (i, j) = (idx[p], idx[p + 1]);
            let mut l = 0.0;
            let mut integrand = vec![0.0; comps.len()];
            for (ell, e) in eta.iter().enumerate() {
                let yl = y.component(ell);
                l += e[p] * (yl[j] - yl[i]);
                for (k, slot) in integrand.iter_mut().enumerate() {
                    *slot += e[p] * inner_vals[ell][k][i];
                }
            }
            l_terms.push(l);
            r_terms.push(integrand.iter().zip(comps).map(|(g, c)| g * (c[j] - c[i])).sum::<f64>());
        }
        let qv_rhs = ksum(r_terms.iter().map(|r| r * r));
        let (l, r) = (ksum(l_terms), ksum(r_terms));
        lhs.push(l);
        rhs.push(r);
        scale.push(l.abs().max(r.abs()).max(qv_rhs.sqrt()));
    }
    IdentityCheck::build(
        "associativity relative gap".into(),
        levels.to_vec(),
        lhs,
        rhs,
        scale,
        grids.horizon(),
    )
}

/// Driver labels `Y1..Yn` used by outer integrands in [`associativity_check`].
pub fn y_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("Y{k}")).collect()
}

/// Gain of the strategy `ξ_t = 2(X_t - X_0)` per level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArbitrageReport {
    pub levels: Vec<usize>,
    /// `Σ 2(X_{t_i} - X_0) ΔX`.
    pub gain: Vec<f64>,
    /// `Σ (ΔX)^2`, the amount by which the gain falls short of `(X_T - X_0)^2`.
    pub qv_correction: Vec<f64>,
    /// `(X_T - X_0)^2`.
    pub squared_move: f64,
    /// `qv_correction / (X_T - X_0)^2` (infinite when `X_T = X_0`).
    pub ratio: Vec<f64>,
}

pub fn zero_qv_arbitrage_demo(driver: &SampledPath, k: usize, levels: &[usize]) -> Result<ArbitrageReport> {
    driver.check_component(k)?;
    let grids = driver.grids();
    check_levels(grids, levels)?;
    let x = driver.component(k);
    let x0 = x[0];
    let squared_move = (x[x.len() - 1] - x0) * (x[x.len() - 1] - x0);
    let mut gain = Vec::new();
    let mut qv = Vec::new();
    for &n in levels {
        let idx = grids.level(n);
        gain.push(ksum(idx.windows(2).map(|w| 2.0 * (x[w[0]] - x0) * (x[w[1]] - x[w[0]]))));
        qv.push(ksum(idx.windows(2).map(|w| (x[w[1]] - x[w[0]]) * (x[w[1]] - x[w[0]]))));
    }
    let ratio = qv.iter().map(|q| q / squared_move).collect();
    Ok(ArbitrageReport {
        levels: levels.to_vec(),
        gain,
        qv_correction: qv,
        squared_move,
        ratio,
    })
}
