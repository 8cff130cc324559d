//! Differentiable state-feedback maps `g(a, x)`.
//!
//! A [`FunctionalSpec`] pairs an [`Expr`] over a state vector `a` and a driver
//! vector `x` with the [`StateBuilder`]s that produce `a` from the driving
//! path. First derivatives in every variable and second derivatives in `x`
//! are built symbolically at construction.

mod ast;
mod parse;
mod state;

use std::fmt;

pub use ast::{Expr, GuardViolation, Var, DEFAULT_SMOOTHING};
pub use state::{moving_average, piecewise_linear, running_max, Source, StateBuilder};

use crate::bond::{log_bond_values, RateFunction};
use crate::error::{Error, Result};
use crate::path::SampledPath;

/// Guards scale with the driver: `GUARD_RELATIVE * max(1, max|x|)`.
pub const GUARD_RELATIVE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    expr: Expr,
    states: Vec<StateBuilder>,
    labels: Vec<String>,
    grad_a: Vec<Expr>,
    grad_x: Vec<Expr>,
    hess_x: Vec<Vec<Expr>>,
}

impl FunctionalSpec {
    /// `labels` names the driver components; its length is the driver dimension.
    pub fn new(expr: Expr, states: Vec<StateBuilder>, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::config("driver dimension must be >= 1"));
        }
        for s in &states {
            s.validate(labels.len())?;
        }
        let mut bad = None;
        expr.visit_vars(&mut |v| match v {
            Var::State(k) if k >= states.len() => bad = Some(format!("state index {k} out of range")),
            Var::Driver(k) if k >= labels.len() => bad = Some(format!("driver index {k} out of range")),
            _ => {}
        });
        if let Some(msg) = bad {
            return Err(Error::config(msg));
        }
        if let Some(c) = non_finite_constant(&expr) {
            return Err(Error::config(format!("non-finite constant {c}")));
        }
        let grad_a: Vec<Expr> = (0..states.len()).map(|k| expr.diff(Var::State(k))).collect();
        let grad_x: Vec<Expr> = (0..labels.len()).map(|k| expr.diff(Var::Driver(k))).collect();
        let hess_x = grad_x
            .iter()
            .map(|g| (0..labels.len()).map(|m| g.diff(Var::Driver(m))).collect())
            .collect();
        Ok(FunctionalSpec {
            expr,
            states,
            labels,
            grad_a,
            grad_x,
            hess_x,
        })
    }

    /// Parses the prefix text format against the given driver labels.
    pub fn parse(text: &str, labels: &[&str]) -> Result<Self> {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        let p = parse::parse(text, &labels)?;
        Self::new(p.expr, p.states, labels)
    }

    /// Scalar-driver spec with no states.
    pub fn of_driver(expr: Expr, label: &str) -> Result<Self> {
        Self::new(expr, Vec::new(), vec![label.to_string()])
    }

    pub fn constant(value: f64, labels: &[&str]) -> Result<Self> {
        Self::new(
            Expr::c(value),
            Vec::new(),
            labels.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn states(&self) -> &[StateBuilder] {
        &self.states
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dim_x(&self) -> usize {
        self.labels.len()
    }

    pub fn dim_a(&self) -> usize {
        self.states.len()
    }

    pub fn grad_a(&self, k: usize) -> &Expr {
        &self.grad_a[k]
    }

    pub fn grad_x(&self, k: usize) -> &Expr {
        &self.grad_x[k]
    }

    pub fn hess_x(&self, k: usize, m: usize) -> &Expr {
        &self.hess_x[k][m]
    }

    pub fn needs_bond(&self) -> bool {
        self.states.iter().any(StateBuilder::needs_bond)
    }

    pub fn has_qv_state(&self) -> bool {
        self.states.iter().any(|s| matches!(s, StateBuilder::Qv(_)))
    }

    /// Evaluates `g(a, x)` at an explicit point.
    pub fn eval(&self, a: &[f64], x: &[f64], guard: f64) -> std::result::Result<f64, GuardViolation> {
        self.expr.eval(a, x, guard)
    }

    /// Binds the spec to a driving path. Quadratic-variation states use the
    /// sums of level `qv_level`; the rate function is required only by bond states.
    pub fn bind<'a>(
        &'a self,
        driver: &'a SampledPath,
        rate: Option<&RateFunction>,
        qv_level: usize,
    ) -> Result<BoundSpec<'a>> {
        if driver.dim() != self.dim_x() {
            return Err(Error::config(format!(
                "spec expects a {}-dimensional driver, path has {}",
                self.dim_x(),
                driver.dim()
            )));
        }
        let log_bond = match rate {
            Some(r) if self.needs_bond() => Some(log_bond_values(r, driver.grids())),
            _ => None,
        };
        let states = self
            .states
            .iter()
            .map(|s| s.values(driver, log_bond.as_deref(), qv_level))
            .collect::<Result<Vec<_>>>()?;
        let guard = GUARD_RELATIVE * driver.max_abs().max(1.0);
        Ok(BoundSpec {
            spec: self,
            driver,
            states,
            guard,
        })
    }

    /// Same as [`bind`](Self::bind) at the finest level.
    pub fn bind_finest<'a>(&'a self, driver: &'a SampledPath, rate: Option<&RateFunction>) -> Result<BoundSpec<'a>> {
        self.bind(driver, rate, driver.grids().finest_level())
    }
}

impl fmt::Display for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&parse::render(&self.expr, &self.states, &self.labels))
    }
}

fn non_finite_constant(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(v) if !v.is_finite() => Some(*v),
        Expr::Pow(_, p) if !p.is_finite() => Some(*p),
        Expr::SMin(_, _, w) | Expr::SMax(_, _, w) | Expr::SStep(_, w) if !(*w > 0.0 && w.is_finite()) => Some(*w),
        Expr::Const(_) | Expr::Var(_) => None,
        Expr::Neg(u) | Expr::Exp(u) | Expr::Log(u) | Expr::Sqrt(u) | Expr::Pow(u, _) | Expr::SStep(u, _) => {
            non_finite_constant(u)
        }
        Expr::Add(u, v)
        | Expr::Sub(u, v)
        | Expr::Mul(u, v)
        | Expr::Div(u, v)
        | Expr::SMin(u, v, _)
        | Expr::SMax(u, v, _) => non_finite_constant(u).or_else(|| non_finite_constant(v)),
    }
}

/// A spec with its state vector materialised along one driving path.
#[derive(Debug, Clone)]
pub struct BoundSpec<'a> {
    spec: &'a FunctionalSpec,
    driver: &'a SampledPath,
    states: Vec<Vec<f64>>,
    guard: f64,
}

impl BoundSpec<'_> {
    pub fn spec(&self) -> &FunctionalSpec {
        self.spec
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k]
    }

    /// `(a, x)` at finest index `i`.
    pub fn point(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        let a = self.states.iter().map(|s| s[i]).collect();
        let x = self.driver.components().iter().map(|c| c[i]).collect();
        (a, x)
    }

    /// Evaluates any expression over this spec's variables at finest index `i`.
    pub fn eval_at(&self, e: &Expr, i: usize) -> Result<f64> {
        let (a, x) = self.point(i);
        e.eval(&a, &x, self.guard).map_err(|g| Error::Domain {
            time: self.driver.times()[i],
            what: g.0,
        })
    }

    pub fn value(&self, i: usize) -> Result<f64> {
        self.eval_at(&self.spec.expr, i)
    }

    pub fn grad_x(&self, k: usize, i: usize) -> Result<f64> {
        self.eval_at(&self.spec.grad_x[k], i)
    }

    pub fn grad_a(&self, k: usize, i: usize) -> Result<f64> {
        self.eval_at(&self.spec.grad_a[k], i)
    }

    pub fn hess_x(&self, k: usize, m: usize, i: usize) -> Result<f64> {
        self.eval_at(&self.spec.hess_x[k][m], i)
    }

    /// `g(A_t, X_t)` on every finest-grid point.
    pub fn values(&self) -> Result<Vec<f64>> {
        self.series(&self.spec.expr)
    }

    pub fn series(&self, e: &Expr) -> Result<Vec<f64>> {
        self.series_at(e, 0..self.driver.len())
    }

    /// Evaluates `e` at the given finest indices.
    pub fn series_at(&self, e: &Expr, indices: impl IntoIterator<Item = usize>) -> Result<Vec<f64>> {
        let mut a = vec![0.0; self.states.len()];
        let mut x = vec![0.0; self.driver.dim()];
        let times = self.driver.times();
        indices
            .into_iter()
            .map(|i| {
                for (slot, s) in a.iter_mut().zip(&self.states) {
                    *slot = s[i];
                }
                for (slot, c) in x.iter_mut().zip(self.driver.components()) {
                    *slot = c[i];
                }
                e.eval(&a, &x, self.guard).map_err(|g| Error::Domain {
                    time: times[i],
                    what: g.0,
                })
            })
            .collect()
    }
}

/// Largest relative disagreement between symbolic derivatives and central
/// differences at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub max_relative_error: f64,
    /// Which derivative attains the maximum.
    pub worst: DerivativeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeKind {
    A(usize),
    X(usize),
    Xx(usize, usize),
}

/// Multiple of `ε (1 + |g|) / h` below which derivatives are judged
/// absolutely in [`check_derivatives`]. The extrapolated quotient carries
/// about three times that rounding error plus the evaluation's own ulps, so
/// this keeps rounding noise near `1e-6` of the floor.
pub const FD_NOISE_MULTIPLE: f64 = 1e7;

/// Compares `∂g/∂a^k`, `∂g/∂x^k` against central differences of `g`, and
/// `∂²g/∂x^k∂x^m` against central differences of the symbolic `∂g/∂x^k`.
/// Differences use steps `h = h_rel * max(|v|, 1)` and `h/2`, combined by
/// Richardson extrapolation (truncation error `O(h⁴)`).
///
/// The relative error is `|sym - fd| / max(|sym|, |fd|, floor)` with
/// `floor = FD_NOISE_MULTIPLE * ε (1 + |g|) / h`, where `g` is the
/// differentiated function and `ε (1 + |g|) / h` the rounding resolution of
/// a difference quotient. Derivatives below the floor cannot be resolved
/// relatively by finite differences and are compared on that absolute scale.
pub fn check_derivatives(
    spec: &FunctionalSpec,
    a: &[f64],
    x: &[f64],
    h_rel: f64,
    guard: f64,
) -> std::result::Result<DerivativeCheck, GuardViolation> {
    let mut worst = DerivativeCheck {
        max_relative_error: 0.0,
        worst: DerivativeKind::X(0),
    };
    let mut record = |sym: f64, (fd, floor): (f64, f64), kind: DerivativeKind| {
        let denom = sym.abs().max(fd.abs()).max(floor);
        let err = (sym - fd).abs() / denom;
        if !(err <= worst.max_relative_error) {
            worst = DerivativeCheck {
                max_relative_error: err,
                worst: kind,
            };
        }
    };
    let central = |e: &Expr, a: &[f64], x: &[f64], var: Var| -> std::result::Result<(f64, f64), GuardViolation> {
        let (mut ap, mut xp) = (a.to_vec(), x.to_vec());
        let slot = |ap: &mut Vec<f64>, xp: &mut Vec<f64>, v: f64| match var {
            Var::State(k) => ap[k] = v,
            Var::Driver(k) => xp[k] = v,
        };
        let v0 = match var {
            Var::State(k) => a[k],
            Var::Driver(k) => x[k],
        };
        let h = h_rel * v0.abs().max(1.0);
        let mut quotient = |h: f64| -> std::result::Result<f64, GuardViolation> {
            slot(&mut ap, &mut xp, v0 + h);
            let up = e.eval(&ap, &xp, guard)?;
            slot(&mut ap, &mut xp, v0 - h);
            let dn = e.eval(&ap, &xp, guard)?;
            Ok((up - dn) / (2.0 * h))
        };
        let (coarse, fine) = (quotient(h)?, quotient(0.5 * h)?);
        let g = e.eval(a, x, guard)?;
        Ok((
            (4.0 * fine - coarse) / 3.0,
            FD_NOISE_MULTIPLE * f64::EPSILON * (1.0 + g.abs()) / h,
        ))
    };
    for k in 0..spec.dim_a() {
        let sym = spec.grad_a[k].eval(a, x, guard)?;
        record(sym, central(&spec.expr, a, x, Var::State(k))?, DerivativeKind::A(k));
    }
    for k in 0..spec.dim_x() {
        let sym = spec.grad_x[k].eval(a, x, guard)?;
        record(sym, central(&spec.expr, a, x, Var::Driver(k))?, DerivativeKind::X(k));
        for m in 0..spec.dim_x() {
            let sym = spec.hess_x[k][m].eval(a, x, guard)?;
            record(
                sym,
                central(&spec.grad_x[k], a, x, Var::Driver(m))?,
                DerivativeKind::Xx(k, m),
            );
        }
    }
    Ok(worst)
}
