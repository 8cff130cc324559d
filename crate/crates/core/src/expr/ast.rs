//! Expression trees over a state vector `a` and a driver vector `x`.

use std::ops;

/// A variable of a feedback map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// `a^k`, the k-th finite-variation state.
    State(usize),
    /// `x^k`, the k-th driver component.
    Driver(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Guarded: `|denominator| >= guard`.
    Div(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    /// Guarded: `argument >= guard`.
    Log(Box<Expr>),
    /// Guarded: `argument >= 0`.
    Sqrt(Box<Expr>),
    /// Constant exponent. Non-integer exponents require `base >= guard`,
    /// negative integer exponents `|base| >= guard`.
    Pow(Box<Expr>, f64),
    /// `½(u + v - sqrt((u - v)^2 + eps^2))`.
    SMin(Box<Expr>, Box<Expr>, f64),
    /// `½(u + v + sqrt((u - v)^2 + eps^2))`.
    SMax(Box<Expr>, Box<Expr>, f64),
    /// Smooth step `½(1 + d / sqrt(d^2 + eps^2))`, the weight `∂smax/∂u`
    /// at `d = u - v`. Evaluated without cancellation for either sign.
    SStep(Box<Expr>, f64),
}

/// Default smoothing width of `smin`/`smax`.
pub const DEFAULT_SMOOTHING: f64 = 1e-3;

/// Why an evaluation left a guarded domain.
#[derive(Debug, Clone, PartialEq)]
pub struct GuardViolation(pub String);

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn x(k: usize) -> Expr {
        Expr::Var(Var::Driver(k))
    }

    pub fn state(k: usize) -> Expr {
        Expr::Var(Var::State(k))
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn ln(self) -> Expr {
        Expr::Log(Box::new(self))
    }

    pub fn sqrt(self) -> Expr {
        Expr::Sqrt(Box::new(self))
    }

    pub fn pow(self, p: f64) -> Expr {
        Expr::Pow(Box::new(self), p)
    }

    pub fn smin(self, other: Expr, eps: f64) -> Expr {
        Expr::SMin(Box::new(self), Box::new(other), eps)
    }

    pub fn smax(self, other: Expr, eps: f64) -> Expr {
        Expr::SMax(Box::new(self), Box::new(other), eps)
    }

    pub fn sstep(self, eps: f64) -> Expr {
        Expr::SStep(Box::new(self), eps)
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Evaluates with guarded operations checked against `guard`.
    pub fn eval(&self, a: &[f64], x: &[f64], guard: f64) -> Result<f64, GuardViolation> {
        Ok(match self {
            Expr::Const(v) => *v,
            Expr::Var(Var::State(k)) => a[*k],
            Expr::Var(Var::Driver(k)) => x[*k],
            Expr::Neg(u) => -u.eval(a, x, guard)?,
            Expr::Add(u, v) => u.eval(a, x, guard)? + v.eval(a, x, guard)?,
            Expr::Sub(u, v) => u.eval(a, x, guard)? - v.eval(a, x, guard)?,
            Expr::Mul(u, v) => u.eval(a, x, guard)? * v.eval(a, x, guard)?,
            Expr::Div(u, v) => {
                let d = v.eval(a, x, guard)?;
                if !(d.abs() >= guard) {
                    return Err(GuardViolation(format!("division by {d:e} (guard {guard:e})")));
                }
                u.eval(a, x, guard)? / d
            }
            Expr::Exp(u) => u.eval(a, x, guard)?.exp(),
            Expr::Log(u) => {
                let v = u.eval(a, x, guard)?;
                if !(v >= guard) {
                    return Err(GuardViolation(format!("log of {v:e} (guard {guard:e})")));
                }
                v.ln()
            }
            Expr::Sqrt(u) => {
                let v = u.eval(a, x, guard)?;
                if !(v >= 0.0) {
                    return Err(GuardViolation(format!("sqrt of {v:e}")));
                }
                v.sqrt()
            }
            Expr::Pow(u, p) => {
                let b = u.eval(a, x, guard)?;
                pow_guarded(b, *p, guard)?
            }
            Expr::SMin(u, v, eps) | Expr::SMax(u, v, eps) => {
                let (p, q) = (u.eval(a, x, guard)?, v.eval(a, x, guard)?);
                let r = ((p - q) * (p - q) + eps * eps).sqrt();
                if matches!(self, Expr::SMin(..)) {
                    0.5 * (p + q - r)
                } else {
                    0.5 * (p + q + r)
                }
            }
            Expr::SStep(u, eps) => smooth_step(u.eval(a, x, guard)?, *eps),
        })
    }

    /// Symbolic partial derivative with respect to `v`.
    pub fn diff(&self, v: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::c(0.0),
            Expr::Var(w) => Expr::c(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(u) => neg(u.diff(v)),
            Expr::Add(u, w) => add(u.diff(v), w.diff(v)),
            Expr::Sub(u, w) => sub(u.diff(v), w.diff(v)),
            Expr::Mul(u, w) => add(mul(u.diff(v), (**w).clone()), mul((**u).clone(), w.diff(v))),
            Expr::Div(u, w) => {
                let du = u.diff(v);
                let dw = w.diff(v);
                if dw.as_const() == Some(0.0) {
                    div(du, (**w).clone())
                } else {
                    div(
                        sub(mul(du, (**w).clone()), mul((**u).clone(), dw)),
                        mul((**w).clone(), (**w).clone()),
                    )
                }
            }
            Expr::Exp(u) => mul(self.clone(), u.diff(v)),
            Expr::Log(u) => div(u.diff(v), (**u).clone()),
            Expr::Sqrt(u) => div(u.diff(v), mul(Expr::c(2.0), self.clone())),
            Expr::Pow(u, p) => {
                let inner = if *p - 1.0 == 0.0 {
                    Expr::c(1.0)
                } else {
                    Expr::Pow(u.clone(), p - 1.0)
                };
                mul(mul(Expr::c(*p), inner), u.diff(v))
            }
            Expr::SMin(u, w, eps) | Expr::SMax(u, w, eps) => {
                let du = u.diff(v);
                let dw = w.diff(v);
                let diff_uw = sub((**u).clone(), (**w).clone());
                // The weights sum to one; writing each as a smooth step keeps the
                // small one accurate far from the crossing.
                let (wu, ww) = (diff_uw.clone().sstep(*eps), neg(diff_uw).sstep(*eps));
                if matches!(self, Expr::SMin(..)) {
                    add(mul(ww, du), mul(wu, dw))
                } else {
                    add(mul(wu, du), mul(ww, dw))
                }
            }
            Expr::SStep(u, eps) => {
                // ½ eps² / (d² + eps²)^{3/2}
                let r2 = add(mul((**u).clone(), (**u).clone()), Expr::c(eps * eps));
                mul(div(Expr::c(0.5 * eps * eps), r2.pow(1.5)), u.diff(v))
            }
        }
    }

    /// Calls `f` on every variable in the tree.
    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(u) | Expr::Exp(u) | Expr::Log(u) | Expr::Sqrt(u) | Expr::Pow(u, _) | Expr::SStep(u, _) => {
                u.visit_vars(f)
            }
            Expr::Add(u, w)
            | Expr::Sub(u, w)
            | Expr::Mul(u, w)
            | Expr::Div(u, w)
            | Expr::SMin(u, w, _)
            | Expr::SMax(u, w, _) => {
                u.visit_vars(f);
                w.visit_vars(f);
            }
        }
    }

    /// True when no driver variable occurs.
    pub fn is_free_of_driver(&self) -> bool {
        let mut free = true;
        self.visit_vars(&mut |v| free &= !matches!(v, Var::Driver(_)));
        free
    }
}

fn smooth_step(d: f64, eps: f64) -> f64 {
    let r = d.hypot(eps);
    if d >= 0.0 {
        (r + d) / (2.0 * r)
    } else {
        // (r + d)(r - d) = eps²
        eps * eps / (2.0 * r * (r - d))
    }
}

fn pow_guarded(b: f64, p: f64, guard: f64) -> Result<f64, GuardViolation> {
    if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
        if p < 0.0 && !(b.abs() >= guard) {
            return Err(GuardViolation(format!("negative power of {b:e} (guard {guard:e})")));
        }
        Ok(b.powi(p as i32))
    } else {
        if !(b >= guard) {
            return Err(GuardViolation(format!("fractional power of {b:e} (guard {guard:e})")));
        }
        Ok(b.powf(p))
    }
}

// Smart constructors with constant folding for the trivial identities that
// symbolic differentiation produces in bulk.

fn neg(u: Expr) -> Expr {
    match u.as_const() {
        Some(c) => Expr::c(-c),
        None => Expr::Neg(Box::new(u)),
    }
}

fn add(u: Expr, v: Expr) -> Expr {
    match (u.as_const(), v.as_const()) {
        (Some(a), Some(b)) => Expr::c(a + b),
        (Some(0.0), _) => v,
        (_, Some(0.0)) => u,
        _ => Expr::Add(Box::new(u), Box::new(v)),
    }
}

fn sub(u: Expr, v: Expr) -> Expr {
    match (u.as_const(), v.as_const()) {
        (Some(a), Some(b)) => Expr::c(a - b),
        (Some(0.0), _) => neg(v),
        (_, Some(0.0)) => u,
        _ => Expr::Sub(Box::new(u), Box::new(v)),
    }
}

fn mul(u: Expr, v: Expr) -> Expr {
    match (u.as_const(), v.as_const()) {
        (Some(a), Some(b)) => Expr::c(a * b),
        (Some(0.0), _) => Expr::c(0.0),
        (_, Some(0.0)) => Expr::c(0.0),
        (Some(1.0), _) => v,
        (_, Some(1.0)) => u,
        _ => Expr::Mul(Box::new(u), Box::new(v)),
    }
}

fn div(u: Expr, v: Expr) -> Expr {
    match (u.as_const(), v.as_const()) {
        (Some(0.0), _) => Expr::c(0.0),
        (_, Some(1.0)) => u,
        _ => Expr::Div(Box::new(u), Box::new(v)),
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
