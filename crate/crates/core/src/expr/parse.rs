//! Prefix-notation text format for feedback maps.
//!
//! ```text
//! expr    := number | "const" number | driver | builder | op "(" args ")"
//! driver  := <label> | "x" | "x(" k ")"
//! builder := "clock" | "bond" | "logbond"
//!          | "qv(" source ")"
//!          | "movavg(" source "," number ")" | "runmax(" source "," number ")"
//!          | "pwlin(" t0 "," v0 { "," t "," v } ")"
//! source  := driver | "log" <label> | "logx" | "logx(" k ")"
//! op      := add | sub | mul | div | neg | exp | log | sqrt
//!          | pow(expr, number) | smin(expr, expr [, number]) | smax(expr, expr [, number])
//!          | sstep(expr [, number])
//! ```

use super::ast::{Expr, DEFAULT_SMOOTHING};
use super::state::{Source, StateBuilder};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    Comma,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c == '(' {
            out.push((i, Tok::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Tok::RParen));
            i += 1;
        } else if c == ',' {
            out.push((i, Tok::Comma));
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            let start = i;
            i += 1;
            while i < bytes.len() {
                let d = bytes[i] as char;
                let exp_sign = (d == '-' || d == '+') && matches!(bytes[i - 1], b'e' | b'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                offset: start,
                message: format!("bad number '{s}'"),
            })?;
            out.push((start, Tok::Num(v)));
        } else {
            return Err(Error::Parse {
                offset: i,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

#[derive(Debug)]
pub(crate) struct Parsed {
    pub expr: Expr,
    pub states: Vec<StateBuilder>,
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    labels: &'a [String],
    states: Vec<StateBuilder>,
}

pub(crate) fn parse(text: &str, labels: &[String]) -> Result<Parsed> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        labels,
        states: Vec::new(),
    };
    let expr = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(Parsed { expr, states: p.states })
}

impl Parser<'_> {
    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.offset(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.1.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        match self.peek() {
            Some(Tok::Num(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected number")),
        }
    }

    fn eat(&mut self, t: Tok) -> bool {
        if self.peek() == Some(&t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn state(&mut self, b: StateBuilder) -> Result<Expr> {
        b.validate(self.labels.len())?;
        let k = match self.states.iter().position(|s| *s == b) {
            Some(k) => k,
            None => {
                self.states.push(b);
                self.states.len() - 1
            }
        };
        Ok(Expr::state(k))
    }

    fn index_arg(&mut self) -> Result<usize> {
        self.expect(Tok::LParen, "'('")?;
        let v = self.number()?;
        self.expect(Tok::RParen, "')'")?;
        if v < 0.0 || v.fract() != 0.0 || v as usize >= self.labels.len() {
            return Err(self.err(format!("component index {v} out of range")));
        }
        Ok(v as usize)
    }

    fn driver_ref(&mut self, name: &str) -> Result<Option<usize>> {
        if let Some(k) = self.labels.iter().position(|l| l == name) {
            return Ok(Some(k));
        }
        if name == "x" {
            if self.peek() == Some(&Tok::LParen) {
                return self.index_arg().map(Some);
            }
            return Ok(Some(0));
        }
        Ok(None)
    }

    fn source(&mut self) -> Result<Source> {
        let name = match self.next() {
            Some(Tok::Ident(n)) => n,
            _ => {
                self.pos -= 1;
                return Err(self.err("expected source"));
            }
        };
        if let Some(k) = self.driver_ref(&name)? {
            return Ok(Source::Driver(k));
        }
        if let Some(rest) = name.strip_prefix("log") {
            if let Some(k) = self.driver_ref(rest)? {
                return Ok(Source::LogDriver(k));
            }
        }
        self.pos -= 1;
        Err(self.err(format!("unknown source '{name}'")))
    }

    fn args(&mut self, n: usize) -> Result<Vec<Expr>> {
        self.expect(Tok::LParen, "'('")?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 {
                self.expect(Tok::Comma, "','")?;
            }
            out.push(self.expr()?);
        }
        self.expect(Tok::RParen, "')'")?;
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr> {
        let start = self.pos;
        let name = match self.next() {
            Some(Tok::Num(v)) => return Ok(Expr::c(v)),
            Some(Tok::Ident(n)) => n,
            _ => {
                self.pos = start;
                return Err(self.err("expected expression"));
            }
        };
        let unary = |p: &mut Self, f: fn(Expr) -> Expr| -> Result<Expr> {
            let mut a = p.args(1)?;
            Ok(f(a.pop().unwrap()))
        };
        let binary = |p: &mut Self, f: fn(Expr, Expr) -> Expr| -> Result<Expr> {
            let mut a = p.args(2)?;
            let v = a.pop().unwrap();
            let u = a.pop().unwrap();
            Ok(f(u, v))
        };
        match name.as_str() {
            "const" => {
                let paren = self.eat(Tok::LParen);
                let v = self.number()?;
                if paren {
                    self.expect(Tok::RParen, "')'")?;
                }
                Ok(Expr::c(v))
            }
            "clock" | "bond" | "logbond" => {
                if self.eat(Tok::LParen) {
                    self.expect(Tok::RParen, "')'")?;
                }
                self.state(match name.as_str() {
                    "clock" => StateBuilder::Clock,
                    "bond" => StateBuilder::Bond,
                    _ => StateBuilder::LogBond,
                })
            }
            "qv" => {
                self.expect(Tok::LParen, "'('")?;
                let s = self.source()?;
                self.expect(Tok::RParen, "')'")?;
                self.state(StateBuilder::Qv(s))
            }
            "movavg" | "runmax" => {
                self.expect(Tok::LParen, "'('")?;
                let source = self.source()?;
                self.expect(Tok::Comma, "','")?;
                let window = self.number()?;
                self.expect(Tok::RParen, "')'")?;
                self.state(if name == "movavg" {
                    StateBuilder::MovingAverage { source, window }
                } else {
                    StateBuilder::RunningMax { source, window }
                })
            }
            "pwlin" => {
                self.expect(Tok::LParen, "'('")?;
                let mut knots = Vec::new();
                loop {
                    let t = self.number()?;
                    self.expect(Tok::Comma, "','")?;
                    let v = self.number()?;
                    knots.push((t, v));
                    if !self.eat(Tok::Comma) {
                        break;
                    }
                }
                self.expect(Tok::RParen, "')'")?;
                self.state(StateBuilder::PiecewiseLinear(knots))
            }
            "add" => binary(self, |u, v| u + v),
            "sub" => binary(self, |u, v| u - v),
            "mul" => binary(self, |u, v| u * v),
            "div" => binary(self, |u, v| u / v),
            "neg" => unary(self, |u| -u),
            "exp" => unary(self, Expr::exp),
            "log" => unary(self, Expr::ln),
            "sqrt" => unary(self, Expr::sqrt),
            "pow" => {
                self.expect(Tok::LParen, "'('")?;
                let base = self.expr()?;
                self.expect(Tok::Comma, "','")?;
                let p = self.number()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(base.pow(p))
            }
            "smin" | "smax" => {
                self.expect(Tok::LParen, "'('")?;
                let u = self.expr()?;
                self.expect(Tok::Comma, "','")?;
                let v = self.expr()?;
                let eps = if self.eat(Tok::Comma) {
                    self.number()?
                } else {
                    DEFAULT_SMOOTHING
                };
                self.expect(Tok::RParen, "')'")?;
                if !(eps > 0.0) {
                    return Err(self.err("smoothing width must be > 0"));
                }
                Ok(if name == "smin" { u.smin(v, eps) } else { u.smax(v, eps) })
            }
            "sstep" => {
                self.expect(Tok::LParen, "'('")?;
                let u = self.expr()?;
                let eps = if self.eat(Tok::Comma) {
                    self.number()?
                } else {
                    DEFAULT_SMOOTHING
                };
                self.expect(Tok::RParen, "')'")?;
                if !(eps > 0.0) {
                    return Err(self.err("smoothing width must be > 0"));
                }
                Ok(u.sstep(eps))
            }
            _ => match self.driver_ref(&name)? {
                Some(k) => Ok(Expr::x(k)),
                None => {
                    self.pos = start;
                    Err(self.err(format!("unknown name '{name}'")))
                }
            },
        }
    }
}

/// Renders an expression back into the text format.
pub(crate) fn render(e: &Expr, states: &[StateBuilder], labels: &[String]) -> String {
    use super::ast::Var;
    let r = |e: &Expr| render(e, states, labels);
    match e {
        Expr::Const(v) => format!("const {v}"),
        Expr::Var(Var::State(k)) => states[*k].render(labels),
        Expr::Var(Var::Driver(k)) => labels[*k].clone(),
        Expr::Neg(u) => format!("neg({})", r(u)),
        Expr::Add(u, v) => format!("add({}, {})", r(u), r(v)),
        Expr::Sub(u, v) => format!("sub({}, {})", r(u), r(v)),
        Expr::Mul(u, v) => format!("mul({}, {})", r(u), r(v)),
        Expr::Div(u, v) => format!("div({}, {})", r(u), r(v)),
        Expr::Exp(u) => format!("exp({})", r(u)),
        Expr::Log(u) => format!("log({})", r(u)),
        Expr::Sqrt(u) => format!("sqrt({})", r(u)),
        Expr::Pow(u, p) => format!("pow({}, {p})", r(u)),
        Expr::SMin(u, v, eps) => format!("smin({}, {}, {eps})", r(u), r(v)),
        Expr::SStep(u, eps) => format!("sstep({}, {eps})", r(u)),
        Expr::SMax(u, v, eps) => format!("smax({}, {}, {eps})", r(u), r(v)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_nested_builders() {
        let l = labels(&["S"]);
        let p = parse("mul(const 3, div(qv(logS), clock))", &l).unwrap();
        assert_eq!(
            p.states,
            vec![StateBuilder::Qv(Source::LogDriver(0)), StateBuilder::Clock]
        );
        assert_eq!(p.expr, Expr::c(3.0) * (Expr::state(0) / Expr::state(1)));
    }

    #[test]
    fn deduplicates_states() {
        let l = labels(&["S"]);
        let p = parse("add(clock, mul(clock, x))", &l).unwrap();
        assert_eq!(p.states.len(), 1);
    }

    #[test]
    fn numbers_and_drivers() {
        let l = labels(&["S", "Y"]);
        let p = parse("add(-1.5e-2, mul(x(1), S))", &l).unwrap();
        assert_eq!(p.expr, Expr::c(-1.5e-2) + Expr::x(1) * Expr::x(0));
        let p = parse("smax(Y, const(2))", &l).unwrap();
        assert_eq!(p.expr, Expr::x(1).smax(Expr::c(2.0), DEFAULT_SMOOTHING));
    }

    #[test]
    fn reports_offsets() {
        let l = labels(&["S"]);
        match parse("add(clock, foo)", &l) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 11),
            other => panic!("{other:?}"),
        }
        assert!(parse("add(clock)", &l).is_err());
        assert!(parse("clock clock", &l).is_err());
        assert!(parse("movavg(S, -1)", &l).is_err());
        assert!(parse("x(3)", &l).is_err());
    }

    #[test]
    fn render_round_trips() {
        let l = labels(&["S"]);
        for text in [
            "mul(const 5, sub(const 1, div(clock, const 1)))",
            "smax(pow(S, 0.5), movavg(logS, 0.25), 0.01)",
            "sstep(sub(S, 100), 0.5)",
            "exp(sub(log(S), mul(const 0.5, qv(logS))))",
            "add(runmax(S, 0.1), pwlin(0, 1, 0.5, 2, 1, 0))",
        ] {
            let p = parse(text, &l).unwrap();
            let back = render(&p.expr, &p.states, &l);
            let q = parse(&back, &l).unwrap();
            assert_eq!(p.expr, q.expr, "{text} -> {back}");
            assert_eq!(p.states, q.states);
        }
    }
}
