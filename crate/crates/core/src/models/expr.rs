//! Expression trees for user-supplied Lagrangians and Hamiltonians.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, `pi`, the
//! variables `t`, `q<i>`, `v<i>`, `p<i>` and the functions
//! `sin cos tan exp ln log sqrt tanh abs`. Derivatives are symbolic.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, Vector};

use super::hamiltonian::HamiltonianModel;
use super::{FirstJet, Jet, LagrangianModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    T,
    Q(usize),
    /// Fiber coordinate: velocity for Lagrangians, momentum for Hamiltonians.
    Fiber(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Tanh,
    Abs,
    Sign,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
}

fn c(x: f64) -> Expr {
    Expr::Const(x)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => c(x + y),
        (Expr::Const(x), _) if *x == 0.0 => b,
        (_, Expr::Const(y)) if *y == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => c(x - y),
        (_, Expr::Const(y)) if *y == 0.0 => a,
        (Expr::Const(x), _) if *x == 0.0 => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => c(x * y),
        (Expr::Const(x), _) | (_, Expr::Const(x)) if *x == 0.0 => c(0.0),
        (Expr::Const(x), _) if *x == 1.0 => b,
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => c(x / y),
        (Expr::Const(x), _) if *x == 0.0 => c(0.0),
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(x), Expr::Const(y)) => c(x.powf(*y)),
        (_, Expr::Const(y)) if *y == 0.0 => c(1.0),
        (_, Expr::Const(y)) if *y == 1.0 => a,
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(x) => c(-x),
        Expr::Neg(inner) => *inner,
        _ => Expr::Neg(Box::new(a)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    if let Expr::Const(x) = a {
        return c(apply(f, x));
    }
    Expr::Call(f, Box::new(a))
}

fn apply(f: Func, x: f64) -> f64 {
    match f {
        Func::Sin => x.sin(),
        Func::Cos => x.cos(),
        Func::Tan => x.tan(),
        Func::Exp => x.exp(),
        Func::Ln => x.ln(),
        Func::Sqrt => x.sqrt(),
        Func::Tanh => x.tanh(),
        Func::Abs => x.abs(),
        Func::Sign => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
    }
}

/// Variable values for evaluation.
pub struct Env<'a> {
    pub t: f64,
    pub q: &'a [f64],
    pub fiber: &'a [f64],
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in `{src}`"
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Const(x) => *x,
            Expr::Var(Var::T) => env.t,
            Expr::Var(Var::Q(i)) => env.q[*i],
            Expr::Var(Var::Fiber(i)) => env.fiber[*i],
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, b) => {
                let base = a.eval(env);
                match **b {
                    Expr::Const(e) if e.fract() == 0.0 && e.abs() < 64.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(env)),
                }
            }
            Expr::Neg(a) => -a.eval(env),
            Expr::Call(f, a) => apply(*f, a.eval(env)),
        }
    }

    pub fn diff(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => c(0.0),
            Expr::Var(v) => c(if *v == var { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                pow((**b).clone(), c(2.0)),
            ),
            Expr::Pow(a, b) => {
                if let Expr::Const(e) = **b {
                    mul(mul(c(e), pow((**a).clone(), c(e - 1.0))), a.diff(var))
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    mul(
                        self.clone(),
                        add(
                            mul(b.diff(var), call(Func::Ln, (**a).clone())),
                            div(mul((**b).clone(), a.diff(var)), (**a).clone()),
                        ),
                    )
                }
            }
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tan => add(c(1.0), pow(call(Func::Tan, inner), c(2.0))),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(c(1.0), inner),
                    Func::Sqrt => div(c(0.5), call(Func::Sqrt, inner)),
                    Func::Tanh => sub(c(1.0), pow(call(Func::Tanh, inner), c(2.0))),
                    Func::Abs => call(Func::Sign, inner),
                    Func::Sign => c(0.0),
                };
                mul(outer, a.diff(var))
            }
        }
    }

    pub fn depends_on(&self, var: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(var) || b.depends_on(var),
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(var),
        }
    }

    /// Largest `q`/fiber index used, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(Var::T) => 0,
            Expr::Var(Var::Q(i)) | Expr::Var(Var::Fiber(i)) => i + 1,
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.arity().max(b.arity()),
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(x) => write!(f, "{x}"),
            Expr::Var(Var::T) => write!(f, "t"),
            Expr::Var(Var::Q(i)) => write!(f, "q{i}"),
            Expr::Var(Var::Fiber(i)) => write!(f, "v{i}"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a})^({b})"),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Call(func, a) => write!(f, "{}({a})", format!("{func:?}").to_lowercase()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let x = s
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{s}`")))?;
            out.push(Token::Num(x));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(ch) {
            out.push(Token::Op(ch));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{ch}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Num(x)) => {
                self.pos += 1;
                Ok(Expr::Const(x))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(Error::Expression("missing `)`".into()));
                }
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if let Some(f) = function(&name) {
                    if !self.eat('(') {
                        return Err(Error::Expression(format!("`{name}` needs an argument")));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(Error::Expression("missing `)`".into()));
                    }
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                variable(&name)
            }
            other => Err(Error::Expression(format!("unexpected token {other:?}"))),
        }
    }
}

fn function(name: &str) -> Option<Func> {
    Some(match name {
        "sin" => Func::Sin,
        "cos" => Func::Cos,
        "tan" => Func::Tan,
        "exp" => Func::Exp,
        "ln" | "log" => Func::Ln,
        "sqrt" => Func::Sqrt,
        "tanh" => Func::Tanh,
        "abs" => Func::Abs,
        _ => return None,
    })
}

fn variable(name: &str) -> Result<Expr> {
    if name == "t" {
        return Ok(Expr::Var(Var::T));
    }
    if name == "pi" {
        return Ok(Expr::Const(std::f64::consts::PI));
    }
    let (head, tail) = name.split_at(1);
    let index = if tail.is_empty() {
        0
    } else {
        tail.parse::<usize>()
            .map_err(|_| Error::Expression(format!("unknown identifier `{name}`")))?
    };
    match head {
        "q" | "x" => Ok(Expr::Var(Var::Q(index))),
        "v" | "p" => Ok(Expr::Var(Var::Fiber(index))),
        _ => Err(Error::Expression(format!("unknown identifier `{name}`"))),
    }
}

/// Symbolic first and second derivatives of an expression in `(q, fiber)`.
#[derive(Clone, Debug)]
struct Derivatives {
    value: Expr,
    d_t: Expr,
    d_q: Vec<Expr>,
    d_f: Vec<Expr>,
    d_qq: Vec<Vec<Expr>>,
    d_qf: Vec<Vec<Expr>>,
    d_ff: Vec<Vec<Expr>>,
    d_tf: Vec<Expr>,
}

impl Derivatives {
    fn new(value: Expr, n: usize) -> Self {
        let d_q: Vec<Expr> = (0..n).map(|i| value.diff(Var::Q(i))).collect();
        let d_f: Vec<Expr> = (0..n).map(|i| value.diff(Var::Fiber(i))).collect();
        let d_qq = d_q
            .iter()
            .map(|e| (0..n).map(|j| e.diff(Var::Q(j))).collect())
            .collect();
        let d_qf = d_q
            .iter()
            .map(|e| (0..n).map(|j| e.diff(Var::Fiber(j))).collect())
            .collect();
        let d_ff = d_f
            .iter()
            .map(|e| (0..n).map(|j| e.diff(Var::Fiber(j))).collect())
            .collect();
        let d_tf = d_f.iter().map(|e| e.diff(Var::T)).collect();
        Self {
            d_t: value.diff(Var::T),
            value,
            d_q,
            d_f,
            d_qq,
            d_qf,
            d_ff,
            d_tf,
        }
    }

    fn first(&self, env: &Env) -> FirstJet {
        let n = self.d_q.len();
        FirstJet {
            value: self.value.eval(env),
            d_q: Vector::from_iterator(n, self.d_q.iter().map(|e| e.eval(env))),
            d_v: Vector::from_iterator(n, self.d_f.iter().map(|e| e.eval(env))),
        }
    }

    fn jet(&self, env: &Env) -> Jet {
        let n = self.d_q.len();
        let f = self.first(env);
        let mut jet = Jet::zeros(n);
        jet.value = f.value;
        jet.d_q = f.d_q;
        jet.d_v = f.d_v;
        for i in 0..n {
            for j in 0..n {
                jet.d_qq[(i, j)] = self.d_qq[i][j].eval(env);
                jet.d_qv[(i, j)] = self.d_qf[i][j].eval(env);
                jet.d_vv[(i, j)] = self.d_ff[i][j].eval(env);
            }
        }
        jet
    }
}

/// Lagrangian given by an expression in `t, q<i>, v<i>`.
#[derive(Debug)]
pub struct ExprLagrangian {
    manifold: Manifold,
    source: String,
    d: Derivatives,
    autonomous: bool,
}

impl ExprLagrangian {
    pub fn new(manifold: Manifold, source: &str) -> Result<Self> {
        let e = Expr::parse(source)?;
        let n = manifold.dim();
        if e.arity() > n {
            return Err(Error::Expression(format!(
                "`{source}` uses coordinates beyond dimension {n}"
            )));
        }
        Ok(Self {
            autonomous: !e.depends_on(Var::T),
            d: Derivatives::new(e, n),
            source: source.to_string(),
            manifold,
        })
    }
}

impl LagrangianModel for ExprLagrangian {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn value(&self, t: f64, _chart: usize, q: &Vector, v: &Vector) -> f64 {
        self.d.value.eval(&Env {
            t,
            q: q.as_slice(),
            fiber: v.as_slice(),
        })
    }

    fn first(&self, t: f64, _chart: usize, q: &Vector, v: &Vector) -> FirstJet {
        self.d.first(&Env {
            t,
            q: q.as_slice(),
            fiber: v.as_slice(),
        })
    }

    fn jet(&self, t: f64, _chart: usize, q: &Vector, v: &Vector) -> Jet {
        self.d.jet(&Env {
            t,
            q: q.as_slice(),
            fiber: v.as_slice(),
        })
    }

    fn d_t(&self, t: f64, _chart: usize, q: &Vector, v: &Vector) -> f64 {
        self.d.d_t.eval(&Env {
            t,
            q: q.as_slice(),
            fiber: v.as_slice(),
        })
    }

    fn d_tv(&self, t: f64, _chart: usize, q: &Vector, v: &Vector) -> Vector {
        let env = Env {
            t,
            q: q.as_slice(),
            fiber: v.as_slice(),
        };
        Vector::from_iterator(q.len(), self.d.d_tf.iter().map(|e| e.eval(&env)))
    }

    fn autonomous(&self) -> bool {
        self.autonomous
    }

    fn describe(&self) -> String {
        format!("L = {} on {}", self.source, self.manifold.name())
    }
}

/// Hamiltonian given by an expression in `t, q<i>, p<i>`.
#[derive(Debug)]
pub struct ExprHamiltonian {
    manifold: Manifold,
    source: String,
    d: Derivatives,
    autonomous: bool,
}

impl ExprHamiltonian {
    pub fn new(manifold: Manifold, source: &str) -> Result<Self> {
        let e = Expr::parse(source)?;
        let n = manifold.dim();
        if e.arity() > n {
            return Err(Error::Expression(format!(
                "`{source}` uses coordinates beyond dimension {n}"
            )));
        }
        Ok(Self {
            autonomous: !e.depends_on(Var::T),
            d: Derivatives::new(e, n),
            source: source.to_string(),
            manifold,
        })
    }

    pub fn shared(manifold: Manifold, source: &str) -> Result<Arc<dyn HamiltonianModel>> {
        Ok(Arc::new(Self::new(manifold, source)?))
    }
}

impl HamiltonianModel for ExprHamiltonian {
    fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    fn value(&self, t: f64, _chart: usize, q: &Vector, p: &Vector) -> f64 {
        self.d.value.eval(&Env {
            t,
            q: q.as_slice(),
            fiber: p.as_slice(),
        })
    }

    fn first(&self, t: f64, _chart: usize, q: &Vector, p: &Vector) -> FirstJet {
        self.d.first(&Env {
            t,
            q: q.as_slice(),
            fiber: p.as_slice(),
        })
    }

    fn d_t(&self, t: f64, _chart: usize, q: &Vector, p: &Vector) -> f64 {
        self.d.d_t.eval(&Env {
            t,
            q: q.as_slice(),
            fiber: p.as_slice(),
        })
    }

    fn autonomous(&self) -> bool {
        self.autonomous
    }

    fn describe(&self) -> String {
        format!("H = {} on {}", self.source, self.manifold.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_torus;

    fn ev(src: &str, t: f64, q: &[f64], f: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(&Env { t, q, fiber: f })
    }

    #[test]
    fn parses_precedence_and_functions() {
        assert_eq!(ev("1 + 2 * 3", 0.0, &[], &[]), 7.0);
        assert_eq!(ev("-2^2", 0.0, &[], &[]), -4.0);
        assert_eq!(ev("2^3^2", 0.0, &[], &[]), 512.0);
        assert!((ev("cos(2*pi*q0)", 0.0, &[0.5], &[]) + 1.0).abs() < 1e-15);
        assert_eq!(ev("0.5*v0^2 + t", 2.0, &[0.0], &[3.0]), 6.5);
        assert_eq!(ev("1e-1 * 10", 0.0, &[], &[]), 1.0);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
    }

    #[test]
    fn symbolic_derivative_matches_difference_quotient() {
        let e = Expr::parse("sin(q0*v0) + exp(-q0^2) * v0^3 / (1 + v0^2) + q0^v0").unwrap();
        let d = e.diff(Var::Fiber(0));
        let (q, v) = (0.7, 1.3);
        let h = 1e-6;
        let f = |v: f64| {
            e.eval(&Env {
                t: 0.0,
                q: &[q],
                fiber: &[v],
            })
        };
        let fd = (f(v + h) - f(v - h)) / (2.0 * h);
        let exact = d.eval(&Env {
            t: 0.0,
            q: &[q],
            fiber: &[v],
        });
        assert!((fd - exact).abs() < 1e-8);
    }

    #[test]
    fn expression_lagrangian_matches_mechanical() {
        let m = build_torus(1).unwrap();
        let l = ExprLagrangian::new(m, "0.5*v^2 - cos(2*pi*q)").unwrap();
        assert!(l.autonomous());
        let q = Vector::from_element(1, 0.1);
        let v = Vector::from_element(1, 2.0);
        let j = l.jet(0.0, 0, &q, &v);
        assert_eq!(j.d_vv[(0, 0)], 1.0);
        assert!(
            (j.d_q[0] - 2.0 * std::f64::consts::PI * (0.2 * std::f64::consts::PI).sin()).abs()
                < 1e-12
        );
        assert!(ExprLagrangian::new(build_torus(1).unwrap(), "v1^2").is_err());
    }
}
