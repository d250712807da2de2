//! Expression trees with exact differentiation.
//!
//! Grammar accepted by [`parse`]:
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | power
//! power  := atom ("^" int | "^" "(" ["-"] int ")")?
//! atom   := number | "i" | "pi" | var | func "(" expr ")" | "(" expr ")"
//! func   := exp | sin | cos | sqrt | bump
//! ```
//!
//! `bump(u)` is `exp(-1/(1-u^2))` for `|u| < 1` and `0` elsewhere.
//! [`Expr`]'s `Display` impl is a canonical printer: printing, parsing and printing
//! again yields the same text.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::tps::Tps;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(C64),
    Var(usize),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Pow(Expr, i32),
    Exp(Expr),
    Sin(Expr),
    Cos(Expr),
    Sqrt(Expr),
    Bump(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr(Arc<Node>);

fn is_zero(c: C64) -> bool {
    c.re == 0.0 && c.im == 0.0
}

fn is_one(c: C64) -> bool {
    c.re == 1.0 && c.im == 0.0
}

/// Gevrey-2 bump `exp(-1/(1-u^2))` on `(-1, 1)`.
pub fn bump_real(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    fn new(n: Node) -> Expr {
        Expr(Arc::new(n))
    }

    pub fn constant(c: C64) -> Expr {
        Expr::new(Node::Const(c))
    }

    pub fn real(x: f64) -> Expr {
        Expr::constant(C64::new(x, 0.0))
    }

    pub fn imag_unit() -> Expr {
        Expr::constant(C64::new(0.0, 1.0))
    }

    pub fn zero() -> Expr {
        Expr::real(0.0)
    }

    pub fn one() -> Expr {
        Expr::real(1.0)
    }

    pub fn var(i: usize) -> Expr {
        Expr::new(Node::Var(i))
    }

    pub fn as_const(&self) -> Option<C64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.as_const(), Some(c) if is_zero(c))
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut c = C64::new(0.0, 0.0);
        let mut rest = Vec::new();
        for t in terms {
            match t.node() {
                Node::Const(k) => c += k,
                Node::Add(inner) => {
                    for s in inner {
                        match s.node() {
                            Node::Const(k) => c += k,
                            _ => rest.push(s.clone()),
                        }
                    }
                }
                _ => rest.push(t),
            }
        }
        if rest.is_empty() {
            return Expr::constant(c);
        }
        if !is_zero(c) {
            rest.insert(0, Expr::constant(c));
        }
        if rest.len() == 1 {
            return rest.pop().unwrap();
        }
        Expr::new(Node::Add(rest))
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut c = C64::new(1.0, 0.0);
        let mut rest = Vec::new();
        for f in factors {
            match f.node() {
                Node::Const(k) => c *= k,
                Node::Mul(inner) => {
                    for s in inner {
                        match s.node() {
                            Node::Const(k) => c *= k,
                            _ => rest.push(s.clone()),
                        }
                    }
                }
                _ => rest.push(f),
            }
        }
        if is_zero(c) || rest.is_empty() {
            return Expr::constant(c);
        }
        if !is_one(c) {
            rest.insert(0, Expr::constant(c));
        }
        if rest.len() == 1 {
            return rest.pop().unwrap();
        }
        Expr::new(Node::Mul(rest))
    }

    pub fn powi(&self, n: i32) -> Expr {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return self.clone();
        }
        match self.node() {
            Node::Const(c) => Expr::constant(c.powi(n)),
            Node::Pow(b, k) => b.powi(k * n),
            _ => Expr::new(Node::Pow(self.clone(), n)),
        }
    }

    pub fn exp(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(c.exp()),
            _ => Expr::new(Node::Exp(self.clone())),
        }
    }

    pub fn sin(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(c.sin()),
            _ => Expr::new(Node::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(c.cos()),
            _ => Expr::new(Node::Cos(self.clone())),
        }
    }

    pub fn sqrt(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(c.sqrt()),
            _ => Expr::new(Node::Sqrt(self.clone())),
        }
    }

    pub fn bump(&self) -> Expr {
        match self.node() {
            Node::Const(c) if c.im == 0.0 => Expr::real(bump_real(c.re)),
            _ => Expr::new(Node::Bump(self.clone())),
        }
    }

    pub fn scale(&self, c: C64) -> Expr {
        Expr::product(vec![Expr::constant(c), self.clone()])
    }

    /// Largest variable index referenced plus one.
    pub fn min_arity(&self) -> usize {
        match self.node() {
            Node::Const(_) => 0,
            Node::Var(i) => i + 1,
            Node::Add(v) | Node::Mul(v) => v.iter().map(|e| e.min_arity()).max().unwrap_or(0),
            Node::Pow(b, _) => b.min_arity(),
            Node::Exp(u) | Node::Sin(u) | Node::Cos(u) | Node::Sqrt(u) | Node::Bump(u) => u.min_arity(),
        }
    }

    pub fn depends_on(&self, v: usize) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Var(i) => *i == v,
            Node::Add(xs) | Node::Mul(xs) => xs.iter().any(|e| e.depends_on(v)),
            Node::Pow(b, _) => b.depends_on(v),
            Node::Exp(u) | Node::Sin(u) | Node::Cos(u) | Node::Sqrt(u) | Node::Bump(u) => u.depends_on(v),
        }
    }

    /// Exact partial derivative with respect to variable `v`.
    pub fn diff(&self, v: usize) -> Expr {
        if !self.depends_on(v) {
            return Expr::zero();
        }
        match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(i) => {
                if *i == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(xs) => Expr::sum(xs.iter().map(|e| e.diff(v)).collect()),
            Node::Mul(xs) => {
                let mut terms = Vec::new();
                for k in 0..xs.len() {
                    let dk = xs[k].diff(v);
                    if dk.is_zero() {
                        continue;
                    }
                    let mut f: Vec<Expr> = xs.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, e)| e.clone()).collect();
                    f.push(dk);
                    terms.push(Expr::product(f));
                }
                Expr::sum(terms)
            }
            Node::Pow(b, n) => Expr::product(vec![Expr::real(*n as f64), b.powi(n - 1), b.diff(v)]),
            Node::Exp(u) => Expr::product(vec![self.clone(), u.diff(v)]),
            Node::Sin(u) => Expr::product(vec![u.cos(), u.diff(v)]),
            Node::Cos(u) => Expr::product(vec![Expr::real(-1.0), u.sin(), u.diff(v)]),
            Node::Sqrt(u) => Expr::product(vec![Expr::real(0.5), self.powi(-1), u.diff(v)]),
            Node::Bump(u) => {
                let one_minus = Expr::sum(vec![Expr::one(), Expr::product(vec![Expr::real(-1.0), u.powi(2)])]);
                Expr::product(vec![self.clone(), Expr::real(-2.0), u.clone(), one_minus.powi(-2), u.diff(v)])
            }
        }
    }

    /// `∂^alpha` applied variable by variable.
    pub fn diff_multi(&self, alpha: &[usize]) -> Expr {
        let mut e = self.clone();
        for (v, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                e = e.diff(v);
            }
        }
        e
    }

    /// Replace variables: `Var(i)` becomes `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(i) => subs[*i].clone(),
            Node::Add(xs) => Expr::sum(xs.iter().map(|e| e.substitute(subs)).collect()),
            Node::Mul(xs) => Expr::product(xs.iter().map(|e| e.substitute(subs)).collect()),
            Node::Pow(b, n) => b.substitute(subs).powi(*n),
            Node::Exp(u) => u.substitute(subs).exp(),
            Node::Sin(u) => u.substitute(subs).sin(),
            Node::Cos(u) => u.substitute(subs).cos(),
            Node::Sqrt(u) => u.substitute(subs).sqrt(),
            Node::Bump(u) => u.substitute(subs).bump(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        match self.node() {
            Node::Const(c) => *c,
            Node::Var(i) => C64::new(x[*i], 0.0),
            Node::Add(xs) => xs.iter().map(|e| e.eval(x)).sum(),
            Node::Mul(xs) => {
                let mut acc = C64::new(1.0, 0.0);
                let mut zero = false;
                for e in xs {
                    let v = e.eval(x);
                    if is_zero(v) {
                        zero = true;
                    }
                    acc *= v;
                }
                if zero {
                    C64::new(0.0, 0.0)
                } else {
                    acc
                }
            }
            Node::Pow(b, n) => b.eval(x).powi(*n),
            Node::Exp(u) => u.eval(x).exp(),
            Node::Sin(u) => u.eval(x).sin(),
            Node::Cos(u) => u.eval(x).cos(),
            Node::Sqrt(u) => u.eval(x).sqrt(),
            Node::Bump(u) => C64::new(bump_real(u.eval(x).re), 0.0),
        }
    }

    /// Taylor expansion to `order` around `x`.
    pub fn taylor(&self, x: &[f64], order: usize) -> Tps {
        let n = x.len();
        let vars: Vec<Tps> = (0..n).map(|i| Tps::variable(n, order, i, x[i])).collect();
        self.taylor_with(&vars)
    }

    /// Evaluate with series arguments substituted for the variables.
    pub fn taylor_with(&self, vars: &[Tps]) -> Tps {
        let mut memo = HashMap::new();
        self.taylor_memo(vars, &mut memo)
    }

    fn taylor_memo(&self, vars: &[Tps], memo: &mut HashMap<*const Node, Tps>) -> Tps {
        let key = Arc::as_ptr(&self.0);
        if let Some(t) = memo.get(&key) {
            return t.clone();
        }
        let nv = vars[0].nvars();
        let order = vars[0].order();
        let out = match self.node() {
            Node::Const(c) => Tps::constant(nv, order, *c),
            Node::Var(i) => vars[*i].clone(),
            Node::Add(xs) => {
                let mut acc = xs[0].taylor_memo(vars, memo);
                for e in &xs[1..] {
                    acc = acc.add(&e.taylor_memo(vars, memo));
                }
                acc
            }
            Node::Mul(xs) => {
                let mut acc = xs[0].taylor_memo(vars, memo);
                for e in &xs[1..] {
                    if acc.is_zero() {
                        break;
                    }
                    let t = e.taylor_memo(vars, memo);
                    acc = if t.is_zero() { t } else { acc.mul(&t) };
                }
                acc
            }
            Node::Pow(b, n) => b.taylor_memo(vars, memo).powi(*n),
            Node::Exp(u) => u.taylor_memo(vars, memo).exp(),
            Node::Sin(u) => u.taylor_memo(vars, memo).sin(),
            Node::Cos(u) => u.taylor_memo(vars, memo).cos(),
            Node::Sqrt(u) => u.taylor_memo(vars, memo).sqrt(),
            Node::Bump(u) => {
                let t = u.taylor_memo(vars, memo);
                if t.value().re.abs() >= 1.0 {
                    Tps::zero(nv, order)
                } else {
                    let one_minus = t.mul(&t).scale(C64::new(-1.0, 0.0)).add_const(C64::new(1.0, 0.0));
                    one_minus.recip().scale(C64::new(-1.0, 0.0)).exp()
                }
            }
        };
        memo.insert(key, out.clone());
        out
    }

    /// Flatten into a straight-line program for repeated evaluation.
    pub fn compile(&self) -> Tape {
        let mut tape = Tape { ops: Vec::new() };
        let mut seen = HashMap::new();
        let out = tape.emit(self, &mut seen);
        debug_assert_eq!(out + 1, tape.ops.len());
        tape
    }
}

impl From<f64> for Expr {
    fn from(x: f64) -> Expr {
        Expr::real(x)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, o: Expr) -> Expr {
        Expr::sum(vec![self, o])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, o: Expr) -> Expr {
        Expr::sum(vec![self, o.scale(C64::new(-1.0, 0.0))])
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, o: Expr) -> Expr {
        Expr::product(vec![self, o])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, o: Expr) -> Expr {
        Expr::product(vec![self, o.powi(-1)])
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.scale(C64::new(-1.0, 0.0))
    }
}

#[derive(Debug, Clone)]
enum Op {
    Const(C64),
    Var(usize),
    Add(Vec<usize>),
    Mul(Vec<usize>),
    Pow(usize, i32),
    Exp(usize),
    Sin(usize),
    Cos(usize),
    Sqrt(usize),
    Bump(usize),
}

/// Compiled expression with shared subtrees evaluated once.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
}

impl Tape {
    fn emit(&mut self, e: &Expr, seen: &mut HashMap<*const Node, usize>) -> usize {
        let key = Arc::as_ptr(&e.0);
        if let Some(&k) = seen.get(&key) {
            return k;
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Var(i) => Op::Var(*i),
            Node::Add(xs) => Op::Add(xs.iter().map(|x| self.emit(x, seen)).collect()),
            Node::Mul(xs) => Op::Mul(xs.iter().map(|x| self.emit(x, seen)).collect()),
            Node::Pow(b, n) => Op::Pow(self.emit(b, seen), *n),
            Node::Exp(u) => Op::Exp(self.emit(u, seen)),
            Node::Sin(u) => Op::Sin(self.emit(u, seen)),
            Node::Cos(u) => Op::Cos(self.emit(u, seen)),
            Node::Sqrt(u) => Op::Sqrt(self.emit(u, seen)),
            Node::Bump(u) => Op::Bump(self.emit(u, seen)),
        };
        self.ops.push(op);
        let k = self.ops.len() - 1;
        seen.insert(key, k);
        k
    }

    /// Evaluate using `scratch` as register storage.
    pub fn eval_with(&self, x: &[f64], scratch: &mut Vec<C64>) -> C64 {
        scratch.clear();
        for op in &self.ops {
            let v = match op {
                Op::Const(c) => *c,
                Op::Var(i) => C64::new(x[*i], 0.0),
                Op::Add(xs) => xs.iter().map(|&k| scratch[k]).sum(),
                Op::Mul(xs) => {
                    let mut acc = C64::new(1.0, 0.0);
                    let mut zero = false;
                    for &k in xs {
                        let v = scratch[k];
                        zero |= is_zero(v);
                        acc *= v;
                    }
                    if zero {
                        C64::new(0.0, 0.0)
                    } else {
                        acc
                    }
                }
                Op::Pow(b, n) => scratch[*b].powi(*n),
                Op::Exp(u) => scratch[*u].exp(),
                Op::Sin(u) => scratch[*u].sin(),
                Op::Cos(u) => scratch[*u].cos(),
                Op::Sqrt(u) => scratch[*u].sqrt(),
                Op::Bump(u) => C64::new(bump_real(scratch[*u].re), 0.0),
            };
            scratch.push(v);
        }
        *scratch.last().unwrap()
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        let mut s = Vec::with_capacity(self.ops.len());
        self.eval_with(x, &mut s)
    }
}

/// Variable names recognised by the parser, in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct VarSpace {
    pub names: Vec<String>,
}

impl VarSpace {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        VarSpace { names: names.iter().map(|s| s.as_ref().to_string()).collect() }
    }

    /// `x1..xn` followed by `t1..tn` (the frequency variables).
    pub fn phase_space(n: usize) -> Self {
        let mut names: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
        names.extend((1..=n).map(|k| format!("t{k}")));
        VarSpace { names }
    }

    /// `x1..xn` only.
    pub fn spatial(n: usize) -> Self {
        VarSpace { names: (1..=n).map(|k| format!("x{k}")).collect() }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("unknown variable `{name}` at offset {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("unexpected {found} at offset {pos}")]
    Unexpected { found: String, pos: usize },
    #[error("unknown function `{name}` at offset {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("bad number `{text}` at offset {pos}")]
    BadNumber { text: String, pos: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos] as char;
        if c.is_ascii_digit() || c == '.' {
            while self.pos < self.src.len() {
                let d = self.src[self.pos] as char;
                if d.is_ascii_digit() || d == '.' {
                    self.pos += 1;
                } else if (d == 'e' || d == 'E')
                    && self.pos + 1 < self.src.len()
                    && ((self.src[self.pos + 1] as char).is_ascii_digit()
                        || ((self.src[self.pos + 1] == b'-' || self.src[self.pos + 1] == b'+')
                            && self.pos + 2 < self.src.len()
                            && (self.src[self.pos + 2] as char).is_ascii_digit()))
                {
                    self.pos += 2;
                } else {
                    break;
                }
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return text
                .parse::<f64>()
                .map(|v| (Tok::Num(v), start))
                .map_err(|_| ParseError::BadNumber { text: text.to_string(), pos: start });
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while self.pos < self.src.len() {
                let d = self.src[self.pos] as char;
                if d.is_ascii_alphanumeric() || d == '_' || d == '\'' {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Ok((Tok::Ident(text.to_string()), start));
        }
        if "+-*/^()".contains(c) {
            self.pos += 1;
            return Ok((Tok::Sym(c), start));
        }
        Err(ParseError::Unexpected { found: format!("character `{c}`"), pos: start })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    pos: usize,
    vars: &'a VarSpace,
}

impl<'a> Parser<'a> {
    fn advance(&mut self) -> Result<(), ParseError> {
        let (t, p) = self.lex.next()?;
        self.tok = t;
        self.pos = p;
        Ok(())
    }

    fn unexpected(&self) -> ParseError {
        let found = match &self.tok {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Sym(c) => format!("`{c}`"),
            Tok::End => "end of input".to_string(),
        };
        ParseError::Unexpected { found, pos: self.pos }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.tok == Tok::Sym(c) {
            self.advance()
        } else {
            Err(self.unexpected())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            match self.tok {
                Tok::Sym('+') => {
                    self.advance()?;
                    terms.push(self.term()?);
                }
                Tok::Sym('-') => {
                    self.advance()?;
                    terms.push(-self.term()?);
                }
                _ => break,
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut factors = vec![self.unary()?];
        loop {
            match self.tok {
                Tok::Sym('*') => {
                    self.advance()?;
                    factors.push(self.unary()?);
                }
                Tok::Sym('/') => {
                    self.advance()?;
                    factors.push(self.unary()?.powi(-1));
                }
                _ => break,
            }
        }
        Ok(Expr::product(factors))
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Sym('-') {
            self.advance()?;
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn int_exponent(&mut self) -> Result<i32, ParseError> {
        let paren = self.tok == Tok::Sym('(');
        if paren {
            self.advance()?;
        }
        let neg = self.tok == Tok::Sym('-');
        if neg {
            self.advance()?;
        }
        let n = match self.tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() < 1e6 => v as i32,
            _ => return Err(self.unexpected()),
        };
        self.advance()?;
        if paren {
            self.expect(')')?;
        }
        Ok(if neg { -n } else { n })
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Sym('^') {
            self.advance()?;
            let n = self.int_exponent()?;
            return Ok(base.powi(n));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::real(v))
            }
            Tok::Sym('(') => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let pos = self.pos;
                self.advance()?;
                if self.tok == Tok::Sym('(') {
                    self.advance()?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return match name.as_str() {
                        "exp" => Ok(arg.exp()),
                        "sin" => Ok(arg.sin()),
                        "cos" => Ok(arg.cos()),
                        "sqrt" => Ok(arg.sqrt()),
                        "bump" => Ok(arg.bump()),
                        _ => Err(ParseError::UnknownFunction { name, pos }),
                    };
                }
                if let Some(k) = self.vars.index(&name) {
                    return Ok(Expr::var(k));
                }
                match name.as_str() {
                    "i" => Ok(Expr::imag_unit()),
                    "pi" => Ok(Expr::real(std::f64::consts::PI)),
                    _ => Err(ParseError::UnknownVariable { name, pos }),
                }
            }
            _ => Err(self.unexpected()),
        }
    }
}

/// Parse `src` over the variables in `vars`.
pub fn parse(src: &str, vars: &VarSpace) -> Result<Expr, ParseError> {
    let mut p = Parser { lex: Lexer { src: src.as_bytes(), pos: 0 }, tok: Tok::End, pos: 0, vars };
    p.advance()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return Err(p.unexpected());
    }
    Ok(e)
}

fn fmt_real(x: f64) -> String {
    if x < 0.0 || (x == 0.0 && x.is_sign_negative()) {
        format!("(-{})", -x)
    } else {
        format!("{x}")
    }
}

fn fmt_const(c: C64) -> String {
    if c.im == 0.0 {
        return fmt_real(c.re);
    }
    let im = if c.im == 1.0 { "i".to_string() } else { format!("{}*i", fmt_real(c.im)) };
    if c.re == 0.0 {
        format!("({im})")
    } else {
        format!("({} + {im})", fmt_real(c.re))
    }
}

/// Printer bound to variable names.
pub struct Display<'a> {
    expr: &'a Expr,
    vars: &'a VarSpace,
}

impl Expr {
    pub fn display<'a>(&'a self, vars: &'a VarSpace) -> Display<'a> {
        Display { expr: self, vars }
    }

    pub fn to_string_with(&self, vars: &VarSpace) -> String {
        self.display(vars).to_string()
    }
}

fn write_expr(e: &Expr, vars: &VarSpace, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
    // prec: 0 sum context, 1 product factor, 2 power base
    match e.node() {
        Node::Const(c) => write!(f, "{}", fmt_const(*c)),
        Node::Var(i) => match vars.names.get(*i) {
            Some(n) => write!(f, "{n}"),
            None => write!(f, "v{i}"),
        },
        Node::Add(xs) => {
            if prec > 0 {
                write!(f, "(")?;
            }
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    write!(f, " + ")?;
                }
                write_expr(x, vars, f, 1)?;
            }
            if prec > 0 {
                write!(f, ")")?;
            }
            Ok(())
        }
        Node::Mul(xs) => {
            if prec > 1 {
                write!(f, "(")?;
            }
            for (k, x) in xs.iter().enumerate() {
                if k > 0 {
                    write!(f, "*")?;
                }
                write_expr(x, vars, f, 2)?;
            }
            if prec > 1 {
                write!(f, ")")?;
            }
            Ok(())
        }
        Node::Pow(b, n) => {
            write_expr(b, vars, f, 3)?;
            if *n < 0 {
                write!(f, "^({n})")
            } else {
                write!(f, "^{n}")
            }
        }
        Node::Exp(u) | Node::Sin(u) | Node::Cos(u) | Node::Sqrt(u) | Node::Bump(u) => {
            let name = match e.node() {
                Node::Exp(_) => "exp",
                Node::Sin(_) => "sin",
                Node::Cos(_) => "cos",
                Node::Sqrt(_) => "sqrt",
                _ => "bump",
            };
            write!(f, "{name}(")?;
            write_expr(u, vars, f, 0)?;
            write!(f, ")")
        }
    }
}

impl fmt::Display for Display<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.vars, f, 0)
    }
}
