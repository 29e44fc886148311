//! Symbolic scalar expressions over ambient coordinates.
//!
//! Fields, constraints and taming functions are all stored as [`Expr`] trees so
//! that Jacobians and Hessians are exact. Expressions are parsed from the
//! config syntax (`x^2 + sin(y)*z - 1`), differentiated symbolically and
//! compiled to a postfix [`Tape`] for evaluation in hot loops.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character '{ch}' at column {col}")]
    UnexpectedChar { ch: char, col: usize },
    #[error("unknown identifier '{name}' at column {col}")]
    UnknownIdent { name: String, col: usize },
    #[error("unexpected end of expression at column {col}")]
    UnexpectedEnd { col: usize },
    #[error("unexpected token at column {col}")]
    UnexpectedToken { col: usize },
    #[error("exponent at column {col} must be an integer literal")]
    NonIntegerPower { col: usize },
}

impl ExprError {
    pub fn column(&self) -> usize {
        match self {
            ExprError::UnexpectedChar { col, .. }
            | ExprError::UnknownIdent { col, .. }
            | ExprError::UnexpectedEnd { col }
            | ExprError::UnexpectedToken { col }
            | ExprError::NonIntegerPower { col } => *col,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Tanh => x.tanh(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Call(Func, Expr),
}

/// An immutable, cheaply clonable expression tree.
#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    fn node(n: Node) -> Self {
        Expr(Arc::new(n))
    }

    pub fn constant(c: f64) -> Self {
        Self::node(Node::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(i: usize) -> Self {
        Self::node(Node::Var(i))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }


    pub fn neg(&self) -> Self {
        match &*self.0 {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(a) => a.clone(),
            _ => Self::node(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, o: &Expr) -> Self {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => Self::constant(a + b),
            (Some(a), _) if a == 0.0 => o.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Self::node(Node::Add(self.clone(), o.clone())),
        }
    }

    pub fn sub(&self, o: &Expr) -> Self {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => Self::constant(a - b),
            (Some(a), _) if a == 0.0 => o.neg(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Self::node(Node::Sub(self.clone(), o.clone())),
        }
    }

    pub fn mul(&self, o: &Expr) -> Self {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) => Self::constant(a * b),
            (Some(a), _) if a == 0.0 => Self::zero(),
            (_, Some(b)) if b == 0.0 => Self::zero(),
            (Some(a), _) if a == 1.0 => o.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => o.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Self::node(Node::Mul(self.clone(), o.clone())),
        }
    }

    pub fn div(&self, o: &Expr) -> Self {
        match (self.as_const(), o.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => Self::constant(a / b),
            (Some(a), _) if a == 0.0 => Self::zero(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Self::node(Node::Div(self.clone(), o.clone())),
        }
    }

    pub fn powi(&self, n: i32) -> Self {
        match (self.as_const(), n) {
            (_, 0) => Self::one(),
            (_, 1) => self.clone(),
            (Some(c), _) => Self::constant(c.powi(n)),
            _ => Self::node(Node::Pow(self.clone(), n)),
        }
    }

    pub fn call(f: Func, a: &Expr) -> Self {
        match a.as_const() {
            Some(c) => Self::constant(f.apply(c)),
            None => Self::node(Node::Call(f, a.clone())),
        }
    }

    pub fn sin(&self) -> Self {
        Self::call(Func::Sin, self)
    }
    pub fn cos(&self) -> Self {
        Self::call(Func::Cos, self)
    }
    pub fn exp(&self) -> Self {
        Self::call(Func::Exp, self)
    }
    pub fn tanh(&self) -> Self {
        Self::call(Func::Tanh, self)
    }
    pub fn sqrt(&self) -> Self {
        Self::call(Func::Sqrt, self)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::constant(c).mul(self)
    }

    /// Sum of a list of expressions (zero for an empty list).
    pub fn sum<'a>(terms: impl IntoIterator<Item = &'a Expr>) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, t| acc.add(t))
    }

    /// Dot product of two equal-length expression vectors.
    pub fn dot(a: &[Expr], b: &[Expr]) -> Self {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .fold(Self::zero(), |acc, (x, y)| acc.add(&x.mul(y)))
    }

    /// Largest variable index referenced, plus one.
    pub fn arity(&self) -> usize {
        match &*self.0 {
            Node::Const(_) => 0,
            Node::Var(i) => i + 1,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.arity(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    /// Whether variable `i` occurs in the expression.
    pub fn depends_on(&self, i: usize) -> bool {
        match &*self.0 {
            Node::Const(_) => false,
            Node::Var(j) => *j == i,
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.depends_on(i),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.depends_on(i) || b.depends_on(i)
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(i) => x[*i],
            Node::Neg(a) => -a.eval(x),
            Node::Add(a, b) => a.eval(x) + b.eval(x),
            Node::Sub(a, b) => a.eval(x) - b.eval(x),
            Node::Mul(a, b) => a.eval(x) * b.eval(x),
            Node::Div(a, b) => a.eval(x) / b.eval(x),
            Node::Pow(a, n) => a.eval(x).powi(*n),
            Node::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    /// Symbolic partial derivative with respect to variable `i`.
    pub fn diff(&self, i: usize) -> Expr {
        match &*self.0 {
            Node::Const(_) => Self::zero(),
            Node::Var(j) => {
                if *j == i {
                    Self::one()
                } else {
                    Self::zero()
                }
            }
            Node::Neg(a) => a.diff(i).neg(),
            Node::Add(a, b) => a.diff(i).add(&b.diff(i)),
            Node::Sub(a, b) => a.diff(i).sub(&b.diff(i)),
            Node::Mul(a, b) => a.diff(i).mul(b).add(&a.mul(&b.diff(i))),
            Node::Div(a, b) => {
                let num = a.diff(i).mul(b).sub(&a.mul(&b.diff(i)));
                num.div(&b.powi(2))
            }
            Node::Pow(a, n) => a
                .powi(n - 1)
                .scale(*n as f64)
                .mul(&a.diff(i)),
            Node::Call(f, a) => {
                let da = a.diff(i);
                if da.is_zero() {
                    return Self::zero();
                }
                let outer = match f {
                    Func::Sin => a.cos(),
                    Func::Cos => a.sin().neg(),
                    Func::Exp => a.exp(),
                    Func::Tanh => Self::one().sub(&a.tanh().powi(2)),
                    Func::Sqrt => Self::constant(0.5).div(&a.sqrt()),
                };
                outer.mul(&da)
            }
        }
    }

    /// Gradient with respect to the first `n` variables.
    pub fn gradient(&self, n: usize) -> Vec<Expr> {
        (0..n).map(|i| self.diff(i)).collect()
    }

    /// Replace every variable `i` by `subs[i]`.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        match &*self.0 {
            Node::Const(_) => self.clone(),
            Node::Var(i) => subs[*i].clone(),
            Node::Neg(a) => a.substitute(subs).neg(),
            Node::Add(a, b) => a.substitute(subs).add(&b.substitute(subs)),
            Node::Sub(a, b) => a.substitute(subs).sub(&b.substitute(subs)),
            Node::Mul(a, b) => a.substitute(subs).mul(&b.substitute(subs)),
            Node::Div(a, b) => a.substitute(subs).div(&b.substitute(subs)),
            Node::Pow(a, n) => a.substitute(subs).powi(*n),
            Node::Call(f, a) => Self::call(*f, &a.substitute(subs)),
        }
    }

    /// Shift every variable index by `offset` (used to embed into products).
    pub fn shift_vars(&self, offset: usize) -> Expr {
        let n = self.arity();
        let subs: Vec<Expr> = (0..n).map(|i| Expr::var(i + offset)).collect();
        self.substitute(&subs)
    }

    pub fn compile(&self) -> Tape {
        let mut ops = Vec::new();
        self.emit(&mut ops);
        Tape::new(ops)
    }

    fn emit(&self, ops: &mut Vec<Op>) {
        match &*self.0 {
            Node::Const(c) => ops.push(Op::Const(*c)),
            Node::Var(i) => ops.push(Op::Var(*i)),
            Node::Neg(a) => {
                a.emit(ops);
                ops.push(Op::Neg);
            }
            Node::Add(a, b) => {
                a.emit(ops);
                b.emit(ops);
                ops.push(Op::Add);
            }
            Node::Sub(a, b) => {
                a.emit(ops);
                b.emit(ops);
                ops.push(Op::Sub);
            }
            Node::Mul(a, b) => {
                a.emit(ops);
                b.emit(ops);
                ops.push(Op::Mul);
            }
            Node::Div(a, b) => {
                a.emit(ops);
                b.emit(ops);
                ops.push(Op::Div);
            }
            Node::Pow(a, n) => {
                a.emit(ops);
                ops.push(Op::Pow(*n));
            }
            Node::Call(f, a) => {
                a.emit(ops);
                ops.push(Op::Call(*f));
            }
        }
    }

    /// Parse an expression; `vars` gives the names of the ambient coordinates.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
            end_col: src.chars().count() + 1,
        };
        let e = p.expr()?;
        if p.pos < p.tokens.len() {
            return Err(ExprError::UnexpectedToken {
                col: p.tokens[p.pos].1,
            });
        }
        Ok(e)
    }

    fn precedence(&self) -> u8 {
        match &*self.0 {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(..) => 3,
            Node::Pow(..) => 4,
            Node::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match &*self.0 {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 4)
            }
            Node::Add(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " + ")?;
                wrap(f, b, 2)
            }
            Node::Sub(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " - ")?;
                wrap(f, b, 2)
            }
            Node::Mul(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "*")?;
                wrap(f, b, 3)
            }
            Node::Div(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "/")?;
                wrap(f, b, 3)
            }
            Node::Pow(a, n) => {
                wrap(f, a, 5)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Const(f64),
    Var(usize),
    Neg,
    Add,
    Sub,
    Mul,
    Div,
    Pow(i32),
    Call(Func),
}

/// Postfix evaluation program for an [`Expr`].
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    depth: usize,
}

impl Tape {
    fn new(ops: Vec<Op>) -> Self {
        let mut d = 0usize;
        let mut depth = 0usize;
        for op in &ops {
            match op {
                Op::Const(_) | Op::Var(_) => d += 1,
                Op::Add | Op::Sub | Op::Mul | Op::Div => d -= 1,
                _ => {}
            }
            depth = depth.max(d);
        }
        Tape { ops, depth }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.depth <= 32 {
            let mut stack = [0.0f64; 32];
            run(&self.ops, x, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            run(&self.ops, x, &mut stack)
        }
    }
}

fn run(ops: &[Op], x: &[f64], stack: &mut [f64]) -> f64 {
    let mut sp = 0usize;
    for op in ops {
        match *op {
            Op::Const(c) => {
                stack[sp] = c;
                sp += 1;
            }
            Op::Var(i) => {
                stack[sp] = x[i];
                sp += 1;
            }
            Op::Neg => stack[sp - 1] = -stack[sp - 1],
            Op::Add => {
                sp -= 1;
                stack[sp - 1] += stack[sp];
            }
            Op::Sub => {
                sp -= 1;
                stack[sp - 1] -= stack[sp];
            }
            Op::Mul => {
                sp -= 1;
                stack[sp - 1] *= stack[sp];
            }
            Op::Div => {
                sp -= 1;
                stack[sp - 1] /= stack[sp];
            }
            Op::Pow(n) => stack[sp - 1] = stack[sp - 1].powi(n),
            Op::Call(f) => stack[sp - 1] = f.apply(stack[sp - 1]),
        }
    }
    stack[0]
}

/// A vector of expressions together with its compiled Jacobian.
#[derive(Debug, Clone)]
pub struct CompiledMap {
    pub exprs: Vec<Expr>,
    values: Vec<Tape>,
    jac: Vec<Vec<Option<Tape>>>,
    n_in: usize,
}

impl CompiledMap {
    pub fn new(exprs: Vec<Expr>, n_in: usize) -> Self {
        let values = exprs.iter().map(Expr::compile).collect();
        let jac = exprs
            .iter()
            .map(|e| {
                (0..n_in)
                    .map(|j| {
                        let d = e.diff(j);
                        if d.is_zero() {
                            None
                        } else {
                            Some(d.compile())
                        }
                    })
                    .collect()
            })
            .collect();
        CompiledMap {
            exprs,
            values,
            jac,
            n_in,
        }
    }

    pub fn n_out(&self) -> usize {
        self.values.len()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.values.iter().map(|t| t.eval(x)).collect()
    }

    /// Row-major Jacobian, `n_out × n_in`.
    pub fn jacobian(&self, x: &[f64]) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n_out(), self.n_in);
        for (r, row) in self.jac.iter().enumerate() {
            for (c, t) in row.iter().enumerate() {
                if let Some(t) = t {
                    m[(r, c)] = t.eval(x);
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let v = s
                .parse::<f64>()
                .map_err(|_| ExprError::UnexpectedChar { ch: c, col })?;
            out.push((Tok::Num(v), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Sym(c), col));
            i += 1;
        } else {
            return Err(ExprError::UnexpectedChar { ch: c, col });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    vars: &'a [&'a str],
    end_col: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.1)
            .unwrap_or(self.end_col)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = lhs.add(&self.term()?);
            } else if self.eat('-') {
                lhs = lhs.sub(&self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = lhs.mul(&self.unary()?);
            } else if self.eat('/') {
                lhs = lhs.div(&self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(self.unary()?.neg());
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            let col = self.col();
            let neg = self.eat('-');
            let paren = !neg && self.eat('(');
            let neg = neg || (paren && self.eat('-'));
            match self.peek() {
                Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() < 1e6 => {
                    let n = *v as i32;
                    self.pos += 1;
                    if paren && !self.eat(')') {
                        return Err(ExprError::UnexpectedToken { col: self.col() });
                    }
                    Ok(base.powi(if neg { -n } else { n }))
                }
                _ => Err(ExprError::NonIntegerPower { col }),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let col = self.col();
        let Some(tok) = self.peek().cloned() else {
            return Err(ExprError::UnexpectedEnd { col });
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::constant(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(if self.peek().is_none() {
                        ExprError::UnexpectedEnd { col: self.col() }
                    } else {
                        ExprError::UnexpectedToken { col: self.col() }
                    });
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Expr::var(i));
                }
                let func = match name.as_str() {
                    "pi" => return Ok(Expr::constant(std::f64::consts::PI)),
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "exp" => Func::Exp,
                    "tanh" => Func::Tanh,
                    "sqrt" => Func::Sqrt,
                    _ => return Err(ExprError::UnknownIdent { name, col }),
                };
                if !self.eat('(') {
                    return Err(ExprError::UnexpectedToken { col: self.col() });
                }
                let arg = self.expr()?;
                if !self.eat(')') {
                    return Err(ExprError::UnexpectedToken { col: self.col() });
                }
                Ok(Expr::call(func, &arg))
            }
            Tok::Sym(_) => Err(ExprError::UnexpectedToken { col }),
        }
    }
}

/// Parse a list of expressions sharing the same variable names.
pub fn parse_all(srcs: &[&str], vars: &[&str]) -> Result<Vec<Expr>, ExprError> {
    srcs.iter().map(|s| Expr::parse(s, vars)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const XYZ: &[&str] = &["x", "y", "z"];

    fn finite_diff(e: &Expr, x: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[i] += h;
        b[i] -= h;
        (e.eval(&a) - e.eval(&b)) / (2.0 * h)
    }

    #[test]
    fn parse_and_eval() {
        let e = Expr::parse("x^2 + 2*y*z - 1", XYZ).unwrap();
        assert_eq!(e.eval(&[1.0, 2.0, 3.0]), 12.0);
        let e = Expr::parse("-x^2", XYZ).unwrap();
        assert_eq!(e.eval(&[3.0, 0.0, 0.0]), -9.0);
        let e = Expr::parse("2^-1 + 1e-1*x", XYZ).unwrap();
        assert!((e.eval(&[10.0, 0.0, 0.0]) - 1.5).abs() < 1e-15);
        let e = Expr::parse("sin(pi/2)*cos(0) + exp(0) + tanh(0) + sqrt(4)", XYZ).unwrap();
        assert!((e.eval(&[0.0; 3]) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_report_columns() {
        assert_eq!(
            Expr::parse("x + w", XYZ).unwrap_err(),
            ExprError::UnknownIdent {
                name: "w".into(),
                col: 5
            }
        );
        assert_eq!(Expr::parse("x +", XYZ).unwrap_err().column(), 4);
        assert!(matches!(
            Expr::parse("x^y", XYZ),
            Err(ExprError::NonIntegerPower { col: 3 })
        ));
        assert!(matches!(
            Expr::parse("x $ y", XYZ),
            Err(ExprError::UnexpectedChar { ch: '$', col: 3 })
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let srcs = [
            "x^3*y - z/(1 + x^2)",
            "sin(x*y) + cos(z)^2",
            "exp(-x^2) * tanh(y - z)",
            "sqrt(1 + x^2 + y^2)",
        ];
        let pt = [0.3, -0.7, 1.1];
        for s in srcs {
            let e = Expr::parse(s, XYZ).unwrap();
            for i in 0..3 {
                let d = e.diff(i).eval(&pt);
                let fd = finite_diff(&e, &pt, i);
                assert!((d - fd).abs() < 1e-7, "{s} d/dx{i}: {d} vs {fd}");
            }
        }
    }

    #[test]
    fn tape_matches_tree() {
        let e = Expr::parse("(x - y)^2*sin(z) - x/(y^2 + 1) + -z", XYZ).unwrap();
        let t = e.compile();
        for p in [[0.1, 0.2, 0.3], [-1.0, 2.0, 0.5], [3.0, -0.5, -2.0]] {
            assert_eq!(t.eval(&p), e.eval(&p));
        }
    }

    #[test]
    fn substitution_composes() {
        let f = Expr::parse("x^2 + y", &["x", "y"]).unwrap();
        let g = parse_all(&["z*2", "x - 1"], XYZ).unwrap();
        let h = f.substitute(&g);
        assert_eq!(h.eval(&[4.0, 0.0, 1.5]), 9.0 + 3.0);
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("-(x - y)^2*sin(z)/(1 + x) - -3", XYZ).unwrap();
        let names = ["x1", "x2", "x3"];
        let back = Expr::parse(&e.to_string(), &names).unwrap();
        for p in [[0.1, 0.2, 0.3], [1.0, -2.0, 0.5]] {
            assert!((back.eval(&p) - e.eval(&p)).abs() < 1e-14);
        }
    }
}
