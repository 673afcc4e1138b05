//! Arithmetic expressions over the ambient coordinates, with symbolic differentiation.
//!
//! Grammar (loosest binding first):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?        exponent must be constant
//! primary := number | 'x' | 'y' | 'z' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func    := exp | sin | cos | sqrt | log
//! ```

use std::fmt;

use crate::error::{Error, ParseError, ParseErrorKind, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Log,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Coordinate index: 0 = x, 1 = y, 2 = z.
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Base raised to a constant exponent.
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

const VAR_NAMES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(u8),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &self.src[start..end];
            let value: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                kind: ParseErrorKind::Syntax(format!("malformed number `{text}`")),
            })?;
            if !value.is_finite() {
                return Err(ParseError {
                    offset: start,
                    kind: ParseErrorKind::Syntax(format!("number `{text}` is out of range")),
                });
            }
            self.pos = end;
            return Ok((Tok::Num(value), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let mut end = start;
            while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(self.src[start..end].to_string()), start));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Sym(c), start));
        }
        // Step over a whole UTF-8 character so the offset points at its first byte.
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(ParseError {
            offset: start,
            kind: ParseErrorKind::Syntax(format!("unexpected character `{ch}`")),
        })
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
    dim: usize,
}

fn syntax(offset: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        offset,
        kind: ParseErrorKind::Syntax(msg.into()),
    }
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, offset) = self.lexer.next()?;
        self.tok = tok;
        self.offset = offset;
        Ok(())
    }

    fn expect(&mut self, sym: u8) -> Result<(), ParseError> {
        if self.tok == Tok::Sym(sym) {
            self.bump()
        } else {
            Err(syntax(self.offset, format!("expected `{}`", sym as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Sym(b'+') => BinOp::Add,
                Tok::Sym(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Sym(b'*') => BinOp::Mul,
                Tok::Sym(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Sym(b'-') {
            self.bump()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.tok != Tok::Sym(b'^') {
            return Ok(base);
        }
        self.bump()?;
        let at = self.offset;
        let exponent = self.unary()?;
        if exponent.has_variables() {
            return Err(ParseError {
                offset: at,
                kind: ParseErrorKind::NonConstantExponent,
            });
        }
        let value = exponent
            .eval(&[0.0; 3])
            .map_err(|e| syntax(at, format!("exponent cannot be evaluated: {e}")))?;
        Ok(Expr::Pow(Box::new(base), value))
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::Sym(b'(') => {
                self.bump()?;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if let Some(func) = Func::from_name(&name) {
                    if self.tok != Tok::Sym(b'(') {
                        return Err(syntax(self.offset, format!("expected `(` after `{name}`")));
                    }
                    self.bump()?;
                    let mut args = Vec::new();
                    if self.tok != Tok::Sym(b')') {
                        args.push(self.expr()?);
                        while self.tok == Tok::Sym(b',') {
                            self.bump()?;
                            args.push(self.expr()?);
                        }
                    }
                    self.expect(b')')?;
                    if args.len() != 1 {
                        return Err(ParseError {
                            offset: at,
                            kind: ParseErrorKind::Arity {
                                function: name,
                                expected: 1,
                                found: args.len(),
                            },
                        });
                    }
                    let arg = args.pop().expect("one argument");
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Expr::Num(std::f64::consts::PI));
                }
                match VAR_NAMES[..self.dim].iter().position(|&v| v == name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => Err(ParseError {
                        offset: at,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    }),
                }
            }
            Tok::End => Err(syntax(at, "unexpected end of input")),
            Tok::Sym(c) => Err(syntax(at, format!("unexpected `{}`", c as char))),
        }
    }
}

/// Parses `source` with variables limited to the first `dim` coordinates.
pub fn parse(source: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = Parser {
        lexer: Lexer { src: source, pos: 0 },
        tok: Tok::End,
        offset: 0,
        dim: dim.min(3),
    };
    p.bump()?;
    let expr = p.expr()?;
    if p.tok != Tok::End {
        return Err(syntax(p.offset, "unexpected trailing input"));
    }
    Ok(expr)
}

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

// Smart constructors used by differentiation; they fold the trivial zeros and ones.
fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, b) if is_num(&b, 0.0) => a,
        (a, b) if is_num(&a, 0.0) => b,
        (Expr::Num(x), Expr::Num(y)) => num(x + y),
        (a, b) => Expr::Binary(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn subtract(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, b) if is_num(&b, 0.0) => a,
        (a, b) if is_num(&a, 0.0) => neg(b),
        (Expr::Num(x), Expr::Num(y)) => num(x - y),
        (a, b) => Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, b) if is_num(&a, 0.0) || is_num(&b, 0.0) => num(0.0),
        (a, b) if is_num(&a, 1.0) => b,
        (a, b) if is_num(&b, 1.0) => a,
        (Expr::Num(x), Expr::Num(y)) => num(x * y),
        (a, b) => Expr::Binary(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (a, b) if is_num(&b, 1.0) => a,
        (a, b) => Expr::Binary(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => num(-x),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn pow(a: Expr, p: f64) -> Expr {
    if p == 0.0 {
        num(1.0)
    } else if p == 1.0 {
        a
    } else {
        Expr::Pow(Box::new(a), p)
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl Expr {
    pub fn has_variables(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.has_variables(),
            Expr::Binary(_, a, b) => a.has_variables() || b.has_variables(),
        }
    }

    /// Evaluates at `point`; domain violations are errors rather than NaN.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => *point.get(*i).ok_or(Error::DimensionMismatch {
                expected: i + 1,
                got: point.len(),
            })?,
            Expr::Neg(a) => -a.eval(point)?,
            Expr::Binary(op, a, b) => {
                let (x, y) = (a.eval(point)?, b.eval(point)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(domain(format!("division by zero in `{self}`")));
                        }
                        x / y
                    }
                }
            }
            Expr::Pow(a, p) => {
                let x = a.eval(point)?;
                if x < 0.0 && p.fract() != 0.0 {
                    return Err(domain(format!("negative base {x} with non-integer exponent {p}")));
                }
                if x == 0.0 && *p < 0.0 {
                    return Err(domain(format!("zero raised to negative power {p}")));
                }
                if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                    x.powi(*p as i32)
                } else {
                    x.powf(*p)
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval(point)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(domain(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(domain(format!("log of nonpositive value {x}")));
                        }
                        x.ln()
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(domain(format!("non-finite value while evaluating `{self}`")));
        }
        Ok(v)
    }

    /// Exact partial derivative with respect to coordinate `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(i) => num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Binary(op, a, b) => {
                let (da, db) = (a.derivative(var), b.derivative(var));
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => subtract(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => {
                        if is_num(&db, 0.0) {
                            div(da, b)
                        } else {
                            div(subtract(mul(da, b.clone()), mul(a, db)), pow(b, 2.0))
                        }
                    }
                }
            }
            Expr::Pow(a, p) => mul(mul(num(*p), pow((**a).clone(), p - 1.0)), a.derivative(var)),
            Expr::Call(f, a) => {
                let da = a.derivative(var);
                let a = (**a).clone();
                match f {
                    Func::Exp => mul(call(Func::Exp, a), da),
                    Func::Sin => mul(call(Func::Cos, a), da),
                    Func::Cos => neg(mul(call(Func::Sin, a), da)),
                    Func::Sqrt => div(da, mul(num(2.0), call(Func::Sqrt, a))),
                    Func::Log => div(da, a),
                }
            }
        }
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        write!(f, "(-{:?})", -v)
    } else {
        write!(f, "{v:?}")
    }
}

/// Fully parenthesised form; parsing it back yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Var(i) => f.write_str(VAR_NAMES[*i]),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Pow(a, p) => {
                write!(f, "({a} ^ ")?;
                write_num(f, *p)?;
                f.write_str(")")
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
