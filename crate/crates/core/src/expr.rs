//! Scalar expressions of coordinates.
//!
//! Scenario files carry metric entries, graph functions and multiplicity
//! densities as plain strings. The grammar is fixed and small: constants,
//! variables `x1..x16`, unary minus, `+ - * / ^` and the calls
//! `sin cos exp sqrt log abs`. Precedence is `^` above unary minus above
//! `*` `/` above `+` `-`, every level left-associative, parentheses override.
//!
//! Expressions are immutable after parsing and evaluation is pure, so they
//! can be shared freely across threads.

use std::fmt;
use thiserror::Error;

pub const MAX_VARS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdent { offset: usize, name: String },
    #[error("variable x{index} exceeds the declared maximum x{max}")]
    VarIndex { index: usize, max: usize },
    #[error("empty expression")]
    Empty,
    #[error("domain error in `{subexpr}`: {msg}")]
    Domain { subexpr: String, msg: String },
    #[error("coordinate vector of length {given} is too short for variable x{index}")]
    CoordsTooShort { given: usize, index: usize },
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Log,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "log" => Func::Log,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Const(f64),
    /// Zero-based variable index (`x1` is index 0).
    Var(usize),
    Neg(Box<Ast>),
    Bin(BinOp, Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

/// A parsed expression together with its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    source: String,
    ast: Ast,
    max_var: usize,
}

impl Expression {
    /// Parse `source` allowing variables up to `x<max_var>`.
    pub fn parse(source: &str, max_var: usize) -> Result<Expression, ExprError> {
        if source.trim().is_empty() {
            return Err(ExprError::Empty);
        }
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
            max_var,
        };
        p.skip_ws();
        let ast = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(ExprError::Syntax {
                offset: p.pos,
                msg: format!("unexpected `{}`", source[p.pos..].chars().next().unwrap()),
            });
        }
        Ok(Expression {
            source: source.to_string(),
            ast,
            max_var,
        })
    }

    /// Build an expression from a constant.
    pub fn constant(value: f64) -> Expression {
        let ast = Ast::Const(value);
        Expression {
            source: serialize(&ast),
            ast,
            max_var: 0,
        }
    }

    /// Build an expression directly from an AST (used by generated surfaces).
    pub fn from_ast(ast: Ast, max_var: usize) -> Expression {
        Expression {
            source: serialize(&ast),
            ast,
            max_var,
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Ast {
        &self.ast
    }

    pub fn max_var(&self) -> usize {
        self.max_var
    }

    /// True if the expression has no variables.
    pub fn is_constant(&self) -> bool {
        fn walk(a: &Ast) -> bool {
            match a {
                Ast::Const(_) => true,
                Ast::Var(_) => false,
                Ast::Neg(x) => walk(x),
                Ast::Bin(_, l, r) => walk(l) && walk(r),
                Ast::Call(_, x) => walk(x),
            }
        }
        walk(&self.ast)
    }

    /// Re-serialize the AST in fully parenthesised form. Parsing the result
    /// reproduces the AST node for node.
    pub fn serialize(&self) -> String {
        serialize(&self.ast)
    }

    /// IEEE double evaluation at `coords`.
    pub fn eval(&self, coords: &[f64]) -> Result<f64, ExprError> {
        eval_ast(&self.ast, coords)
    }

    /// Central-difference gradient with step `h`, one entry per coordinate.
    pub fn gradient(&self, coords: &[f64], h: f64) -> Result<Vec<f64>, ExprError> {
        if h <= 0.0 {
            return Err(ExprError::BadStep(h));
        }
        let mut shifted = coords.to_vec();
        let mut out = Vec::with_capacity(coords.len());
        for i in 0..coords.len() {
            let x = coords[i];
            shifted[i] = x + h;
            let plus = eval_ast(&self.ast, &shifted)?;
            shifted[i] = x - h;
            let minus = eval_ast(&self.ast, &shifted)?;
            shifted[i] = x;
            out.push((plus - minus) / (2.0 * h));
        }
        Ok(out)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

fn eval_ast(ast: &Ast, coords: &[f64]) -> Result<f64, ExprError> {
    match ast {
        Ast::Const(c) => Ok(*c),
        Ast::Var(i) => {
            if *i >= coords.len() {
                Err(ExprError::CoordsTooShort {
                    given: coords.len(),
                    index: i + 1,
                })
            } else {
                Ok(coords[*i])
            }
        }
        Ast::Neg(x) => Ok(-eval_ast(x, coords)?),
        Ast::Bin(op, l, r) => {
            let a = eval_ast(l, coords)?;
            let b = eval_ast(r, coords)?;
            match op {
                BinOp::Add => Ok(a + b),
                BinOp::Sub => Ok(a - b),
                BinOp::Mul => Ok(a * b),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(domain(ast, "division by zero"))
                    } else {
                        Ok(a / b)
                    }
                }
                BinOp::Pow => pow(a, b, ast),
            }
        }
        Ast::Call(f, x) => {
            let v = eval_ast(x, coords)?;
            match f {
                Func::Sin => Ok(v.sin()),
                Func::Cos => Ok(v.cos()),
                Func::Exp => Ok(v.exp()),
                Func::Sqrt => {
                    if v < 0.0 {
                        Err(domain(ast, "sqrt of negative value"))
                    } else {
                        Ok(v.sqrt())
                    }
                }
                Func::Log => {
                    if v <= 0.0 {
                        Err(domain(ast, "log of non-positive value"))
                    } else {
                        Ok(v.ln())
                    }
                }
                Func::Abs => Ok(v.abs()),
            }
        }
    }
}

// `^` takes the integer fast path when the exponent is integral, and
// exp(b*log a) for a > 0 otherwise, so fractional powers of non-positive
// bases fail loudly instead of returning NaN.
fn pow(a: f64, b: f64, node: &Ast) -> Result<f64, ExprError> {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        if a == 0.0 && b < 0.0 {
            return Err(domain(node, "zero base with negative exponent"));
        }
        Ok(a.powi(b as i32))
    } else if a > 0.0 {
        Ok((b * a.ln()).exp())
    } else {
        Err(domain(node, "fractional power of non-positive base"))
    }
}

fn domain(node: &Ast, msg: &str) -> ExprError {
    ExprError::Domain {
        subexpr: serialize(node),
        msg: msg.to_string(),
    }
}

fn serialize(ast: &Ast) -> String {
    match ast {
        Ast::Const(c) => {
            if *c < 0.0 {
                format!("({:?})", c)
            } else {
                format!("{:?}", c)
            }
        }
        Ast::Var(i) => format!("x{}", i + 1),
        Ast::Neg(x) => format!("(-{})", serialize(x)),
        Ast::Bin(op, l, r) => {
            let sym = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
                BinOp::Pow => "^",
            };
            format!("({} {} {})", serialize(l), sym, serialize(r))
        }
        Ast::Call(f, x) => format!("{}({})", f.name(), serialize(x)),
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    max_var: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn err(&self, msg: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                lhs = Ast::Bin(BinOp::Add, Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                lhs = Ast::Bin(BinOp::Sub, Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                lhs = Ast::Bin(BinOp::Mul, Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                lhs = Ast::Bin(BinOp::Div, Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    // unary := '-' unary | power   (so -x1^2 parses as -(x1^2))
    fn unary(&mut self) -> Result<Ast, ExprError> {
        if self.eat(b'-') {
            Ok(Ast::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    // power := atom ('^' pow_rhs)*, left-associative
    fn power(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.atom()?;
        while self.eat(b'^') {
            let rhs = self.pow_rhs()?;
            lhs = Ast::Bin(BinOp::Pow, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // Allow a leading minus in exponents (`x1^-2`) without giving unary
    // minus precedence over `^` elsewhere.
    fn pow_rhs(&mut self) -> Result<Ast, ExprError> {
        if self.eat(b'-') {
            Ok(Ast::Neg(Box::new(self.pow_rhs()?)))
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Ast, ExprError> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.err(format!("unexpected `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Ast, ExprError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else {
                break;
            }
        }
        // optional exponent
        if let Some(b'e' | b'E') = self.peek() {
            let mark = self.pos;
            self.pos += 1;
            if let Some(b'+' | b'-') = self.peek() {
                self.pos += 1;
            }
            let digits_start = self.pos;
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            if self.pos == digits_start {
                // not an exponent after all (e.g. `2*exp(x1)` never reaches
                // here, but `2e` should fail cleanly)
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            msg: format!("malformed number `{}`", text),
        })?;
        self.skip_ws();
        Ok(Ast::Const(value))
    }

    fn ident(&mut self) -> Result<Ast, ExprError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        self.skip_ws();

        if let Some(rest) = name.strip_prefix('x') {
            if let Ok(index) = rest.parse::<usize>() {
                if index == 0 || index > MAX_VARS {
                    return Err(ExprError::Syntax {
                        offset: start,
                        msg: format!("variable index must be 1..{}, got `{}`", MAX_VARS, name),
                    });
                }
                if index > self.max_var {
                    return Err(ExprError::VarIndex {
                        index,
                        max: self.max_var,
                    });
                }
                return Ok(Ast::Var(index - 1));
            }
        }

        if let Some(f) = Func::from_name(&name) {
            if !self.eat(b'(') {
                return Err(self.err(format!("expected `(` after `{}`", name)));
            }
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)`"));
            }
            return Ok(Ast::Call(f, Box::new(arg)));
        }

        Err(ExprError::UnknownIdent {
            offset: start,
            name,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Expression {
        Expression::parse(s, 16).unwrap()
    }

    #[test]
    fn precedence_and_arithmetic() {
        assert_eq!(parse("1+2*3").eval(&[]).unwrap(), 7.0);
        assert_eq!(parse("2*x1^2 + sin(x2)").eval(&[1.0, 0.0]).unwrap(), 2.0);
        assert_eq!(parse("x1^3").eval(&[2.0]).unwrap(), 8.0);
        assert_eq!(parse("2^3^2").eval(&[]).unwrap(), 64.0); // left-assoc
        assert_eq!(parse("-2^2").eval(&[]).unwrap(), -4.0); // ^ binds tighter
        assert_eq!(parse("2^-2").eval(&[]).unwrap(), 0.25);
        assert_eq!(parse("exp(0)").eval(&[]).unwrap(), 1.0);
        assert_eq!(parse("(1+2)*3").eval(&[]).unwrap(), 9.0);
        assert_eq!(parse("1 - 2 - 3").eval(&[]).unwrap(), -4.0);
    }

    #[test]
    fn syntax_error_carries_offset() {
        match Expression::parse("x1 +", 16) {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected syntax error, got {:?}", other),
        }
        assert!(matches!(
            Expression::parse("", 16),
            Err(ExprError::Empty)
        ));
        assert!(matches!(
            Expression::parse("foo(1)", 16),
            Err(ExprError::UnknownIdent { offset: 0, .. })
        ));
        assert!(matches!(
            Expression::parse("x3", 2),
            Err(ExprError::VarIndex { index: 3, max: 2 })
        ));
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        match parse("x1/x2").eval(&[1.0, 0.0]) {
            Err(ExprError::Domain { subexpr, .. }) => assert_eq!(subexpr, "(x1 / x2)"),
            other => panic!("expected domain error, got {:?}", other),
        }
        assert!(parse("sqrt(x1)").eval(&[-1.0]).is_err());
        assert!(parse("log(x1)").eval(&[0.0]).is_err());
        assert!(parse("x1^0.5").eval(&[-2.0]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g = parse("x1^2").gradient(&[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);

        let g = parse("5").gradient(&[1.0, 2.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);

        let g = parse("sin(x1)").gradient(&[0.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_converges_at_order_two() {
        // halving h cuts the error by ~4 on a smooth corpus
        let cases = [
            ("sin(x1)*exp(x2)", vec![0.4, -0.3]),
            ("x1^3 + x2^2*x1", vec![1.1, 0.7]),
            ("sqrt(1 + x1^2)", vec![0.9]),
        ];
        for (src, at) in cases {
            let e = parse(src);
            let exact = e.gradient(&at, 1e-7).unwrap(); // proxy for analytic
            let err = |h: f64| -> f64 {
                e.gradient(&at, h)
                    .unwrap()
                    .iter()
                    .zip(&exact)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            };
            let e1 = err(1e-2);
            let e2 = err(5e-3);
            let ratio = e1 / e2;
            assert!(
                (2.8..=5.2).contains(&ratio),
                "{src}: ratio {ratio} out of order-2 band"
            );
        }
    }

    #[test]
    fn serialization_round_trips() {
        for src in [
            "1+2*3",
            "2*x1^2 + sin(x2)",
            "-x1 - -x2",
            "sqrt(abs(x1))/x2^2",
            "1e-3*x1 + 2.5E2",
            "x1^-2 * cos(x2 - 4)",
        ] {
            let e = parse(src);
            let round = Expression::parse(&e.serialize(), 16).unwrap();
            assert_eq!(e.ast(), round.ast(), "round-trip failed for {src}");
        }
    }

    #[test]
    fn constant_detection() {
        assert!(parse("1 + 2*3").is_constant());
        assert!(!parse("1 + x2").is_constant());
    }
}
