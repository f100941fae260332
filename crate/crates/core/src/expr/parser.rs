//! Recursive-descent parser for the expression sub-language.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' integer)?
//! primary := number | variable | 'exp' '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables are `t`, `p1..`, `w1..` and `x1..` (1-based).

use super::{Dims, ExprGraph, GraphBuilder, Op};
use crate::error::{Error, Result};

/// Deepest accepted nesting of unary operators and parentheses.
pub const MAX_NESTING: usize = 200;
/// Largest accepted integer exponent.
pub const MAX_EXPONENT: u32 = 64;

/// Which independent variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Right-hand side `f(t, p, w, x)`.
    Dynamics,
    /// Initial condition `x0(p, w)`.
    Initial,
    /// Terminal cost `g(p, w, x)`.
    Cost,
}

impl Scope {
    fn allows_time(self) -> bool {
        self == Scope::Dynamics
    }

    fn allows_state(self) -> bool {
        self != Scope::Initial
    }

    fn label(self) -> &'static str {
        match self {
            Scope::Dynamics => "f",
            Scope::Initial => "x0",
            Scope::Cost => "g",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Int(u64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, col: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.line, self.col0 + col, msg)
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, usize)>> {
        let mut out = Vec::new();
        loop {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let start = self.pos;
            let Some(&c) = self.src.get(self.pos) else {
                out.push((Tok::End, start));
                return Ok(out);
            };
            let tok = match c {
                b'+' => Tok::Plus,
                b'-' => Tok::Minus,
                b'*' => Tok::Star,
                b'/' => Tok::Slash,
                b'^' => Tok::Caret,
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b'0'..=b'9' | b'.' => {
                    let tok = self.number()?;
                    out.push((tok, start));
                    continue;
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    while self.pos < self.src.len()
                        && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                    {
                        self.pos += 1;
                    }
                    let s = std::str::from_utf8(&self.src[start..self.pos])
                        .expect("ascii identifier")
                        .to_string();
                    out.push((Tok::Ident(s), start));
                    continue;
                }
                _ => {
                    let ch = std::str::from_utf8(&self.src[start..])
                        .ok()
                        .and_then(|s| s.chars().next())
                        .unwrap_or('?');
                    return Err(self.err(start, format!("unexpected character '{ch}'")));
                }
            };
            self.pos += 1;
            out.push((tok, start));
        }
    }

    fn number(&mut self) -> Result<Tok> {
        let start = self.pos;
        let digits = |lx: &mut Self| {
            let s = lx.pos;
            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_digit() {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let int_digits = digits(self);
        let mut integral = true;
        if self.src.get(self.pos) == Some(&b'.') {
            integral = false;
            self.pos += 1;
            let frac = digits(self);
            if int_digits + frac == 0 {
                return Err(self.err(start, "malformed number"));
            }
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            integral = false;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.err(start, "malformed exponent in number"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        if integral {
            if let Ok(n) = text.parse::<u64>() {
                return Ok(Tok::Int(n));
            }
        }
        let v: f64 = text
            .parse()
            .map_err(|_| self.err(start, format!("malformed number '{text}'")))?;
        if !v.is_finite() {
            return Err(self.err(start, format!("number '{text}' is not finite")));
        }
        Ok(Tok::Num(v))
    }
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    depth: usize,
    line: usize,
    col0: usize,
    dims: &'a Dims,
    scope: Scope,
    builder: &'a mut GraphBuilder,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn col(&self) -> usize {
        self.col0 + self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.line, self.col(), msg)
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(self.err(format!("expression nested deeper than {MAX_NESTING}")));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<usize> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = self.builder.push(Op::Add(lhs, rhs));
                }
                Tok::Minus => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = self.builder.push(Op::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<usize> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = self.builder.push(Op::Mul(lhs, rhs));
                }
                Tok::Slash => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = self.builder.push(Op::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<usize> {
        match self.peek() {
            Tok::Minus => {
                self.bump();
                self.enter()?;
                let a = self.unary()?;
                self.depth -= 1;
                Ok(self.builder.push(Op::Neg(a)))
            }
            Tok::Plus => {
                self.bump();
                self.enter()?;
                let a = self.unary()?;
                self.depth -= 1;
                Ok(a)
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<usize> {
        let base = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        match self.peek().clone() {
            Tok::Int(k) if k <= MAX_EXPONENT as u64 => {
                self.bump();
                Ok(self.builder.push(Op::Pow(base, k as u32)))
            }
            Tok::Int(_) => Err(self.err(format!("exponent exceeds {MAX_EXPONENT}"))),
            _ => Err(self.err("expected a nonnegative integer exponent after '^'")),
        }
    }

    fn primary(&mut self) -> Result<usize> {
        let col = self.col();
        match self.bump() {
            Tok::Num(v) => Ok(self.builder.push(Op::Const(v))),
            Tok::Int(n) => Ok(self.builder.push(Op::Const(n as f64))),
            Tok::LParen => {
                self.enter()?;
                let e = self.expr()?;
                self.depth -= 1;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) if name == "exp" => {
                if self.bump() != Tok::LParen {
                    return Err(Error::parse(self.line, col, "expected '(' after exp"));
                }
                self.enter()?;
                let e = self.expr()?;
                self.depth -= 1;
                self.expect_rparen()?;
                Ok(self.builder.push(Op::Exp(e)))
            }
            Tok::Ident(name) => {
                let op = self.variable(&name, col)?;
                Ok(self.builder.push(op))
            }
            Tok::End => Err(Error::parse(self.line, col, "unexpected end of expression")),
            t => Err(Error::parse(self.line, col, format!("unexpected token {t:?}"))),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if *self.peek() == Tok::RParen {
            self.bump();
            Ok(())
        } else {
            Err(self.err("expected ')'"))
        }
    }

    fn variable(&self, name: &str, col: usize) -> Result<Op> {
        if name == "t" {
            if !self.scope.allows_time() {
                return Err(Error::Dimension(format!(
                    "line {}, column {col}: t is not an argument of {}",
                    self.line,
                    self.scope.label()
                )));
            }
            return Ok(Op::Time);
        }
        let (class, rest) = name.split_at(1);
        let index = match rest.parse::<usize>() {
            Ok(i) if !rest.starts_with('+') => i,
            _ => return Err(Error::parse(self.line, col, format!("unknown identifier '{name}'"))),
        };
        let (limit, op, allowed) = match class {
            "p" => (self.dims.np, Op::Param(index.wrapping_sub(1)), true),
            "w" => (self.dims.nw, Op::Noise(index.wrapping_sub(1)), true),
            "x" => (
                self.dims.nx,
                Op::State(index.wrapping_sub(1)),
                self.scope.allows_state(),
            ),
            _ => return Err(Error::parse(self.line, col, format!("unknown identifier '{name}'"))),
        };
        if !allowed {
            return Err(Error::Dimension(format!(
                "line {}, column {col}: {name} is not an argument of {}",
                self.line,
                self.scope.label()
            )));
        }
        if index == 0 || index > limit {
            return Err(Error::Dimension(format!(
                "line {}, column {col}: {name} is undeclared ({class} has dimension {limit})",
                self.line
            )));
        }
        Ok(op)
    }
}

/// Parses one expression into `builder` and registers it as output `name`.
/// `line` and `col0` locate the expression text inside a larger file.
pub(crate) fn parse_into(
    builder: &mut GraphBuilder,
    name: &str,
    src: &str,
    dims: &Dims,
    scope: Scope,
    line: usize,
    col0: usize,
) -> Result<usize> {
    let lexer = Lexer {
        src: src.as_bytes(),
        pos: 0,
        line,
        col0,
    };
    let toks = lexer.tokenize()?;
    let mut p = Parser {
        toks,
        at: 0,
        depth: 0,
        line,
        col0,
        dims,
        scope,
        builder,
    };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.err("unexpected trailing input"));
    }
    p.builder.add_output(name, root);
    Ok(root)
}

/// Parses a standalone single-output expression.
pub fn parse_expression(src: &str, dims: &Dims, scope: Scope) -> Result<ExprGraph> {
    let mut b = GraphBuilder::new();
    parse_into(&mut b, "e", src, dims, scope, 1, 1)?;
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { np: 2, nw: 2, nx: 2 }
    }

    fn eval1(src: &str, x: &[f64]) -> f64 {
        let g = parse_expression(src, &dims(), Scope::Dynamics).unwrap();
        g.eval_real(&super::super::Env {
            t: 0.5,
            p: &[2.0, 3.0],
            w: &[5.0, 7.0],
            x,
        })
        .unwrap()[0]
    }

    #[test]
    fn precedence_and_associativity() {
        let x = [11.0, 13.0];
        assert_eq!(eval1("1 + 2 * 3", &x), 7.0);
        assert_eq!(eval1("10 - 4 - 3", &x), 3.0);
        assert_eq!(eval1("12 / 3 / 2", &x), 2.0);
        assert_eq!(eval1("-2^2", &x), -4.0);
        assert_eq!(eval1("(1 + 2) * 3", &x), 9.0);
        assert_eq!(eval1("p1*p2 + w1 - x1 + t", &x), 6.0 + 5.0 - 11.0 + 0.5);
        assert_eq!(eval1("exp(0)", &x), 1.0);
        assert_eq!(eval1("2.5e1 + .5", &x), 25.5);
        assert_eq!(eval1("--3", &x), 3.0);
        assert_eq!(eval1("x2^0", &x), 1.0);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse_expression("p1 * $", &dims(), Scope::Dynamics).unwrap_err();
        assert_eq!(
            e,
            Error::Parse {
                line: 1,
                column: 6,
                message: "unexpected character '$'".into()
            }
        );
        let e = parse_expression("(p1 + 2", &dims(), Scope::Dynamics).unwrap_err();
        assert!(matches!(e, Error::Parse { column: 8, .. }), "{e:?}");
        assert!(parse_expression("p1 p2", &dims(), Scope::Dynamics).is_err());
        assert!(parse_expression("x1^2.5", &dims(), Scope::Dynamics).is_err());
        assert!(parse_expression("x1^65", &dims(), Scope::Dynamics).is_err());
        assert!(parse_expression("foo", &dims(), Scope::Dynamics).is_err());
        assert!(parse_expression("1e999", &dims(), Scope::Dynamics).is_err());
        assert!(parse_expression("", &dims(), Scope::Dynamics).is_err());
        assert!(parse_expression("exp 1", &dims(), Scope::Dynamics).is_err());
    }

    #[test]
    fn undeclared_variables() {
        let e = parse_expression("p3*x1", &dims(), Scope::Dynamics).unwrap_err();
        assert!(matches!(e, Error::Dimension(_)));
        assert!(matches!(
            parse_expression("p0", &dims(), Scope::Dynamics),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            parse_expression("x1", &dims(), Scope::Initial),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            parse_expression("t", &dims(), Scope::Cost),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn nesting_limit() {
        let deep = format!("{}1{}", "(".repeat(500), ")".repeat(500));
        assert!(matches!(
            parse_expression(&deep, &dims(), Scope::Cost),
            Err(Error::Parse { .. })
        ));
        let negs = format!("{}1", "-".repeat(500));
        assert!(parse_expression(&negs, &dims(), Scope::Cost).is_err());
        let ok = format!("{}1{}", "(".repeat(50), ")".repeat(50));
        assert!(parse_expression(&ok, &dims(), Scope::Cost).is_ok());
    }

    #[test]
    fn formatted_output_reparses_identically() {
        for src in [
            "-p2*(x1 - x2 + x2^3/3)",
            "exp(-t) * w1 / (1 + x2^2)",
            "1e-7 + 0.1 * p1 - -x1",
            "3",
        ] {
            let g = parse_expression(src, &dims(), Scope::Dynamics).unwrap();
            let again = parse_expression(&g.format_output(0), &dims(), Scope::Dynamics).unwrap();
            assert_eq!(g, again, "{src}");
        }
    }
}
