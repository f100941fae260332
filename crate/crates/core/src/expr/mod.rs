//! Expression graphs for the model functions `f`, `x0` and `g`.
//!
//! One graph is evaluable under three semantics: real numbers, intervals
//! (natural interval extension) and McCormick relaxations. The semantics are
//! selected through the [`Arith`] trait.

mod model;
mod parser;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::mccormick::McCormick;

pub use model::{parse_model, Dims, Model};
pub use parser::{parse_expression, Scope, MAX_EXPONENT, MAX_NESTING};

/// Node operation. Child indices always point to earlier nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Const(f64),
    Time,
    Param(usize),
    Noise(usize),
    State(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Pow(usize, u32),
    Exp(usize),
}

impl Op {
    fn key(&self) -> (u8, u64, u64) {
        match *self {
            Op::Const(c) => (0, c.to_bits(), 0),
            Op::Time => (1, 0, 0),
            Op::Param(i) => (2, i as u64, 0),
            Op::Noise(i) => (3, i as u64, 0),
            Op::State(i) => (4, i as u64, 0),
            Op::Add(a, b) => (5, a as u64, b as u64),
            Op::Sub(a, b) => (6, a as u64, b as u64),
            Op::Mul(a, b) => (7, a as u64, b as u64),
            Op::Div(a, b) => (8, a as u64, b as u64),
            Op::Neg(a) => (9, a as u64, 0),
            Op::Pow(a, k) => (10, a as u64, k as u64),
            Op::Exp(a) => (11, a as u64, 0),
        }
    }

    fn children(&self) -> (Option<usize>, Option<usize>) {
        match *self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => (Some(a), Some(b)),
            Op::Neg(a) | Op::Pow(a, _) | Op::Exp(a) => (Some(a), None),
            _ => (None, None),
        }
    }
}

/// A topologically ordered DAG with one root per output component.
///
/// Identical subexpressions are shared; each node is evaluated once per
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprGraph {
    nodes: Vec<Op>,
    roots: Vec<usize>,
    names: Vec<String>,
}

/// Incremental graph construction with structural sharing.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Op>,
    index: HashMap<(u8, u64, u64), usize>,
    roots: Vec<usize>,
    names: Vec<String>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds (or reuses) a node. Panics if a child index is not yet defined.
    pub fn push(&mut self, op: Op) -> usize {
        let (a, b) = op.children();
        for c in [a, b].into_iter().flatten() {
            assert!(c < self.nodes.len(), "child {c} does not precede its parent");
        }
        if let Some(&i) = self.index.get(&op.key()) {
            return i;
        }
        self.nodes.push(op);
        let i = self.nodes.len() - 1;
        self.index.insert(op.key(), i);
        i
    }

    pub fn add_output(&mut self, name: impl Into<String>, root: usize) {
        assert!(root < self.nodes.len());
        self.roots.push(root);
        self.names.push(name.into());
    }

    pub fn finish(self) -> ExprGraph {
        ExprGraph {
            nodes: self.nodes,
            roots: self.roots,
            names: self.names,
        }
    }
}

/// Values of the independent variables for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a, T> {
    pub t: T,
    pub p: &'a [T],
    pub w: &'a [T],
    pub x: &'a [T],
}

/// Arithmetic semantics a graph can be evaluated under.
pub trait Arith: Copy {
    fn constant(c: f64) -> Self;
    fn add(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    fn mul(self, rhs: Self) -> Self;
    fn div(self, rhs: Self) -> Result<Self>;
    fn neg(self) -> Self;
    fn powi(self, k: u32) -> Self;
    fn exp(self) -> Self;
    fn finite(&self) -> bool;
}

impl Arith for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
    fn mul(self, rhs: Self) -> Self {
        self * rhs
    }
    fn div(self, rhs: Self) -> Result<Self> {
        if rhs == 0.0 {
            return Err(Error::EvalDomain("division by zero".into()));
        }
        Ok(self / rhs)
    }
    fn neg(self) -> Self {
        -self
    }
    fn powi(self, k: u32) -> Self {
        f64::powi(self, k as i32)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Arith for Interval {
    fn constant(c: f64) -> Self {
        Interval::point(c)
    }
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
    fn mul(self, rhs: Self) -> Self {
        self * rhs
    }
    fn div(self, rhs: Self) -> Result<Self> {
        Interval::div(&self, &rhs)
    }
    fn neg(self) -> Self {
        -self
    }
    fn powi(self, k: u32) -> Self {
        Interval::powi(&self, k)
    }
    fn exp(self) -> Self {
        Interval::exp(&self)
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl Arith for McCormick {
    fn constant(c: f64) -> Self {
        McCormick::constant(c)
    }
    fn add(self, rhs: Self) -> Self {
        self + rhs
    }
    fn sub(self, rhs: Self) -> Self {
        self - rhs
    }
    fn mul(self, rhs: Self) -> Self {
        McCormick::mul(&self, &rhs)
    }
    fn div(self, rhs: Self) -> Result<Self> {
        McCormick::div(&self, &rhs)
    }
    fn neg(self) -> Self {
        -self
    }
    fn powi(self, k: u32) -> Self {
        McCormick::powi(&self, k)
    }
    fn exp(self) -> Self {
        McCormick::exp(&self)
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

fn lookup<T: Copy>(vals: &[T], i: usize, what: &str) -> Result<T> {
    vals.get(i)
        .copied()
        .ok_or_else(|| Error::Dimension(format!("{what}{} referenced but only {} supplied", i + 1, vals.len())))
}

impl ExprGraph {
    pub fn nodes(&self) -> &[Op] {
        &self.nodes
    }

    pub fn num_outputs(&self) -> usize {
        self.roots.len()
    }

    pub fn output_names(&self) -> &[String] {
        &self.names
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    /// Evaluates every node into `scratch` (resized as needed). Outputs are
    /// then `scratch[root]` for each root; see [`ExprGraph::eval`].
    pub fn eval_into<T: Arith>(&self, env: &Env<'_, T>, scratch: &mut Vec<T>) -> Result<()> {
        scratch.clear();
        scratch.reserve(self.nodes.len());
        for op in &self.nodes {
            let v = match *op {
                Op::Const(c) => T::constant(c),
                Op::Time => env.t,
                Op::Param(i) => lookup(env.p, i, "p")?,
                Op::Noise(i) => lookup(env.w, i, "w")?,
                Op::State(i) => lookup(env.x, i, "x")?,
                Op::Add(a, b) => scratch[a].add(scratch[b]),
                Op::Sub(a, b) => scratch[a].sub(scratch[b]),
                Op::Mul(a, b) => scratch[a].mul(scratch[b]),
                Op::Div(a, b) => scratch[a].div(scratch[b])?,
                Op::Neg(a) => scratch[a].neg(),
                Op::Pow(a, k) => scratch[a].powi(k),
                Op::Exp(a) => scratch[a].exp(),
            };
            if !v.finite() {
                return Err(Error::EvalDomain(format!("non-finite value at node {}", scratch.len())));
            }
            scratch.push(v);
        }
        Ok(())
    }

    /// Value of output `k` after [`ExprGraph::eval_into`].
    #[inline]
    pub fn output<T: Copy>(&self, scratch: &[T], k: usize) -> T {
        scratch[self.roots[k]]
    }

    pub fn eval<T: Arith>(&self, env: &Env<'_, T>) -> Result<Vec<T>> {
        let mut scratch = Vec::with_capacity(self.nodes.len());
        self.eval_into(env, &mut scratch)?;
        Ok(self.roots.iter().map(|&r| scratch[r]).collect())
    }

    pub fn eval_real(&self, env: &Env<'_, f64>) -> Result<Vec<f64>> {
        self.eval(env)
    }

    pub fn eval_interval(&self, env: &Env<'_, Interval>) -> Result<Vec<Interval>> {
        self.eval(env)
    }

    pub fn eval_mccormick(&self, env: &Env<'_, McCormick>) -> Result<Vec<McCormick>> {
        self.eval(env)
    }

    /// Whether any node references the variable class selected by `pred`.
    pub fn uses(&self, pred: impl Fn(&Op) -> bool) -> bool {
        self.nodes.iter().any(pred)
    }

    /// Fully parenthesized infix form of output `k`; re-parses to the same
    /// node structure.
    pub fn format_output(&self, k: usize) -> String {
        let mut s = String::new();
        self.write_node(self.roots[k], &mut s);
        s
    }

    fn write_node(&self, i: usize, s: &mut String) {
        use std::fmt::Write;
        let bin = |s: &mut String, a: usize, b: usize, sym: &str| {
            s.push('(');
            self.write_node(a, s);
            s.push(' ');
            s.push_str(sym);
            s.push(' ');
            self.write_node(b, s);
            s.push(')');
        };
        match self.nodes[i] {
            Op::Const(c) => {
                if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
                    let _ = write!(s, "(-{:?})", -c);
                } else {
                    let _ = write!(s, "{c:?}");
                }
            }
            Op::Time => s.push('t'),
            Op::Param(j) => {
                let _ = write!(s, "p{}", j + 1);
            }
            Op::Noise(j) => {
                let _ = write!(s, "w{}", j + 1);
            }
            Op::State(j) => {
                let _ = write!(s, "x{}", j + 1);
            }
            Op::Add(a, b) => bin(s, a, b, "+"),
            Op::Sub(a, b) => bin(s, a, b, "-"),
            Op::Mul(a, b) => bin(s, a, b, "*"),
            Op::Div(a, b) => bin(s, a, b, "/"),
            Op::Neg(a) => {
                s.push_str("(-");
                self.write_node(a, s);
                s.push(')');
            }
            Op::Pow(a, k) => {
                self.write_node(a, s);
                let _ = write!(s, "^{k}");
            }
            Op::Exp(a) => {
                s.push_str("exp(");
                self.write_node(a, s);
                s.push(')');
            }
        }
    }
}

impl fmt::Display for ExprGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.roots.len() {
            writeln!(f, "{} = {}", self.names[k], self.format_output(k))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims { np: 2, nw: 2, nx: 2 }
    }

    fn circuit_f() -> ExprGraph {
        let mut b = GraphBuilder::new();
        parser::parse_into(&mut b, "f1", "p1*x2", &dims(), Scope::Dynamics, 1, 1).unwrap();
        parser::parse_into(&mut b, "f2", "-p2*(x1 - x2 + x2^3/3)", &dims(), Scope::Dynamics, 2, 1).unwrap();
        b.finish()
    }

    #[test]
    fn real_evaluation_of_circuit() {
        let f = circuit_f();
        let p = [0.2, 0.2];
        let x = [1.0, 1.0];
        let out = f
            .eval_real(&Env {
                t: 0.0,
                p: &p,
                w: &[],
                x: &x,
            })
            .unwrap();
        assert!((out[0] - 0.2).abs() < 1e-15);
        assert!((out[1] - (-0.2 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn constant_graph() {
        let g = parse_expression("3", &dims(), Scope::Cost).unwrap();
        let env = Env {
            t: 0.0,
            p: &[],
            w: &[],
            x: &[],
        };
        assert_eq!(g.eval_real(&env).unwrap(), vec![3.0]);
        let ienv = Env {
            t: Interval::point(0.0),
            p: &[],
            w: &[],
            x: &[],
        };
        assert_eq!(g.eval_interval(&ienv).unwrap(), vec![Interval::point(3.0)]);
    }

    #[test]
    fn division_by_literal_zero() {
        let g = parse_expression("x1/0", &dims(), Scope::Cost).unwrap();
        let x = [1.0, 1.0];
        let r = g.eval_real(&Env {
            t: 0.0,
            p: &[0.0, 0.0],
            w: &[0.0, 0.0],
            x: &x,
        });
        assert!(matches!(r, Err(Error::EvalDomain(_))));
    }

    #[test]
    fn interval_evaluation() {
        let f = circuit_f();
        let p = [Interval::new(0.1, 0.3), Interval::new(0.1, 0.3)];
        let x = [Interval::new(0.7, 1.3), Interval::new(0.7, 1.3)];
        let out = f
            .eval_interval(&Env {
                t: Interval::point(0.0),
                p: &p,
                w: &[],
                x: &x,
            })
            .unwrap();
        assert!((out[0].lo() - 0.07).abs() < 1e-15 && (out[0].hi() - 0.39).abs() < 1e-15);

        let g = parse_expression("w1", &dims(), Scope::Initial).unwrap();
        let w = [Interval::new(0.7, 1.3), Interval::new(0.7, 1.3)];
        let out = g
            .eval_interval(&Env {
                t: Interval::point(0.0),
                p: &p,
                w: &w,
                x: &[],
            })
            .unwrap();
        assert_eq!(out[0], Interval::new(0.7, 1.3));
    }

    fn mc(v: f64, lo: f64, hi: f64) -> McCormick {
        McCormick::variable(v, Interval::new(lo, hi)).unwrap()
    }

    #[test]
    fn mccormick_linear_exactness() {
        let g = parse_expression("p1 + w1", &dims(), Scope::Cost).unwrap();
        let p = [mc(0.15, 0.1, 0.3), mc(0.2, 0.1, 0.3)];
        let w = [mc(0.9, 0.7, 1.3), mc(1.0, 0.7, 1.3)];
        let out = g
            .eval_mccormick(&Env {
                t: McCormick::constant(0.0),
                p: &p,
                w: &w,
                x: &[],
            })
            .unwrap();
        assert_eq!(out[0].cv(), 0.15 + 0.9);
        assert_eq!(out[0].cc(), 0.15 + 0.9);
    }

    #[test]
    fn mccormick_bilinear_strict_gap_mid_box() {
        let g = parse_expression("p1*x2", &dims(), Scope::Dynamics).unwrap();
        let p = [mc(0.2, 0.1, 0.3), mc(0.2, 0.1, 0.3)];
        let x = [mc(1.0, 0.7, 1.3), mc(1.0, 0.7, 1.3)];
        let out = g
            .eval_mccormick(&Env {
                t: McCormick::constant(0.0),
                p: &p,
                w: &[],
                x: &x,
            })
            .unwrap();
        // brute-force envelope planes
        let under = (0.1_f64 * 1.0 + 0.7 * 0.2 - 0.1 * 0.7).max(0.3 * 1.0 + 1.3 * 0.2 - 0.3 * 1.3);
        let over = (0.3_f64 * 1.0 + 0.7 * 0.2 - 0.3 * 0.7).min(0.1 * 1.0 + 1.3 * 0.2 - 0.1 * 1.3);
        assert!(out[0].cv() < 0.2 && 0.2 < out[0].cc());
        assert!((out[0].cv() - under).abs() < 1e-15 && (out[0].cc() - over).abs() < 1e-15);
    }

    #[test]
    fn mccormick_degenerate_boxes() {
        let f = circuit_f();
        let p = [mc(0.2, 0.2, 0.2), mc(0.25, 0.25, 0.25)];
        let x = [mc(0.9, 0.9, 0.9), mc(1.1, 1.1, 1.1)];
        let out = f
            .eval_mccormick(&Env {
                t: McCormick::constant(0.0),
                p: &p,
                w: &[],
                x: &x,
            })
            .unwrap();
        let real = f
            .eval_real(&Env {
                t: 0.0,
                p: &[0.2, 0.25],
                w: &[],
                x: &[0.9, 1.1],
            })
            .unwrap();
        for k in 0..2 {
            assert!((out[k].cv() - real[k]).abs() < 1e-14);
            assert!((out[k].cc() - real[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn shared_subexpressions() {
        let f = circuit_f();
        // x2 appears three times but is stored once
        let count = f.nodes().iter().filter(|op| **op == Op::State(1)).count();
        assert_eq!(count, 1);
    }

    #[test]
    fn missing_variable_is_dimension_error() {
        let g = parse_expression("x2", &dims(), Scope::Cost).unwrap();
        let r = g.eval_real(&Env {
            t: 0.0,
            p: &[],
            w: &[],
            x: &[1.0],
        });
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
