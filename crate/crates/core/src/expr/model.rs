//! The problem model and its plain-text file format.
//!
//! ```text
//! # comments run to end of line
//! [dims]
//! np = 2
//! nw = 2
//! nx = 2
//! [horizon]
//! t0 = 0
//! tf = 5
//! [pbox]
//! 0.1, 0.3
//! 0.1, 0.3
//! [wbox]
//! 0.7, 1.3
//! 0.7, 1.3
//! [dist]
//! truncnormal 1 0.1 0.7 1.3
//! uniform 0.7 1.3
//! [f]
//! f1 = p1*x2
//! f2 = -p2*(x1 - x2 + x2^3/3)
//! [x0]
//! x0_1 = w1
//! x0_2 = w2
//! [g]
//! g = x1
//! ```
//!
//! Outputs of `[f]` and `[x0]` are taken in order of appearance.

use std::fmt::Write as _;

use super::parser::{parse_into, Scope};
use super::{ExprGraph, GraphBuilder, Op};
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalBox};
use crate::stochastics::{DistributionSpec, Marginal};

const CIRCUIT_MODEL: &str = include_str!("../../models/circuit.model");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub np: usize,
    pub nw: usize,
    pub nx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub dims: Dims,
    /// Right-hand side, `nx` outputs over `(t, p, w, x)`.
    pub f: ExprGraph,
    /// Initial condition, `nx` outputs over `(p, w)`.
    pub x0: ExprGraph,
    /// Terminal cost, one output over `(p, w, x)`.
    pub g: ExprGraph,
    pub t0: f64,
    pub tf: f64,
    pub pbox: IntervalBox,
    pub wbox: IntervalBox,
    pub dist: DistributionSpec,
}

impl Model {
    /// Checks every cross-field invariant.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if d.np == 0 || d.nw == 0 || d.nx == 0 {
            return Err(Error::Dimension("np, nw and nx must all be positive".into()));
        }
        if !(self.t0.is_finite() && self.tf.is_finite() && self.t0 < self.tf) {
            return Err(Error::InvalidInput(format!(
                "horizon must satisfy t0 < tf, got [{}, {}]",
                self.t0, self.tf
            )));
        }
        let check = |what: &str, got: usize, want: usize| {
            if got != want {
                Err(Error::Dimension(format!("{what} has {got} entries, expected {want}")))
            } else {
                Ok(())
            }
        };
        check("pbox", self.pbox.dim(), d.np)?;
        check("wbox", self.wbox.dim(), d.nw)?;
        check("dist", self.dist.dim(), d.nw)?;
        check("f", self.f.num_outputs(), d.nx)?;
        check("x0", self.x0.num_outputs(), d.nx)?;
        check("g", self.g.num_outputs(), 1)?;
        if self.dist.support() != self.wbox {
            return Err(Error::InvalidInput(format!(
                "wbox {} differs from the distribution support {}",
                self.wbox,
                self.dist.support()
            )));
        }
        let in_dims = |g: &ExprGraph, time: bool, state: bool| {
            g.nodes().iter().all(|op| match *op {
                Op::Time => time,
                Op::Param(i) => i < d.np,
                Op::Noise(i) => i < d.nw,
                Op::State(i) => state && i < d.nx,
                _ => true,
            })
        };
        if !in_dims(&self.f, true, true) || !in_dims(&self.x0, false, false) || !in_dims(&self.g, false, true) {
            return Err(Error::Dimension(
                "expression references variables outside its declared arguments".into(),
            ));
        }
        Ok(())
    }

    /// The negative-resistance circuit case study.
    pub fn circuit() -> Model {
        parse_model(CIRCUIT_MODEL).expect("built-in circuit model parses")
    }

    /// Same model with a different final time.
    pub fn with_final_time(mut self, tf: f64) -> Result<Model> {
        self.tf = tf;
        self.validate()?;
        Ok(self)
    }

    /// Canonical model-file text; parses back to an equal model.
    pub fn to_model_text(&self) -> String {
        let mut s = String::new();
        let d = self.dims;
        let _ = writeln!(s, "[dims]\nnp = {}\nnw = {}\nnx = {}", d.np, d.nw, d.nx);
        let _ = writeln!(s, "[horizon]\nt0 = {:?}\ntf = {:?}", self.t0, self.tf);
        s.push_str("[pbox]\n");
        for iv in self.pbox.iter() {
            let _ = writeln!(s, "{:?}, {:?}", iv.lo(), iv.hi());
        }
        s.push_str("[wbox]\n");
        for iv in self.wbox.iter() {
            let _ = writeln!(s, "{:?}, {:?}", iv.lo(), iv.hi());
        }
        s.push_str("[dist]\n");
        for m in self.dist.marginals() {
            match *m {
                Marginal::Uniform { a, b } => {
                    let _ = writeln!(s, "uniform {a:?} {b:?}");
                }
                Marginal::TruncatedNormal { mu, sigma, a, b } => {
                    let _ = writeln!(s, "truncnormal {mu:?} {sigma:?} {a:?} {b:?}");
                }
            }
        }
        for (section, g) in [("f", &self.f), ("x0", &self.x0), ("g", &self.g)] {
            let _ = writeln!(s, "[{section}]");
            s.push_str(&g.to_string());
        }
        s
    }
}

struct Entry<'a> {
    line: usize,
    /// 1-based column of `text[0]` in the source line.
    col: usize,
    text: &'a str,
}

#[derive(Default)]
struct Sections<'a> {
    dims: Option<Vec<Entry<'a>>>,
    horizon: Option<Vec<Entry<'a>>>,
    pbox: Option<Vec<Entry<'a>>>,
    wbox: Option<Vec<Entry<'a>>>,
    dist: Option<Vec<Entry<'a>>>,
    f: Option<Vec<Entry<'a>>>,
    x0: Option<Vec<Entry<'a>>>,
    g: Option<Vec<Entry<'a>>>,
}

fn number(e: &Entry<'_>, tok: &str, offset: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(e.line, e.col + offset, format!("expected a number, got '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(
            e.line,
            e.col + offset,
            format!("number '{tok}' is not finite"),
        ));
    }
    Ok(v)
}

/// Splits `key = value`; returns (key, value, value offset within text).
fn key_value<'a>(e: &Entry<'a>) -> Result<(&'a str, &'a str, usize)> {
    let eq = e
        .text
        .find('=')
        .ok_or_else(|| Error::parse(e.line, e.col, "expected 'name = value'"))?;
    let key = e.text[..eq].trim();
    if key.is_empty() {
        return Err(Error::parse(e.line, e.col, "missing name before '='"));
    }
    Ok((key, &e.text[eq + 1..], eq + 1))
}

/// Whitespace-separated tokens with their byte offsets.
fn tokens(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push((s, &text[s..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out
}

fn required<'a, 'b>(section: &'b Option<Vec<Entry<'a>>>, name: &str) -> Result<&'b Vec<Entry<'a>>> {
    section
        .as_ref()
        .ok_or_else(|| Error::parse(0, 0, format!("missing section [{name}]")))
}

fn parse_dims(entries: &[Entry<'_>]) -> Result<Dims> {
    let (mut np, mut nw, mut nx) = (None, None, None);
    for e in entries {
        let (key, value, off) = key_value(e)?;
        let v: usize = value
            .trim()
            .parse()
            .map_err(|_| Error::parse(e.line, e.col + off, format!("expected a positive integer for {key}")))?;
        if v == 0 {
            return Err(Error::parse(e.line, e.col + off, format!("{key} must be positive")));
        }
        let slot = match key {
            "np" => &mut np,
            "nw" => &mut nw,
            "nx" => &mut nx,
            _ => return Err(Error::parse(e.line, e.col, format!("unknown dimension '{key}'"))),
        };
        if slot.replace(v).is_some() {
            return Err(Error::parse(e.line, e.col, format!("duplicate dimension '{key}'")));
        }
    }
    match (np, nw, nx) {
        (Some(np), Some(nw), Some(nx)) => Ok(Dims { np, nw, nx }),
        _ => Err(Error::parse(0, 0, "[dims] must define np, nw and nx")),
    }
}

fn parse_horizon(entries: &[Entry<'_>]) -> Result<(f64, f64)> {
    let (mut t0, mut tf) = (None, None);
    for e in entries {
        let (key, value, off) = key_value(e)?;
        let v = number(e, value.trim(), off)?;
        let slot = match key {
            "t0" => &mut t0,
            "tf" => &mut tf,
            _ => return Err(Error::parse(e.line, e.col, format!("unknown horizon key '{key}'"))),
        };
        if slot.replace(v).is_some() {
            return Err(Error::parse(e.line, e.col, format!("duplicate horizon key '{key}'")));
        }
    }
    match (t0, tf) {
        (Some(t0), Some(tf)) => Ok((t0, tf)),
        _ => Err(Error::parse(0, 0, "[horizon] must define t0 and tf")),
    }
}

fn parse_box(entries: &[Entry<'_>], want: usize, name: &str) -> Result<IntervalBox> {
    if entries.len() != want {
        return Err(Error::Dimension(format!(
            "[{name}] has {} rows, expected {want}",
            entries.len()
        )));
    }
    let mut comps = Vec::with_capacity(want);
    for e in entries {
        let comma = e
            .text
            .find(',')
            .ok_or_else(|| Error::parse(e.line, e.col, "expected 'lo, hi'"))?;
        let lo = number(e, e.text[..comma].trim(), 0)?;
        let hi = number(e, e.text[comma + 1..].trim(), comma + 1)?;
        let iv = Interval::try_new(lo, hi)
            .map_err(|_| Error::parse(e.line, e.col, format!("invalid interval [{lo}, {hi}]")))?;
        comps.push(iv);
    }
    IntervalBox::new(comps)
}

fn parse_dist(entries: &[Entry<'_>], want: usize) -> Result<DistributionSpec> {
    if entries.len() != want {
        return Err(Error::Dimension(format!(
            "[dist] has {} rows, expected {want}",
            entries.len()
        )));
    }
    let mut marginals = Vec::with_capacity(want);
    for e in entries {
        let toks = tokens(e.text);
        let nums = |n: usize| -> Result<Vec<f64>> {
            if toks.len() != n + 1 {
                return Err(Error::parse(
                    e.line,
                    e.col,
                    format!("'{}' takes {n} parameters", toks[0].1),
                ));
            }
            toks[1..].iter().map(|&(off, t)| number(e, t, off)).collect()
        };
        let m = match toks.first().map(|t| t.1) {
            Some("uniform") => {
                let v = nums(2)?;
                Marginal::uniform(v[0], v[1])
            }
            Some("truncnormal") => {
                let v = nums(4)?;
                Marginal::truncated_normal(v[0], v[1], v[2], v[3])
            }
            _ => {
                return Err(Error::parse(
                    e.line,
                    e.col,
                    "expected 'uniform a b' or 'truncnormal mu sigma a b'",
                ))
            }
        };
        marginals.push(m.map_err(|err| Error::parse(e.line, e.col, err.to_string()))?);
    }
    DistributionSpec::new(marginals)
}

fn parse_graph(entries: &[Entry<'_>], dims: &Dims, scope: Scope) -> Result<ExprGraph> {
    let mut b = GraphBuilder::new();
    for e in entries {
        let (name, expr, off) = key_value(e)?;
        parse_into(&mut b, name, expr, dims, scope, e.line, e.col + off)?;
    }
    Ok(b.finish())
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<Model> {
    let mut sections = Sections::default();
    let mut current: Option<&mut Option<Vec<Entry<'_>>>> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim_start();
        let col = content.len() - trimmed.len() + 1;
        let trimmed = trimmed.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(line, col, "unterminated section header"))?
                .trim();
            let slot = match name {
                "dims" => &mut sections.dims,
                "horizon" => &mut sections.horizon,
                "pbox" => &mut sections.pbox,
                "wbox" => &mut sections.wbox,
                "dist" => &mut sections.dist,
                "f" => &mut sections.f,
                "x0" => &mut sections.x0,
                "g" => &mut sections.g,
                _ => return Err(Error::parse(line, col, format!("unknown section [{name}]"))),
            };
            if slot.is_some() {
                return Err(Error::parse(line, col, format!("duplicate section [{name}]")));
            }
            *slot = Some(Vec::new());
            current = Some(slot);
            continue;
        }
        match current.as_mut() {
            Some(slot) => slot.as_mut().expect("section opened").push(Entry {
                line,
                col,
                text: trimmed,
            }),
            None => return Err(Error::parse(line, col, "entry outside of any section")),
        }
    }

    let dims = parse_dims(required(&sections.dims, "dims")?)?;
    let (t0, tf) = parse_horizon(required(&sections.horizon, "horizon")?)?;
    let pbox = parse_box(required(&sections.pbox, "pbox")?, dims.np, "pbox")?;
    let wbox = parse_box(required(&sections.wbox, "wbox")?, dims.nw, "wbox")?;
    let dist = parse_dist(required(&sections.dist, "dist")?, dims.nw)?;
    let f = parse_graph(required(&sections.f, "f")?, &dims, Scope::Dynamics)?;
    let x0 = parse_graph(required(&sections.x0, "x0")?, &dims, Scope::Initial)?;
    let g = parse_graph(required(&sections.g, "g")?, &dims, Scope::Cost)?;

    let model = Model {
        dims,
        f,
        x0,
        g,
        t0,
        tf,
        pbox,
        wbox,
        dist,
    };
    model.validate()?;
    Ok(model)
}
