//! State bounds and state relaxations of the model ODE.
//!
//! Bounds come from naive interval differential inequalities: the lower
//! bound of state `k` evolves with the lower endpoint of the interval
//! right-hand side evaluated with `x_k` pinned to its own lower bound, and
//! symmetrically for the upper bound. Relaxations solve the auxiliary system
//! whose right-hand side is the McCormick relaxation of `f`, with the
//! equation's own state flattened at its convex (resp. concave) value.

use crate::error::{Error, Result};
use crate::expr::{Env, Model};
use crate::interval::{Interval, IntervalBox};
use crate::mccormick::McCormick;
use crate::odeint::{integrate, IntegratorConfig, Method, Trajectory};

/// Knobs shared by the bounding and relaxation solves.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RelaxConfig {
    /// Used for relaxation and plain simulation solves.
    pub integrator: IntegratorConfig,
    /// Output mesh of the bound solve (adaptive method). Fixed-step bounds
    /// use the step grid.
    pub bound_mesh: usize,
    /// Any bound width above this aborts with `BoundBlowup`.
    pub blowup_cap: f64,
    /// Relative outward inflation applied to stored bounds.
    pub inflation: f64,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default().with_mesh(2),
            bound_mesh: 2001,
            blowup_cap: 1e6,
            inflation: 0.0,
        }
    }
}

impl RelaxConfig {
    pub fn with_integrator(mut self, integrator: IntegratorConfig) -> Self {
        self.integrator = integrator;
        self
    }

    fn bound_integrator(&self) -> IntegratorConfig {
        match self.integrator.method {
            Method::Rk4Fixed { .. } => self.integrator,
            Method::Rk45Adaptive { .. } => self.integrator.with_mesh(self.bound_mesh),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        self.bound_integrator().validate()?;
        if !(self.blowup_cap > 0.0) {
            return Err(Error::InvalidInput("blow-up cap must be positive".into()));
        }
        if !(self.inflation >= 0.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidInput("inflation must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// Interval enclosure `X(t)` of all solutions over a subdomain.
#[derive(Debug, Clone)]
pub struct StateBoundTrajectory {
    nx: usize,
    inflation: f64,
    /// Lower endpoints in `0..nx`, upper in `nx..2nx`.
    traj: Trajectory,
    pbox: IntervalBox,
    wbox: IntervalBox,
}

impl StateBoundTrajectory {
    pub fn dim(&self) -> usize {
        self.nx
    }

    pub fn len(&self) -> usize {
        self.traj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        self.traj.times()
    }

    pub fn pbox(&self) -> &IntervalBox {
        &self.pbox
    }

    pub fn wbox(&self) -> &IntervalBox {
        &self.wbox
    }

    fn to_intervals(&self, y: &[f64], out: &mut [Interval]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = Interval::hull_of(y[k], y[self.nx + k]).inflate(self.inflation);
        }
    }

    /// Bounds on mesh point `i`.
    pub fn at_index(&self, i: usize) -> Vec<Interval> {
        let mut out = vec![Interval::point(0.0); self.nx];
        self.to_intervals(self.traj.state(i), &mut out);
        out
    }

    /// Bounds at time `t`, linearly interpolated. `buf` needs `2 * dim()` slots.
    pub fn at_time(&self, t: f64, buf: &mut [f64], out: &mut [Interval]) {
        self.traj.interpolate(t, buf);
        self.to_intervals(buf, out);
    }

    pub fn terminal(&self) -> Vec<Interval> {
        self.at_index(self.len() - 1)
    }
}

fn check_subdomain(model: &Model, pbox: &IntervalBox, wbox: &IntervalBox) -> Result<()> {
    if pbox.dim() != model.dims.np || wbox.dim() != model.dims.nw {
        return Err(Error::Dimension(format!(
            "subdomain has dimensions ({}, {}), model expects ({}, {})",
            pbox.dim(),
            wbox.dim(),
            model.dims.np,
            model.dims.nw
        )));
    }
    if !pbox.is_subset_of(&model.pbox) {
        return Err(Error::InvalidInput(format!(
            "parameter box {pbox} is not inside {}",
            model.pbox
        )));
    }
    if !wbox.is_subset_of(&model.wbox) {
        return Err(Error::InvalidInput(format!(
            "uncertainty box {wbox} is not inside {}",
            model.wbox
        )));
    }
    Ok(())
}

/// Solves the bound ODEs on `pbox x wbox`.
pub fn compute_state_bounds(
    model: &Model,
    pbox: &IntervalBox,
    wbox: &IntervalBox,
    cfg: &RelaxConfig,
) -> Result<StateBoundTrajectory> {
    cfg.validate()?;
    check_subdomain(model, pbox, wbox)?;
    let nx = model.dims.nx;
    let p = pbox.components();
    let w = wbox.components();

    let x0 = model.x0.eval_interval(&Env {
        t: Interval::point(model.t0),
        p,
        w,
        x: &[],
    })?;
    let mut y0 = Vec::with_capacity(2 * nx);
    y0.extend(x0.iter().map(|iv| iv.lo()));
    y0.extend(x0.iter().map(|iv| iv.hi()));

    let cap = cfg.blowup_cap;
    let mut xs = vec![Interval::point(0.0); nx];
    let mut scratch = Vec::new();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        for k in 0..nx {
            let width = y[nx + k] - y[k];
            if width > cap || width.is_nan() {
                return Err(Error::BoundBlowup { t, width, cap });
            }
            xs[k] = Interval::hull_of(y[k], y[nx + k]);
        }
        for k in 0..nx {
            let own = xs[k];
            for (end, slot) in [(own.lo(), k), (own.hi(), nx + k)] {
                xs[k] = Interval::point(end);
                model.f.eval_into(
                    &Env {
                        t: Interval::point(t),
                        p,
                        w,
                        x: &xs,
                    },
                    &mut scratch,
                )?;
                let fk = model.f.output(&scratch, k);
                dy[slot] = if slot == k { fk.lo() } else { fk.hi() };
            }
            xs[k] = own;
        }
        Ok(())
    };
    let traj = integrate(rhs, &y0, (model.t0, model.tf), &cfg.bound_integrator())?;

    for i in 0..traj.len() {
        let y = traj.state(i);
        for k in 0..nx {
            let width = y[nx + k] - y[k];
            if !(width <= cap) {
                return Err(Error::BoundBlowup {
                    t: traj.time(i),
                    width,
                    cap,
                });
            }
        }
    }
    Ok(StateBoundTrajectory {
        nx,
        inflation: cfg.inflation,
        traj,
        pbox: pbox.clone(),
        wbox: wbox.clone(),
    })
}

/// Convex/concave state relaxations along one `(p, w)` evaluation point.
#[derive(Debug, Clone)]
pub struct RelaxationTrajectory {
    nx: usize,
    /// Convex values in `0..nx`, concave in `nx..2nx`.
    traj: Trajectory,
    p: Vec<f64>,
    w: Vec<f64>,
    pbox: IntervalBox,
    wbox: IntervalBox,
    terminal_bounds: Vec<Interval>,
}

impl RelaxationTrajectory {
    pub fn len(&self) -> usize {
        self.traj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traj.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        self.traj.times()
    }

    pub fn xcv(&self, i: usize) -> &[f64] {
        &self.traj.state(i)[..self.nx]
    }

    pub fn xcc(&self, i: usize) -> &[f64] {
        &self.traj.state(i)[self.nx..]
    }

    pub fn terminal_cv(&self) -> &[f64] {
        self.xcv(self.len() - 1)
    }

    pub fn terminal_cc(&self) -> &[f64] {
        self.xcc(self.len() - 1)
    }

    pub fn point(&self) -> (&[f64], &[f64]) {
        (&self.p, &self.w)
    }

    pub fn subdomain(&self) -> (&IntervalBox, &IntervalBox) {
        (&self.pbox, &self.wbox)
    }

    pub fn terminal_bounds(&self) -> &[Interval] {
        &self.terminal_bounds
    }
}

fn identity_relaxations(x: &[f64], bx: &IntervalBox, what: &str) -> Result<Vec<McCormick>> {
    if x.len() != bx.dim() {
        return Err(Error::Dimension(format!(
            "{what} has length {}, expected {}",
            x.len(),
            bx.dim()
        )));
    }
    x.iter()
        .zip(bx.iter())
        .map(|(&v, &iv)| McCormick::variable(v, iv))
        .collect()
}

/// Solves the auxiliary relaxation system at `(p, w)` using `bounds`, which
/// must have been computed on the same subdomain.
pub fn solve_relaxation_ode(
    model: &Model,
    p: &[f64],
    w: &[f64],
    bounds: &StateBoundTrajectory,
    cfg: &RelaxConfig,
) -> Result<RelaxationTrajectory> {
    cfg.validate()?;
    let nx = model.dims.nx;
    if bounds.dim() != nx {
        return Err(Error::Dimension(format!(
            "state bounds have {} components, model has {nx}",
            bounds.dim()
        )));
    }
    let pm = identity_relaxations(p, &bounds.pbox, "p")?;
    let wm = identity_relaxations(w, &bounds.wbox, "w")?;

    let x0 = model.x0.eval_mccormick(&Env {
        t: McCormick::constant(model.t0),
        p: &pm,
        w: &wm,
        x: &[],
    })?;
    let mut y0 = Vec::with_capacity(2 * nx);
    y0.extend(x0.iter().map(|m| m.cv()));
    y0.extend(x0.iter().map(|m| m.cc()));

    let mut buf = vec![0.0; 2 * nx];
    let mut xb = vec![Interval::point(0.0); nx];
    let mut xs = vec![McCormick::constant(0.0); nx];
    let mut scratch = Vec::new();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        bounds.at_time(t, &mut buf, &mut xb);
        for m in 0..nx {
            xs[m] = McCormick::from_state(y[m], y[nx + m], xb[m])?;
        }
        for k in 0..nx {
            let own = xs[k];
            for (v, slot) in [(y[k], k), (y[nx + k], nx + k)] {
                xs[k] = McCormick::from_state(v, v, xb[k])?;
                model.f.eval_into(
                    &Env {
                        t: McCormick::constant(t),
                        p: &pm,
                        w: &wm,
                        x: &xs,
                    },
                    &mut scratch,
                )?;
                let fk = model.f.output(&scratch, k);
                dy[slot] = if slot == k { fk.cv() } else { fk.cc() };
            }
            xs[k] = own;
        }
        Ok(())
    };
    let traj = integrate(rhs, &y0, (model.t0, model.tf), &cfg.integrator)?;
    Ok(RelaxationTrajectory {
        nx,
        traj,
        p: p.to_vec(),
        w: w.to_vec(),
        pbox: bounds.pbox.clone(),
        wbox: bounds.wbox.clone(),
        terminal_bounds: bounds.terminal(),
    })
}

/// McCormick evaluation of `g` on the terminal state relaxations.
pub fn eval_terminal_relaxation(model: &Model, traj: &RelaxationTrajectory) -> Result<(f64, f64)> {
    let pm = identity_relaxations(&traj.p, &traj.pbox, "p")?;
    let wm = identity_relaxations(&traj.w, &traj.wbox, "w")?;
    let xs = traj
        .terminal_cv()
        .iter()
        .zip(traj.terminal_cc())
        .zip(&traj.terminal_bounds)
        .map(|((&cv, &cc), &b)| McCormick::from_state(cv, cc, b))
        .collect::<Result<Vec<_>>>()?;
    let out = model.g.eval_mccormick(&Env {
        t: McCormick::constant(model.tf),
        p: &pm,
        w: &wm,
        x: &xs,
    })?;
    Ok((out[0].cv(), out[0].cc()))
}

/// Relaxation solve followed by terminal evaluation.
pub fn terminal_relaxation(
    model: &Model,
    p: &[f64],
    w: &[f64],
    bounds: &StateBoundTrajectory,
    cfg: &RelaxConfig,
) -> Result<(f64, f64)> {
    let traj = solve_relaxation_ode(model, p, w, bounds, cfg)?;
    eval_terminal_relaxation(model, &traj)
}

/// Solves the original ODE at a single `(p, w)`.
pub fn simulate(model: &Model, p: &[f64], w: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    if p.len() != model.dims.np || w.len() != model.dims.nw {
        return Err(Error::Dimension(format!(
            "point has dimensions ({}, {}), model expects ({}, {})",
            p.len(),
            w.len(),
            model.dims.np,
            model.dims.nw
        )));
    }
    let x0 = model.x0.eval_real(&Env {
        t: model.t0,
        p,
        w,
        x: &[],
    })?;
    let mut scratch = Vec::new();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        model.f.eval_into(&Env { t, p, w, x: y }, &mut scratch)?;
        for (k, d) in dy.iter_mut().enumerate() {
            *d = model.f.output(&scratch, k);
        }
        Ok(())
    };
    integrate(rhs, &x0, (model.t0, model.tf), cfg)
}

/// `g(p, w, x(tf, p, w))` from a plain simulation.
pub fn terminal_value(model: &Model, p: &[f64], w: &[f64], cfg: &IntegratorConfig) -> Result<f64> {
    let traj = simulate(model, p, w, &cfg.with_mesh(2))?;
    let out = model.g.eval_real(&Env {
        t: model.tf,
        p,
        w,
        x: traj.last_state(),
    })?;
    Ok(out[0])
}
