//! Explicit Runge-Kutta integration on a fixed output mesh.
//!
//! Two methods are provided: classical fixed-step RK4 and adaptive
//! Dormand-Prince 5(4) with per-step local error control. The adaptive method
//! reports the solution on a uniform output mesh; steps are clipped so that
//! every mesh time is hit exactly.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// Classical RK4 with `steps` equal steps; the mesh is the step grid.
    Rk4Fixed { steps: usize },
    /// Dormand-Prince 5(4). `min_step`/`max_step` are absolute step sizes;
    /// `None` means `1e-12 * span` and `span` respectively.
    Rk45Adaptive {
        rtol: f64,
        atol: f64,
        min_step: Option<f64>,
        max_step: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Number of uniformly spaced output times (adaptive method only), >= 2.
    pub mesh_points: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive {
                rtol: 1e-8,
                atol: 1e-10,
                min_step: None,
                max_step: None,
            },
            mesh_points: 101,
        }
    }
}

impl IntegratorConfig {
    pub fn rk4(steps: usize) -> Self {
        Self {
            method: Method::Rk4Fixed { steps },
            mesh_points: 2,
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self {
            method: Method::Rk45Adaptive {
                rtol,
                atol,
                min_step: None,
                max_step: None,
            },
            ..Self::default()
        }
    }

    pub fn with_mesh(mut self, mesh_points: usize) -> Self {
        self.mesh_points = mesh_points;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::Rk4Fixed { steps: 0 } => return Err(Error::InvalidInput("step count must be at least 1".into())),
            Method::Rk45Adaptive {
                rtol,
                atol,
                min_step,
                max_step,
            } => {
                let pos = |v: f64| v.is_finite() && v > 0.0;
                if !pos(rtol) || !pos(atol) {
                    return Err(Error::InvalidInput("tolerances must be positive".into()));
                }
                if min_step.is_some_and(|h| !pos(h)) || max_step.is_some_and(|h| !pos(h)) {
                    return Err(Error::InvalidInput("step limits must be positive".into()));
                }
            }
            _ => {}
        }
        if self.mesh_points < 2 {
            return Err(Error::InvalidInput("output mesh needs at least 2 points".into()));
        }
        Ok(())
    }
}

/// Solution values on a mesh of times. States are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
}

impl Trajectory {
    fn new(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            times: Vec::with_capacity(capacity),
            states: Vec::with_capacity(capacity * dim),
        }
    }

    fn push(&mut self, t: f64, y: &[f64]) {
        self.times.push(t);
        self.states.extend_from_slice(y);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// Linear interpolation between mesh points; clamps outside the span.
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let n = self.times.len();
        let j = self.times.partition_point(|&s| s <= t);
        if j == 0 {
            out.copy_from_slice(self.state(0));
            return;
        }
        if j >= n {
            out.copy_from_slice(self.state(n - 1));
            return;
        }
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let s = (t - t0) / (t1 - t0);
        let (a, b) = (self.state(j - 1), self.state(j));
        for ((o, &ya), &yb) in out.iter_mut().zip(a).zip(b) {
            *o = ya + s * (yb - ya);
        }
    }
}

fn check_span(span: (f64, f64)) -> Result<()> {
    if !(span.0.is_finite() && span.1.is_finite() && span.0 < span.1) {
        return Err(Error::InvalidInput(format!(
            "integration span must satisfy t0 < tf, got [{}, {}]",
            span.0, span.1
        )));
    }
    Ok(())
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Integrates `y' = rhs(t, y)` from `y0` over `span`.
///
/// `rhs(t, y, dy)` writes the derivative into `dy`. The returned mesh starts
/// at `span.0` and ends at `span.1` exactly.
pub fn integrate<F>(mut rhs: F, y0: &[f64], span: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    cfg.validate()?;
    check_span(span)?;
    if !all_finite(y0) {
        return Err(Error::NonFiniteState { t: span.0 });
    }
    match cfg.method {
        Method::Rk4Fixed { steps } => rk4(&mut rhs, y0, span, steps),
        Method::Rk45Adaptive {
            rtol,
            atol,
            min_step,
            max_step,
        } => {
            let width = span.1 - span.0;
            let tol = Tolerances {
                rtol,
                atol,
                min_step: min_step.unwrap_or(1e-12 * width),
                max_step: max_step.unwrap_or(width),
            };
            dopri5(&mut rhs, y0, span, cfg.mesh_points, &tol)
        }
    }
}

fn rk4<F>(rhs: &mut F, y0: &[f64], span: (f64, f64), steps: usize) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let h = (span.1 - span.0) / steps as f64;
    let mut traj = Trajectory::new(n, steps + 1);
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 4];
    let mut tmp = vec![0.0; n];
    traj.push(span.0, &y);
    for i in 0..steps {
        let t = span.0 + h * i as f64;
        rhs(t, &y, &mut k[0])?;
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k[0][j];
        }
        rhs(t + 0.5 * h, &tmp, &mut k[1])?;
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k[1][j];
        }
        rhs(t + 0.5 * h, &tmp, &mut k[2])?;
        for j in 0..n {
            tmp[j] = y[j] + h * k[2][j];
        }
        rhs(t + h, &tmp, &mut k[3])?;
        for j in 0..n {
            y[j] += h / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
        }
        let t_next = if i + 1 == steps {
            span.1
        } else {
            span.0 + h * (i + 1) as f64
        };
        if !all_finite(&y) {
            return Err(Error::NonFiniteState { t: t_next });
        }
        traj.push(t_next, &y);
    }
    Ok(traj)
}

struct Tolerances {
    rtol: f64,
    atol: f64,
    min_step: f64,
    max_step: f64,
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn scaled_norm(v: &[f64], y: &[f64], y_new: &[f64], tol: &Tolerances) -> f64 {
    let n = v.len().max(1) as f64;
    let s: f64 = v
        .iter()
        .zip(y)
        .zip(y_new)
        .map(|((&e, &a), &b)| {
            let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn initial_step<F>(rhs: &mut F, t0: f64, y0: &[f64], f0: &[f64], tol: &Tolerances) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let d0 = scaled_norm(y0, y0, y0, tol);
    let d1 = scaled_norm(f0, y0, y0, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(tol.max_step);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(&y, &f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    rhs(t0 + h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, y0, y0, tol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(tol.max_step))
}

fn dopri5<F>(rhs: &mut F, y0: &[f64], span: (f64, f64), mesh: usize, tol: &Tolerances) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let width = span.1 - span.0;
    let mut traj = Trajectory::new(n, mesh);
    let mut y = y0.to_vec();
    let mut y_new = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut k = vec![vec![0.0; n]; 7];
    traj.push(span.0, &y);

    rhs(span.0, &y, &mut k[0])?;
    if !all_finite(&k[0]) {
        return Err(Error::NonFiniteState { t: span.0 });
    }
    let mut h = initial_step(rhs, span.0, &y, &k[0].clone(), tol)?.max(tol.min_step);
    let mut t = span.0;

    for m in 1..mesh {
        let t_out = if m + 1 == mesh {
            span.1
        } else {
            span.0 + width * m as f64 / (mesh - 1) as f64
        };
        while t < t_out {
            let remaining = t_out - t;
            let clipped = h * 1.01 >= remaining;
            let h_step = if clipped { remaining } else { h };

            for s in 1..7 {
                for j in 0..n {
                    let mut acc = 0.0;
                    for (l, kl) in k.iter().enumerate().take(s) {
                        acc += A[s][l] * kl[j];
                    }
                    tmp[j] = y[j] + h_step * acc;
                }
                let (_, tail) = k.split_at_mut(s);
                rhs(t + C[s] * h_step, &tmp, &mut tail[0])?;
                if !all_finite(&tail[0]) {
                    return Err(Error::NonFiniteState { t: t + C[s] * h_step });
                }
                if s == 6 {
                    y_new.copy_from_slice(&tmp);
                }
            }
            for j in 0..n {
                err[j] = h_step * (0..7).map(|s| E[s] * k[s][j]).sum::<f64>();
            }
            let e = scaled_norm(&err, &y, &y_new, tol);

            if e <= 1.0 {
                t = if clipped { t_out } else { t + h_step };
                y.copy_from_slice(&y_new);
                k.swap(0, 6);
                let factor = if e == 0.0 {
                    5.0
                } else {
                    (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
                };
                let proposal = (h_step * factor).min(tol.max_step);
                h = if clipped { proposal.max(h) } else { proposal };
            } else {
                h = h_step * (0.9 * e.powf(-0.2)).clamp(0.1, 1.0);
                if h < tol.min_step {
                    return Err(Error::StepFailure {
                        t,
                        min_step: tol.min_step,
                    });
                }
            }
        }
        traj.push(t_out, &y);
    }
    Ok(traj)
}
