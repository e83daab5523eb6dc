//! Gradient flows of two-layer diagonal linear networks.
//!
//! The u² network predicts `x = u ∘ u` and its flow on `ℓ(u ∘ u)` started at
//! `u(0) = √ε α` is integrated in the mirror coordinates `L = log x`:
//!
//! ```text
//! dL/dt = 4 (r − M e^L),   L(0) = log(ε α²).
//! ```
//!
//! Everything is expressed in the rescaled time `s = 4t / log(1/ε)`, where
//! `dL/ds = K (r − M x)` with `K = log(1/ε)`. The state is augmented with
//! `z^ε(s) = ∫₀ˢ x du`, so the running average `x̄^ε(s) = z^ε(s)/s` and the
//! integrated mirror identity `w^ε(s) = w^ε(0) − s r + M z^ε(s)` (with
//! `w^ε = −L/K`) are available at integrator accuracy.
//!
//! The u∘v network is reduced to the u² flow on the doubled problem, with
//! `p± = (u ± v)/2`, `y± = p±²`, `x = y₊ − y₋`. Its time runs twice as fast
//! (`t̃ = t/2`), which makes `s = 2t/K` the common rescaled time.

pub mod integrator;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::lasso::{double_problem, recombine};
use crate::linalg::{inf_norm, Spectral, SPAN_CUTOFF};
use crate::output::fmt_f64;
use crate::problem::QuadraticProblem;
use integrator::{integrate, ErrorScale, Stats};

/// Schema tag written in trajectory CSV headers.
pub const TRAJECTORY_SCHEMA: &str = "dln-trajectory/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowMode {
    U2,
    Uv,
}

impl FlowMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowMode::U2 => "u2",
            FlowMode::Uv => "uv",
        }
    }
}

/// Initialization scale directions: `u(0) = √ε α`, or `u(0) = √ε β`, `v(0) = √ε γ`.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowInit {
    U2 { alpha: DVector<f64> },
    Uv { beta: DVector<f64>, gamma: DVector<f64> },
}

impl FlowInit {
    pub fn mode(&self) -> FlowMode {
        match self {
            FlowInit::U2 { .. } => FlowMode::U2,
            FlowInit::Uv { .. } => FlowMode::Uv,
        }
    }

    /// `α = 𝟙` or `(β, γ) = (𝟙, 0)`.
    pub fn ones(mode: FlowMode, d: usize) -> Self {
        match mode {
            FlowMode::U2 => FlowInit::U2 {
                alpha: DVector::from_element(d, 1.0),
            },
            FlowMode::Uv => FlowInit::Uv {
                beta: DVector::from_element(d, 1.0),
                gamma: DVector::zeros(d),
            },
        }
    }

    fn dim(&self) -> usize {
        match self {
            FlowInit::U2 { alpha } => alpha.len(),
            FlowInit::Uv { beta, .. } => beta.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub epsilon: f64,
    pub init: FlowInit,
    pub s_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub samples_per_unit_s: usize,
}

impl FlowConfig {
    /// `ε = 1e-5`, `s_max = 10`, 200 samples per unit `s`, tolerances `1e-10` / `1e-12`.
    pub fn new(init: FlowInit) -> Self {
        FlowConfig {
            epsilon: 1e-5,
            init,
            s_max: 10.0,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            samples_per_unit_s: 200,
        }
    }

    /// `log(1/ε)`.
    pub fn log_inv_epsilon(&self) -> f64 {
        -self.epsilon.ln()
    }

    /// Training-time horizon matching `s_max`.
    pub fn t_horizon(&self) -> f64 {
        let k = self.log_inv_epsilon();
        match self.init.mode() {
            FlowMode::U2 => k * self.s_max / 4.0,
            FlowMode::Uv => k * self.s_max / 2.0,
        }
    }

    /// Uniform grid `0, Δ, …, s_max` with `Δ ≤ 1/samples_per_unit_s`.
    pub fn s_grid(&self) -> Vec<f64> {
        let n = (self.s_max * self.samples_per_unit_s as f64).ceil().max(1.0) as usize;
        (0..=n).map(|k| self.s_max * k as f64 / n as f64).collect()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return input(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        if !(self.s_max > 0.0) || !self.s_max.is_finite() {
            return input(format!("s_max must be finite and positive, got {}", self.s_max));
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return input("integrator tolerances must be positive");
        }
        if self.samples_per_unit_s == 0 {
            return input("samples_per_unit_s must be at least 1");
        }
        if self.init.dim() != d {
            return input(format!(
                "initialization has dimension {} but the problem has {d}",
                self.init.dim()
            ));
        }
        match &self.init {
            FlowInit::U2 { alpha } => {
                if alpha.iter().any(|a| !(a.abs() > 0.0) || !a.is_finite()) {
                    return input("every alpha_i must be finite and nonzero");
                }
            }
            FlowInit::Uv { beta, gamma } => {
                if gamma.len() != d {
                    return input("beta and gamma must have the same length");
                }
                let ok = beta.iter().zip(gamma.iter()).all(|(b, g)| {
                    b.is_finite() && g.is_finite() && (b + g).abs() > 0.0 && (b - g).abs() > 0.0
                });
                if !ok {
                    return input("beta_i ± gamma_i must be finite and nonzero");
                }
            }
        }
        Ok(())
    }
}

/// Sampled flow on the uniform `s`-grid.
///
/// `log_y` and `z` live on the coordinates that are actually integrated:
/// `x` itself in u² mode, `(y₊, y₋)` in u∘v mode.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub mode: FlowMode,
    pub epsilon: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_horizon: f64,
    pub s_grid: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub x_bar: Vec<DVector<f64>>,
    pub w_mirror: Vec<DVector<f64>>,
    pub log_y: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub loss: Vec<f64>,
    pub stats: Stats,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.s_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_grid.is_empty()
    }

    /// `log(1/ε)`.
    pub fn log_inv_epsilon(&self) -> f64 {
        -self.epsilon.ln()
    }

    /// `z^ε(s_k) = s_k x̄^ε(s_k)` on the integrated coordinates.
    pub fn z_eps(&self, k: usize) -> &DVector<f64> {
        &self.z[k]
    }

    /// Trajectory CSV: a `#`-prefixed JSON metadata line, then
    /// `s, x_*, xbar_*, w_*, loss`.
    pub fn write_csv<W: Write>(&self, meta: &serde_json::Value, mut out: W) -> Result<()> {
        writeln!(out, "# {}", serde_json::to_string(meta)?)?;
        let d = self.x.first().map_or(0, |v| v.len());
        let dw = self.w_mirror.first().map_or(0, |v| v.len());
        let mut header = vec!["s".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=d).map(|i| format!("xbar_{i}")));
        header.extend((1..=dw).map(|i| format!("w_{i}")));
        header.push("loss".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![fmt_f64(self.s_grid[k])];
            row.extend(self.x[k].iter().map(|&v| fmt_f64(v)));
            row.extend(self.x_bar[k].iter().map(|&v| fmt_f64(v)));
            row.extend(self.w_mirror[k].iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(self.loss[k]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Metadata for the CSV header.
    pub fn metadata(&self, seed: Option<u64>) -> serde_json::Value {
        serde_json::json!({
            "schema": TRAJECTORY_SCHEMA,
            "mode": self.mode,
            "epsilon": self.epsilon,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "t_horizon": self.t_horizon,
            "s_max": self.s_grid.last().copied().unwrap_or(0.0),
            "samples": self.len(),
            "seed": seed,
        })
    }
}

/// Error weights: `rel_tol` on `L` (absolute error in `L` is relative error
/// in `x`), mixed on the integral `z`.
struct FlowScale {
    k: usize,
    rel_tol: f64,
    abs_tol: f64,
}

impl ErrorScale for FlowScale {
    fn scale(&self, i: usize, y_old: f64, y_new: f64) -> f64 {
        if i < self.k {
            self.rel_tol
        } else {
            self.abs_tol + self.rel_tol * y_old.abs().max(y_new.abs())
        }
    }
}

struct RawRun {
    log_y: Vec<DVector<f64>>,
    z: Vec<DVector<f64>>,
    stats: Stats,
}

/// Mirror-flow integration of `dL/ds = K (r − M e^L)`, `dz/ds = e^L`.
#[allow(clippy::too_many_arguments)]
fn run_log_flow(
    m: &DMatrix<f64>,
    r: &DVector<f64>,
    log_y0: DVector<f64>,
    k_log: f64,
    grid: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    t_per_s: f64,
) -> Result<RawRun> {
    let k = r.len();
    let mut y0 = DVector::zeros(2 * k);
    y0.rows_mut(0, k).copy_from(&log_y0);
    let rhs = |_: f64, y: &DVector<f64>| {
        let x = y.rows(0, k).map(f64::exp);
        let g = r - m * &x;
        let mut dy = DVector::zeros(2 * k);
        dy.rows_mut(0, k).copy_from(&(g * k_log));
        dy.rows_mut(k, k).copy_from(&x);
        dy
    };
    let scale = FlowScale {
        k,
        rel_tol,
        abs_tol,
    };
    let (states, stats) = integrate(rhs, y0, grid, &scale).map_err(|e| match e {
        Error::Integrator {
            t,
            reason,
            last_state,
        } => Error::Integrator {
            t: t * t_per_s,
            reason,
            last_state,
        },
        other => other,
    })?;
    Ok(RawRun {
        log_y: states.iter().map(|y| y.rows(0, k).into_owned()).collect(),
        z: states.iter().map(|y| y.rows(k, k).into_owned()).collect(),
        stats,
    })
}

/// u² flow from `x(0) = ε α²`.
pub fn simulate_u2(p: &QuadraticProblem, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    cfg.validate(p.dim())?;
    let FlowInit::U2 { alpha } = &cfg.init else {
        return input("simulate_u2 needs a u2 initialization");
    };
    let k_log = cfg.log_inv_epsilon();
    let log_x0 = alpha.map(|a| cfg.epsilon.ln() + 2.0 * a.abs().ln());
    let grid = cfg.s_grid();
    let raw = run_log_flow(
        p.m(),
        p.r(),
        log_x0,
        k_log,
        &grid,
        cfg.rel_tol,
        cfg.abs_tol,
        k_log / 4.0,
    )?;
    let x: Vec<DVector<f64>> = raw.log_y.iter().map(|l| l.map(f64::exp)).collect();
    let x_bar = exact_average(&grid, &x, &raw.z);
    Ok(assemble(p, cfg, grid, x, x_bar, raw))
}

/// u∘v flow from `u(0) = √ε β`, `v(0) = √ε γ`, through the doubled u² flow.
pub fn simulate_uv(p: &QuadraticProblem, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    cfg.validate(p.dim())?;
    let FlowInit::Uv { beta, gamma } = &cfg.init else {
        return input("simulate_uv needs a uv initialization");
    };
    let d = p.dim();
    let doubled = double_problem(p);
    let mut alpha = DVector::zeros(2 * d);
    alpha.rows_mut(0, d).copy_from(&((beta + gamma) * 0.5));
    alpha.rows_mut(d, d).copy_from(&((beta - gamma) * 0.5));
    let k_log = cfg.log_inv_epsilon();
    let log_y0 = alpha.map(|a| cfg.epsilon.ln() + 2.0 * a.abs().ln());
    let grid = cfg.s_grid();
    // doubled u² time t̃ = K s / 4 and u∘v time t = 2 t̃
    let raw = run_log_flow(
        doubled.m(),
        doubled.r(),
        log_y0,
        k_log,
        &grid,
        cfg.rel_tol,
        cfg.abs_tol,
        k_log / 2.0,
    )?;
    let x: Vec<DVector<f64>> = raw
        .log_y
        .iter()
        .map(|l| recombine(&l.map(f64::exp)))
        .collect();
    let zx: Vec<DVector<f64>> = raw.z.iter().map(recombine).collect();
    let x_bar = exact_average(&grid, &x, &zx);
    Ok(assemble(p, cfg, grid, x, x_bar, raw))
}

/// Dispatches on the initialization.
pub fn simulate(p: &QuadraticProblem, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    match cfg.init.mode() {
        FlowMode::U2 => simulate_u2(p, cfg),
        FlowMode::Uv => simulate_uv(p, cfg),
    }
}

fn exact_average(grid: &[f64], x: &[DVector<f64>], z: &[DVector<f64>]) -> Vec<DVector<f64>> {
    grid.iter()
        .zip(x.iter().zip(z))
        .map(|(&s, (xs, zs))| if s > 0.0 { zs / s } else { xs.clone() })
        .collect()
}

fn assemble(
    p: &QuadraticProblem,
    cfg: &FlowConfig,
    grid: Vec<f64>,
    x: Vec<DVector<f64>>,
    x_bar: Vec<DVector<f64>>,
    raw: RawRun,
) -> FlowTrajectory {
    let k_log = cfg.log_inv_epsilon();
    FlowTrajectory {
        mode: cfg.init.mode(),
        epsilon: cfg.epsilon,
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        t_horizon: cfg.t_horizon(),
        loss: x.iter().map(|xs| p.loss_unchecked(xs)).collect(),
        w_mirror: raw.log_y.iter().map(|l| -l / k_log).collect(),
        s_grid: grid,
        x,
        x_bar,
        log_y: raw.log_y,
        z: raw.z,
        stats: raw.stats,
    }
}

/// Cumulative trapezoid average `(1/s_k) ∫₀^{s_k} x`, with `x̄(0) = x(0)`.
pub fn trapezoid_average(s: &[f64], x: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(s.len());
    let mut integral = x.first().map(|v| DVector::zeros(v.len()));
    for k in 0..s.len() {
        let acc = integral.as_mut().expect("non-empty");
        if k > 0 {
            *acc += (&x[k] + &x[k - 1]) * (0.5 * (s[k] - s[k - 1]));
        }
        out.push(if s[k] > 0.0 { &*acc / s[k] } else { x[k].clone() });
    }
    out
}

/// The trajectory with `x_bar` recomputed by trapezoid quadrature of the samples.
pub fn running_average(traj: &FlowTrajectory) -> FlowTrajectory {
    let mut out = traj.clone();
    out.x_bar = trapezoid_average(&traj.s_grid, &traj.x);
    out
}

/// Rescaled mirror variable and Bregman divergence to the initialization at one sample.
#[derive(Debug, Clone)]
pub struct MirrorSample {
    pub w: DVector<f64>,
    pub bregman: f64,
}

/// `w^ε = −log y / log(1/ε)` and `D(y, y(0)) = ¼ Σ (y log(y/y₀) − y + y₀)`
/// on the integrated coordinates.
pub fn mirror_quantities(traj: &FlowTrajectory, p: &QuadraticProblem) -> Result<Vec<MirrorSample>> {
    let expected = match traj.mode {
        FlowMode::U2 => p.dim(),
        FlowMode::Uv => 2 * p.dim(),
    };
    let Some(l0) = traj.log_y.first() else {
        return Ok(Vec::new());
    };
    if l0.len() != expected {
        return input("trajectory and problem dimensions differ");
    }
    let k_log = traj.log_inv_epsilon();
    traj.log_y
        .iter()
        .enumerate()
        .map(|(k, l)| {
            if !l.iter().all(|v| v.is_finite()) {
                return Err(Error::Invariant(format!(
                    "non-positive coordinate in the flow at sample {k}"
                )));
            }
            let bregman = 0.25
                * l.iter()
                    .zip(l0.iter())
                    .map(|(&li, &l0i)| {
                        let (y, y0) = (li.exp(), l0i.exp());
                        y * (li - l0i) - y + y0
                    })
                    .sum::<f64>();
            Ok(MirrorSample {
                w: -l / k_log,
                bregman,
            })
        })
        .collect()
}

/// Runtime checks of the flow invariants.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowDiagnostics {
    /// `max_k ‖w^ε(s_k) − (w^ε(0) − s_k r + M z^ε(s_k))‖∞` on the integrated coordinates.
    pub mirror_residual: f64,
    /// Largest increase `ℓ(x_{k+1}) − ℓ(x_k)`, relative to `1 + |ℓ(x_k)|`.
    pub loss_increase: f64,
    /// `max_k ‖(I − P_span M)(L_k − L_0)‖ / ‖L_k − L_0‖`.
    pub span_residual: f64,
    /// u∘v only: `max |(u_i² − v_i²)(s) / (u_i² − v_i²)(0) − 1|`.
    pub conservation: f64,
    pub min_bregman: f64,
}

pub fn diagnose(traj: &FlowTrajectory, p: &QuadraticProblem) -> Result<FlowDiagnostics> {
    let integrated = match traj.mode {
        FlowMode::U2 => p.clone(),
        FlowMode::Uv => double_problem(p),
    };
    let mirror = mirror_quantities(traj, p)?;
    let spec = Spectral::with_cutoff(integrated.m(), SPAN_CUTOFF);
    let mut diag = FlowDiagnostics {
        min_bregman: f64::INFINITY,
        ..Default::default()
    };
    let w0 = &mirror[0].w;
    let l0 = &traj.log_y[0];
    for (k, q) in mirror.iter().enumerate() {
        let s = traj.s_grid[k];
        let predicted = w0 - integrated.r() * s + integrated.m() * &traj.z[k];
        diag.mirror_residual = diag
            .mirror_residual
            .max(inf_norm(&(&q.w - predicted)));
        diag.min_bregman = diag.min_bregman.min(q.bregman);
        let dl = &traj.log_y[k] - l0;
        let norm = dl.norm();
        if norm > 0.0 {
            diag.span_residual = diag.span_residual.max(spec.kernel_residual(&dl) / norm);
        }
        if k > 0 {
            let inc = (traj.loss[k] - traj.loss[k - 1]) / (1.0 + traj.loss[k - 1].abs());
            diag.loss_increase = diag.loss_increase.max(inc);
        }
        if traj.mode == FlowMode::Uv {
            let d = p.dim();
            for i in 0..d {
                let drift = 0.5 * ((traj.log_y[k][i] + traj.log_y[k][d + i]) - (l0[i] + l0[d + i]));
                diag.conservation = diag.conservation.max(drift.exp_m1().abs());
            }
        }
    }
    Ok(diag)
}
