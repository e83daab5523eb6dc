//! Experiment drivers: suboptimality gap of the averaged flow against the
//! exact path, ε-sweeps, and the Monte-Carlo census of monotone paths.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{input, Result};
use crate::flow::{simulate, FlowConfig, FlowInit, FlowMode, FlowTrajectory};
use crate::lasso::{double_problem, trace_lasso_path, LassoPath};
use crate::linalg::seminorm;
use crate::output::{fmt_f64, opt_f64};
use crate::problem::{random_instance, QuadraticProblem};

pub const GAP_SCHEMA: &str = "dln-gap/1";
pub const CENSUS_SCHEMA: &str = "dln-census/1";
pub const SWEEP_SCHEMA: &str = "dln-sweep/1";

/// Values of `Lasso_*` at or below this are too small for a relative gap.
pub const MIN_OPT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub mode: FlowMode,
    pub epsilons: Vec<f64>,
    pub s_max: f64,
    pub samples_per_unit_s: usize,
    /// `None` means `α = 𝟙` or `(β, γ) = (𝟙, 0)`.
    pub init: Option<FlowInit>,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for ExperimentConfig {
    /// `d = 4`, `n = 3`, u∘v with `β = 𝟙`, `γ = 0`, `ε = 1e-5`, `s ∈ [0, 10]`.
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            d: 4,
            n: 3,
            mode: FlowMode::Uv,
            epsilons: vec![1e-5],
            s_max: 10.0,
            samples_per_unit_s: 200,
            init: None,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return input("d and n must be positive");
        }
        if self.epsilons.is_empty() {
            return input("at least one epsilon is required");
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return input(format!("epsilon must lie in (0, 1), got {e}"));
        }
        if !(self.s_max > 0.0) || !self.s_max.is_finite() {
            return input(format!("s_max must be finite and positive, got {}", self.s_max));
        }
        if self.samples_per_unit_s < 10 {
            return input("the s-grid needs at least 10 samples per unit s");
        }
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return input("integrator tolerances must be positive");
        }
        if let Some(init) = &self.init {
            if init.mode() != self.mode {
                return input("initialization does not match the mode");
            }
        }
        Ok(())
    }

    /// The random instance for `seed`, `n`, `d`.
    pub fn instance(&self) -> Result<QuadraticProblem> {
        random_instance(self.seed, self.n, self.d)
    }

    pub fn flow_config(&self, epsilon: f64, d: usize) -> FlowConfig {
        FlowConfig {
            epsilon,
            init: self
                .init
                .clone()
                .unwrap_or_else(|| FlowInit::ones(self.mode, d)),
            s_max: self.s_max,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            samples_per_unit_s: self.samples_per_unit_s,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapRecord {
    pub s: f64,
    /// `Lasso(x̄^ε(s), 1/s)`.
    pub lasso_flow: f64,
    /// `Lasso(x(s), 1/s)` from the exact path.
    pub lasso_opt: f64,
    /// `NaN` when `lasso_opt ≤ MIN_OPT`.
    pub rel_gap: f64,
    /// `½‖z^ε(s) − z(s)‖²_M` on the integrated coordinates.
    pub delta: f64,
    /// `⟨w(s), z^ε(s) − z(s)⟩ + Δ^ε(s)`.
    pub energy: f64,
    pub z_down: f64,
    pub z_up: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub epsilon: f64,
    pub mode: FlowMode,
    pub monotone: bool,
    pub first_breakpoint: Option<f64>,
    pub records: Vec<GapRecord>,
    /// Samples whose relative gap is undefined.
    pub excluded: Vec<f64>,
}

impl GapReport {
    /// Largest relative gap over `s ≥ s₁` (over all samples without a breakpoint in range).
    pub fn max_rel_gap(&self) -> Option<(f64, f64)> {
        let from = self.first_breakpoint.unwrap_or(0.0);
        self.records
            .iter()
            .filter(|r| r.s >= from && r.rel_gap.is_finite())
            .map(|r| (r.s, r.rel_gap))
            .fold(None, |best, cur| match best {
                Some((_, g)) if g >= cur.1 => best,
                _ => Some(cur),
            })
    }

    /// Largest relative gap before the first breakpoint.
    pub fn max_rel_gap_before_breakpoint(&self) -> Option<f64> {
        let until = self.first_breakpoint.unwrap_or(f64::INFINITY);
        self.records
            .iter()
            .filter(|r| r.s < until && r.rel_gap.is_finite())
            .map(|r| r.rel_gap)
            .reduce(f64::max)
    }

    /// Largest relative gap over `s ≥ s₁` where `z↓(s) = 0`.
    pub fn max_rel_gap_where_monotone(&self) -> Option<f64> {
        let from = self.first_breakpoint.unwrap_or(0.0);
        self.records
            .iter()
            .filter(|r| r.s >= from && r.z_down <= 1e-12 && r.rel_gap.is_finite())
            .map(|r| r.rel_gap)
            .reduce(f64::max)
    }

    /// Versioned CSV: a `#` line with JSON metadata, then one row per sample.
    pub fn write_csv<W: Write>(&self, seed: Option<u64>, mut out: W) -> Result<()> {
        let meta = serde_json::json!({
            "schema": GAP_SCHEMA,
            "seed": seed,
            "epsilon": self.epsilon,
            "mode": self.mode,
            "monotone": self.monotone,
            "first_breakpoint": self.first_breakpoint,
            "excluded": self.excluded,
        });
        writeln!(out, "# {}", serde_json::to_string(&meta)?)?;
        writeln!(out, "s,lasso_flow,lasso_opt,rel_gap,delta,energy,z_down,z_up")?;
        for r in &self.records {
            let row = [
                r.s,
                r.lasso_flow,
                r.lasso_opt,
                r.rel_gap,
                r.delta,
                r.energy,
                r.z_down,
                r.z_up,
            ]
            .map(fmt_f64);
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// The lasso path matching the flow: positive for u², signed for u∘v.
pub fn reference_path(p: &QuadraticProblem, mode: FlowMode, s_max: f64) -> Result<LassoPath> {
    trace_lasso_path(p, s_max, mode == FlowMode::Uv)
}

/// Compares an already simulated trajectory with the exact path.
pub fn gap_report(p: &QuadraticProblem, traj: &FlowTrajectory, path: &LassoPath) -> Result<GapReport> {
    let integrated = match traj.mode {
        FlowMode::U2 => p.clone(),
        FlowMode::Uv => double_problem(p),
    };
    if path.base().dim() != integrated.dim() {
        return input("path and trajectory coordinates differ");
    }
    let mut records = Vec::with_capacity(traj.len());
    let mut excluded = Vec::new();
    for k in 0..traj.len() {
        let s = traj.s_grid[k];
        if s <= 0.0 {
            continue;
        }
        let lambda = 1.0 / s;
        let lasso_flow = p.lasso_objective(&traj.x_bar[k], lambda)?;
        let lasso_opt = path.optimal_value(p, s)?;
        let z = path.base().z_at(s);
        let w = path.base().w_at(s);
        let diff: DVector<f64> = traj.z_eps(k) - &z;
        let delta = 0.5 * seminorm(integrated.m(), &diff).powi(2);
        let energy = w.dot(&diff) + delta;
        let rel_gap = if lasso_opt > MIN_OPT {
            (lasso_flow - lasso_opt) / lasso_opt
        } else {
            excluded.push(s);
            f64::NAN
        };
        records.push(GapRecord {
            s,
            lasso_flow,
            lasso_opt,
            rel_gap,
            delta,
            energy,
            z_down: path.z_down(s)?,
            z_up: path.z_up(s)?,
        });
    }
    Ok(GapReport {
        epsilon: traj.epsilon,
        mode: traj.mode,
        monotone: path.is_monotone(path.s_max()),
        first_breakpoint: path.first_breakpoint(),
        records,
        excluded,
    })
}

/// Runs the flow at `epsilon` and evaluates the gap on every positive grid sample.
pub fn run_gap_experiment(cfg: &ExperimentConfig, p: &QuadraticProblem, epsilon: f64) -> Result<GapReport> {
    cfg.validate()?;
    let path = reference_path(p, cfg.mode, cfg.s_max)?;
    let traj = simulate(p, &cfg.flow_config(epsilon, p.dim()))?;
    gap_report(p, &traj, &path)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    /// Max relative gap over `s ≥ s₁`, and where it occurs.
    pub max_rel_gap: Option<f64>,
    pub argmax_s: Option<f64>,
    pub max_rel_gap_before_breakpoint: Option<f64>,
    /// Max relative gap over `s ≥ s₁` restricted to `z↓(s) = 0`.
    pub max_rel_gap_where_monotone: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub schema: &'static str,
    pub seed: u64,
    pub mode: FlowMode,
    pub monotone: bool,
    pub first_breakpoint: Option<f64>,
    #[serde(with = "opt_f64")]
    pub s_max: f64,
    pub entries: Vec<SweepEntry>,
    /// Whether the max gap strictly decreases along the ε list (taken in decreasing ε).
    pub gaps_decrease: bool,
}

/// Gap reports for every ε in the config, in decreasing ε order.
pub fn run_epsilon_sweep(cfg: &ExperimentConfig, p: &QuadraticProblem) -> Result<(SweepSummary, Vec<GapReport>)> {
    cfg.validate()?;
    if cfg.epsilons.len() < 2 {
        return input("an epsilon sweep needs at least two values");
    }
    let mut eps = cfg.epsilons.clone();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let path = reference_path(p, cfg.mode, cfg.s_max)?;
    let mut reports = Vec::with_capacity(eps.len());
    for &e in &eps {
        let traj = simulate(p, &cfg.flow_config(e, p.dim()))?;
        reports.push(gap_report(p, &traj, &path)?);
    }
    let entries: Vec<SweepEntry> = reports
        .iter()
        .map(|r| {
            let max = r.max_rel_gap();
            SweepEntry {
                epsilon: r.epsilon,
                max_rel_gap: max.map(|m| m.1),
                argmax_s: max.map(|m| m.0),
                max_rel_gap_before_breakpoint: r.max_rel_gap_before_breakpoint(),
                max_rel_gap_where_monotone: r.max_rel_gap_where_monotone(),
            }
        })
        .collect();
    let gaps_decrease = entries.windows(2).all(|w| match (w[0].max_rel_gap, w[1].max_rel_gap) {
        (Some(a), Some(b)) => b < a,
        _ => false,
    });
    let summary = SweepSummary {
        schema: SWEEP_SCHEMA,
        seed: cfg.seed,
        mode: cfg.mode,
        monotone: path.is_monotone(cfg.s_max),
        first_breakpoint: path.first_breakpoint(),
        s_max: cfg.s_max,
        entries,
        gaps_decrease,
    };
    Ok((summary, reports))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CensusStatus {
    Monotone,
    Nonmonotone,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusEntry {
    pub seed: u64,
    pub status: CensusStatus,
    pub breakpoints: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusReport {
    pub schema: &'static str,
    pub seed_base: u64,
    pub count: usize,
    pub d: usize,
    pub n: usize,
    #[serde(with = "opt_f64")]
    pub s_max: f64,
    pub classified: usize,
    pub monotone: usize,
    pub errors: usize,
    /// Monotone fraction among classified instances.
    pub fraction: f64,
    /// `√(f(1 − f)/classified)`.
    pub std_error: f64,
    #[serde(skip)]
    pub entries: Vec<CensusEntry>,
}

impl CensusReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "seed,status,breakpoints")?;
        for e in &self.entries {
            let status = match e.status {
                CensusStatus::Monotone => "monotone",
                CensusStatus::Nonmonotone => "nonmonotone",
                CensusStatus::Error => "error",
            };
            writeln!(out, "{},{},{}", e.seed, status, e.breakpoints)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        let errors: Vec<_> = self
            .entries
            .iter()
            .filter(|e| e.status == CensusStatus::Error)
            .collect();
        v["failed"] = serde_json::to_value(errors)?;
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

fn classify(seed: u64, n: usize, d: usize, s_max: f64) -> CensusEntry {
    let result = random_instance(seed, n, d).and_then(|p| trace_lasso_path(&p, s_max, true));
    match result {
        Ok(path) => CensusEntry {
            seed,
            status: if path.is_monotone(s_max) {
                CensusStatus::Monotone
            } else {
                CensusStatus::Nonmonotone
            },
            breakpoints: path.base().segments().len() - 1,
            message: None,
        },
        Err(e) => CensusEntry {
            seed,
            status: CensusStatus::Error,
            breakpoints: 0,
            message: Some(e.to_string()),
        },
    }
}

/// Classifies the signed paths of instances `seed_base, …, seed_base + count − 1`.
/// `s_max = +∞` classifies the whole path.
pub fn run_monotone_census(seed_base: u64, count: usize, d: usize, n: usize, s_max: f64) -> Result<CensusReport> {
    if count == 0 {
        return input("count must be at least 1");
    }
    if d == 0 || n == 0 {
        return input("d and n must be positive");
    }
    if !(s_max > 0.0) {
        return input("s_max must be positive");
    }
    let entries: Vec<CensusEntry> = (0..count as u64)
        .into_par_iter()
        .map(|i| classify(seed_base.wrapping_add(i), n, d, s_max))
        .collect();
    let monotone = entries
        .iter()
        .filter(|e| e.status == CensusStatus::Monotone)
        .count();
    let errors = entries
        .iter()
        .filter(|e| e.status == CensusStatus::Error)
        .count();
    let classified = count - errors;
    let fraction = if classified > 0 {
        monotone as f64 / classified as f64
    } else {
        f64::NAN
    };
    let std_error = (fraction * (1.0 - fraction) / classified.max(1) as f64).sqrt();
    Ok(CensusReport {
        schema: CENSUS_SCHEMA,
        seed_base,
        count,
        d,
        n,
        s_max,
        classified,
        monotone,
        errors,
        fraction,
        std_error,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(mode: FlowMode) -> ExperimentConfig {
        ExperimentConfig {
            mode,
            s_max: 4.0,
            samples_per_unit_s: 50,
            ..Default::default()
        }
    }

    #[test]
    fn u2_energy_identity_and_signs() {
        let cfg = small_cfg(FlowMode::U2);
        let p = cfg.instance().unwrap();
        let rep = run_gap_experiment(&cfg, &p, 1e-5).unwrap();
        assert!(rep.records[0].delta <= 1e-6);
        for r in &rep.records {
            let lhs = r.lasso_flow - r.lasso_opt;
            assert!((lhs - r.energy / (r.s * r.s)).abs() <= 1e-8, "{r:?}");
            assert!(r.delta >= 0.0);
            assert!(r.lasso_flow >= r.lasso_opt - 1e-9);
        }
    }

    #[test]
    fn uv_gap_is_small_on_defaults() {
        let cfg = small_cfg(FlowMode::Uv);
        let p = cfg.instance().unwrap();
        let rep = run_gap_experiment(&cfg, &p, 1e-5).unwrap();
        let (_, g) = rep.max_rel_gap().unwrap();
        assert!((0.0..0.1).contains(&g), "{g}");
        for r in &rep.records {
            assert!(r.lasso_flow >= r.lasso_opt - 1e-9);
            assert!(r.lasso_opt > MIN_OPT);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = ExperimentConfig {
            samples_per_unit_s: 5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            epsilons: vec![0.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let p = cfg.instance().unwrap();
        let cfg = ExperimentConfig {
            epsilons: vec![1e-3],
            ..Default::default()
        };
        assert!(run_epsilon_sweep(&cfg, &p).is_err());
    }

    #[test]
    fn census_small_cases() {
        let rep = run_monotone_census(0, 20, 1, 2, f64::INFINITY).unwrap();
        assert_eq!(rep.fraction, 1.0);
        let a = run_monotone_census(42, 1, 4, 3, f64::INFINITY).unwrap();
        let b = run_monotone_census(42, 1, 4, 3, f64::INFINITY).unwrap();
        assert_eq!(a.entries[0].status, b.entries[0].status);
        assert!(run_monotone_census(0, 0, 4, 3, 1.0).is_err());
    }
}
