//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use dln_lasso::experiments::{
    reference_path, run_epsilon_sweep, run_gap_experiment, run_monotone_census, ExperimentConfig,
};
use dln_lasso::flow::{diagnose, simulate, FlowConfig, FlowInit, FlowMode};
use dln_lasso::lasso::{
    double_problem, kkt_residual, recombine, solve_lasso, solve_positive_lasso, trace_lasso_path,
    MONOTONE_TOL,
};
use dln_lasso::lcp::{verify_path, LCP_TOL};
use dln_lasso::linalg::inf_norm;
use dln_lasso::oracles::{brute_force_lcp, ista_lasso, projected_gradient_positive};
use dln_lasso::{random_instance, solve_lcp, trace_parametric_path, QuadraticProblem};

use common::{random_problem, random_psd_lcp, rel_diff};

// criterion 1
const CENSUS_COUNT: usize = 1000;
const CENSUS_RANGE: (f64, f64) = (0.72, 0.80);
const CENSUS_BUDGET: Duration = Duration::from_secs(300);
// criterion 2
const GAP_SEEDS: u64 = 10;
const GAP_BOUND: f64 = 0.05;
const GAP_BUDGET: Duration = Duration::from_secs(120);
// criteria 3 and 4
const SWEEP_EPS: [f64; 3] = [1e-3, 1e-5, 1e-7];
const SWEEP_INSTANCES: usize = 5;
const MONOTONE_FINAL_BOUND: f64 = 1e-2;
const SEED_SEARCH_LIMIT: u64 = 1000;
// criterion 5
const LCP_INSTANCES: u64 = 100;
const LCP_MAX_D: usize = 6;
const LCP_W_TOL: f64 = 1e-8;
const LCP_OBJ_TOL: f64 = 1e-9;
const LASSO_INSTANCES: u64 = 50;
const LASSO_LAMBDA_FRACTIONS: [f64; 3] = [0.1, 0.3, 0.7];
const FIRST_ORDER_ITERS: usize = 1_000_000;
const FIRST_ORDER_STOP: f64 = 1e-15;
const ORACLE_RESIDUAL: f64 = 1e-7;
const LASSO_OBJ_TOL: f64 = 1e-8;
// criterion 6
const PATH_INSTANCES: u64 = 100;
const PATH_S_MAX: f64 = 20.0;
const PATH_SAMPLES_PER_SEGMENT: usize = 7;
const PATH_CONTINUITY: f64 = 1e-8;
const PATH_RESIDUAL: f64 = 1e-9;
const PATH_LIPSCHITZ: f64 = 1.0 + 1e-6;
const PATH_MIN_PAIRS: usize = 20;
const REDUCTION_TOL: f64 = 1e-9;
// criterion 7
const FLOW_INSTANCES: u64 = 20;
const FLOW_MIRROR: f64 = 1e-6;
const FLOW_SPAN: f64 = 1e-6;
// criterion 8
const IDENTITY_INSTANCES: u64 = 10;
const IDENTITY_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("monotone fraction of 1000 signed paths", monotone_fraction),
        ("gap magnitude on 10 default instances", gap_magnitude),
        ("gap decreases with epsilon on monotone instances", monotone_convergence),
        ("gap spike where z_down first increases", nonmonotone_spike),
        ("oracle equivalence", oracle_equivalence),
        ("path invariants", path_invariants),
        ("flow invariants", flow_invariants),
        ("energy identity in u2 mode", energy_identity),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} [{:.1}s] {}",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            name,
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn monotone_fraction() -> Outcome {
    let start = Instant::now();
    let rep = run_monotone_census(0, CENSUS_COUNT, 4, 3, f64::INFINITY).unwrap();
    let elapsed = start.elapsed();
    let pass = rep.fraction >= CENSUS_RANGE.0
        && rep.fraction <= CENSUS_RANGE.1
        && elapsed <= CENSUS_BUDGET;
    outcome(
        pass,
        format!(
            "fraction {:.3} ± {:.3} over {} classified, {} errors, {:.2}s",
            rep.fraction,
            rep.std_error,
            rep.classified,
            rep.errors,
            elapsed.as_secs_f64()
        ),
    )
}

fn gap_magnitude() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut gaps = Vec::new();
    for seed in 0..GAP_SEEDS {
        let cfg = ExperimentConfig {
            seed,
            ..Default::default()
        };
        let p = cfg.instance().unwrap();
        let start = Instant::now();
        let rep = run_gap_experiment(&cfg, &p, 1e-5).unwrap();
        let elapsed = start.elapsed();
        let gap = rep.max_rel_gap().map_or(0.0, |g| g.1);
        worst = worst.max(gap);
        gaps.push(format!("{seed}:{gap:.4}"));
        if gap > GAP_BOUND || elapsed > GAP_BUDGET {
            failures.push(format!(
                "seed {seed} gap {gap:.4} ({}monotone)",
                if rep.monotone { "" } else { "non" }
            ));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "max {worst:.4} (bound {GAP_BOUND}); per seed [{}]{}",
            gaps.join(" "),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; over bound: {}", failures.join(", "))
            }
        ),
    )
}

/// First `count` seeds whose signed path satisfies `want(monotone)`.
fn select_seeds(count: usize, s_max: f64, want_monotone: bool) -> Vec<(u64, QuadraticProblem)> {
    let mut out = Vec::new();
    for seed in 0..SEED_SEARCH_LIMIT {
        let p = random_instance(seed, 3, 4).unwrap();
        let path = trace_lasso_path(&p, s_max, true).unwrap();
        if path.is_monotone(s_max) == want_monotone {
            out.push((seed, p));
            if out.len() == count {
                break;
            }
        }
    }
    out
}

fn monotone_convergence() -> Outcome {
    let cfg = ExperimentConfig {
        epsilons: SWEEP_EPS.to_vec(),
        ..Default::default()
    };
    let mut ok = true;
    let mut lines = Vec::new();
    for (seed, p) in select_seeds(SWEEP_INSTANCES, f64::INFINITY, true) {
        let cfg = ExperimentConfig { seed, ..cfg.clone() };
        let (summary, _) = run_epsilon_sweep(&cfg, &p).unwrap();
        let gaps: Vec<f64> = summary
            .entries
            .iter()
            .map(|e| e.max_rel_gap.unwrap_or(0.0))
            .collect();
        let last = *gaps.last().unwrap();
        let this_ok = summary.gaps_decrease && last <= MONOTONE_FINAL_BOUND;
        ok &= this_ok;
        lines.push(format!(
            "seed {seed} {}[{}]",
            if this_ok { "" } else { "FAIL " },
            gaps.iter()
                .map(|g| format!("{g:.2e}"))
                .collect::<Vec<_>>()
                .join(" > ")
        ));
    }
    outcome(
        ok && lines.len() == SWEEP_INSTANCES,
        format!("bound {MONOTONE_FINAL_BOUND:e} at eps=1e-7; {}", lines.join("; ")),
    )
}

fn nonmonotone_spike() -> Outcome {
    let s_max = 10.0;
    let cfg = ExperimentConfig::default();
    let mut ok = true;
    let mut lines = Vec::new();
    for (seed, p) in select_seeds(SWEEP_INSTANCES, s_max, false) {
        let path = reference_path(&p, FlowMode::Uv, s_max).unwrap();
        let segs = path.base().segments();
        let decreasing =
            |k: usize| segs[k].z_slope.iter().any(|&v| v < -MONOTONE_TOL);
        let first = (0..segs.len()).find(|&k| decreasing(k)).unwrap();
        let mut k = first;
        while k + 1 < segs.len() && decreasing(k + 1) {
            k += 1;
        }
        let (a, b) = (segs[first].start, path.base().segment_end(k).min(s_max));
        let mut j = k + 1;
        while j < segs.len() && !decreasing(j) {
            j += 1;
        }
        let c = if j > k + 1 {
            path.base().segment_end(j - 1).min(s_max)
        } else {
            b
        };

        let cfg = ExperimentConfig { seed, ..cfg.clone() };
        let rep = run_gap_experiment(&cfg, &p, 1e-7).unwrap();
        let rec = &rep.records;
        let peak = (1..rec.len() - 1)
            .filter(|&i| rec[i].s >= a && rec[i].s <= b)
            .filter(|&i| rec[i].rel_gap >= rec[i - 1].rel_gap && rec[i].rel_gap >= rec[i + 1].rel_gap)
            .max_by(|&i, &j| rec[i].rel_gap.total_cmp(&rec[j].rel_gap));
        let at_c = rec.iter().rev().find(|r| r.s <= c).unwrap();
        let global = rec
            .iter()
            .filter(|r| r.s >= a)
            .max_by(|x, y| x.rel_gap.total_cmp(&y.rel_gap))
            .unwrap();
        let this_ok = peak.is_some_and(|i| at_c.rel_gap < rec[i].rel_gap);
        ok &= this_ok;
        lines.push(format!(
            "seed {seed} {}z_down rises on [{a:.2},{b:.2}], flat to {c:.2}: {}; gap({c:.2})={:.2e}; largest gap after {a:.2} is {:.2e} at s={:.2}",
            if this_ok { "" } else { "FAIL " },
            match peak {
                Some(i) => format!("local max {:.2e} at s={:.2}", rec[i].rel_gap, rec[i].s),
                None => "no local max inside".to_string(),
            },
            at_c.rel_gap,
            global.rel_gap,
            global.s,
        ));
    }
    outcome(ok && lines.len() == SWEEP_INSTANCES, lines.join("; "))
}

fn oracle_equivalence() -> Outcome {
    let mut worst_w: f64 = 0.0;
    let mut worst_obj: f64 = 0.0;
    let mut rank_deficient = 0;
    for seed in 0..LCP_INSTANCES {
        let (m, q) = random_psd_lcp(seed, LCP_MAX_D);
        if dln_lasso::linalg::Spectral::new(&m).rank() < q.len() {
            rank_deficient += 1;
        }
        let sol = solve_lcp(&m, &q).unwrap();
        let bf = brute_force_lcp(&m, &q).unwrap();
        assert!(sol.residuals(&m, &q).satisfied(LCP_TOL), "seed {seed}");
        assert!(bf.residuals(&m, &q).satisfied(1e-7), "seed {seed}");
        worst_w = worst_w.max(inf_norm(&(&sol.w - &bf.w)));
        let (a, b) = (sol.objective(&m, &q), bf.objective(&m, &q));
        worst_obj = worst_obj.max((a - b).abs() / (1.0 + b.abs()));
    }

    let mut worst_ista: f64 = 0.0;
    let mut worst_pg: f64 = 0.0;
    let mut worst_oracle_residual: f64 = 0.0;
    for i in 0..LASSO_INSTANCES {
        let p = random_instance(10_000 + i, 3, 4).unwrap();
        let rmax = inf_norm(p.r());
        let rpos = p.r().max();
        for frac in LASSO_LAMBDA_FRACTIONS {
            let lam = frac * rmax;
            let x = solve_lasso(&p, lam).unwrap();
            let ora = ista_lasso(&p, lam, FIRST_ORDER_ITERS, FIRST_ORDER_STOP).unwrap();
            worst_oracle_residual = worst_oracle_residual.max(ora.residual);
            worst_ista = worst_ista.max(rel_diff(p.lasso_objective(&x, lam).unwrap(), ora.objective));

            let lam = if rpos > 0.0 { frac * rpos } else { lam };
            let x = solve_positive_lasso(&p, lam).unwrap();
            let ora = projected_gradient_positive(&p, lam, FIRST_ORDER_ITERS, FIRST_ORDER_STOP).unwrap();
            worst_oracle_residual = worst_oracle_residual.max(ora.residual);
            worst_pg = worst_pg.max(rel_diff(p.lasso_objective(&x, lam).unwrap(), ora.objective));
        }
    }
    let pass = worst_w <= LCP_W_TOL
        && worst_obj <= LCP_OBJ_TOL
        && worst_ista <= LASSO_OBJ_TOL
        && worst_pg <= LASSO_OBJ_TOL
        && worst_oracle_residual <= ORACLE_RESIDUAL;
    outcome(
        pass,
        format!(
            "LCP ({LCP_INSTANCES} instances, {rank_deficient} singular): max |Δw| {worst_w:.1e}, max Δobj {worst_obj:.1e}; \
             lasso vs ISTA {worst_ista:.1e}, positive lasso vs projected gradient {worst_pg:.1e}, \
             oracle KKT residual {worst_oracle_residual:.1e}"
        ),
    )
}

fn path_invariants() -> Outcome {
    let mut worst_res: f64 = 0.0;
    let mut worst_cont: f64 = 0.0;
    let mut worst_init: f64 = 0.0;
    let mut worst_lip: f64 = 0.0;
    let mut worst_red: f64 = 0.0;
    let mut min_pairs = usize::MAX;
    let mut bad_s1 = 0;
    for seed in 0..PATH_INSTANCES {
        let p = random_problem(20_000 + seed, 6);
        let doubled = double_problem(&p);
        for prob in [&p, &doubled] {
            let path = trace_parametric_path(prob.m(), prob.r(), PATH_S_MAX).unwrap();
            let rep = verify_path(&path, prob.m(), prob.r(), PATH_SAMPLES_PER_SEGMENT);
            worst_res = worst_res.max(rep.max_lcp_residual());
            worst_cont = worst_cont.max(rep.continuity);
            worst_init = worst_init.max(rep.initial);
            worst_lip = worst_lip.max(rep.lipschitz_ratio);
            min_pairs = min_pairs.min(rep.pairs);
            if !rep.first_breakpoint_ok {
                bad_s1 += 1;
            }
        }
        for frac in [0.05, 0.2, 0.5, 0.9] {
            let lam = frac * inf_norm(p.r());
            let y = solve_positive_lasso(&doubled, lam).unwrap();
            let x = recombine(&y);
            assert!(kkt_residual(&p, &x, lam, true) <= 1e-8, "seed {seed}");
            let a = doubled.lasso_objective(&y, lam).unwrap();
            let b = p.lasso_objective(&x, lam).unwrap();
            worst_red = worst_red.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    let pass = worst_res <= PATH_RESIDUAL
        && worst_cont <= PATH_CONTINUITY
        && worst_init <= PATH_RESIDUAL
        && bad_s1 == 0
        && worst_lip <= PATH_LIPSCHITZ
        && min_pairs >= PATH_MIN_PAIRS
        && worst_red <= REDUCTION_TOL;
    outcome(
        pass,
        format!(
            "{PATH_INSTANCES} instances, native and doubled: residual {worst_res:.1e}, continuity {worst_cont:.1e}, \
             w(0) {worst_init:.1e}, s1 violations {bad_s1}, Lipschitz ratio {worst_lip:.9} over ≥{min_pairs} pairs, \
             reduction {worst_red:.1e}"
        ),
    )
}

fn flow_invariants() -> Outcome {
    let mut worst_loss: f64 = 0.0;
    let mut worst_mirror: f64 = 0.0;
    let mut worst_span: f64 = 0.0;
    let mut worst_cons: f64 = 0.0;
    let rel_tol = 1e-10;
    for mode in [FlowMode::U2, FlowMode::Uv] {
        for i in 0..FLOW_INSTANCES {
            let p = random_instance(30_000 + i, 3, 4).unwrap();
            let mut cfg = FlowConfig::new(FlowInit::ones(mode, 4));
            cfg.epsilon = if i % 2 == 0 { 1e-5 } else { 1e-7 };
            cfg.rel_tol = rel_tol;
            let traj = simulate(&p, &cfg).unwrap();
            let diag = diagnose(&traj, &p).unwrap();
            worst_loss = worst_loss.max(diag.loss_increase);
            worst_mirror = worst_mirror.max(diag.mirror_residual);
            worst_span = worst_span.max(diag.span_residual);
            worst_cons = worst_cons.max(diag.conservation);
        }
    }

    let p = QuadraticProblem::new(DMatrix::identity(1, 1), DVector::from_element(1, 1.0), 0.5).unwrap();
    let cfg = FlowConfig::new(FlowInit::ones(FlowMode::U2, 1));
    let traj = simulate(&p, &cfg).unwrap();
    let k = cfg.log_inv_epsilon();
    let logistic = traj
        .s_grid
        .iter()
        .zip(&traj.x)
        .map(|(s, x)| {
            let e = (k * s).exp();
            let exact = cfg.epsilon * e / (1.0 + cfg.epsilon * (e - 1.0));
            (x[0] - exact).abs() / exact
        })
        .fold(0.0, f64::max);

    let slack = 10.0 * rel_tol;
    let pass = worst_loss <= slack
        && worst_mirror <= FLOW_MIRROR
        && worst_span <= FLOW_SPAN
        && worst_cons <= slack
        && logistic <= slack;
    outcome(
        pass,
        format!(
            "{FLOW_INSTANCES} instances per mode: loss increase {worst_loss:.1e}, mirror identity {worst_mirror:.1e}, \
             span {worst_span:.1e}, conservation {worst_cons:.1e}; logistic closed form {logistic:.1e}"
        ),
    )
}

fn energy_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for seed in 0..IDENTITY_INSTANCES {
        let cfg = ExperimentConfig {
            seed: 40_000 + seed,
            mode: FlowMode::U2,
            ..Default::default()
        };
        let p = cfg.instance().unwrap();
        let rep = run_gap_experiment(&cfg, &p, 1e-5).unwrap();
        for r in &rep.records {
            worst = worst.max((r.lasso_flow - r.lasso_opt - r.energy / (r.s * r.s)).abs());
            samples += 1;
        }
    }
    outcome(
        worst <= IDENTITY_TOL,
        format!("max |gap − E/s²| {worst:.1e} over {samples} samples (bound {IDENTITY_TOL:e})"),
    )
}

fn run_cli(args: &[&str], out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_dln-lasso"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn cli_determinism() -> Outcome {
    let runs: [&[&str]; 7] = [
        &["gen", "--seed", "3"],
        &["flow", "--seed", "3", "--mode", "u2"],
        &["flow", "--seed", "3", "--mode", "uv", "--epsilon", "1e-7"],
        &["path", "--seed", "3"],
        &["gap", "--seed", "3"],
        &["sweep", "--seed", "3", "--s-max", "5"],
        &["census", "--seed", "0", "--count", "1000"],
    ];
    let mut files = 0;
    let mut mismatches = Vec::new();
    for args in runs {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        if !run_cli(args, a.path()) || !run_cli(args, b.path()) {
            mismatches.push(format!("{} exited with an error", args[0]));
            continue;
        }
        let mut names: Vec<_> = std::fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        if names.is_empty() {
            mismatches.push(format!("{} wrote nothing", args[0]));
        }
        for name in names {
            files += 1;
            let x = std::fs::read(a.path().join(&name)).unwrap();
            let y = std::fs::read(b.path().join(&name)).unwrap_or_default();
            if x != y {
                mismatches.push(format!("{} {}", args[0], name.to_string_lossy()));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{files} files compared across {} invocations{}",
            runs.len(),
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; differing: {}", mismatches.join(", "))
            }
        ),
    )
}
