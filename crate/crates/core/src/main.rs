use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dln_lasso::experiments::{
    reference_path, run_epsilon_sweep, run_gap_experiment, run_monotone_census, ExperimentConfig,
};
use dln_lasso::flow::{simulate, FlowMode};
use dln_lasso::output::{write_atomic, write_string};
use dln_lasso::{Error, QuadraticProblem, Result};

#[derive(Parser)]
#[command(
    name = "dln-lasso",
    version,
    about = "Diagonal linear network flows against exact lasso paths"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance to instance.json
    Gen(Common),
    /// Simulate the flow and write trajectory.csv
    Flow(Common),
    /// Trace the exact lasso path and write path.json and path.csv
    Path(Common),
    /// Compare the averaged flow with the path and write gap.csv
    Gap(Common),
    /// Run the gap experiment for several epsilons and write sweep.json
    Sweep(Common),
    /// Classify the signed paths of many instances and write census.csv and census.json
    Census(CensusArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    U2,
    Uv,
}

impl From<ModeArg> for FlowMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::U2 => FlowMode::U2,
            ModeArg::Uv => FlowMode::Uv,
        }
    }
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, value_enum, default_value = "uv")]
    mode: ModeArg,
    /// Initialization scale; repeat for a sweep
    #[arg(long = "epsilon")]
    epsilon: Vec<f64>,
    #[arg(long = "s-max", default_value_t = 10.0)]
    s_max: f64,
    /// Samples per unit of rescaled time
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[arg(long = "rel-tol", default_value_t = 1e-10)]
    rel_tol: f64,
    #[arg(long = "abs-tol", default_value_t = 1e-12)]
    abs_tol: f64,
    /// Load the problem from a JSON file instead of drawing one from --seed
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CensusArgs {
    /// First seed; instance i uses seed + i
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 3)]
    n: usize,
    /// Classify on (0, s_max]; the whole path when omitted
    #[arg(long = "s-max")]
    s_max: Option<f64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn config(&self, default_eps: &[f64]) -> ExperimentConfig {
        ExperimentConfig {
            seed: self.seed,
            d: self.d,
            n: self.n,
            mode: self.mode.into(),
            epsilons: if self.epsilon.is_empty() {
                default_eps.to_vec()
            } else {
                self.epsilon.clone()
            },
            s_max: self.s_max,
            samples_per_unit_s: self.grid,
            init: None,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
        }
    }

    fn problem(&self) -> Result<QuadraticProblem> {
        match &self.instance {
            Some(file) => QuadraticProblem::from_json(&fs::read_to_string(file)?),
            None => dln_lasso::random_instance(self.seed, self.n, self.d),
        }
    }

    fn single_epsilon(&self, cfg: &ExperimentConfig) -> Result<f64> {
        match cfg.epsilons.as_slice() {
            [e] => Ok(*e),
            _ => Err(Error::Input(
                "this subcommand takes a single --epsilon; use sweep for several".into(),
            )),
        }
    }
}

fn s_grid(s_max: f64, per_unit: usize) -> Vec<f64> {
    let n = (s_max * per_unit as f64).ceil().max(1.0) as usize;
    (0..=n).map(|k| s_max * k as f64 / n as f64).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let p = a.problem()?;
            prepare(&a.out)?;
            write_string(&a.out.join("instance.json"), &(p.to_json()? + "\n"))
        }
        Command::Flow(a) => {
            let cfg = a.config(&[1e-5]);
            cfg.validate()?;
            let eps = a.single_epsilon(&cfg)?;
            let p = a.problem()?;
            let traj = simulate(&p, &cfg.flow_config(eps, p.dim()))?;
            let meta = traj.metadata(a.instance.is_none().then_some(a.seed));
            prepare(&a.out)?;
            write_atomic(&a.out.join("trajectory.csv"), |w| traj.write_csv(&meta, w))
        }
        Command::Path(a) => {
            let cfg = a.config(&[1e-5]);
            cfg.validate()?;
            let p = a.problem()?;
            let path = reference_path(&p, cfg.mode, cfg.s_max)?;
            prepare(&a.out)?;
            write_string(&a.out.join("path.json"), &(path.base().to_json()? + "\n"))?;
            let grid = s_grid(cfg.s_max, cfg.samples_per_unit_s);
            write_atomic(&a.out.join("path.csv"), |w| path.write_csv(&grid, w))
        }
        Command::Gap(a) => {
            let cfg = a.config(&[1e-5]);
            cfg.validate()?;
            let eps = a.single_epsilon(&cfg)?;
            let p = a.problem()?;
            let report = run_gap_experiment(&cfg, &p, eps)?;
            for s in &report.excluded {
                eprintln!("gap: Lasso_* ≤ 1e-12 at s = {s}, sample excluded");
            }
            prepare(&a.out)?;
            let seed = a.instance.is_none().then_some(a.seed);
            write_atomic(&a.out.join("gap.csv"), |w| report.write_csv(seed, w))
        }
        Command::Sweep(a) => {
            let cfg = a.config(&[1e-3, 1e-5, 1e-7]);
            let p = a.problem()?;
            let (summary, _) = run_epsilon_sweep(&cfg, &p)?;
            prepare(&a.out)?;
            write_string(
                &a.out.join("sweep.json"),
                &(serde_json::to_string_pretty(&summary)? + "\n"),
            )
        }
        Command::Census(a) => {
            let report = run_monotone_census(
                a.seed,
                a.count,
                a.d,
                a.n,
                a.s_max.unwrap_or(f64::INFINITY),
            )?;
            for e in report.entries.iter().filter(|e| e.message.is_some()) {
                eprintln!("census: seed {} failed: {}", e.seed, e.message.as_deref().unwrap_or(""));
            }
            prepare(&a.out)?;
            write_atomic(&a.out.join("census.csv"), |w| report.write_csv(w))?;
            write_string(&a.out.join("census.json"), &(report.to_json()? + "\n"))
        }
    }
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_solver_error() { 2 } else { 1 })
        }
    }
}
