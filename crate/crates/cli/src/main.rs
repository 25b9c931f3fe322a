use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};
use softmin_cbf::sim::{self, RunOutcome, Scenario, ScenarioError};

mod plot;

/// Soft-minimum barrier-function safety filters: scenario runner.
#[derive(Parser, Debug)]
#[command(name = "softmin-cbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its trajectory, summary and plots.
    Run(Common),
    /// Run the scenario over random goals inside the wall.
    Batch(Common),
    /// Check relative degrees and the boundary condition on L_g h.
    Diagnose(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = default_workers(), value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,
    #[arg(long, value_enum, default_value_t = Toggle::On)]
    plots: Toggle,
    /// Number of goals for `batch`.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    goals: u64,
}

fn default_workers() -> u64 {
    std::thread::available_parallelism().map_or(1, |n| n.get() as u64)
}

/// Exit 1: unusable input. Exit 2: the controller or a diagnostic failed.
enum Failure {
    Input(anyhow::Error),
    Controller(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SOFTMIN_CBF_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Batch(c) => cmd_batch(c),
        Command::Diagnose(c) => cmd_diagnose(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Controller(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Scenario::from_path(path).map_err(|e| {
        let e = match e {
            ScenarioError::Parse(m) => anyhow::anyhow!("{}: {m}", path.display()),
            other => anyhow::anyhow!("{}: {other}", path.display()),
        };
        Failure::Input(e)
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_run(dir: &Path, scenario: &Scenario, out: &RunOutcome, plots: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(dir, "trajectory.csv", &out.log.to_csv_string())?;
    write(dir, "summary.json", &serde_json::to_string_pretty(&out.summary)?)?;
    if plots {
        write(dir, "trajectory.svg", &plot::trajectory_svg(&scenario.map_spec(), scenario.goal, &out.log))?;
        write(dir, "barriers.svg", &plot::barriers_svg(&out.log))?;
    }
    Ok(())
}

fn cmd_run(c: &Common) -> Result<(), Failure> {
    let scenario = load(&c.scenario)?;
    match sim::run(&scenario) {
        Ok(out) => {
            write_run(&c.out, &scenario, &out, c.plots == Toggle::On)?;
            info!("status {} after {} steps", out.summary.status, out.summary.steps);
            println!(
                "{}: {} at t = {:.3} s, min h_j = {:.6e}, composite h min = {:.6e}",
                scenario.name, out.summary.status, out.summary.final_time, out.summary.min_h, out.summary.min_composite_h
            );
            Ok(())
        }
        Err(f) => {
            // keep what was logged up to the failure
            fs::create_dir_all(&c.out).map_err(anyhow::Error::from)?;
            write(&c.out, "trajectory.csv", &f.log.to_csv_string())?;
            error!("{f}");
            Err(Failure::Controller(anyhow::Error::new(f)))
        }
    }
}

fn cmd_batch(c: &Common) -> Result<(), Failure> {
    let scenario = load(&c.scenario)?;
    let n = c.goals as usize;
    let goals = sim::sample_goals(&scenario, n, c.seed);
    let single = n == 1;
    let batch = sim::batch_goals(&scenario, &goals, c.seed, c.workers as usize, single)
        .map_err(|e| Failure::Input(e.into()))?;
    fs::create_dir_all(&c.out).map_err(anyhow::Error::from)?;
    for r in &batch.runs {
        let dir = c.out.join("runs").join(format!("run_{:04}", r.index));
        fs::create_dir_all(&dir).map_err(anyhow::Error::from)?;
        write(&dir, "summary.json", &serde_json::to_string_pretty(r)?)?;
    }
    if single {
        let r = &batch.runs[0];
        if let (Some(summary), Some(log)) = (&r.summary, &r.log) {
            let out = RunOutcome { log: log.clone(), summary: summary.clone() };
            write_run(&c.out, &scenario, &out, c.plots == Toggle::On)?;
        }
    }
    let comparison = if scenario.is_cascade() {
        None
    } else {
        sim::run(&scenario)
            .ok()
            .and_then(|o| {
                let states: Vec<Vec<f64>> = o.log.rows.iter().map(|r| r.x.clone()).collect();
                sim::compare_step_timing(&scenario, &states).ok()
            })
    };
    let doc = serde_json::json!({
        "scenario": batch.scenario,
        "seed": batch.seed,
        "counts": batch.counts,
        "min_h_over_runs": batch.min_h_over_runs,
        "timing": batch.timing,
        "timing_comparison": comparison,
        "wall_seconds": batch.wall_seconds,
        "runs": batch.runs,
    });
    write(&c.out, "batch.json", &serde_json::to_string_pretty(&doc)?)?;
    let k = &batch.counts;
    println!(
        "{}: {} runs, {} safe, {} violations, {} goal reached, {} infeasible, {} errors ({:.1} s)",
        batch.scenario, k.runs, k.safe, k.violations, k.goal_reached, k.infeasible, k.errors, batch.wall_seconds
    );
    if k.errors > 0 {
        return Err(Failure::Controller(anyhow::anyhow!("{} runs stopped on controller errors", k.errors)));
    }
    Ok(())
}

fn cmd_diagnose(c: &Common) -> Result<(), Failure> {
    let scenario = load(&c.scenario)?;
    let report = sim::diagnose(&scenario, c.seed).map_err(|e| Failure::Controller(e.into()))?;
    fs::create_dir_all(&c.out).map_err(anyhow::Error::from)?;
    write(&c.out, "diagnostics.json", &serde_json::to_string_pretty(&report)?)?;
    let failing: Vec<usize> = report.relative_degree.iter().filter(|d| !d.pass).map(|d| d.chain).collect();
    println!(
        "{}: relative degree {} ({} chains), boundary samples kept {}, min |L_g h| {}",
        report.scenario,
        if failing.is_empty() { "ok" } else { "FAILED" },
        report.relative_degree.len(),
        report.boundary.kept_count,
        report.boundary.min_lg_h_norm.map_or("n/a".to_string(), |v| format!("{v:.3e}")),
    );
    if !failing.is_empty() {
        return Err(Failure::Controller(anyhow::anyhow!("relative-degree check failed for chains {failing:?}")));
    }
    Ok(())
}
