//! Experiment CLI: `run` one transport case, `sweep` a convergence study,
//! or `check` the quick property suite.
//!
//! Every flag can instead come from a JSON config file (`--config`) whose
//! keys match the flag names; explicit flags override file values.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dg_tracer::cases::Case;
use dg_tracer::error::{Error, Result};
use dg_tracer::runner::{
    run_case, run_property_checks, sweep, version_string, RunConfig,
};
use dg_tracer::scheme::{Form, LimiterKind, Placement};

#[derive(Parser)]
#[command(
    name = "dg-tracer",
    version,
    about = "Conservative discontinuous-Galerkin tracer transport experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one case and write its diagnostics series.
    Run(CaseArgs),
    /// Run one case at several resolutions and fit the convergence slope.
    Sweep(SweepArgs),
    /// Run the quick property-check suite (no files written).
    Check,
}

#[derive(Args)]
struct CaseArgs {
    /// JSON config file with the same keys as these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Case tag: A1-convergence, A1-consistency, A2-convergence,
    /// A2-consistency, A3-slotted or A4-terminator.
    #[arg(long)]
    case: Option<Case>,
    /// Mixing-ratio placement: co-located or staggered (slice meshes only).
    #[arg(long)]
    placement: Option<Placement>,
    /// Polynomial order of the tracer space: 0 or 1.
    #[arg(long)]
    order: Option<usize>,
    /// Transported form: conservative or advective.
    #[arg(long)]
    form: Option<Form>,
    /// Shape limiter: none, mmr or baseline.
    #[arg(long)]
    limiter: Option<LimiterKind>,
    /// Sphere resolution: cells per cubed-sphere panel edge.
    #[arg(long)]
    ne: Option<usize>,
    /// Slice resolution: cells per direction.
    #[arg(long)]
    nx: Option<usize>,
    /// Timestep in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of timesteps (0 records only the initial state).
    #[arg(long)]
    steps: Option<usize>,
    /// Directory for diagnostics.csv, run.json, mesh and field dumps.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Comma-separated mesh resolutions to run.
    #[arg(long, value_delimiter = ',', default_value = "40,60,80")]
    resolutions: Vec<usize>,
}

impl CaseArgs {
    /// File config (if any) overlaid with explicit flags; unset knobs fall
    /// back to the case defaults inside the runner.
    fn build(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("reading {}: {e}", path.display()))
                })?;
                Some(RunConfig::from_json(&text)?)
            }
            None => None,
        };
        let case = self
            .case
            .or(file.as_ref().map(|f| f.case))
            .ok_or_else(|| Error::Config("set --case or provide --config".into()))?;
        let mut cfg = file.unwrap_or_else(|| RunConfig::for_case(case));
        cfg.case = case;
        if let Some(v) = self.placement {
            cfg.placement = v;
        }
        if let Some(v) = self.order {
            cfg.order = v;
        }
        if let Some(v) = self.form {
            cfg.form = v;
        }
        if let Some(v) = self.limiter {
            cfg.limiter = v;
        }
        if self.ne.is_some() {
            cfg.ne = self.ne;
        }
        if self.nx.is_some() {
            cfg.nx = self.nx;
        }
        if self.dt.is_some() {
            cfg.dt = self.dt;
        }
        if self.steps.is_some() {
            cfg.steps = self.steps;
        }
        if self.out_dir.is_some() {
            cfg.out_dir = self.out_dir.clone();
        }
        Ok(cfg)
    }
}

fn cmd_run(args: &CaseArgs) -> Result<()> {
    let config = args.build()?;
    let run = run_case(&config)?;
    let r = &run.resolved;
    println!(
        "{} {} k={} {}{}  resolution {}  dt {} s  {} steps",
        config.case,
        config.placement,
        config.order,
        config.form,
        match config.limiter {
            LimiterKind::None => String::new(),
            other => format!(" +{other}"),
        },
        r.resolution,
        r.dt,
        r.steps,
    );
    println!(
        "rows {}  max \u{0394}\u{03c1}_X {:.3e}  mean \u{0394}\u{03c1}_X {:.3e}  m range [{:.6e}, {:.6e}]",
        run.series.rows.len(),
        run.series.max_delta(),
        run.series.mean_delta(),
        run.series.min_m(),
        run.series.rows.iter().map(|w| w.m_max).fold(f64::NEG_INFINITY, f64::max),
    );
    if let Some(l2) = run.l2_final {
        println!("final L2 error vs initial tracer {l2:.6e}");
    }
    let limited: usize = run.series.rows.iter().map(|w| w.limited_cells).sum();
    let unfixable: usize = run.series.rows.iter().map(|w| w.unfixable_cells).sum();
    if limited + unfixable > 0 {
        println!("limited cells {limited}  unfixable cells {unfixable}");
    }
    if let Some(dir) = &config.out_dir {
        println!("wrote {}", dir.join("diagnostics.csv").display());
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let config = args.case.build()?;
    let result = sweep(&config, &args.resolutions)?;
    println!("{} convergence sweep ({})", config.case, version_string());
    println!("resolution      dx (m)        L2 error");
    for p in &result.points {
        println!("{:>10}  {:>12.4e}  {:>12.6e}", p.resolution, p.dx, p.l2_error);
    }
    println!("fitted slope {:.3}", result.slope);
    if let Some(dir) = &config.out_dir {
        println!("wrote {}", dir.join("sweep.csv").display());
    }
    Ok(())
}

fn cmd_check() -> Result<()> {
    let mut failures = 0;
    for outcome in run_property_checks() {
        let status = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:<40} {}", outcome.name, outcome.detail);
        failures += usize::from(!outcome.passed);
    }
    if failures > 0 {
        return Err(Error::Config(format!("{failures} property check(s) failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Check => cmd_check(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
