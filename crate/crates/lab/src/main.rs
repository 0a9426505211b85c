use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use turnpike_core::Error as CoreError;
use turnpike_lab::commands::{self, CaseSelector, Context};
use turnpike_lab::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "turnpike-lab", version, about = "Turnpike experiments for periodically oscillating parabolic control problems")]
struct Cli {
    /// Experiment config (JSON) or a run manifest. Defaults to the built-in reference setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "TURNPIKE_LAB_JOBS")]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct CaseArgs {
    /// Period of the oscillating coefficients (defaults to the first entry of epsilon_list).
    #[arg(long, conflicts_with = "homogenized")]
    epsilon: Option<f64>,
    /// Use the homogenized coefficients.
    #[arg(long)]
    homogenized: bool,
}

impl From<CaseArgs> for CaseSelector {
    fn from(a: CaseArgs) -> Self {
        CaseSelector { epsilon: a.epsilon, homogenized: a.homogenized }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evolutive optimal control problem.
    Solve(CaseArgs),
    /// Steady optimal control problem.
    Steady(CaseArgs),
    /// Riccati feedback cross-check, stationary residuals and gap decay.
    Riccati,
    /// Turnpike report for one ε.
    Turnpike(CaseArgs),
    /// All ε plus the homogenized problem.
    Sweep,
    /// State norms of every ε against the common tube.
    Tube,
    /// Null-control cost sweep.
    Hum,
    /// Reference checks.
    Oracle,
    /// Print the resolved config as JSON.
    Config,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::Steady(_) => "steady",
            Command::Riccati => "riccati",
            Command::Turnpike(_) => "turnpike",
            Command::Sweep => "sweep",
            Command::Tube => "tube",
            Command::Hum => "hum",
            Command::Oracle => "oracle",
            Command::Config => "config",
        }
    }
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<CoreError>(),
            Some(
                CoreError::TooFewCells(_)
                    | CoreError::InvalidTimeGrid { .. }
                    | CoreError::Ellipticity { .. }
                    | CoreError::UnderResolved { .. }
                    | CoreError::InvalidRecipe(_)
                    | CoreError::NotPeriodic
                    | CoreError::InvalidWindow { .. }
                    | CoreError::InvalidArgument(_)
            )
        )
    })
}

fn report(kind: &str, err: &anyhow::Error, dir: Option<&PathBuf>) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": format!("{err:#}") } });
    eprintln!("{body}");
    if let Some(dir) = dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), body.to_string() + "\n");
        }
    }
}

fn run(cli: &Cli, ctx: &Context) -> Result<bool> {
    let path = match &cli.command {
        Command::Solve(a) => commands::solve(ctx, (*a).into())?,
        Command::Steady(a) => commands::steady(ctx, (*a).into())?,
        Command::Riccati => commands::riccati(ctx)?,
        Command::Turnpike(a) => commands::turnpike(ctx, (*a).into())?,
        Command::Sweep => commands::sweep(ctx)?,
        Command::Tube => commands::tube(ctx)?,
        Command::Hum => commands::hum(ctx)?,
        Command::Config => {
            let mut cfg = ctx.cfg.clone();
            cfg.output_dir = ctx.out.clone();
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            return Ok(true);
        }
        Command::Oracle => {
            let (path, ok) = commands::oracle(ctx)?;
            if !ctx.quiet {
                eprintln!("wrote {}", path.display());
            }
            return Ok(ok);
        }
    };
    if !ctx.quiet {
        eprintln!("wrote {}", path.display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::reference()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            report("validation", &e, None);
            return ExitCode::from(2);
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            report("validation", &anyhow::anyhow!("--jobs must be positive"), None);
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            report("validation", &anyhow::anyhow!("thread pool: {e}"), None);
            return ExitCode::from(2);
        }
    }
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let ctx = Context { cfg, out, quiet: cli.quiet };
    match run(&cli, &ctx) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let (kind, code) = if is_validation(&e) { ("validation", 2) } else { ("solver", 1) };
            report(kind, &e, Some(&ctx.out.join(cli.command.name())));
            ExitCode::from(code)
        }
    }
}
