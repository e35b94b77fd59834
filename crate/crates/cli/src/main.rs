use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gle_lab::error::{ExperimentError, SimError, VolterraError};
use gle_lab::experiment::{
    run, write_outputs, ExperimentKind, ExperimentSpec, Overrides, RunMeta, Scale,
};

/// Numerical experiments for generalized Langevin equations with perturbed
/// memory kernels.
#[derive(Debug, Parser)]
#[command(name = "gle-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Power-law Volterra comparison grid over (a, beta).
    PowerlawGrid(Common),
    /// Exponential Volterra comparison grid against the closed-form rate.
    ExpGrid(Common),
    /// First-order GLE perturbation sweep.
    Gle1Perturb(Common),
    /// Second-order GLE perturbation sweep with a potential.
    Gle2Perturb(Common),
    /// Simulate one GLE ensemble and dump its trajectories.
    Simulate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file overlaid on the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; results go to OUT/<experiment>/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    batches: Option<usize>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = "GLE_LAB_THREADS", default_value_t = 0)]
    threads: usize,
    /// Use the reduced desk-scale preset.
    #[arg(long)]
    desk_scale: bool,
}

impl Command {
    fn split(&self) -> (ExperimentKind, &Common) {
        match self {
            Self::PowerlawGrid(c) => (ExperimentKind::PowerlawGrid, c),
            Self::ExpGrid(c) => (ExperimentKind::ExpGrid, c),
            Self::Gle1Perturb(c) => (ExperimentKind::Gle1Perturb, c),
            Self::Gle2Perturb(c) => (ExperimentKind::Gle2Perturb, c),
            Self::Simulate(c) => (ExperimentKind::Simulate, c),
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_code(e: &ExperimentError) -> u8 {
    match e {
        ExperimentError::Io { .. } => EXIT_IO,
        ExperimentError::Sim(SimError::Divergence { .. })
        | ExperimentError::Volterra(VolterraError::Divergence { .. }) => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

fn resolve(kind: ExperimentKind, c: &Common) -> Result<ExperimentSpec, ExperimentError> {
    let scale = c.desk_scale.then_some(Scale::Desk);
    let mut spec = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| ExperimentError::Io {
                path: path.clone(),
                source: e,
            })?;
            ExperimentSpec::from_toml(kind, scale, &text)?
        }
        None => ExperimentSpec::preset(kind, scale.unwrap_or_default()),
    };
    spec.apply(&Overrides {
        seed: c.seed,
        dt: c.dt,
        t_final: c.t_final,
        batches: c.batches,
    })?;
    spec.validate()?;
    Ok(spec)
}

fn execute(kind: ExperimentKind, c: &Common) -> Result<u8, ExperimentError> {
    let spec = resolve(kind, c)?;
    let start = Instant::now();
    let result = run(&spec)?;
    let meta = RunMeta {
        git_describe: env!("GIT_DESCRIBE").to_string(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };
    let dir = write_outputs(&c.out, &spec, &result, &meta)?;
    eprintln!("{kind}: wrote {}", dir.display());
    if result.diverged() {
        eprintln!("{kind}: some runs diverged; see report.csv");
        return Ok(EXIT_DIVERGED);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = cli.command.split();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match execute(kind, common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
