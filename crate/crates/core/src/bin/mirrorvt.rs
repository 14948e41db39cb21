use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mirrorvt::cli::{run_experiment, run_grid, write_standard_grid, ConfigPairs, ExperimentConfig};
use mirrorvt::metrics::RunStatus;

/// Particle transport experiments on the unit disk and the probability simplex.
#[derive(Debug, Parser)]
#[command(name = "mirrorvt", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every *.cfg file in a directory and write summary.csv.
    Grid {
        dir: PathBuf,
        /// Where run directories and summary.csv go; defaults to DIR.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Runs executed in parallel.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Write the twelve standard cells as config files.
    InitGrid {
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// truncated-gaussian-ball or dirichlet-simplex
    #[arg(long)]
    scenario: Option<String>,
    /// vt, projvt, mirrorvt or svmd
    #[arg(long)]
    algorithm: Option<String>,
    /// kl, js or w1
    #[arg(long)]
    functional: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    /// Maximum number of particle updates.
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Number of particles.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Target draws per mixture component.
    #[arg(long)]
    per_component: Option<usize>,
    /// Network width.
    #[arg(long)]
    nw: Option<usize>,
    /// Weight-ball radius.
    #[arg(long)]
    rf: Option<f64>,
    #[arg(long)]
    init_scale: Option<f64>,
    /// tanh or softplus
    #[arg(long)]
    activation: Option<String>,
    /// Conjugate minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshot_every: Option<usize>,
    #[arg(long)]
    warm_start: bool,
    /// Record measured wallclock times in metrics.csv.
    #[arg(long)]
    timing: bool,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

impl RunArgs {
    fn pairs(&self) -> Result<ConfigPairs, mirrorvt::Error> {
        let mut pairs = match &self.config {
            Some(path) => ConfigPairs::read(path)?,
            None => ConfigPairs::new(),
        };
        let mut flags = ConfigPairs::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                flags.set(k, v);
            }
        };
        put("scenario", self.scenario.clone());
        put("algorithm", self.algorithm.clone());
        put("functional", self.functional.clone());
        put("eta", self.eta.map(|v| v.to_string()));
        put("T", self.t.map(|v| v.to_string()));
        put("patience", self.patience.map(|v| v.to_string()));
        put("N", self.n.map(|v| v.to_string()));
        put("per-component", self.per_component.map(|v| v.to_string()));
        put("nw", self.nw.map(|v| v.to_string()));
        put("rf", self.rf.map(|v| v.to_string()));
        put("init-scale", self.init_scale.map(|v| v.to_string()));
        put("activation", self.activation.clone());
        put("batch", self.batch.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("snapshot-every", self.snapshot_every.map(|v| v.to_string()));
        put("warm-start", self.warm_start.then(|| "true".to_string()));
        put("timing", self.timing.then(|| "true".to_string()));
        pairs.merge(&flags);
        Ok(pairs)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Grid { dir, out, jobs }) => {
            let out = out.unwrap_or_else(|| dir.clone());
            run_grid(&dir, &out, jobs).map(|report| {
                println!(
                    "wrote {} ({} runs, {} failed)",
                    report.summary_path.display(),
                    report.rows.len(),
                    report.failures()
                );
            })
        }
        Some(Command::InitGrid { dir, seeds }) => write_standard_grid(&dir, &seeds).map(|files| {
            println!("wrote {} configs to {}", files.len(), dir.display());
        }),
        None => cli
            .run
            .pairs()
            .and_then(|p| ExperimentConfig::from_pairs(&p))
            .and_then(|cfg| run_experiment(&cfg))
            .map(|report| {
                let how = match report.status {
                    RunStatus::EarlyStopped(t) => format!("stopped early at iteration {t}"),
                    _ => format!("completed {} iterations", report.stop_iter),
                };
                println!(
                    "{}: {how}, mmd {:.4e} -> {:.4e}, output in {}",
                    report.config.run_name(),
                    report.initial_mmd,
                    report.final_mmd,
                    report.config.out.display()
                );
            }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
