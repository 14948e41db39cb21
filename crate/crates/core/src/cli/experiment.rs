//! One experiment: sample targets and particles, run, write the artifacts.
//!
//! Output directory layout:
//!
//! ```text
//! metrics.csv            iter,mmd,objective,clamps,wallclock_ms
//! particles_<iter>.csv   particle_id,x1,...,xd
//! targets.csv            target_id,x1,...,xd
//! run.json               resolved config, status, survivor counts
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{ExperimentConfig, Scenario};
use crate::datagen::{init_particles, sample_dirichlet_mixture, sample_truncated_gaussian_mixture, InitSpec};
use crate::error::{Error, Result};
use crate::functionals::{TargetSampleSet, VariationalFunctional};
use crate::metrics::{HistoryRow, RunStatus};
use crate::transport::{run, ParticleSet, RunOutcome};

pub const METRICS_HEADER: &str = "iter,mmd,objective,clamps,wallclock_ms";

const TARGET_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const RUN_STREAM: u64 = 2;

/// Generator for one purpose within a seeded run. Targets, initial particles
/// and the transport loop draw from separate streams, so runs that differ
/// only in algorithm share their data.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sampled inputs of an experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub targets: TargetSampleSet,
    /// Surviving draws per target component.
    pub survivors: Vec<usize>,
    pub initial: ParticleSet,
    pub functional: VariationalFunctional,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, TARGET_STREAM);
    let (targets, survivors) = match cfg.scenario {
        Scenario::TruncatedGaussianBall => {
            let sample = sample_truncated_gaussian_mixture(&cfg.gaussian_spec(), cfg.per_component, &mut rng)?;
            (sample.targets, sample.survivors)
        }
        Scenario::DirichletSimplex => {
            let spec = cfg.dirichlet_spec();
            let k = spec.alphas.len();
            (
                sample_dirichlet_mixture(&spec, cfg.per_component, &mut rng)?,
                vec![cfg.per_component; k],
            )
        }
    };
    let domain = cfg.domain();
    let initial = init_particles(
        domain,
        cfg.particles,
        &mut stream_rng(cfg.seed, INIT_STREAM),
        &InitSpec::default_for(domain),
    )?;
    let functional = VariationalFunctional::new(cfg.functional, targets.clone())
        .with_batch_size(cfg.batch.min(targets.len()))?
        .with_js_clamp_eps(cfg.js_eps)?;
    Ok(Prepared {
        targets,
        survivors,
        initial,
        functional,
    })
}

/// Runs the transport loop on prepared inputs without touching the disk.
pub fn simulate(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<RunOutcome> {
    run(
        &cfg.transport(),
        prepared.initial.clone(),
        &prepared.functional,
        &mut stream_rng(cfg.seed, RUN_STREAM),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub status: RunStatus,
    pub stop_iter: usize,
    pub initial_mmd: f64,
    pub final_mmd: f64,
    pub kernel_bandwidth: f64,
    pub vfm_solves: usize,
    pub targets: usize,
    pub survivors: Vec<usize>,
    pub elapsed_ms: f64,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_experiment_in(cfg, &cfg.out)
}

/// Like [`run_experiment`] but writes to `dir` instead of `cfg.out`.
pub fn run_experiment_in(cfg: &ExperimentConfig, dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let prepared = prepare(cfg)?;
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    write_points(&dir.join("targets.csv"), "target_id", prepared.targets.samples())?;

    let outcome = simulate(cfg, &prepared)?;
    let history = &outcome.history;
    fs::write(dir.join("metrics.csv"), metrics_csv(&history.rows, cfg.timing))?;
    for snap in &history.snapshots {
        write_points(
            &dir.join(format!("particles_{}.csv", snap.iteration)),
            "particle_id",
            snap.points.view(),
        )?;
    }

    let report = RunReport {
        config: cfg.clone(),
        status: history.status.clone(),
        stop_iter: history.last_iteration(),
        initial_mmd: history.rows.first().map_or(f64::NAN, |r| r.mmd),
        final_mmd: history.final_mmd().unwrap_or(f64::NAN),
        kernel_bandwidth: history.kernel.bandwidth(),
        vfm_solves: history.vfm_solves,
        targets: prepared.targets.len(),
        survivors: prepared.survivors,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    fs::write(dir.join("run.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    if let RunStatus::Aborted(reason) = &history.status {
        return Err(Error::Degenerate(format!("run aborted: {reason}")));
    }
    Ok(report)
}

pub fn metrics_csv(rows: &[HistoryRow], timing: bool) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let ms = if timing { r.wallclock_ms } else { 0.0 };
        writeln!(out, "{},{},{},{},{}", r.iteration, r.mmd, r.objective, r.clamps, ms).expect("string write");
    }
    out
}

fn points_header(id: &str, d: usize) -> String {
    let mut h = id.to_string();
    for k in 1..=d {
        write!(h, ",x{k}").expect("string write");
    }
    h
}

pub fn write_points(path: &Path, id: &str, points: ArrayView2<f64>) -> Result<()> {
    let mut out = points_header(id, points.ncols());
    out.push('\n');
    for (i, row) in points.rows().into_iter().enumerate() {
        write!(out, "{i}").expect("string write");
        for v in row {
            write!(out, ",{v}").expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a file written by [`write_points`], checking the header.
pub fn read_points(path: &Path, id: &str) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let d = header.split(',').count().saturating_sub(1);
    if d == 0 || header != points_header(id, d) {
        return Err(Error::Config(format!(
            "{}: unexpected header `{header}`",
            path.display()
        )));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for (lineno, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 || fields[0] != n.to_string() {
            return Err(Error::Config(format!(
                "{}: malformed row {}",
                path.display(),
                lineno + 2
            )));
        }
        for f in &fields[1..] {
            data.push(
                f.parse::<f64>()
                    .map_err(|_| Error::Config(format!("{}: bad number `{f}`", path.display())))?,
            );
        }
        n += 1;
    }
    Ok(Array2::from_shape_vec((n, d), data).expect("row-major buffer"))
}

/// Snapshot files in `dir`, sorted by iteration.
pub fn snapshot_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let iter = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("particles_"))
            .and_then(|n| n.strip_suffix(".csv"))
            .and_then(|n| n.parse::<usize>().ok());
        if let Some(t) = iter {
            out.push((t, path));
        }
    }
    out.sort();
    Ok(out)
}
