//! Runs every config file in a directory and summarizes the final MMDs.
//!
//! Each `*.cfg` file holds one experiment in `key=value` form. A `seeds` key
//! with a comma-separated list expands the file into one run per seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::config::{ConfigPairs, ExperimentConfig, Scenario};
use super::experiment::run_experiment_in;
use crate::error::{Error, Result};
use crate::functionals::FunctionalKind;
use crate::transport::Algorithm;

pub const SUMMARY_HEADER: &str = "scenario,algorithm,functional,seed,final_mmd,stop_iter";

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub algorithm: String,
    pub functional: String,
    pub seed: String,
    /// NaN when the run failed.
    pub final_mmd: f64,
    pub stop_iter: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridReport {
    pub rows: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

impl GridReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// A single grid entry: the source file, the seed, and the resolved config
/// or the reason it could not be resolved.
struct Job {
    source: PathBuf,
    pairs: ConfigPairs,
    resolved: Result<ExperimentConfig>,
}

fn config_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    files.sort();
    Ok(files)
}

fn expand(path: &Path) -> Vec<Job> {
    let pairs = match ConfigPairs::read(path) {
        Ok(p) => p,
        Err(e) => {
            return vec![Job {
                source: path.to_path_buf(),
                pairs: ConfigPairs::new(),
                resolved: Err(e),
            }]
        }
    };
    let mut base = pairs.clone();
    let seeds = match base.remove("seeds") {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect(),
        None => vec![base.get("seed").unwrap_or("0").to_string()],
    };
    seeds
        .into_iter()
        .map(|seed| {
            let mut p = base.clone();
            p.set("seed", seed);
            Job {
                source: path.to_path_buf(),
                resolved: ExperimentConfig::from_pairs(&p),
                pairs: p,
            }
        })
        .collect()
}

fn run_job(job: &Job, out_dir: &Path) -> SummaryRow {
    let raw = |k: &str| job.pairs.get(k).unwrap_or("").to_string();
    let mut row = SummaryRow {
        scenario: raw("scenario"),
        algorithm: raw("algorithm"),
        functional: raw("functional"),
        seed: raw("seed"),
        final_mmd: f64::NAN,
        stop_iter: 0,
        error: None,
    };
    let cfg = match &job.resolved {
        Ok(cfg) => cfg,
        Err(e) => {
            row.error = Some(format!("{}: {e}", job.source.display()));
            return row;
        }
    };
    row.scenario = cfg.scenario.to_string();
    row.algorithm = cfg.algorithm.to_string();
    row.functional = cfg.functional.to_string();
    row.seed = cfg.seed.to_string();
    match run_experiment_in(cfg, &out_dir.join(cfg.run_name())) {
        Ok(report) => {
            row.final_mmd = report.final_mmd;
            row.stop_iter = report.stop_iter;
        }
        Err(e) => row.error = Some(format!("{}: {e}", cfg.run_name())),
    }
    row
}

/// Runs every config in `config_dir` with up to `jobs` runs in parallel and
/// writes `summary.csv` to `out_dir`. Failed runs get a NaN MMD in the
/// summary and a line in `failures.txt`; the remaining runs still execute.
pub fn run_grid(config_dir: &Path, out_dir: &Path, jobs: usize) -> Result<GridReport> {
    let work: Vec<Job> = config_files(config_dir)?.iter().flat_map(|p| expand(p)).collect();
    if work.is_empty() {
        return Err(Error::Config(format!("no configs found in {}", config_dir.display())));
    }
    fs::create_dir_all(out_dir)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SummaryRow>>> = Mutex::new(vec![None; work.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, work.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = work.get(i) else { break };
                let row = run_job(job, out_dir);
                match &row.error {
                    Some(e) => log::error!("{e}"),
                    None => log::info!(
                        "{} {} {} seed {}: final mmd {:.3e} at iteration {}",
                        row.scenario,
                        row.algorithm,
                        row.functional,
                        row.seed,
                        row.final_mmd,
                        row.stop_iter
                    ),
                }
                results.lock().expect("no poisoned runs")[i] = Some(row);
            });
        }
    });
    let rows: Vec<SummaryRow> = results
        .into_inner()
        .expect("no poisoned runs")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();

    let mut csv = String::from(SUMMARY_HEADER);
    csv.push('\n');
    let mut failures = String::new();
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.scenario, r.algorithm, r.functional, r.seed, r.final_mmd, r.stop_iter
        )
        .expect("string write");
        if let Some(e) = &r.error {
            writeln!(failures, "{e}").expect("string write");
        }
    }
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, csv)?;
    if !failures.is_empty() {
        fs::write(out_dir.join("failures.txt"), failures)?;
    }
    Ok(GridReport { rows, summary_path })
}

/// Writes the twelve cells (two scenarios, three functionals, mirrorvt and
/// projvt) as config files with the given seeds.
pub fn write_standard_grid(dir: &Path, seeds: &[u64]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let seed_list = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
    let mut written = Vec::new();
    for scenario in Scenario::ALL {
        for functional in FunctionalKind::ALL {
            for algorithm in [Algorithm::MirrorVt, Algorithm::ProjVt] {
                let cfg = ExperimentConfig::new(scenario, algorithm, functional);
                let text = format!(
                    "scenario={scenario}\nalgorithm={algorithm}\nfunctional={functional}\n\
                     eta={}\nT={}\npatience={}\nN={}\nseeds={seed_list}\n",
                    cfg.eta, cfg.max_iters, cfg.patience, cfg.particles
                );
                let path = dir.join(format!("{scenario}_{algorithm}_{functional}.cfg"));
                fs::write(&path, text)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
