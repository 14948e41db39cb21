//! Particle pushers and the outer optimization loop.
//!
//! Every pusher maps a particle set to a new one of the same size:
//!
//! * [`vt_step`]: `x <- x - eta grad f(x)`, no domain handling.
//! * [`projvt_step`]: the same step followed by Euclidean projection.
//! * [`mirrorvt_step`]: map to the dual, move along
//!   `(Hess phi)^{-1} grad f`, map back.
//! * [`svmd_step`]: kernelized dual step for KL against an analytic target.

mod svmd;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use svmd::{svmd_step, DirichletMixtureScore, DualCloud, DualScore};

use crate::datagen::DirichletMixtureSpec;
use crate::error::{check_dim, Error, Result};
use crate::functionals::{FunctionalKind, VariationalFunctional};
use crate::geometry::{Domain, MirrorKind, MirrorMap};
use crate::metrics::{median_heuristic, mmd2, should_stop, HistoryRow, Kernel, RunHistory, RunStatus, Snapshot};
use crate::vfm::{vfm_refit, vfm_run, ShallowNet, VfmConfig};

/// `N` points in `d` dimensions tagged with their domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    points: Array2<f64>,
    domain: Domain,
    iteration: usize,
}

impl ParticleSet {
    pub fn new(points: Array2<f64>, domain: Domain) -> Result<Self> {
        check_dim(domain.dim(), points.ncols())?;
        Ok(Self {
            points,
            domain,
            iteration: 0,
        })
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn all_interior(&self) -> bool {
        self.points.rows().into_iter().all(|r| self.domain.contains(r, true))
    }

    pub fn all_in_closure(&self) -> bool {
        self.points.rows().into_iter().all(|r| self.domain.contains(r, false))
    }

    pub(crate) fn advanced(&self, points: Array2<f64>) -> Self {
        Self {
            points,
            domain: self.domain,
            iteration: self.iteration + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Vt,
    ProjVt,
    MirrorVt,
    Svmd,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Vt => "vt",
            Algorithm::ProjVt => "projvt",
            Algorithm::MirrorVt => "mirrorvt",
            Algorithm::Svmd => "svmd",
        }
    }

    pub fn uses_vfm(&self) -> bool {
        !matches!(self, Algorithm::Svmd)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vt" => Ok(Algorithm::Vt),
            "projvt" => Ok(Algorithm::ProjVt),
            "mirrorvt" => Ok(Algorithm::MirrorVt),
            "svmd" => Ok(Algorithm::Svmd),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected vt, projvt, mirrorvt or svmd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportConfig {
    pub algorithm: Algorithm,
    pub eta: f64,
    pub max_iters: usize,
    pub patience: usize,
    pub vfm: VfmConfig,
    pub map: MirrorMap,
    /// Iterations between particle snapshots; 0 keeps only the first and last.
    pub snapshot_every: usize,
    pub seed: u64,
    /// Continue each VFM solve from the previous network instead of a fresh one.
    pub warm_start: bool,
    /// Analytic target for the kernelized mode.
    pub svmd_target: Option<DirichletMixtureSpec>,
}

impl TransportConfig {
    pub fn new(algorithm: Algorithm, domain: Domain) -> Self {
        let eta = match algorithm {
            Algorithm::MirrorVt | Algorithm::Svmd => 0.1,
            Algorithm::Vt | Algorithm::ProjVt => 0.01,
        };
        Self {
            algorithm,
            eta,
            max_iters: 500,
            patience: 20,
            vfm: VfmConfig::default(),
            map: MirrorMap::natural(domain),
            snapshot_every: 25,
            seed: 0,
            warm_start: false,
            svmd_target: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "step size must be non-negative, got {}",
                self.eta
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("at least one iteration is required".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        self.vfm.validate()
    }
}

/// Restricts a primal gradient to dual coordinates. On the simplex the free
/// coordinates are the first `d - 1`, with `x_d = 1 - sum x_i`, so the
/// gradient of `x~ -> f(x~, 1 - sum x~)` is `g_i - g_d`.
fn reduce_gradient(map: &MirrorMap, g: ArrayView1<f64>) -> Array1<f64> {
    match map.kind {
        MirrorKind::EntropicSimplex => {
            let last = g[g.len() - 1];
            g.slice(s![..g.len() - 1]).mapv(|v| v - last)
        }
        _ => g.to_owned(),
    }
}

pub fn vt_step(particles: &ParticleSet, net: &ShallowNet, eta: f64) -> ParticleSet {
    let grads = net.grad_input_batch(particles.points());
    let mut next = particles.points.clone();
    next.scaled_add(-eta, &grads);
    particles.advanced(next)
}

pub fn projvt_step(particles: &ParticleSet, net: &ShallowNet, eta: f64) -> ParticleSet {
    let mut moved = vt_step(particles, net, eta);
    let domain = particles.domain;
    for mut row in moved.points.rows_mut() {
        let p = domain.project(row.view());
        row.assign(&p);
    }
    moved
}

pub fn mirrorvt_step(particles: &ParticleSet, net: &ShallowNet, eta: f64, map: &MirrorMap) -> Result<ParticleSet> {
    check_dim(map.primal_dim(), particles.dim())?;
    let grads = net.grad_input_batch(particles.points());
    let mut next = Array2::zeros(particles.points.dim());
    for ((x, g), mut out) in particles
        .points
        .rows()
        .into_iter()
        .zip(grads.rows())
        .zip(next.rows_mut())
    {
        let mut y = map.grad_phi(x)?;
        let v = map.inv_hessian_apply(x, reduce_gradient(map, g).view())?;
        y.scaled_add(-eta, &v);
        out.assign(&map.grad_phi_star(y.view()));
    }
    Ok(particles.advanced(next))
}

/// Outcome of [`run`]: the history and the particles at the last iteration.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub history: RunHistory,
    pub particles: ParticleSet,
}

/// Stepwise driver behind [`run`]. Owns the particle state, the latest fitted
/// test function and the frozen MMD kernel.
#[derive(Debug, Clone)]
pub struct Transporter {
    config: TransportConfig,
    fun: VariationalFunctional,
    particles: ParticleSet,
    kernel: Kernel,
    net: Option<ShallowNet>,
    score: Option<DirichletMixtureScore>,
    vfm_solves: usize,
}

impl Transporter {
    /// Validates the setup, freezes the MMD bandwidth, and fits the first
    /// test function on the initial particles.
    pub fn new<R: Rng + ?Sized>(
        config: TransportConfig,
        initial: ParticleSet,
        fun: &VariationalFunctional,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let domain = initial.domain();
        if fun.target().domain() != domain {
            return Err(Error::Config(format!(
                "targets live on the {} but particles on the {domain}",
                fun.target().domain()
            )));
        }
        if config.map.domain != domain {
            return Err(Error::Config(format!(
                "mirror map is defined on the {}",
                config.map.domain
            )));
        }
        if initial.is_empty() {
            return Err(Error::Degenerate("cannot transport an empty particle set".into()));
        }
        let score = match config.algorithm {
            Algorithm::Svmd => {
                if fun.kind() != FunctionalKind::Kl {
                    return Err(Error::Config(
                        "the kernelized mode supports only the KL functional".into(),
                    ));
                }
                if config.map.kind != MirrorKind::EntropicSimplex {
                    return Err(Error::Config(
                        "the kernelized mode needs the entropic simplex map and a Dirichlet-mixture target".into(),
                    ));
                }
                let spec = config.svmd_target.as_ref().ok_or_else(|| {
                    Error::Config("the kernelized mode needs an analytic Dirichlet-mixture target".into())
                })?;
                let score = DirichletMixtureScore::new(spec)?;
                check_dim(domain.dim(), score.primal_dim())?;
                Some(score)
            }
            _ => None,
        };
        if matches!(config.algorithm, Algorithm::MirrorVt | Algorithm::Svmd)
            && config.map.kind != MirrorKind::Identity
            && !initial.all_interior()
        {
            return Err(Error::Boundary {
                domain: domain.to_string(),
            });
        }
        if config.eta > config.map.alpha {
            log::warn!(
                "step size {} exceeds the metric lower bound {}; stability is not checked",
                config.eta,
                config.map.alpha
            );
        }
        let kernel = Kernel::rbf(median_heuristic(initial.points(), fun.target().samples())?)?;
        let mut this = Self {
            config,
            fun: fun.clone(),
            particles: initial,
            kernel,
            net: None,
            score,
            vfm_solves: 0,
        };
        if this.config.algorithm.uses_vfm() {
            this.fit(rng)?;
        }
        Ok(this)
    }

    fn fit<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let points = self.particles.points();
        let net = match self.net.take() {
            Some(mut prev) if self.config.warm_start => {
                prev.reanchor();
                vfm_refit(prev, points, &self.fun, rng)
            }
            _ => vfm_run(points, &self.fun, &self.config.vfm, rng)?,
        };
        self.net = Some(net);
        self.vfm_solves += 1;
        Ok(())
    }

    pub fn config(&self) -> &TransportConfig {
        &self.config
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn net(&self) -> Option<&ShallowNet> {
        self.net.as_ref()
    }

    pub fn functional(&self) -> &VariationalFunctional {
        &self.fun
    }

    pub fn vfm_solves(&self) -> usize {
        self.vfm_solves
    }

    /// Metrics of the current particles. Wallclock is left at zero.
    pub fn measure(&self) -> Result<HistoryRow> {
        let mmd = mmd2(self.particles.points(), self.fun.target().samples(), &self.kernel)?;
        let (objective, clamps) = match &self.net {
            Some(net) => {
                let est = self.fun.objective_estimate(net, self.particles.points());
                (est.value, est.clamped)
            }
            None => (f64::NAN, 0),
        };
        Ok(HistoryRow {
            iteration: self.particles.iteration(),
            mmd,
            objective,
            clamps,
            wallclock_ms: 0.0,
            all_interior: self.particles.all_interior(),
        })
    }

    /// One outer iteration: refit the test function (after the first
    /// iteration), push the particles, and measure.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<HistoryRow> {
        if self.config.algorithm.uses_vfm() && self.particles.iteration() > 0 {
            self.fit(rng)?;
        }
        let eta = self.config.eta;
        self.particles = match self.config.algorithm {
            Algorithm::Vt => vt_step(&self.particles, self.net.as_ref().expect("fitted"), eta),
            Algorithm::ProjVt => projvt_step(&self.particles, self.net.as_ref().expect("fitted"), eta),
            Algorithm::MirrorVt => mirrorvt_step(
                &self.particles,
                self.net.as_ref().expect("fitted"),
                eta,
                &self.config.map,
            )?,
            Algorithm::Svmd => svmd_step(
                &self.particles,
                &self.config.map,
                &self.kernel,
                self.score.as_ref().expect("validated"),
                eta,
            )?,
        };
        self.measure()
    }
}

fn wants_snapshot(config: &TransportConfig, iteration: usize) -> bool {
    iteration == 0 || (config.snapshot_every > 0 && iteration.is_multiple_of(config.snapshot_every))
}

/// Runs up to `max_iters` outer iterations with MMD-based early stopping.
///
/// Configuration problems are returned as errors. A failure inside the loop
/// ends the run with [`RunStatus::Aborted`] and keeps the history so far.
pub fn run<R: Rng + ?Sized>(
    config: &TransportConfig,
    initial: ParticleSet,
    fun: &VariationalFunctional,
    rng: &mut R,
) -> Result<RunOutcome> {
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64() * 1e3;

    let mut driver = Transporter::new(config.clone(), initial, fun, rng)?;
    let mut history = RunHistory::new(*driver.kernel());
    let mut row = driver.measure()?;
    row.wallclock_ms = elapsed();
    history.push(row);
    history.snapshots.push(Snapshot {
        iteration: 0,
        points: driver.particles().points().to_owned(),
    });

    for _ in 0..config.max_iters {
        match driver.advance(rng) {
            Ok(mut row) => {
                row.wallclock_ms = elapsed();
                let t = row.iteration;
                history.push(row);
                if wants_snapshot(config, t) {
                    history.snapshots.push(Snapshot {
                        iteration: t,
                        points: driver.particles().points().to_owned(),
                    });
                }
                if should_stop(&history.rows, config.patience) {
                    history.status = RunStatus::EarlyStopped(t);
                    break;
                }
            }
            Err(e) => {
                log::error!("run aborted at iteration {}: {e}", driver.particles().iteration() + 1);
                history.status = RunStatus::Aborted(e.to_string());
                break;
            }
        }
    }

    let last = driver.particles().iteration();
    if history.snapshots.last().map(|s| s.iteration) != Some(last) {
        history.snapshots.push(Snapshot {
            iteration: last,
            points: driver.particles().points().to_owned(),
        });
    }
    history.vfm_solves = driver.vfm_solves();
    Ok(RunOutcome {
        history,
        particles: driver.particles().clone(),
    })
}
