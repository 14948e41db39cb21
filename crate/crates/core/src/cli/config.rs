//! Flat `key=value` experiment configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! scenario = dirichlet-simplex
//! algorithm = mirrorvt
//! functional = kl
//! T = 500
//! ```
//!
//! Keys are case-insensitive and `_` is accepted for `-`. Sources are merged
//! in order, so values given later (command-line flags) override earlier ones
//! (the config file).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::{DirichletMixtureSpec, GaussianMixtureSpec};
use crate::error::{Error, Result};
use crate::functionals::FunctionalKind;
use crate::geometry::{Domain, MirrorMap};
use crate::transport::{Algorithm, TransportConfig};
use crate::vfm::VfmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Two-component Gaussian mixture on the unit disk.
    TruncatedGaussianBall,
    /// Three-component Dirichlet mixture on the 5-simplex.
    DirichletSimplex,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::TruncatedGaussianBall, Scenario::DirichletSimplex];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::TruncatedGaussianBall => "truncated-gaussian-ball",
            Scenario::DirichletSimplex => "dirichlet-simplex",
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            Scenario::TruncatedGaussianBall => Domain::UnitBall(2),
            Scenario::DirichletSimplex => Domain::Simplex(5),
        }
    }

    fn default_particles(&self) -> usize {
        match self {
            Scenario::TruncatedGaussianBall => 100,
            Scenario::DirichletSimplex => 50,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "truncated-gaussian-ball" | "ball" => Ok(Scenario::TruncatedGaussianBall),
            "dirichlet-simplex" | "simplex" => Ok(Scenario::DirichletSimplex),
            other => Err(Error::Config(format!(
                "unknown scenario `{other}` (expected truncated-gaussian-ball or dirichlet-simplex)"
            ))),
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub functional: FunctionalKind,
    pub eta: f64,
    #[serde(rename = "T")]
    pub max_iters: usize,
    pub patience: usize,
    /// Number of particles.
    #[serde(rename = "N")]
    pub particles: usize,
    /// Target draws per mixture component, before truncation.
    pub per_component: usize,
    pub vfm: VfmConfig,
    /// Conjugate minibatch size.
    pub batch: usize,
    pub js_eps: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub snapshot_every: usize,
    pub warm_start: bool,
    /// Write measured wallclock times to metrics.csv instead of zeros.
    pub timing: bool,
}

impl ExperimentConfig {
    /// Settings for the given cell with every other value at its default.
    pub fn new(scenario: Scenario, algorithm: Algorithm, functional: FunctionalKind) -> Self {
        let transport = TransportConfig::new(algorithm, scenario.domain());
        Self {
            scenario,
            algorithm,
            functional,
            eta: transport.eta,
            max_iters: transport.max_iters,
            patience: transport.patience,
            particles: scenario.default_particles(),
            per_component: scenario.default_particles(),
            vfm: transport.vfm,
            batch: 32,
            js_eps: 1e-6,
            seed: 0,
            out: PathBuf::from("out"),
            snapshot_every: transport.snapshot_every,
            warm_start: false,
            timing: false,
        }
    }

    /// Resolves merged key/value pairs. `scenario`, `algorithm` and
    /// `functional` are required; defaults that depend on them are filled in
    /// before the remaining keys are applied.
    pub fn from_pairs(pairs: &ConfigPairs) -> Result<Self> {
        let required = |key: &str| {
            pairs
                .get(key)
                .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
        };
        let mut cfg = Self::new(
            required("scenario")?.parse()?,
            required("algorithm")?.parse()?,
            required("functional")?.parse()?,
        );
        for (key, value) in pairs.iter() {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))
        }
        fn flag(key: &str, value: &str) -> Result<bool> {
            match value.to_ascii_lowercase().as_str() {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Config(format!("`{key}` expects true or false, got `{value}`"))),
            }
        }
        match key {
            "scenario" | "algorithm" | "functional" => {}
            "eta" => self.eta = num(key, value)?,
            "t" => self.max_iters = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "n" => self.particles = num(key, value)?,
            "per-component" => self.per_component = num(key, value)?,
            "nw" => self.vfm.width = num(key, value)?,
            "rf" => self.vfm.radius = num(key, value)?,
            "init-scale" => self.vfm.init_scale = Some(num(key, value)?),
            "activation" => self.vfm.activation = value.parse()?,
            "batch" => self.batch = num(key, value)?,
            "js-eps" => self.js_eps = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "snapshot-every" => self.snapshot_every = num(key, value)?,
            "warm-start" => self.warm_start = flag(key, value)?,
            "timing" => self.timing = flag(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.transport().validate()?;
        if self.particles == 0 {
            return Err(Error::Config("at least one particle is required".into()));
        }
        if self.per_component == 0 {
            return Err(Error::Config(
                "at least one target draw per component is required".into(),
            ));
        }
        if self.batch == 0 {
            return Err(Error::Config("conjugate batch size must be at least 1".into()));
        }
        if self.algorithm == Algorithm::Svmd
            && (self.scenario != Scenario::DirichletSimplex || self.functional != FunctionalKind::Kl)
        {
            return Err(Error::Config(
                "svmd needs an analytic target: use the dirichlet-simplex scenario with kl".into(),
            ));
        }
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        self.scenario.domain()
    }

    pub fn gaussian_spec(&self) -> GaussianMixtureSpec {
        GaussianMixtureSpec::two_modes_in_disk()
    }

    pub fn dirichlet_spec(&self) -> DirichletMixtureSpec {
        DirichletMixtureSpec::three_corners()
    }

    pub fn transport(&self) -> TransportConfig {
        let domain = self.domain();
        TransportConfig {
            algorithm: self.algorithm,
            eta: self.eta,
            max_iters: self.max_iters,
            patience: self.patience,
            vfm: self.vfm,
            map: MirrorMap::natural(domain),
            snapshot_every: self.snapshot_every,
            seed: self.seed,
            warm_start: self.warm_start,
            svmd_target: (self.algorithm == Algorithm::Svmd).then(|| self.dirichlet_spec()),
        }
    }

    /// Short name used for run directories, e.g. `dirichlet-simplex_mirrorvt_kl_s3`.
    pub fn run_name(&self) -> String {
        format!(
            "{}_{}_{}_s{}",
            self.scenario, self.algorithm, self.functional, self.seed
        )
    }
}

/// Ordered key/value pairs with later insertions overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigPairs(BTreeMap<String, String>);

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('_', "-")
}

impl ConfigPairs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
            if k.trim().is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            out.set(k, v.trim());
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.0.insert(normalize_key(key), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(&normalize_key(key)).map(String::as_str)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.0.remove(&normalize_key(key))
    }

    /// Overrides `self` with every pair of `other`.
    pub fn merge(&mut self, other: &ConfigPairs) {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
