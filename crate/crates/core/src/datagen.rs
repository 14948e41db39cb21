//! Seeded samplers for targets and initial particles.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::TargetSampleSet;
use crate::geometry::Domain;
use crate::transport::ParticleSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<f64>,
    pub weights: Vec<f64>,
    pub truncation: Domain,
}

impl GaussianMixtureSpec {
    /// Two isotropic components at `[-1, 0]` and `[1, 0]` with std 0.2,
    /// truncated to the unit disk.
    pub fn two_modes_in_disk() -> Self {
        Self {
            means: vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
            stds: vec![0.2, 0.2],
            weights: vec![0.5, 0.5],
            truncation: Domain::UnitBall(2),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k == 0 || self.stds.len() != k || self.weights.len() != k {
            return Err(Error::Config(
                "mixture needs matching, non-empty means, stds and weights".into(),
            ));
        }
        let d = self.truncation.dim();
        if self.means.iter().any(|m| m.len() != d) {
            return Err(Error::Config(format!("every mean must have dimension {d}")));
        }
        if self.stds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("component stds must be positive".into()));
        }
        validate_weights(&self.weights)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletMixtureSpec {
    pub alphas: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DirichletMixtureSpec {
    /// Three five-dimensional components, each concentrated near one corner.
    pub fn three_corners() -> Self {
        Self {
            alphas: vec![
                vec![50.0, 1.0, 1.0, 1.0, 1.0],
                vec![1.0, 50.0, 1.0, 1.0, 1.0],
                vec![1.0, 1.0, 50.0, 1.0, 1.0],
            ],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    pub fn dim(&self) -> usize {
        self.alphas.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.alphas.len();
        if k == 0 || self.weights.len() != k {
            return Err(Error::Config(
                "mixture needs matching, non-empty alphas and weights".into(),
            ));
        }
        let d = self.dim();
        if d < 2 || self.alphas.iter().any(|a| a.len() != d) {
            return Err(Error::Config(
                "concentration vectors must share a dimension of at least 2".into(),
            ));
        }
        if self.alphas.iter().flatten().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Config("concentration parameters must be positive".into()));
        }
        validate_weights(&self.weights)
    }
}

fn validate_weights(w: &[f64]) -> Result<()> {
    if w.iter().any(|&v| !(v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(
            "mixture weights must be non-negative and sum to 1".into(),
        ));
    }
    Ok(())
}

/// Targets drawn by rejection, plus how many draws of each component survived.
#[derive(Debug, Clone)]
pub struct TruncatedSample {
    pub targets: TargetSampleSet,
    pub survivors: Vec<usize>,
}

/// Draws `n_per_component` points from every component and keeps the ones
/// inside the truncation domain. The survivor count is not topped up.
pub fn sample_truncated_gaussian_mixture<R: Rng + ?Sized>(
    spec: &GaussianMixtureSpec,
    n_per_component: usize,
    rng: &mut R,
) -> Result<TruncatedSample> {
    spec.validate()?;
    let d = spec.truncation.dim();
    let mut kept: Vec<f64> = Vec::new();
    let mut survivors = Vec::with_capacity(spec.means.len());
    for (mean, &std) in spec.means.iter().zip(&spec.stds) {
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let mut count = 0;
        for _ in 0..n_per_component {
            let x = Array1::from_iter(mean.iter().map(|&m| m + normal.sample(rng)));
            if spec.truncation.contains(x.view(), false) {
                kept.extend(x.iter());
                count += 1;
            }
        }
        survivors.push(count);
    }
    let total: usize = survivors.iter().sum();
    if total == 0 {
        return Err(Error::Degenerate(format!(
            "no draws survived truncation to the {}",
            spec.truncation
        )));
    }
    let samples = Array2::from_shape_vec((total, d), kept).expect("row-major buffer");
    Ok(TruncatedSample {
        targets: TargetSampleSet::new(samples, spec.truncation)?,
        survivors,
    })
}

/// One Dirichlet draw by normalizing independent Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Array1<f64>> {
    if alpha.len() < 2 || alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::Config(format!("invalid Dirichlet concentration {alpha:?}")));
    }
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<_>>()?;
    loop {
        let draw = Array1::from_iter(gammas.iter().map(|g| g.sample(rng)));
        let total = draw.sum();
        // all-zero draws only happen for tiny concentrations
        if total > 0.0 {
            return Ok(draw / total);
        }
    }
}

pub fn sample_dirichlet_mixture<R: Rng + ?Sized>(
    spec: &DirichletMixtureSpec,
    n_per_component: usize,
    rng: &mut R,
) -> Result<TargetSampleSet> {
    spec.validate()?;
    let d = spec.dim();
    let mut samples = Array2::zeros((n_per_component * spec.alphas.len(), d));
    let mut rows = samples.rows_mut().into_iter();
    for alpha in &spec.alphas {
        for _ in 0..n_per_component {
            let x = sample_dirichlet(alpha, rng)?;
            rows.next().expect("preallocated").assign(&x);
        }
    }
    TargetSampleSet::new(samples, Domain::Simplex(d))
}

/// Initial particle distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitSpec {
    Dirichlet(Vec<f64>),
    /// Uniform on the centered ball of the given radius.
    UniformBall {
        radius: f64,
    },
}

impl InitSpec {
    /// `Dirichlet(5, ..., 5)` on the simplex, uniform on the radius-0.5 ball.
    pub fn default_for(domain: Domain) -> Self {
        match domain {
            Domain::Simplex(d) => InitSpec::Dirichlet(vec![5.0; d]),
            Domain::UnitBall(_) => InitSpec::UniformBall { radius: 0.5 },
        }
    }
}

fn uniform_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Array1<f64> {
    loop {
        let z = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let n = z.dot(&z).sqrt();
        if n > 0.0 {
            let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
            return z * (r / n);
        }
    }
}

pub fn init_particles<R: Rng + ?Sized>(domain: Domain, n: usize, rng: &mut R, spec: &InitSpec) -> Result<ParticleSet> {
    if n == 0 {
        log::warn!("initializing an empty particle set");
    }
    let d = domain.dim();
    let mut points = Array2::zeros((n, d));
    match (spec, domain) {
        (InitSpec::Dirichlet(alpha), Domain::Simplex(_)) => {
            if alpha.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: alpha.len(),
                });
            }
            for mut row in points.rows_mut() {
                row.assign(&sample_dirichlet(alpha, rng)?);
            }
        }
        (InitSpec::UniformBall { radius }, Domain::UnitBall(_)) => {
            if !(*radius > 0.0 && *radius < 1.0) {
                return Err(Error::Config(format!(
                    "initial radius must lie in (0, 1), got {radius}"
                )));
            }
            for mut row in points.rows_mut() {
                row.assign(&uniform_ball(d, *radius, rng));
            }
        }
        _ => {
            return Err(Error::Config(format!("initializer {spec:?} does not fit the {domain}")));
        }
    }
    ParticleSet::new(points, domain)
}
