//! Objective functionals in variational form, `F(p) = sup_f E_p f - F*(f)`,
//! with the target distribution represented by a fixed sample set.
//!
//! | kind | conjugate `F*(f)` |
//! |------|-------------------|
//! | KL | `log E exp(f)` |
//! | JS | `-1/2 E log(1 - 2 exp(2f)) - 1/2 log 2` |
//! | W1 | `E f`, with `f` 1-Lipschitz |
//!
//! Expectations are over the target samples. The JS logarithm is only defined
//! for `f < -log(2)/2`; its argument is clamped from below at `js_clamp_eps`
//! and the number of clamped samples is reported alongside the value.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::vfm::ShallowNet;

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_JS_CLAMP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalKind {
    Kl,
    Js,
    W1,
}

impl FunctionalKind {
    pub const ALL: [FunctionalKind; 3] = [FunctionalKind::Kl, FunctionalKind::Js, FunctionalKind::W1];

    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionalKind::Kl => "kl",
            FunctionalKind::Js => "js",
            FunctionalKind::W1 => "w1",
        }
    }
}

impl fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(FunctionalKind::Kl),
            "js" => Ok(FunctionalKind::Js),
            "w1" | "wasserstein" => Ok(FunctionalKind::W1),
            other => Err(Error::Config(format!(
                "unknown functional `{other}` (expected kl, js or w1)"
            ))),
        }
    }
}

/// Draws representing the target distribution, all inside the domain closure.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSampleSet {
    samples: Array2<f64>,
    domain: Domain,
}

impl TargetSampleSet {
    pub fn new(samples: Array2<f64>, domain: Domain) -> Result<Self> {
        if samples.ncols() != domain.dim() {
            return Err(Error::Dimension {
                expected: domain.dim(),
                found: samples.ncols(),
            });
        }
        if samples.nrows() == 0 {
            return Err(Error::Degenerate("target sample set is empty".into()));
        }
        if let Some(i) = samples.rows().into_iter().position(|row| !domain.contains(row, false)) {
            return Err(Error::Config(format!("target sample {i} lies outside the {domain}")));
        }
        Ok(Self { samples, domain })
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }
}

/// A conjugate evaluation together with the number of JS-clamped samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conjugate {
    pub value: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveEstimate {
    pub value: f64,
    pub clamped: usize,
}

#[derive(Debug, Clone)]
pub struct VariationalFunctional {
    kind: FunctionalKind,
    target: TargetSampleSet,
    batch_size: usize,
    js_clamp_eps: f64,
    w1_lipschitz_bound: f64,
}

fn log_mean_exp(f: ArrayView1<f64>) -> f64 {
    let m = f.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    let s: f64 = f.iter().map(|&v| (v - m).exp()).sum();
    m + (s / f.len() as f64).ln()
}

impl VariationalFunctional {
    /// Uses the default minibatch size (capped at the number of targets).
    pub fn new(kind: FunctionalKind, target: TargetSampleSet) -> Self {
        let batch_size = DEFAULT_BATCH_SIZE.min(target.len());
        Self {
            kind,
            target,
            batch_size,
            js_clamp_eps: DEFAULT_JS_CLAMP_EPS,
            w1_lipschitz_bound: 1.0,
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Result<Self> {
        if batch_size == 0 || batch_size > self.target.len() {
            return Err(Error::Config(format!(
                "conjugate batch size must be in 1..={}, got {batch_size}",
                self.target.len()
            )));
        }
        self.batch_size = batch_size;
        Ok(self)
    }

    pub fn with_js_clamp_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("JS clamp must lie in (0, 1), got {eps}")));
        }
        self.js_clamp_eps = eps;
        Ok(self)
    }

    pub fn kind(&self) -> FunctionalKind {
        self.kind
    }

    pub fn target(&self) -> &TargetSampleSet {
        &self.target
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn js_clamp_eps(&self) -> f64 {
        self.js_clamp_eps
    }

    /// Lipschitz budget for W1 test functions. Enforced only through the
    /// weight-ball radius of the network, see [`ShallowNet::lipschitz_upper_bound`].
    pub fn w1_lipschitz_bound(&self) -> f64 {
        self.w1_lipschitz_bound
    }

    /// `F*(f)` from the values of `f` on a sample of the target.
    pub fn conjugate(&self, f: ArrayView1<f64>) -> Conjugate {
        match self.kind {
            FunctionalKind::Kl => Conjugate {
                value: log_mean_exp(f),
                clamped: 0,
            },
            FunctionalKind::Js => {
                let mut clamped = 0;
                let mut acc = 0.0;
                for &v in f {
                    let arg = 1.0 - 2.0 * (2.0 * v).exp();
                    if arg < self.js_clamp_eps {
                        clamped += 1;
                    }
                    acc += arg.max(self.js_clamp_eps).ln();
                }
                Conjugate {
                    value: -0.5 * acc / f.len() as f64 - 0.5 * std::f64::consts::LN_2,
                    clamped,
                }
            }
            FunctionalKind::W1 => Conjugate {
                value: f.mean().unwrap_or(0.0),
                clamped: 0,
            },
        }
    }

    pub fn conjugate_value(&self, f: ArrayView1<f64>) -> f64 {
        self.conjugate(f).value
    }

    /// Coefficients `c_j` with `d F*(f) / d theta = sum_j c_j d f(z_j) / d theta`
    /// for the empirical conjugate over a batch.
    pub fn conjugate_coefficients(&self, f: ArrayView1<f64>) -> Array1<f64> {
        let m = f.len() as f64;
        match self.kind {
            FunctionalKind::Kl => {
                let max = f.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let e = f.mapv(|v| (v - max).exp());
                let total = e.sum();
                e / total
            }
            FunctionalKind::Js => f.mapv(|v| {
                let e = (2.0 * v).exp();
                2.0 * e / (1.0 - 2.0 * e).max(self.js_clamp_eps) / m
            }),
            FunctionalKind::W1 => Array1::from_elem(f.len(), 1.0 / m),
        }
    }

    /// A uniformly drawn minibatch of distinct target samples.
    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R) -> Array2<f64> {
        let idx = rand::seq::index::sample(rng, self.target.len(), self.batch_size).into_vec();
        self.target.samples.select(Axis(0), &idx)
    }

    /// Stochastic gradient of `F*(f_w) - f_w(particle)` in the input weights,
    /// with `F*` estimated on `batch`.
    pub fn vfm_weight_gradient(
        &self,
        net: &ShallowNet,
        particle: ArrayView1<f64>,
        batch: ArrayView2<f64>,
    ) -> Array2<f64> {
        let (_, mut g) = net.weighted_grad_weights(batch, |f| self.conjugate_coefficients(f));
        g -= &net.grad_weights(particle);
        g
    }

    /// Plug-in estimate `mean_i f(x_i) - F*(f)` with `F*` over all targets.
    pub fn objective_estimate(&self, net: &ShallowNet, particles: ArrayView2<f64>) -> ObjectiveEstimate {
        let on_particles = if particles.nrows() == 0 {
            0.0
        } else {
            net.eval_batch(particles).mean().unwrap_or(0.0)
        };
        let conj = self.conjugate(net.eval_batch(self.target.samples.view()).view());
        ObjectiveEstimate {
            value: on_particles - conj.value,
            clamped: conj.clamped,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn targets() -> TargetSampleSet {
        TargetSampleSet::new(
            array![[0.1, 0.2], [-0.3, 0.4], [0.5, -0.5], [0.0, 0.9]],
            Domain::UnitBall(2),
        )
        .unwrap()
    }

    #[test]
    fn kl_conjugate_examples() {
        let fun = VariationalFunctional::new(FunctionalKind::Kl, targets());
        assert_eq!(fun.conjugate_value(Array1::zeros(4).view()), 0.0);
        assert_abs_diff_eq!(
            fun.conjugate_value(Array1::from_elem(4, 2.5).view()),
            2.5,
            epsilon = 1e-15
        );
        // shift identity
        let f = array![0.3, -1.2, 4.0, 0.0];
        let shifted = f.mapv(|v| v - 7.0);
        assert_abs_diff_eq!(
            fun.conjugate_value(shifted.view()) + 7.0,
            fun.conjugate_value(f.view()),
            epsilon = 1e-10
        );
        // large values stay finite
        assert_abs_diff_eq!(fun.conjugate_value(array![800.0, 800.0].view()), 800.0, epsilon = 1e-12);
    }

    #[test]
    fn js_conjugate_examples() {
        let fun = VariationalFunctional::new(FunctionalKind::Js, targets());
        let c = fun.conjugate(Array1::from_elem(4, -10.0).view());
        assert_abs_diff_eq!(c.value, -0.5 * 2f64.ln(), epsilon = 1e-8);
        assert_abs_diff_eq!(c.value, -0.34657359, epsilon = 1e-8);
        assert_eq!(c.clamped, 0);

        // f = 0 is outside the domain of the logarithm
        let c = fun.conjugate(Array1::zeros(4).view());
        assert_eq!(c.clamped, 4);
        assert_abs_diff_eq!(c.value, -0.5 * 1e-6_f64.ln() - 0.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn w1_conjugate_is_mean() {
        let fun = VariationalFunctional::new(FunctionalKind::W1, targets());
        assert_abs_diff_eq!(
            fun.conjugate_value(array![1.0, 2.0, 3.0, 6.0].view()),
            3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn kl_softmax_coefficients() {
        let fun = VariationalFunctional::new(FunctionalKind::Kl, targets());
        let c = fun.conjugate_coefficients(array![1.0, 0.0].view());
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(c[0], e / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], 1.0 / (e + 1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(c[0], 0.7310585786, epsilon = 1e-10);
        let uniform = fun.conjugate_coefficients(Array1::zeros(5).view());
        assert!(uniform.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn batch_size_is_validated() {
        let fun = VariationalFunctional::new(FunctionalKind::Kl, targets());
        assert_eq!(fun.batch_size(), 4);
        assert!(fun.clone().with_batch_size(5).is_err());
        assert!(fun.clone().with_batch_size(0).is_err());
        assert!(fun.with_batch_size(2).is_ok());
    }

    #[test]
    fn targets_outside_domain_are_rejected() {
        let err = TargetSampleSet::new(array![[0.1, 0.2], [2.0, 0.0]], Domain::UnitBall(2));
        assert!(matches!(err, Err(Error::Config(_))));
        let err = TargetSampleSet::new(array![[0.1, 0.2, 0.7]], Domain::UnitBall(2));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    #[test]
    fn parse_kind() {
        assert_eq!("KL".parse::<FunctionalKind>().unwrap(), FunctionalKind::Kl);
        assert_eq!("w1".parse::<FunctionalKind>().unwrap(), FunctionalKind::W1);
        assert!("tv".parse::<FunctionalKind>().is_err());
    }
}
