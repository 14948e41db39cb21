//! Variational form maximization.
//!
//! The test function is a width-`n_w` one-hidden-layer network
//! `f(x) = n_w^{-1/2} sum_i b_i sigma(w_i . x)` with fixed output signs `b_i`
//! It is fitted by a single pass of projected SGD over the particles, keeping
//! the input weights inside a Frobenius ball around their initialization, and
//! the averaged iterate is returned.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::VariationalFunctional;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VfmConfig {
    /// Hidden width `n_w`.
    pub width: usize,
    /// Radius `r_f` of the weight ball around the initial weights.
    pub radius: f64,
    /// Standard deviation of the Gaussian weight init; `None` means `1/sqrt(d)`.
    pub init_scale: Option<f64>,
    #[serde(default)]
    pub activation: Activation,
}

impl Default for VfmConfig {
    fn default() -> Self {
        Self {
            width: 256,
            radius: 10.0,
            init_scale: None,
            activation: Activation::Softplus,
        }
    }
}

impl VfmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::Config("network width must be at least 1".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!(
                "weight radius must be positive, got {}",
                self.radius
            )));
        }
        if let Some(s) = self.init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("init scale must be non-negative, got {s}")));
            }
        }
        Ok(())
    }
}

/// Hidden-unit nonlinearity. Both choices have `0 < sigma' <= 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Makes `f` odd, so `grad f(-x) = grad f(x)`.
    Tanh,
    /// `ln(1 + e^a)`.
    #[default]
    Softplus,
}

impl Activation {
    #[inline]
    pub fn value(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Softplus => a.max(0.0) + (-a.abs()).exp().ln_1p(),
        }
    }

    #[inline]
    pub fn deriv(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            Activation::Softplus => 1.0 / (1.0 + (-a).exp()),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "softplus" => Ok(Activation::Softplus),
            other => Err(Error::Config(format!(
                "unknown activation `{other}` (expected tanh or softplus)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowNet {
    w: Array2<f64>,
    w0: Array2<f64>,
    signs: Array1<f64>,
    radius: f64,
    act: Activation,
}

impl ShallowNet {
    /// Gaussian input weights, uniform random output signs, `w = w0`.
    pub fn init<R: Rng + ?Sized>(cfg: &VfmConfig, dim: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let scale = cfg.init_scale.unwrap_or(1.0 / (dim.max(1) as f64).sqrt());
        let normal = Normal::new(0.0, scale).map_err(|e| Error::Config(e.to_string()))?;
        let w0 = Array2::from_shape_fn((cfg.width, dim), |_| normal.sample(rng));
        let signs = Array1::from_shape_fn(cfg.width, |_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
        Ok(Self {
            w: w0.clone(),
            w0,
            signs,
            radius: cfg.radius,
            act: cfg.activation,
        })
    }

    /// Builds a tanh network from explicit parts. `w` is projected into the ball.
    pub fn from_parts(w: Array2<f64>, w0: Array2<f64>, signs: Array1<f64>, radius: f64) -> Result<Self> {
        if w.dim() != w0.dim() {
            return Err(Error::Config(format!(
                "weight shapes differ: {:?} vs {:?}",
                w.dim(),
                w0.dim()
            )));
        }
        if signs.len() != w.nrows() {
            return Err(Error::Dimension {
                expected: w.nrows(),
                found: signs.len(),
            });
        }
        if signs.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::Config("output signs must be exactly +1 or -1".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::Config(format!("weight radius must be positive, got {radius}")));
        }
        let w = project_weights(w.view(), w0.view(), radius);
        Ok(Self {
            w,
            w0,
            signs,
            radius,
            act: Activation::Tanh,
        })
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        self.act = act;
        self
    }

    pub fn activation(&self) -> Activation {
        self.act
    }

    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn anchor(&self) -> &Array2<f64> {
        &self.w0
    }

    pub fn signs(&self) -> &Array1<f64> {
        &self.signs
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Replaces the input weights, projecting them into the weight ball.
    pub fn set_weights(&mut self, w: Array2<f64>) {
        self.w = project_weights(w.view(), self.w0.view(), self.radius);
    }

    /// Re-anchors the weight ball at the current weights.
    pub fn reanchor(&mut self) {
        self.w0 = self.w.clone();
    }

    /// Frobenius distance from the anchor.
    pub fn drift(&self) -> f64 {
        frobenius(&(&self.w - &self.w0))
    }

    /// An upper bound on the Lipschitz constant of `f`: since `|sigma'| <= 1`,
    /// `|grad f| <= n_w^{-1/2} sum_i |w_i| <= |w|_F`.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        frobenius(&self.w)
    }

    fn norm_factor(&self) -> f64 {
        1.0 / (self.width() as f64).sqrt()
    }

    pub fn eval(&self, x: ArrayView1<f64>) -> f64 {
        let pre = self.w.dot(&x);
        let s: f64 = pre
            .iter()
            .zip(self.signs.iter())
            .map(|(&a, &b)| b * self.act.value(a))
            .sum();
        s * self.norm_factor()
    }

    /// `f` at every row of `points`.
    pub fn eval_batch(&self, points: ArrayView2<f64>) -> Array1<f64> {
        let act = points.dot(&self.w.t()).mapv_into(|a| self.act.value(a));
        act.dot(&self.signs) * self.norm_factor()
    }

    pub fn grad_input(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let c = self.norm_factor();
        let coef = Array1::from_iter(
            self.w
                .dot(&x)
                .iter()
                .zip(self.signs.iter())
                .map(|(&a, &b)| c * b * self.act.deriv(a)),
        );
        self.w.t().dot(&coef)
    }

    /// `grad_x f` at every row of `points`, one gradient per row.
    pub fn grad_input_batch(&self, points: ArrayView2<f64>) -> Array2<f64> {
        let c = self.norm_factor();
        let mut coef = points.dot(&self.w.t());
        for mut row in coef.rows_mut() {
            for (a, &b) in row.iter_mut().zip(self.signs.iter()) {
                *a = c * b * self.act.deriv(*a);
            }
        }
        coef.dot(&self.w)
    }

    /// `d f / d w`; row `i` is `n_w^{-1/2} b_i sigma'(w_i . x) x`.
    pub fn grad_weights(&self, x: ArrayView1<f64>) -> Array2<f64> {
        let c = self.norm_factor();
        let coef = Array1::from_iter(
            self.w
                .dot(&x)
                .iter()
                .zip(self.signs.iter())
                .map(|(&a, &b)| c * b * self.act.deriv(a)),
        );
        outer(coef.view(), x)
    }

    /// Values at `points` together with the combination
    /// `sum_j coeffs(f)_j * d f(z_j) / d w`, sharing the forward pass.
    pub(crate) fn weighted_grad_weights<F>(&self, points: ArrayView2<f64>, coeffs: F) -> (Array1<f64>, Array2<f64>)
    where
        F: FnOnce(ArrayView1<f64>) -> Array1<f64>,
    {
        let c = self.norm_factor();
        let pre = points.dot(&self.w.t());
        let values = pre.mapv(|a| self.act.value(a)).dot(&self.signs) * c;
        let weights = coeffs(values.view());
        // sum_j c_j b_i sigma'(a_ij) z_j  =  diag(b) S'^T diag(c) Z
        let mut deriv = pre.mapv_into(|a| self.act.deriv(a));
        for (mut row, &cj) in deriv.rows_mut().into_iter().zip(weights.iter()) {
            row *= cj;
        }
        let mut grad = deriv.t().dot(&points);
        for (mut row, &b) in grad.rows_mut().into_iter().zip(self.signs.iter()) {
            row *= b * c;
        }
        (values, grad)
    }
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

pub(crate) fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Projection onto `{w : |w - w0|_F <= radius}`.
pub fn project_weights(w: ArrayView2<f64>, w0: ArrayView2<f64>, radius: f64) -> Array2<f64> {
    let diff = &w - &w0;
    let dist = frobenius(&diff);
    if dist <= radius {
        return w.to_owned();
    }
    let mut out = w0.to_owned();
    out.scaled_add(radius / dist, &diff);
    out
}

/// One pass of projected SGD over `particles` in the order given, starting
/// from `net`. Step size is `N^{-1/2}`; the returned network carries the
/// average of the iterates `w(0), ..., w(N-1)`.
pub fn vfm_fit<R: Rng + ?Sized>(
    mut net: ShallowNet,
    particles: ArrayView2<f64>,
    order: &[usize],
    fun: &VariationalFunctional,
    rng: &mut R,
) -> ShallowNet {
    let n = order.len();
    if n == 0 {
        return net;
    }
    let eta = 1.0 / (n as f64).sqrt();
    let mut sum = Array2::<f64>::zeros(net.w.dim());
    for &i in order {
        sum += &net.w;
        let batch = fun.sample_batch(rng);
        let g = fun.vfm_weight_gradient(&net, particles.row(i), batch.view());
        let mut next = net.w.clone();
        next.scaled_add(-eta, &g);
        net.w = project_weights(next.view(), net.w0.view(), net.radius);
        debug_assert!(net.drift() <= net.radius * (1.0 + 1e-12));
    }
    net.w = sum / n as f64;
    net
}

/// Fresh network, shuffled particle order, one SGD pass.
pub fn vfm_run<R: Rng + ?Sized>(
    particles: ArrayView2<f64>,
    fun: &VariationalFunctional,
    cfg: &VfmConfig,
    rng: &mut R,
) -> Result<ShallowNet> {
    let net = ShallowNet::init(cfg, particles.ncols(), rng)?;
    Ok(vfm_refit(net, particles, fun, rng))
}

/// One SGD pass from an existing network with a freshly shuffled order.
pub fn vfm_refit<R: Rng + ?Sized>(
    net: ShallowNet,
    particles: ArrayView2<f64>,
    fun: &VariationalFunctional,
    rng: &mut R,
) -> ShallowNet {
    let mut order: Vec<usize> = (0..particles.nrows()).collect();
    order.shuffle(rng);
    vfm_fit(net, particles, &order, fun, rng)
}
