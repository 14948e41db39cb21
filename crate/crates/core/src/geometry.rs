//! Constrained domains, their mirror maps, and Euclidean projections.
//!
//! Two primal domains are supported: the closed unit ball and the probability
//! simplex. Each comes with a mirror potential whose gradient is a bijection
//! from the domain interior onto an unconstrained dual space:
//!
//! | map | potential | dual map | inverse |
//! |-----|-----------|----------|---------|
//! | `BallLog` | `-ln(1 - |x|) - |x|` | `x / (1 - |x|)` | `y / (1 + |y|)` |
//! | `EntropicSimplex` | `sum x_i ln x_i` | `ln x_i - ln x_d` | `e^{y_i} / (1 + sum_j e^{y_j})` |
//! | `Identity` | `|x|^2 / 2` | `x` | `y` |
//!
//! The simplex map works in the reduced parameterization: a point on the
//! simplex is stored with all `d` coordinates, the dual point has `d - 1`.
//! Both Hessians are identity-plus-rank-one, so their inverses are applied in
//! `O(d)` without forming a matrix.

use std::fmt;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Distance to the boundary below which a point no longer counts as interior
/// for the mirror-map operations.
pub const BOUNDARY_MARGIN: f64 = 1e-12;

/// Tolerance on `sum x_i = 1` for simplex membership.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Below this radius the ball map's rank-one terms are replaced by their limit.
const CENTER_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim")]
pub enum Domain {
    /// Closed Euclidean unit ball in `R^d`.
    UnitBall(usize),
    /// Probability simplex with `d` coordinates.
    Simplex(usize),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match *self {
            Domain::UnitBall(d) | Domain::Simplex(d) => d,
        }
    }

    /// Membership test. With `strict` the point must lie in the interior.
    pub fn contains(&self, x: ArrayView1<f64>, strict: bool) -> bool {
        if x.len() != self.dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            Domain::UnitBall(_) => {
                let r = norm(x);
                if strict {
                    r < 1.0
                } else {
                    r <= 1.0
                }
            }
            Domain::Simplex(_) => {
                let sum_ok = (x.sum() - 1.0).abs() <= SIMPLEX_SUM_TOL;
                let coords_ok = if strict {
                    x.iter().all(|&v| v > 0.0)
                } else {
                    x.iter().all(|&v| v >= 0.0)
                };
                sum_ok && coords_ok
            }
        }
    }

    /// Euclidean projection onto the (closed) domain.
    pub fn project(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match self {
            Domain::UnitBall(_) => project_ball(x),
            Domain::Simplex(_) => project_simplex(x),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::UnitBall(d) => write!(f, "unit ball B^{d}"),
            Domain::Simplex(d) => write!(f, "simplex with {d} coordinates"),
        }
    }
}

pub fn contains(domain: &Domain, x: ArrayView1<f64>, strict: bool) -> bool {
    domain.contains(x, strict)
}

pub(crate) fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

/// `x / max(1, |x|)`, nudged inward by at most a few ulps so that the result
/// always passes closure membership.
pub fn project_ball(x: ArrayView1<f64>) -> Array1<f64> {
    let r = norm(x);
    if r <= 1.0 {
        return x.to_owned();
    }
    let mut y = x.mapv(|v| v / r);
    while norm(y.view()) > 1.0 {
        y.mapv_inplace(|v| v * (1.0 - f64::EPSILON));
    }
    y
}

/// Euclidean projection onto the probability simplex by the sort-and-threshold
/// method. Points that already belong to the simplex are returned unchanged.
pub fn project_simplex(x: ArrayView1<f64>) -> Array1<f64> {
    let d = x.len();
    if d == 0 {
        return Array1::zeros(0);
    }
    if Domain::Simplex(d).contains(x, false) {
        return x.to_owned();
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));

    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    x.mapv(|v| (v - tau).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MirrorKind {
    BallLog,
    EntropicSimplex,
    Identity,
}

/// A mirror potential over a domain together with its metric bounds
/// `alpha I <= Hess phi <= beta I`. The bounds are reporting metadata; `beta`
/// is `None` when the Hessian is unbounded near the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorMap {
    pub kind: MirrorKind,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub domain: Domain,
}

impl MirrorMap {
    pub fn ball_log(d: usize) -> Self {
        Self {
            kind: MirrorKind::BallLog,
            alpha: 1.0,
            beta: None,
            domain: Domain::UnitBall(d),
        }
    }

    pub fn entropic_simplex(d: usize) -> Self {
        Self {
            kind: MirrorKind::EntropicSimplex,
            alpha: 1.0,
            beta: None,
            domain: Domain::Simplex(d),
        }
    }

    pub fn identity(domain: Domain) -> Self {
        Self {
            kind: MirrorKind::Identity,
            alpha: 1.0,
            beta: Some(1.0),
            domain,
        }
    }

    /// The natural map for a domain: log-barrier for the ball, entropy for the
    /// simplex.
    pub fn natural(domain: Domain) -> Self {
        match domain {
            Domain::UnitBall(d) => Self::ball_log(d),
            Domain::Simplex(d) => Self::entropic_simplex(d),
        }
    }

    pub fn primal_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn dual_dim(&self) -> usize {
        match self.kind {
            MirrorKind::EntropicSimplex => self.domain.dim() - 1,
            _ => self.domain.dim(),
        }
    }

    fn boundary_error(&self) -> Error {
        Error::Boundary {
            domain: self.domain.to_string(),
        }
    }

    /// Rejects points within `BOUNDARY_MARGIN` of the boundary. The identity
    /// map has no singularity and accepts any finite point.
    fn check_interior(&self, x: ArrayView1<f64>) -> Result<()> {
        check_dim(self.primal_dim(), x.len())?;
        let ok = match self.kind {
            MirrorKind::BallLog => 1.0 - norm(x) > BOUNDARY_MARGIN,
            MirrorKind::EntropicSimplex => x.iter().all(|&v| v > BOUNDARY_MARGIN),
            MirrorKind::Identity => x.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(self.boundary_error())
        }
    }

    /// The potential `phi(x)`.
    pub fn potential(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_interior(x)?;
        Ok(match self.kind {
            MirrorKind::BallLog => {
                let r = norm(x);
                -(1.0 - r).ln() - r
            }
            MirrorKind::EntropicSimplex => x.iter().map(|&v| v * v.ln()).sum(),
            MirrorKind::Identity => 0.5 * x.dot(&x),
        })
    }

    /// The dual map `y = grad phi(x)`.
    pub fn grad_phi(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_interior(x)?;
        Ok(match self.kind {
            MirrorKind::BallLog => {
                let scale = 1.0 / (1.0 - norm(x));
                x.mapv(|v| v * scale)
            }
            MirrorKind::EntropicSimplex => {
                let d = x.len();
                let log_last = x[d - 1].ln();
                x.slice(ndarray::s![..d - 1]).mapv(|v| v.ln() - log_last)
            }
            MirrorKind::Identity => x.to_owned(),
        })
    }

    /// The inverse map `x = grad phi*(y)`. Defined on the whole dual space.
    pub fn grad_phi_star(&self, y: ArrayView1<f64>) -> Array1<f64> {
        match self.kind {
            MirrorKind::BallLog => {
                let scale = 1.0 / (1.0 + norm(y));
                y.mapv(|v| v * scale)
            }
            MirrorKind::EntropicSimplex => {
                // the implicit last coordinate has dual value 0
                let m = y.iter().fold(0.0_f64, |acc, &v| acc.max(v));
                let mut x = Array1::zeros(y.len() + 1);
                let mut total = 0.0;
                for (xi, &yi) in x.iter_mut().zip(y.iter()) {
                    *xi = (yi - m).exp();
                    total += *xi;
                }
                let last = (-m).exp();
                total += last;
                x[y.len()] = last;
                x.mapv_inplace(|v| v / total);
                x
            }
            MirrorKind::Identity => y.to_owned(),
        }
    }

    /// `(Hess phi(x))^{-1} v`, with `v` in dual coordinates.
    pub fn inv_hessian_apply(&self, x: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_interior(x)?;
        check_dim(self.dual_dim(), v.len())?;
        Ok(match self.kind {
            MirrorKind::BallLog => {
                let r = norm(x);
                if r < CENTER_RADIUS {
                    v.to_owned()
                } else {
                    let proj = x.dot(&v) / r;
                    let mut out = v.to_owned();
                    out.scaled_add(-proj, &x);
                    out * (1.0 - r)
                }
            }
            MirrorKind::EntropicSimplex => {
                let head = x.slice(ndarray::s![..x.len() - 1]);
                let inner = head.dot(&v);
                let mut out = &head * &v;
                out.scaled_add(-inner, &head);
                out
            }
            MirrorKind::Identity => v.to_owned(),
        })
    }

    /// `Hess phi(x) v` from the closed-form Hessian.
    pub fn hessian_apply(&self, x: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_interior(x)?;
        check_dim(self.dual_dim(), v.len())?;
        Ok(match self.kind {
            MirrorKind::BallLog => {
                let r = norm(x);
                let mut out = v.mapv(|vi| vi / (1.0 - r));
                if r >= CENTER_RADIUS {
                    let coef = x.dot(&v) / (r * (1.0 - r).powi(2));
                    out.scaled_add(coef, &x);
                }
                out
            }
            MirrorKind::EntropicSimplex => {
                let d = x.len();
                let shared = v.sum() / x[d - 1];
                Array1::from_iter(v.iter().zip(x.iter()).map(|(&vi, &xi)| vi / xi + shared))
            }
            MirrorKind::Identity => v.to_owned(),
        })
    }

    /// `J(y)^T g` where `J` is the Jacobian of `grad phi*` at `y` and `g` is a
    /// primal vector. This is the chain rule for pulling a primal gradient back
    /// to dual coordinates.
    pub fn dual_jacobian_t_apply(&self, y: ArrayView1<f64>, g: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(self.dual_dim(), y.len())?;
        check_dim(self.primal_dim(), g.len())?;
        Ok(match self.kind {
            MirrorKind::BallLog => {
                let s = norm(y);
                let mut out = g.mapv(|gi| gi / (1.0 + s));
                if s >= CENTER_RADIUS {
                    let coef = y.dot(&g) / (s * (1.0 + s).powi(2));
                    out.scaled_add(-coef, &y);
                }
                out
            }
            MirrorKind::EntropicSimplex => {
                let x = self.grad_phi_star(y);
                let c = x.dot(&g);
                Array1::from_iter((0..y.len()).map(|j| x[j] * (g[j] - c)))
            }
            MirrorKind::Identity => g.to_owned(),
        })
    }
}
