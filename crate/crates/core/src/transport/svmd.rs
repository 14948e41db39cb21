//! Kernelized dual-space direction for the KL functional.
//!
//! Smoothing the mirrored KL direction `grad log q_t - grad log q*` with the
//! integral operator of a kernel `k_phi(y, y') = k(grad phi*(y), grad phi*(y'))`
//! and integrating by parts gives a direction that needs only the dual score
//! of the target and kernel derivatives:
//!
//! `u(y) = E_{y' ~ q_t} [ k_phi(y, y') grad log q*(y') + grad_{y'} k_phi(y, y') ]`
//!
//! Particles then ascend `y <- y + eta u(y)` and are mapped back to the primal
//! domain, as in Stein variational mirror descent.

use libm::lgamma as ln_gamma;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::datagen::DirichletMixtureSpec;
use crate::error::{check_dim, Error, Result};
use crate::geometry::{MirrorKind, MirrorMap};
use crate::metrics::Kernel;
use crate::transport::ParticleSet;

/// `grad_y log q*(y)` for a target pushed into dual coordinates.
pub trait DualScore {
    fn dual_score(&self, y: ArrayView1<f64>) -> Array1<f64>;
}

impl<F> DualScore for F
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    fn dual_score(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self(y)
    }
}

/// Dual score of a Dirichlet mixture under the entropic simplex map.
///
/// With `x = grad phi*(y)` the dual density of component `k` is
/// `w_k prod_i x_i^{alpha_i} / B(alpha)`: the Dirichlet density times the
/// Jacobian `det(diag(x~) - x~ x~^T) = prod_i x_i`.
#[derive(Debug, Clone)]
pub struct DirichletMixtureScore {
    alphas: Vec<Array1<f64>>,
    log_norms: Vec<f64>,
}

impl DirichletMixtureScore {
    pub fn new(spec: &DirichletMixtureSpec) -> Result<Self> {
        spec.validate()?;
        let alphas: Vec<Array1<f64>> = spec.alphas.iter().map(|a| Array1::from(a.clone())).collect();
        let log_norms = alphas
            .iter()
            .zip(&spec.weights)
            .map(|(a, &w)| {
                let log_beta: f64 = a.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(a.sum());
                w.ln() - log_beta
            })
            .collect();
        Ok(Self { alphas, log_norms })
    }

    pub fn primal_dim(&self) -> usize {
        self.alphas[0].len()
    }

    /// `ln x` for all `d` coordinates of `grad phi*(y)`, without underflow.
    fn log_primal(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let m = y.iter().fold(0.0_f64, |a, &b| a.max(b));
        let lse = m + ((-m).exp() + y.iter().map(|&v| (v - m).exp()).sum::<f64>()).ln();
        let mut out = Array1::from_elem(y.len() + 1, -lse);
        for (o, &v) in out.iter_mut().zip(y.iter()) {
            *o = v - lse;
        }
        out
    }

    fn component_logs(&self, log_x: &Array1<f64>) -> Vec<f64> {
        self.alphas
            .iter()
            .zip(&self.log_norms)
            .map(|(a, &c)| c + a.dot(log_x))
            .collect()
    }

    /// `log q*(y)` with respect to Lebesgue measure on the dual space.
    pub fn dual_log_density(&self, y: ArrayView1<f64>) -> f64 {
        let logs = self.component_logs(&self.log_primal(y));
        let m = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        m + logs.iter().map(|&l| (l - m).exp()).sum::<f64>().ln()
    }
}

impl DualScore for DirichletMixtureScore {
    fn dual_score(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let log_x = self.log_primal(y);
        let logs = self.component_logs(&log_x);
        let m = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let resp: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
        let total: f64 = resp.iter().sum();
        let head = log_x.slice(ndarray::s![..y.len()]).mapv(f64::exp);
        let mut out = Array1::zeros(y.len());
        for (a, r) in self.alphas.iter().zip(resp) {
            // grad_y sum_i alpha_i ln x_i = alpha~ - (sum alpha) x~
            let w = r / total;
            out.scaled_add(w, &a.slice(ndarray::s![..y.len()]));
            out.scaled_add(-w * a.sum(), &head);
        }
        out
    }
}

/// A weighted point cloud in dual coordinates with its primal images and
/// target scores precomputed.
#[derive(Debug, Clone)]
pub struct DualCloud {
    ys: Array2<f64>,
    xs: Array2<f64>,
    scores: Array2<f64>,
    weights: Array1<f64>,
}

impl DualCloud {
    pub fn new(map: &MirrorMap, ys: ArrayView2<f64>, weights: ArrayView1<f64>, score: &dyn DualScore) -> Result<Self> {
        check_dim(map.dual_dim(), ys.ncols())?;
        check_dim(ys.nrows(), weights.len())?;
        let mut xs = Array2::zeros((ys.nrows(), map.primal_dim()));
        let mut scores = Array2::zeros(ys.dim());
        for ((y, mut x), mut s) in ys.rows().into_iter().zip(xs.rows_mut()).zip(scores.rows_mut()) {
            x.assign(&map.grad_phi_star(y));
            let sc = score.dual_score(y);
            check_dim(map.dual_dim(), sc.len())?;
            s.assign(&sc);
        }
        Ok(Self {
            ys: ys.to_owned(),
            xs,
            scores,
            weights: weights.to_owned(),
        })
    }

    /// Equal weights `1/N`.
    pub fn uniform(map: &MirrorMap, ys: ArrayView2<f64>, score: &dyn DualScore) -> Result<Self> {
        let n = ys.nrows().max(1) as f64;
        Self::new(map, ys, Array1::from_elem(ys.nrows(), 1.0 / n).view(), score)
    }

    /// `u(y) = sum_j w_j [k_phi(y, y_j) s_j + grad_{y_j} k_phi(y, y_j)]`.
    pub fn direction(&self, map: &MirrorMap, kernel: &Kernel, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim(map.dual_dim(), y.len())?;
        let x = map.grad_phi_star(y);
        let mut u = Array1::zeros(y.len());
        for j in 0..self.ys.nrows() {
            let xj = self.xs.row(j);
            let w = self.weights[j];
            u.scaled_add(w * kernel.eval(x.view(), xj), &self.scores.row(j));
            let gx = kernel.grad_second(x.view(), xj);
            u.scaled_add(w, &map.dual_jacobian_t_apply(self.ys.row(j), gx.view())?);
        }
        Ok(u)
    }
}

/// One kernelized mirror step: `y <- y + eta u(y)` for every particle.
pub fn svmd_step(
    particles: &ParticleSet,
    map: &MirrorMap,
    kernel: &Kernel,
    score: &dyn DualScore,
    eta: f64,
) -> Result<ParticleSet> {
    if map.kind == MirrorKind::Identity {
        return Err(Error::Config(
            "the kernelized step needs a non-identity mirror map".into(),
        ));
    }
    check_dim(map.primal_dim(), particles.dim())?;
    let mut ys = Array2::zeros((particles.len(), map.dual_dim()));
    for (x, mut y) in particles.points().rows().into_iter().zip(ys.rows_mut()) {
        y.assign(&map.grad_phi(x)?);
    }
    let cloud = DualCloud::uniform(map, ys.view(), score)?;
    let mut next = Array2::zeros(particles.points().dim());
    for (y, mut out) in ys.rows().into_iter().zip(next.rows_mut()) {
        let mut moved = y.to_owned();
        moved.scaled_add(eta, &cloud.direction(map, kernel, y)?);
        out.assign(&map.grad_phi_star(moved.view()));
    }
    Ok(particles.advanced(next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn spec() -> DirichletMixtureSpec {
        DirichletMixtureSpec {
            alphas: vec![vec![6.0, 2.0, 3.0], vec![1.5, 1.5, 8.0]],
            weights: vec![0.4, 0.6],
        }
    }

    #[test]
    fn score_matches_log_density_differences() {
        let score = DirichletMixtureScore::new(&spec()).unwrap();
        let h = 1e-6;
        for y in [array![0.3, -0.2], array![-2.0, 1.5], array![4.0, 3.0]] {
            let s = score.dual_score(y.view());
            for i in 0..2 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += h;
                ym[i] -= h;
                let fd = (score.dual_log_density(yp.view()) - score.dual_log_density(ym.view())) / (2.0 * h);
                assert_abs_diff_eq!(s[i], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn single_dirichlet_score_closed_form() {
        let spec = DirichletMixtureSpec {
            alphas: vec![vec![2.0, 3.0, 4.0]],
            weights: vec![1.0],
        };
        let score = DirichletMixtureScore::new(&spec).unwrap();
        // at y = 0 the primal point is the barycenter
        let s = score.dual_score(array![0.0, 0.0].view());
        assert_abs_diff_eq!(s[0], 2.0 - 9.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s[1], 3.0 - 9.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn lone_particle_follows_the_score() {
        let map = MirrorMap::entropic_simplex(3);
        let score = DirichletMixtureScore::new(&spec()).unwrap();
        let kernel = Kernel::rbf(0.3).unwrap();
        let ps = ParticleSet::new(array![[0.2, 0.3, 0.5]], Domain::Simplex(3)).unwrap();
        let y = map.grad_phi(ps.points().row(0)).unwrap();
        let cloud = DualCloud::uniform(&map, y.view().insert_axis(ndarray::Axis(0)), &score).unwrap();
        let u = cloud.direction(&map, &kernel, y.view()).unwrap();
        let s = score.dual_score(y.view());
        assert_abs_diff_eq!(u[0], s[0], epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], s[1], epsilon = 1e-12);

        let eta = 0.05;
        let next = svmd_step(&ps, &map, &kernel, &score, eta).unwrap();
        let expected = map.grad_phi_star((&y + &(s * eta)).view());
        for k in 0..3 {
            assert_abs_diff_eq!(next.points()[[0, k]], expected[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let map = MirrorMap::entropic_simplex(3);
        let score = DirichletMixtureScore::new(&spec()).unwrap();
        let kernel = Kernel::rbf(0.5).unwrap();
        let ps = ParticleSet::new(array![[0.2, 0.3, 0.5], [0.6, 0.2, 0.2]], Domain::Simplex(3)).unwrap();
        let next = svmd_step(&ps, &map, &kernel, &score, 0.0).unwrap();
        for (a, b) in next.points().iter().zip(ps.points().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn boundary_particles_are_rejected() {
        let map = MirrorMap::entropic_simplex(3);
        let score = DirichletMixtureScore::new(&spec()).unwrap();
        let kernel = Kernel::rbf(0.5).unwrap();
        let ps = ParticleSet::new(array![[0.0, 0.5, 0.5]], Domain::Simplex(3)).unwrap();
        assert!(matches!(
            svmd_step(&ps, &map, &kernel, &score, 0.1),
            Err(Error::Boundary { .. })
        ));
    }
}
