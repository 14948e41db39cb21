//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls the code it checks except through public
//! evaluation entry points.
#![allow(dead_code)]

use mirrorvt::datagen::DirichletMixtureSpec;
use mirrorvt::functionals::{FunctionalKind, TargetSampleSet, VariationalFunctional};
use mirrorvt::geometry::{project_simplex, Domain, MirrorKind, MirrorMap};
use mirrorvt::metrics::Kernel;
use mirrorvt::vfm::{Activation, ShallowNet, VfmConfig};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Central difference of a scalar function along each coordinate.
pub fn fd_gradient(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>, h: f64) -> Array1<f64> {
    let mut g = Array1::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

/// Central difference of a vector function along direction `v`.
pub fn fd_directional(
    f: impl Fn(&Array1<f64>) -> Array1<f64>,
    x: &Array1<f64>,
    v: &Array1<f64>,
    h: f64,
) -> Array1<f64> {
    (f(&(x + &(v * h))) - f(&(x - &(v * h)))) / (2.0 * h)
}

/// `|a - b| / max(|b|, floor)` in the infinity norm.
pub fn rel_err(a: ArrayView1<f64>, b: ArrayView1<f64>, floor: f64) -> f64 {
    let diff = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(floor, f64::max);
    diff / scale
}

pub fn max_abs_diff(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Euclidean projection onto the simplex by bisection on the threshold
/// `tau` solving `sum_i max(x_i - tau, 0) = 1`. Does not sort.
pub fn simplex_qp_oracle(x: ArrayView1<f64>) -> Array1<f64> {
    let excess = |tau: f64| x.iter().map(|&v| (v - tau).max(0.0)).sum::<f64>() - 1.0;
    let mut lo = x.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    x.mapv(|v| (v - tau).max(0.0))
}

/// `(x~, 1 - sum x~)` direction in primal coordinates for a reduced
/// simplex tangent `v`.
pub fn lift_tangent(map: &MirrorMap, v: &Array1<f64>) -> Array1<f64> {
    match map.kind {
        MirrorKind::EntropicSimplex => {
            let mut out = Array1::zeros(v.len() + 1);
            out.slice_mut(ndarray::s![..v.len()]).assign(v);
            out[v.len()] = -v.sum();
            out
        }
        _ => v.clone(),
    }
}

pub fn random_interior<R: Rng>(domain: Domain, rng: &mut R) -> Array1<f64> {
    match domain {
        Domain::UnitBall(d) => {
            let z = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let n = z.dot(&z).sqrt();
            let r = 0.999 * rng.gen::<f64>().powf(1.0 / d as f64);
            z * (r / n)
        }
        Domain::Simplex(d) => {
            let g = Gamma::<f64>::new(1.5, 1.0).unwrap();
            let x = Array1::from_iter((0..d).map(|_| g.sample(rng).max(1e-6)));
            let s = x.sum();
            x / s
        }
    }
}

pub fn random_net<R: Rng>(d: usize, width: usize, act: Activation, rng: &mut R) -> ShallowNet {
    let cfg = VfmConfig {
        width,
        radius: 10.0,
        init_scale: Some(1.0),
        activation: act,
    };
    let mut net = ShallowNet::init(&cfg, d, rng).unwrap();
    let w = net.weights() + &Array2::from_shape_fn((width, d), |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
    net.set_weights(w);
    net
}

/// The same network with input weights replaced, without projection
/// (radius is large enough in the tests).
pub fn with_weights(net: &ShallowNet, w: Array2<f64>) -> ShallowNet {
    ShallowNet::from_parts(w, net.anchor().clone(), net.signs().clone(), net.radius())
        .unwrap()
        .with_activation(net.activation())
}

/// Scalar `f` written out directly from the network's parameters.
pub fn net_formula(net: &ShallowNet, x: ArrayView1<f64>) -> f64 {
    let act = net.activation();
    let c = 1.0 / (net.width() as f64).sqrt();
    let mut s = 0.0;
    for (wi, &b) in net.weights().rows().into_iter().zip(net.signs().iter()) {
        let a: f64 = wi.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
        let v = match act {
            Activation::Tanh => a.tanh(),
            Activation::Softplus => (1.0 + a.exp()).ln(),
        };
        s += b * v;
    }
    c * s
}

/// Squared biased MMD by a plain double loop over an explicit Gaussian.
pub fn naive_mmd2(x: ArrayView2<f64>, y: ArrayView2<f64>, bandwidth: f64) -> f64 {
    let k = |a: ArrayView1<f64>, b: ArrayView1<f64>| {
        let d2: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q).powi(2)).sum();
        (-d2 / (2.0 * bandwidth * bandwidth)).exp()
    };
    let mean = |p: ArrayView2<f64>, q: ArrayView2<f64>| {
        let mut s = 0.0;
        for a in p.rows() {
            for b in q.rows() {
                s += k(a, b);
            }
        }
        s / (p.nrows() * q.nrows()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

/// Log-density of a two-dimensional Dirichlet mixture pushed to the dual
/// line `y = ln(x_1 / x_2)`, written from scratch: the Dirichlet density in
/// `x_1` times `|dx_1/dy| = x_1 x_2`.
pub fn dual_log_density_1d(spec: &DirichletMixtureSpec, y: f64) -> f64 {
    let x1 = 1.0 / (1.0 + (-y).exp());
    let x2 = 1.0 - x1;
    let mut total = 0.0;
    for (a, &w) in spec.alphas.iter().zip(&spec.weights) {
        let log_b = libm::lgamma(a[0]) + libm::lgamma(a[1]) - libm::lgamma(a[0] + a[1]);
        let log_p = (a[0] - 1.0) * x1.ln() + (a[1] - 1.0) * x2.ln() - log_b;
        total += w * (log_p + x1.ln() + x2.ln()).exp();
    }
    total.ln()
}

/// A fixed small instance for the kernelized-direction oracle: a Gaussian
/// dual density `q_t = N(mu, s^2)` on the one-dimensional dual of the
/// 2-simplex and a two-component Dirichlet target.
pub struct SvmdInstance {
    pub spec: DirichletMixtureSpec,
    pub mu: f64,
    pub s: f64,
    pub kernel: Kernel,
    /// Dual points where the direction is compared.
    pub queries: Vec<f64>,
}

impl SvmdInstance {
    pub fn fixed() -> Self {
        Self {
            spec: DirichletMixtureSpec {
                alphas: vec![vec![3.0, 5.0], vec![6.0, 2.0]],
                weights: vec![0.3, 0.7],
            },
            mu: 0.3,
            s: 0.8,
            kernel: Kernel::rbf(0.3).unwrap(),
            queries: vec![-1.2, 0.1, 0.9],
        }
    }

    pub fn q_t(&self, y: f64) -> f64 {
        let z = (y - self.mu) / self.s;
        (-0.5 * z * z).exp() / (self.s * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Trapezoid nodes and weights covering `mu +- 12 s`.
    pub fn grid(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = (self.mu - 12.0 * self.s, self.mu + 12.0 * self.s);
        let h = (b - a) / (n - 1) as f64;
        let ys: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
        let ws = (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect();
        (ys, ws)
    }

    /// `(L v)(y) = int k_phi(y, y') [grad log q_t(y') - grad log q*(y')] q_t(y') dy'`
    /// with both scores taken from their closed forms (`q*` by central
    /// differences of [`dual_log_density_1d`]) and no kernel derivative.
    pub fn operator_quadrature(&self, y: f64, n: usize) -> f64 {
        let map = MirrorMap::entropic_simplex(2);
        let x = map.grad_phi_star(Array1::from_elem(1, y).view());
        let (ys, ws) = self.grid(n);
        let h = 1e-5;
        let mut acc = 0.0;
        for (&yp, &w) in ys.iter().zip(&ws) {
            let xp = map.grad_phi_star(Array1::from_elem(1, yp).view());
            let k = self.kernel.eval(x.view(), xp.view());
            let score_t = -(yp - self.mu) / (self.s * self.s);
            let score_star =
                (dual_log_density_1d(&self.spec, yp + h) - dual_log_density_1d(&self.spec, yp - h)) / (2.0 * h);
            acc += w * k * (score_t - score_star) * self.q_t(yp);
        }
        acc
    }
}

pub fn suite_maps() -> Vec<MirrorMap> {
    vec![
        MirrorMap::ball_log(2),
        MirrorMap::ball_log(5),
        MirrorMap::entropic_simplex(3),
        MirrorMap::entropic_simplex(5),
    ]
}

/// Worst errors of the geometry suite.
#[derive(Debug, Clone, Copy)]
pub struct GeometryErrors {
    pub round_trip: f64,
    pub multiply_back: f64,
    pub projection: f64,
}

/// Round trip on `points` interior points per map, inverse-Hessian
/// multiply-back on the same points, and simplex projection against the
/// bisection oracle on `cases` random vectors.
pub fn geometry_suite(points: usize, cases: usize, seed: u64) -> GeometryErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GeometryErrors {
        round_trip: 0.0,
        multiply_back: 0.0,
        projection: 0.0,
    };
    for map in suite_maps() {
        for _ in 0..points {
            let x = random_interior(map.domain, &mut rng);
            let back = map.grad_phi_star(map.grad_phi(x.view()).unwrap().view());
            out.round_trip = out.round_trip.max(max_abs_diff(back.view(), x.view()));
            let v = Array1::from_iter((0..map.dual_dim()).map(|_| rng.gen::<f64>() * 4.0 - 2.0));
            let inv = map.inv_hessian_apply(x.view(), v.view()).unwrap();
            let hv = map.hessian_apply(x.view(), inv.view()).unwrap();
            out.multiply_back = out.multiply_back.max(rel_err(hv.view(), v.view(), 1.0));
        }
    }
    for case in 0..cases {
        let d = 2 + case % 9;
        let scale = [0.1, 1.0, 10.0][case % 3];
        let x = Array1::from_iter((0..d).map(|_| scale * (rng.gen::<f64>() * 2.0 - 1.0)));
        let p = project_simplex(x.view());
        out.projection = out
            .projection
            .max(max_abs_diff(p.view(), simplex_qp_oracle(x.view()).view()));
    }
    out
}

fn flat_rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let a = Array1::from_iter(a.iter().cloned());
    let b = Array1::from_iter(b.iter().cloned());
    rel_err(a.view(), b.view(), 1e-8)
}

fn fd_weights(net: &ShallowNet, f: impl Fn(&ShallowNet) -> f64, h: f64) -> Array2<f64> {
    let w = net.weights();
    Array2::from_shape_fn(w.dim(), |(i, j)| {
        let mut wp = w.clone();
        let mut wm = w.clone();
        wp[[i, j]] += h;
        wm[[i, j]] -= h;
        (f(&with_weights(net, wp)) - f(&with_weights(net, wm))) / (2.0 * h)
    })
}

/// Worst relative errors of the three gradient operations against central
/// differences, over `instances` random networks and points.
#[derive(Debug, Clone, Copy)]
pub struct GradientErrors {
    pub input: f64,
    pub weights: f64,
    pub vfm: f64,
}

/// A network whose values stay below the JS domain bound `-ln 2 / 2`:
/// negative output signs over a positive activation.
pub fn js_safe_net<R: Rng>(d: usize, width: usize, rng: &mut R) -> ShallowNet {
    let w0 = Array2::from_shape_fn((width, d), |_| rng.sample::<f64, _>(StandardNormal));
    let w = &w0 + &Array2::from_shape_fn((width, d), |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
    ShallowNet::from_parts(w, w0, Array1::from_elem(width, -1.0), 10.0)
        .unwrap()
        .with_activation(Activation::Softplus)
}

pub fn gradient_suite(kind: FunctionalKind, instances: usize, seed: u64) -> GradientErrors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientErrors {
        input: 0.0,
        weights: 0.0,
        vfm: 0.0,
    };
    let h = 1e-6;
    for i in 0..instances {
        let d = 2 + i % 4;
        let width = 4 + i % 9;
        let domain = if i % 2 == 0 {
            Domain::UnitBall(d)
        } else {
            Domain::Simplex(d)
        };
        let net = match kind {
            FunctionalKind::Js => js_safe_net(d, width, &mut rng),
            _ => {
                let act = if i % 3 == 0 {
                    Activation::Tanh
                } else {
                    Activation::Softplus
                };
                random_net(d, width, act, &mut rng)
            }
        };
        let x = random_interior(domain, &mut rng);

        let gx = net.grad_input(x.view());
        let fdx = fd_gradient(|p| net_formula(&net, p.view()), &x, h);
        out.input = out.input.max(rel_err(gx.view(), fdx.view(), 1e-8));

        let gw = net.grad_weights(x.view());
        let fdw = fd_weights(&net, |n| net_formula(n, x.view()), h);
        out.weights = out.weights.max(flat_rel_err(&gw, &fdw));

        let m = 5;
        let mut batch = Array2::zeros((m, d));
        for mut row in batch.rows_mut() {
            row.assign(&random_interior(domain, &mut rng));
        }
        let targets = TargetSampleSet::new(batch.clone(), domain).unwrap();
        let fun = VariationalFunctional::new(kind, targets);
        if kind == FunctionalKind::Js {
            let vals = Array1::from_iter(batch.rows().into_iter().map(|z| net_formula(&net, z)));
            assert!(
                vals.iter().all(|&v| 1.0 - 2.0 * (2.0 * v).exp() > 1e-3),
                "JS instance left the unclamped regime"
            );
        }
        let gv = fun.vfm_weight_gradient(&net, x.view(), batch.view());
        let fdv = fd_weights(
            &net,
            |n| {
                let vals = Array1::from_iter(batch.rows().into_iter().map(|z| net_formula(n, z)));
                fun.conjugate_value(vals.view()) - net_formula(n, x.view())
            },
            h,
        );
        out.vfm = out.vfm.max(flat_rel_err(&gv, &fdv));
    }
    out
}

/// Largest gap between the weighted-cloud direction and `-(L v)` over the
/// query points, both on an `n`-node grid.
pub fn svmd_oracle_gap(inst: &SvmdInstance, n: usize) -> f64 {
    use mirrorvt::transport::{DirichletMixtureScore, DualCloud};
    let map = MirrorMap::entropic_simplex(2);
    let score = DirichletMixtureScore::new(&inst.spec).unwrap();
    let (ys, ws) = inst.grid(n);
    let weights = Array1::from_iter(ys.iter().zip(&ws).map(|(&y, &w)| w * inst.q_t(y)));
    let ys = Array2::from_shape_vec((n, 1), ys).unwrap();
    let cloud = DualCloud::new(&map, ys.view(), weights.view(), &score).unwrap();
    inst.queries
        .iter()
        .map(|&y| {
            let u = cloud
                .direction(&map, &inst.kernel, Array1::from_elem(1, y).view())
                .unwrap();
            (u[0] + inst.operator_quadrature(y, n)).abs()
        })
        .fold(0.0, f64::max)
}
