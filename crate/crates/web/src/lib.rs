//! Browser bindings: run a transport simulation step by step and compare a
//! mirrored path with a projected one on the disk.

use mirrorvt::cli::{prepare, stream_rng, ExperimentConfig, Scenario};
use mirrorvt::functionals::FunctionalKind;
use mirrorvt::geometry::{project_ball, Domain, MirrorMap};
use mirrorvt::transport::{Algorithm, Transporter};
use ndarray::Array1;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> Result<T, JsError>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| JsError::new(&format!("{what}: {e}")))
}

#[wasm_bindgen]
pub struct Simulation {
    driver: Transporter,
    rng: ChaCha8Rng,
    targets: Vec<f64>,
    mmd: Vec<f64>,
    patience: usize,
}

#[wasm_bindgen]
impl Simulation {
    /// Default settings for the chosen cell. `eta` of zero or less keeps the
    /// algorithm's default step size.
    #[wasm_bindgen(constructor)]
    pub fn new(scenario: &str, algorithm: &str, functional: &str, eta: f64, seed: u64) -> Result<Simulation, JsError> {
        let mut cfg = ExperimentConfig::new(
            parse::<Scenario>("scenario", scenario)?,
            parse::<Algorithm>("algorithm", algorithm)?,
            parse::<FunctionalKind>("functional", functional)?,
        );
        if eta > 0.0 {
            cfg.eta = eta;
        }
        cfg.seed = seed;
        let prepared = prepare(&cfg).map_err(js_err)?;
        let mut rng = stream_rng(seed, 2);
        let driver =
            Transporter::new(cfg.transport(), prepared.initial, &prepared.functional, &mut rng).map_err(js_err)?;
        let first = driver.measure().map_err(js_err)?;
        Ok(Simulation {
            driver,
            rng,
            targets: prepared.targets.samples().iter().copied().collect(),
            mmd: vec![first.mmd],
            patience: cfg.patience,
        })
    }

    /// Advances up to `n` iterations and returns the latest squared MMD.
    pub fn step(&mut self, n: usize) -> Result<f64, JsError> {
        for _ in 0..n {
            let row = self.driver.advance(&mut self.rng).map_err(js_err)?;
            self.mmd.push(row.mmd);
        }
        Ok(*self.mmd.last().expect("baseline row"))
    }

    pub fn dim(&self) -> usize {
        self.driver.particles().dim()
    }

    pub fn iteration(&self) -> usize {
        self.driver.particles().iteration()
    }

    /// Row-major particle coordinates.
    pub fn particles(&self) -> Vec<f64> {
        self.driver.particles().points().iter().copied().collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.targets.clone()
    }

    pub fn mmd_history(&self) -> Vec<f64> {
        self.mmd.clone()
    }

    pub fn all_interior(&self) -> bool {
        self.driver.particles().all_interior()
    }

    /// Whether the run would have stopped early by now.
    pub fn stalled(&self) -> bool {
        let best = self
            .mmd
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &m)| if m < acc.1 { (i, m) } else { acc });
        self.mmd.len() - 1 - best.0 > self.patience
    }
}

/// Paths of a point on the disk pushed by the constant gradient `(gx, gy)`:
/// the mirror-descent path first, then the projected path, each as
/// `steps + 1` flattened `(x, y)` pairs.
#[wasm_bindgen]
pub fn disk_paths(x: f64, y: f64, gx: f64, gy: f64, eta: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    let map = MirrorMap::ball_log(2);
    let start = Array1::from(vec![x, y]);
    if !Domain::UnitBall(2).contains(start.view(), true) {
        return Err(JsError::new("start point must lie inside the unit disk"));
    }
    let g = Array1::from(vec![gx, gy]);
    let mut out = Vec::with_capacity(4 * (steps + 1));
    let mut dual = map.grad_phi(start.view()).map_err(js_err)?;
    let mut p = start.clone();
    out.extend(p.iter());
    for _ in 0..steps {
        dual.scaled_add(-eta, &g);
        p = map.grad_phi_star(dual.view());
        out.extend(p.iter());
    }
    let mut q = start;
    out.extend(q.iter());
    for _ in 0..steps {
        q.scaled_add(-eta, &g);
        q = project_ball(q.view());
        out.extend(q.iter());
    }
    Ok(out)
}

/// Primal images of a square grid of dual points: `n * n` flattened pairs
/// for the disk, or barycentric triples for the triangle.
#[wasm_bindgen]
pub fn dual_grid_image(simplex: bool, half_width: f64, n: usize) -> Vec<f64> {
    let map = if simplex {
        MirrorMap::entropic_simplex(3)
    } else {
        MirrorMap::ball_log(2)
    };
    let mut out = Vec::new();
    let step = if n > 1 { 2.0 * half_width / (n - 1) as f64 } else { 0.0 };
    for i in 0..n {
        for j in 0..n {
            let y = Array1::from(vec![-half_width + i as f64 * step, -half_width + j as f64 * step]);
            out.extend(map.grad_phi_star(y.view()).iter());
        }
    }
    out
}
