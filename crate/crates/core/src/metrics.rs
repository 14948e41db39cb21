//! Sample-set discrepancies and run bookkeeping.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Gaussian RBF kernel `exp(-|x - x'|^2 / (2 l^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    bandwidth: f64,
}

impl Kernel {
    pub fn rbf(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(Self { bandwidth })
        } else {
            Err(Error::Config(format!(
                "kernel bandwidth must be positive, got {bandwidth}"
            )))
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        let sq: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
        (-sq / (2.0 * self.bandwidth * self.bandwidth)).exp()
    }

    /// Gradient in the second argument, `k(a, b) (a - b) / l^2`.
    pub fn grad_second(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array1<f64> {
        let k = self.eval(a, b);
        let s = k / (self.bandwidth * self.bandwidth);
        Array1::from_iter(a.iter().zip(b.iter()).map(|(x, y)| s * (x - y)))
    }
}

fn mean_kernel(x: ArrayView2<f64>, y: ArrayView2<f64>, kernel: &Kernel) -> f64 {
    let mut acc = 0.0;
    for a in x.rows() {
        let mut row = 0.0;
        for b in y.rows() {
            row += kernel.eval(a, b);
        }
        acc += row;
    }
    acc / (x.nrows() * y.nrows()) as f64
}

/// Biased (V-statistic) squared MMD between two point sets.
pub fn mmd2(x: ArrayView2<f64>, y: ArrayView2<f64>, kernel: &Kernel) -> Result<f64> {
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(Error::Degenerate("MMD needs non-empty point sets".into()));
    }
    check_dim(x.ncols(), y.ncols())?;
    Ok(mean_kernel(x, x, kernel) + mean_kernel(y, y, kernel) - 2.0 * mean_kernel(x, y, kernel))
}

/// Median pairwise Euclidean distance over the pooled set `x ∪ y`.
pub fn median_heuristic(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
    check_dim(x.ncols(), y.ncols())?;
    let pooled: Vec<ArrayView1<f64>> = x.rows().into_iter().chain(y.rows()).collect();
    let mut dists = Vec::with_capacity(pooled.len() * pooled.len().saturating_sub(1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            let d = &pooled[i] - &pooled[j];
            dists.push(d.dot(&d).sqrt());
        }
    }
    if dists.is_empty() {
        return Err(Error::Degenerate("median heuristic needs at least two points".into()));
    }
    dists.sort_by(f64::total_cmp);
    let n = dists.len();
    let median = if n % 2 == 1 {
        dists[n / 2]
    } else {
        0.5 * (dists[n / 2 - 1] + dists[n / 2])
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(Error::Degenerate("median pairwise distance is zero".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Squared MMD to the target set.
    pub mmd: f64,
    /// Plug-in variational objective; NaN when no test function is fitted.
    pub objective: f64,
    pub clamps: usize,
    /// Milliseconds since the start of the run.
    pub wallclock_ms: f64,
    /// Every particle strictly inside the domain at this iteration.
    pub all_interior: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail")]
pub enum RunStatus {
    Completed,
    EarlyStopped(usize),
    Aborted(String),
}

impl RunStatus {
    pub fn is_success(&self) -> bool {
        !matches!(self, RunStatus::Aborted(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    pub points: Array2<f64>,
}

/// Per-iteration records of a run; row 0 is the pre-update baseline.
#[derive(Debug, Clone)]
pub struct RunHistory {
    pub rows: Vec<HistoryRow>,
    pub snapshots: Vec<Snapshot>,
    pub status: RunStatus,
    pub kernel: Kernel,
    pub vfm_solves: usize,
}

impl RunHistory {
    pub fn new(kernel: Kernel) -> Self {
        Self {
            rows: Vec::new(),
            snapshots: Vec::new(),
            status: RunStatus::Completed,
            kernel,
            vfm_solves: 0,
        }
    }

    pub fn push(&mut self, row: HistoryRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.iteration < row.iteration));
        self.rows.push(row);
    }

    pub fn last_iteration(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iteration)
    }

    pub fn final_mmd(&self) -> Option<f64> {
        self.rows.last().map(|r| r.mmd)
    }

    pub fn mmd_series(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.mmd).collect()
    }
}

/// True when the minimum MMD was reached more than `patience` iterations
/// before the latest row. Only a strict decrease counts as a new minimum.
pub fn should_stop(rows: &[HistoryRow], patience: usize) -> bool {
    let Some(last) = rows.last() else {
        return false;
    };
    let mut best = f64::INFINITY;
    let mut best_iter = last.iteration;
    for r in rows {
        if r.mmd < best {
            best = r.mmd;
            best_iter = r.iteration;
        }
    }
    last.iteration - best_iter > patience
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn rows(mmds: &[f64]) -> Vec<HistoryRow> {
        mmds.iter()
            .enumerate()
            .map(|(i, &m)| HistoryRow {
                iteration: i,
                mmd: m,
                objective: 0.0,
                clamps: 0,
                wallclock_ms: 0.0,
                all_interior: true,
            })
            .collect()
    }

    #[test]
    fn mmd_examples() {
        let k = Kernel::rbf(1.0).unwrap();
        let x = array![[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]];
        assert_abs_diff_eq!(mmd2(x.view(), x.view(), &k).unwrap(), 0.0, epsilon = 1e-12);

        let a = array![[0.0]];
        let b = array![[1.0]];
        let expected = 2.0 * (1.0 - (-0.5f64).exp());
        assert_abs_diff_eq!(mmd2(a.view(), b.view(), &k).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.786938680574733, epsilon = 1e-12);
    }

    #[test]
    fn mmd_rejects_bad_inputs() {
        let k = Kernel::rbf(1.0).unwrap();
        let a = array![[0.0, 1.0]];
        let b = array![[1.0]];
        assert!(matches!(mmd2(a.view(), b.view(), &k), Err(Error::Dimension { .. })));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(mmd2(a.view(), empty.view(), &k).is_err());
        assert!(Kernel::rbf(0.0).is_err());
    }

    #[test]
    fn median_examples() {
        let x = array![[0.0]];
        let y = array![[2.0]];
        assert_eq!(median_heuristic(x.view(), y.view()).unwrap(), 2.0);
        let x = array![[0.0], [1.0]];
        let y = array![[2.0]];
        assert_eq!(median_heuristic(x.view(), y.view()).unwrap(), 1.0);
        let same = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            median_heuristic(same.view(), same.view()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn stopping_examples() {
        let decreasing: Vec<f64> = (0..100).map(|i| 1.0 / (i + 1) as f64).collect();
        for n in 1..=decreasing.len() {
            assert!(!should_stop(&rows(&decreasing[..n]), 20));
        }

        let flat = vec![0.5; 22];
        assert!(!should_stop(&rows(&flat[..21]), 20));
        assert!(should_stop(&rows(&flat), 20));

        // dip at iteration 5, flat afterwards
        let mut dip = vec![0.5; 5];
        dip.extend(vec![0.1; 22]);
        assert!(!should_stop(&rows(&dip[..26]), 20));
        assert!(should_stop(&rows(&dip[..27]), 20));
        assert_eq!(rows(&dip[..27]).last().unwrap().iteration, 26);
    }
}
