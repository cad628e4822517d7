//! D-opt uncertainty, co-visibility structure and per-keyframe trend series.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{self, Factor, FactorGraph, GaugeConfig, Key, SolverConfig};
use crate::io::KeyframeDataset;
use crate::marginals::Marginals;

/// D-opt criterion as `log det Σ`, from the Cholesky pivots.
pub fn dopt(block: &DMatrix<f64>) -> Result<f64> {
    if !block.is_square() || block.nrows() == 0 {
        return Err(Error::Validation(format!("dopt needs a square block, got {}x{}", block.nrows(), block.ncols())));
    }
    let chol =
        nalgebra::Cholesky::new(block.clone()).ok_or(Error::NotPositiveDefinite { pivot: 0, value: f64::NAN })?;
    let l = chol.l_dirty();
    let mut sum = 0.0;
    for i in 0..block.nrows() {
        let p = l[(i, i)];
        if !(p > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: i, value: p });
        }
        sum += 2.0 * p.ln();
    }
    Ok(sum)
}

/// Keyframe adjacency; entry `(i, j)` counts flow factors from `i` to `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CovisibilityGraph {
    n: usize,
    counts: Vec<u32>,
}

impl CovisibilityGraph {
    pub fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    fn bump(&mut self, i: usize, j: usize) {
        self.counts[i * self.n + j] += 1;
    }

    /// Measurements in either direction between `i` and `j`.
    pub fn symmetric(&self, i: usize, j: usize) -> u32 {
        self.get(i, j) + self.get(j, i)
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Earlier keyframes registered with `k`.
    pub fn backlinks(&self, k: usize) -> Vec<usize> {
        (0..k).filter(|&j| self.symmetric(k, j) > 0).collect()
    }

    /// The top-left `m × m` block.
    pub fn truncated(&self, m: usize) -> CovisibilityGraph {
        let mut out = CovisibilityGraph::new(m);
        for i in 0..m.min(self.n) {
            for j in 0..m.min(self.n) {
                out.counts[i * m + j] = self.get(i, j);
            }
        }
        out
    }
}

pub fn covisibility(g: &FactorGraph) -> CovisibilityGraph {
    let n = g.pose_ids().iter().max().map_or(0, |m| m + 1);
    let mut c = CovisibilityGraph::new(n);
    for f in g.factors() {
        if let Factor::Flow(f) = f {
            c.bump(f.frame_i, f.frame_j);
        }
    }
    c
}

pub fn dataset_covisibility(ds: &KeyframeDataset) -> CovisibilityGraph {
    let mut c = CovisibilityGraph::new(ds.keyframes.len());
    for m in &ds.measurements {
        c.bump(m.frame_i, m.frame_j);
    }
    c
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrendConfig {
    pub solver: SolverConfig,
    pub gauge: GaugeConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendEntry {
    pub keyframe: usize,
    /// `log det` of the newest pose's marginal covariance.
    pub logdet: f64,
    /// Earlier keyframes the newest one is registered with.
    pub num_edges: usize,
    /// Largest keyframe gap among those registrations.
    pub max_backlink_span: usize,
    pub covariance: DMatrix<f64>,
    pub adjacency: CovisibilityGraph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendSeries {
    pub entries: Vec<TrendEntry>,
}

impl TrendSeries {
    pub fn logdets(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.logdet).collect()
    }

    pub fn get(&self, keyframe: usize) -> Option<&TrendEntry> {
        self.entries.iter().find(|e| e.keyframe == keyframe)
    }
}

/// Solves each growing prefix window of keyframes from the dataset poses and
/// records the newest pose's D-opt value. The first window is keyframes 0..=1.
pub fn trend_series(ds: &KeyframeDataset, cfg: &TrendConfig) -> Result<TrendSeries> {
    ds.validate()?;
    let n = ds.keyframes.len();
    let full = dataset_covisibility(ds);
    let entries: Result<Vec<TrendEntry>> = (1..n)
        .into_par_iter()
        .map(|k| {
            let window = ds.prefix(k);
            let (g, x0) = graph::build_graph(&window, &cfg.gauge)?;
            let (x, _) = graph::gauss_newton_solve(&g, &x0, &cfg.solver)?;
            let cov = Marginals::new(&g, &x)?.marginal(Key::Pose(k))?;
            let adjacency = full.truncated(k + 1);
            let back = adjacency.backlinks(k);
            Ok(TrendEntry {
                keyframe: k,
                logdet: dopt(&cov)?,
                num_edges: back.len(),
                max_backlink_span: back.iter().map(|j| k - j).max().unwrap_or(0),
                covariance: cov,
                adjacency,
            })
        })
        .collect();
    Ok(TrendSeries { entries: entries? })
}
