//! Factor graph container, whitened linearization and information matrix.

mod build;
mod solver;

pub use build::{build_graph, GaugeConfig};
pub use solver::{gauss_newton_solve, SolveReport, SolverConfig};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rayon::prelude::*;

use crate::camera::PinholeIntrinsics;
use crate::error::{Error, Result};
use crate::factors::{self, BetweenFactor, FlowFactor, PriorFactor, ProjectionFactor};
use crate::liegroup::{self, Pose, TangentVector};

/// Lower bound applied to inverse depths after an update.
pub const MIN_INVERSE_DEPTH: f64 = 1e-6;

/// Variable identifier. The derived order puts inverse depths first, then
/// landmarks, then poses, which is the elimination order of the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    InvDepth(usize),
    Landmark(usize),
    Pose(usize),
}

impl Key {
    pub fn dim(&self) -> usize {
        match self {
            Key::InvDepth(_) => 1,
            Key::Landmark(_) => 3,
            Key::Pose(_) => 6,
        }
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::InvDepth(i) => write!(f, "d{i}"),
            Key::Landmark(i) => write!(f, "l{i}"),
            Key::Pose(i) => write!(f, "x{i}"),
        }
    }
}

/// A linearization point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Values {
    pub poses: BTreeMap<usize, Pose>,
    pub inv_depths: BTreeMap<usize, f64>,
    pub landmarks: BTreeMap<usize, Vector3<f64>>,
}

impl Values {
    pub fn pose(&self, id: usize) -> Result<&Pose> {
        self.poses.get(&id).ok_or(Error::UnknownVariable(Key::Pose(id)))
    }

    pub fn inv_depth(&self, id: usize) -> Result<f64> {
        self.inv_depths.get(&id).copied().ok_or(Error::UnknownVariable(Key::InvDepth(id)))
    }

    pub fn landmark(&self, id: usize) -> Result<&Vector3<f64>> {
        self.landmarks.get(&id).ok_or(Error::UnknownVariable(Key::Landmark(id)))
    }

    pub fn contains(&self, key: &Key) -> bool {
        match key {
            Key::Pose(i) => self.poses.contains_key(i),
            Key::InvDepth(i) => self.inv_depths.contains_key(i),
            Key::Landmark(i) => self.landmarks.contains_key(i),
        }
    }

    /// Applies `x ⊞ δ` block by block, `δ` laid out by `layout`.
    pub fn retract(&self, layout: &BlockLayout, delta: &DVector<f64>) -> Result<Values> {
        let mut out = self.clone();
        for (b, key) in layout.keys.iter().enumerate() {
            let off = layout.offsets[b];
            match *key {
                Key::Pose(i) => {
                    let xi = TangentVector::new(
                        Vector3::new(delta[off], delta[off + 1], delta[off + 2]),
                        Vector3::new(delta[off + 3], delta[off + 4], delta[off + 5]),
                    );
                    let p = out.poses.get_mut(&i).ok_or(Error::UnknownVariable(*key))?;
                    *p = liegroup::boxplus(p, &xi);
                }
                Key::InvDepth(i) => {
                    let d = out.inv_depths.get_mut(&i).ok_or(Error::UnknownVariable(*key))?;
                    *d = (*d + delta[off]).max(MIN_INVERSE_DEPTH);
                }
                Key::Landmark(i) => {
                    let l = out.landmarks.get_mut(&i).ok_or(Error::UnknownVariable(*key))?;
                    *l += Vector3::new(delta[off], delta[off + 1], delta[off + 2]);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    Flow(FlowFactor),
    Prior(PriorFactor),
    Between(BetweenFactor),
    Projection(ProjectionFactor),
}

impl Factor {
    pub fn keys(&self) -> Vec<Key> {
        match self {
            Factor::Flow(f) => vec![Key::Pose(f.frame_i), Key::Pose(f.frame_j), Key::InvDepth(f.depth_var)],
            Factor::Prior(f) => vec![Key::Pose(f.frame)],
            Factor::Between(f) => vec![Key::Pose(f.frame_i), Key::Pose(f.frame_j)],
            Factor::Projection(f) => vec![Key::Pose(f.frame), Key::Landmark(f.landmark_var)],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::Flow(_) | Factor::Projection(_) => 2,
            Factor::Prior(_) | Factor::Between(_) => 6,
        }
    }

    /// Unwhitened residual.
    pub fn residual(&self, x: &Values, k: &PinholeIntrinsics) -> Result<DVector<f64>> {
        Ok(match self {
            Factor::Flow(f) => {
                let e =
                    factors::flow_residual(x.pose(f.frame_i)?, x.pose(f.frame_j)?, x.inv_depth(f.depth_var)?, f, k)?;
                DVector::from_column_slice(e.as_slice())
            }
            Factor::Prior(f) => DVector::from_column_slice(factors::prior_residual(x.pose(f.frame)?, f).as_slice()),
            Factor::Between(f) => {
                let r = factors::between_residual(x.pose(f.frame_i)?, x.pose(f.frame_j)?, f);
                DVector::from_column_slice(r.as_slice())
            }
            Factor::Projection(f) => {
                let e = factors::projection_residual(x.pose(f.frame)?, x.landmark(f.landmark_var)?, f, k)?;
                DVector::from_column_slice(e.as_slice())
            }
        })
    }

    /// `eᵀ Σ⁻¹ e` at `x`.
    pub fn cost(&self, x: &Values, k: &PinholeIntrinsics) -> Result<f64> {
        let e = self.residual(x, k)?;
        Ok(match self {
            Factor::Flow(f) => f.noise.mahalanobis_sq(&nalgebra::Vector2::new(e[0], e[1])),
            Factor::Projection(f) => f.noise.mahalanobis_sq(&nalgebra::Vector2::new(e[0], e[1])),
            Factor::Prior(f) => f.noise.mahalanobis_sq(&nalgebra::Vector6::from_column_slice(e.as_slice())),
            Factor::Between(f) => f.noise.mahalanobis_sq(&nalgebra::Vector6::from_column_slice(e.as_slice())),
        })
    }

    /// Unwhitened residual and one Jacobian per key, in [`Factor::keys`] order.
    pub fn jacobians(&self, x: &Values, k: &PinholeIntrinsics) -> Result<(DVector<f64>, Vec<DMatrix<f64>>)> {
        let e = self.residual(x, k)?;
        let blocks = match self {
            Factor::Flow(f) => {
                let (ji, jj, jd) =
                    factors::flow_jacobians(x.pose(f.frame_i)?, x.pose(f.frame_j)?, x.inv_depth(f.depth_var)?, f, k)?;
                vec![dyn_mat(&ji), dyn_mat(&jj), dyn_mat(&jd)]
            }
            Factor::Prior(f) => vec![dyn_mat(&factors::prior_jacobian(x.pose(f.frame)?, f))],
            Factor::Between(f) => {
                let (ji, jj) = factors::between_jacobians(x.pose(f.frame_i)?, x.pose(f.frame_j)?, f);
                vec![dyn_mat(&ji), dyn_mat(&jj)]
            }
            Factor::Projection(f) => {
                let (jt, jl) = factors::projection_jacobians(x.pose(f.frame)?, x.landmark(f.landmark_var)?, f, k)?;
                vec![dyn_mat(&jt), dyn_mat(&jl)]
            }
        };
        Ok((e, blocks))
    }

    pub fn whitener(&self) -> DMatrix<f64> {
        match self {
            Factor::Flow(f) => dyn_mat(f.noise.whitener()),
            Factor::Projection(f) => dyn_mat(f.noise.whitener()),
            Factor::Prior(f) => dyn_mat(f.noise.whitener()),
            Factor::Between(f) => dyn_mat(f.noise.whitener()),
        }
    }

    fn describe(&self) -> String {
        match self {
            Factor::Flow(f) => format!("flow x{}->x{} d{}", f.frame_i, f.frame_j, f.depth_var),
            Factor::Prior(f) => format!("prior x{}", f.frame),
            Factor::Between(f) => format!("between x{}->x{}", f.frame_i, f.frame_j),
            Factor::Projection(f) => format!("projection x{} l{}", f.frame, f.landmark_var),
        }
    }
}

fn dyn_mat<R: nalgebra::Dim, C: nalgebra::Dim, S>(m: &nalgebra::Matrix<f64, R, C, S>) -> DMatrix<f64>
where
    S: nalgebra::RawStorage<f64, R, C>,
{
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Column layout of the stacked variable vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayout {
    pub keys: Vec<Key>,
    pub offsets: Vec<usize>,
    index: BTreeMap<Key, usize>,
    dim: usize,
}

impl BlockLayout {
    pub fn new(keys: Vec<Key>) -> Self {
        let mut offsets = Vec::with_capacity(keys.len());
        let mut index = BTreeMap::new();
        let mut dim = 0;
        for (b, k) in keys.iter().enumerate() {
            offsets.push(dim);
            index.insert(*k, b);
            dim += k.dim();
        }
        Self { keys, offsets, index, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block_of(&self, key: &Key) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Scalar column range of `key`.
    pub fn range(&self, key: &Key) -> Option<std::ops::Range<usize>> {
        self.block_of(key).map(|b| self.offsets[b]..self.offsets[b] + self.keys[b].dim())
    }

    /// Expands a block permutation into a scalar permutation (`perm[new] = old`).
    pub fn expand(&self, block_order: &[usize]) -> Vec<usize> {
        block_order.iter().flat_map(|&b| self.offsets[b]..self.offsets[b] + self.keys[b].dim()).collect()
    }
}

/// Factors, intrinsics and variable ordering. Immutable once built.
#[derive(Clone, Debug)]
pub struct FactorGraph {
    intrinsics: PinholeIntrinsics,
    factors: Vec<Factor>,
    layout: BlockLayout,
}

impl FactorGraph {
    pub fn new(intrinsics: PinholeIntrinsics, factors: Vec<Factor>) -> Self {
        let keys: BTreeSet<Key> = factors.iter().flat_map(|f| f.keys()).collect();
        let layout = BlockLayout::new(keys.into_iter().collect());
        Self { intrinsics, factors, layout }
    }

    pub fn intrinsics(&self) -> &PinholeIntrinsics {
        &self.intrinsics
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// A copy of the graph with one more factor.
    pub fn with_factor(&self, factor: Factor) -> FactorGraph {
        let mut factors = self.factors.clone();
        factors.push(factor);
        FactorGraph::new(self.intrinsics, factors)
    }

    /// A copy keeping only factors for which `keep` returns true.
    pub fn filtered(&self, keep: impl Fn(&Factor) -> bool) -> FactorGraph {
        FactorGraph::new(self.intrinsics, self.factors.iter().filter(|f| keep(f)).cloned().collect())
    }

    pub fn pose_ids(&self) -> Vec<usize> {
        self.layout
            .keys
            .iter()
            .filter_map(|k| match k {
                Key::Pose(i) => Some(*i),
                _ => None,
            })
            .collect()
    }

    /// Block adjacency: variables sharing a factor are neighbours.
    pub fn block_adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.layout.keys.len()];
        for f in &self.factors {
            let blocks: Vec<usize> = f.keys().iter().filter_map(|k| self.layout.block_of(k)).collect();
            for &a in &blocks {
                for &b in &blocks {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        adj
    }

    /// Checks that every referenced variable exists in `x`.
    pub fn check_values(&self, x: &Values) -> Result<()> {
        for k in &self.layout.keys {
            if !x.contains(k) {
                return Err(Error::UnknownVariable(*k));
            }
        }
        for (id, d) in &x.inv_depths {
            if !(*d > 0.0) {
                return Err(Error::Validation(format!("inverse depth d{id} = {d} is not positive")));
            }
        }
        Ok(())
    }

    /// `Σᵢ eᵢᵀ Σᵢ⁻¹ eᵢ`.
    pub fn cost(&self, x: &Values) -> Result<f64> {
        let parts: Result<Vec<f64>> = self
            .factors
            .par_iter()
            .map(|f| f.cost(x, &self.intrinsics).map_err(|e| e.with_context(|| f.describe())))
            .collect();
        Ok(parts?.iter().sum())
    }
}

/// Whitened Jacobian `A` and right-hand side `b = −W e`.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub a: CscMatrix<f64>,
    pub b: DVector<f64>,
    pub layout: BlockLayout,
}

impl LinearSystem {
    /// `Aᵀ b`.
    pub fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.a.ncols());
        for (j, col) in (0..self.a.ncols()).map(|j| (j, self.a.col(j))) {
            g[j] = col.row_indices().iter().zip(col.values()).map(|(&i, v)| v * self.b[i]).sum();
        }
        g
    }

    /// `‖b‖²`, equal to the graph cost at the linearization point.
    pub fn cost(&self) -> f64 {
        self.b.norm_squared()
    }
}

pub fn linearize(g: &FactorGraph, x: &Values) -> Result<LinearSystem> {
    g.check_values(x)?;
    let layout = g.layout.clone();
    let k = g.intrinsics;

    let blocks: Result<Vec<(DVector<f64>, Vec<DMatrix<f64>>)>> = g
        .factors
        .par_iter()
        .map(|f| {
            let (e, js) = f.jacobians(x, &k).map_err(|err| err.with_context(|| f.describe()))?;
            let w = f.whitener();
            Ok((-(&w * e), js.iter().map(|j| &w * j).collect()))
        })
        .collect();
    let blocks = blocks?;

    let nrows: usize = g.factors.iter().map(Factor::dim).sum();
    let mut coo = CooMatrix::new(nrows, layout.dim());
    let mut b = DVector::zeros(nrows);
    let mut row = 0;
    for (f, (wb, wjs)) in g.factors.iter().zip(&blocks) {
        b.rows_mut(row, wb.len()).copy_from(wb);
        for (key, wj) in f.keys().iter().zip(wjs) {
            let col0 = layout.range(key).ok_or(Error::UnknownVariable(*key))?.start;
            for c in 0..wj.ncols() {
                for r in 0..wj.nrows() {
                    coo.push(row + r, col0 + c, wj[(r, c)]);
                }
            }
        }
        row += wb.len();
    }
    Ok(LinearSystem { a: CscMatrix::from(&coo), b, layout })
}

/// `Λ = AᵀA`.
pub fn information_matrix(sys: &LinearSystem) -> CscMatrix<f64> {
    let at = sys.a.transpose();
    &at * &sys.a
}
