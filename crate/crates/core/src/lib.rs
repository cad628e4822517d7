//! Marginal pose covariance recovery for monocular dense bundle adjustment.
//!
//! The dense bundle-adjustment layer of a visual-odometry engine is written
//! as a factor graph over SE(3) keyframe poses and per-pixel inverse depths.
//! At a given linearization point the graph is whitened and linearized, its
//! information matrix is factored into a sparse square root, and exact
//! marginal covariances of the poses are read off the factor. The D-opt value
//! (`log det`) of those marginals is the scalar uncertainty tracked per
//! keyframe.
//!
//! ```no_run
//! use vocovar::{analysis, graph, io, marginals::Marginals};
//!
//! let ds = io::load_dataset("scene.txt")?;
//! let (g, x0) = graph::build_graph(&ds, &graph::GaugeConfig::default())?;
//! let (x, _report) = graph::gauss_newton_solve(&g, &x0, &graph::SolverConfig::default())?;
//! let cov = Marginals::new(&g, &x)?.marginal(graph::Key::Pose(5))?;
//! println!("log det = {}", analysis::dopt(&cov)?);
//! # Ok::<(), vocovar::Error>(())
//! ```

pub mod analysis;
pub mod camera;
pub mod cli;
mod error;
pub mod factors;
pub mod graph;
pub mod io;
pub mod liegroup;
pub mod marginals;

pub use error::{Error, Result};
