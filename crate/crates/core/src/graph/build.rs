use std::collections::BTreeMap;

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use super::{Factor, FactorGraph, Values};
use crate::error::{Error, Result};
use crate::factors::{self, FlowFactor, NoiseModel, PriorFactor};
use crate::io::KeyframeDataset;

/// Priors that fix the 7-dof monocular gauge (rigid motion and scale).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaugeConfig {
    pub enabled: bool,
    /// Rotation sigma of each prior, radians.
    pub rot_sigma: f64,
    /// Translation sigma of each prior, meters.
    pub trans_sigma: f64,
    /// Number of leading keyframes that receive a prior.
    pub frames: usize,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        Self { enabled: true, rot_sigma: 1e-4, trans_sigma: 1e-4, frames: 2 }
    }
}

impl GaugeConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn noise(&self) -> Result<NoiseModel<6>> {
        let (r, t) = (self.rot_sigma * self.rot_sigma, self.trans_sigma * self.trans_sigma);
        NoiseModel::new(Matrix6::from_diagonal(&nalgebra::Vector6::new(r, r, r, t, t, t)))
    }
}

/// Depth variable id of every `(keyframe, sample)` referenced by a
/// measurement, numbered in `(keyframe, sample)` order.
pub fn depth_variables(ds: &KeyframeDataset) -> BTreeMap<(usize, usize), usize> {
    let mut ids: BTreeMap<(usize, usize), usize> = ds.measurements.iter().map(|m| ((m.frame_i, m.sample), 0)).collect();
    for (n, v) in ids.values_mut().enumerate() {
        *v = n;
    }
    ids
}

/// One flow factor per measurement, gauge priors on the leading keyframes and
/// the dataset poses and depths as the linearization point.
pub fn build_graph(ds: &KeyframeDataset, gauge: &GaugeConfig) -> Result<(FactorGraph, Values)> {
    ds.validate()?;
    let k = ds.intrinsics;
    let depth_ids = depth_variables(ds);

    let mut values = Values::default();
    for kf in &ds.keyframes {
        values.poses.insert(kf.id, kf.pose);
    }
    for (&(frame, sample), &id) in &depth_ids {
        values.inv_depths.insert(id, ds.keyframes[frame].samples[sample].inv_depth);
    }

    let mut graph_factors = Vec::with_capacity(ds.measurements.len() + gauge.frames);
    if gauge.enabled {
        let noise = gauge.noise()?;
        for kf in ds.keyframes.iter().take(gauge.frames) {
            graph_factors.push(Factor::Prior(PriorFactor { frame: kf.id, predicted_pose: kf.pose, noise }));
        }
    }

    let default_noise = factors::default_flow_noise();
    for (idx, m) in ds.measurements.iter().enumerate() {
        let noise = match m.sigma {
            Some(s) => NoiseModel::new(s)?,
            None => default_noise,
        };
        let sample = &ds.keyframes[m.frame_i].samples[m.sample];
        let depth_var = depth_ids[&(m.frame_i, m.sample)];
        let f = FlowFactor::new(m.frame_i, m.frame_j, sample.pixel, m.target, depth_var, noise)?;
        factors::flow_residual(&values.poses[&m.frame_i], &values.poses[&m.frame_j], sample.inv_depth, &f, &k)
            .map_err(|e| {
                e.with_context(|| format!("measurement #{idx} (M {} {} {})", m.frame_i, m.frame_j, m.sample))
            })?;
        graph_factors.push(Factor::Flow(f));
    }

    let graph = FactorGraph::new(k, graph_factors);
    // Keyframes without any factor are not variables of the graph.
    values.poses.retain(|id, _| graph.layout().block_of(&super::Key::Pose(*id)).is_some());
    if graph.layout().keys.is_empty() {
        return Err(Error::Validation("graph has no variables".into()));
    }
    Ok((graph, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{PinholeIntrinsics, Pixel};
    use crate::io::{FlowMeasurement, Keyframe, PixelSample};
    use crate::liegroup::Pose;
    use nalgebra::Vector3;

    fn dataset(n: usize, pairs: &[(usize, usize)], m: usize) -> KeyframeDataset {
        let intrinsics = PinholeIntrinsics::new(320.0, 320.0, 320.0, 240.0, 640.0, 480.0).unwrap();
        let mut keyframes: Vec<Keyframe> = (0..n)
            .map(|id| Keyframe {
                id,
                pose: Pose::from_translation(Vector3::new(0.1 * id as f64, 0.0, 0.0)),
                samples: Vec::new(),
            })
            .collect();
        let mut measurements = Vec::new();
        for &(a, b) in pairs {
            for (src, dst) in [(a, b), (b, a)] {
                for s in 0..m {
                    let idx = keyframes[src].samples.len();
                    keyframes[src]
                        .samples
                        .push(PixelSample { pixel: Pixel::new(100.0 + 10.0 * s as f64, 200.0), inv_depth: 0.3 });
                    measurements.push(FlowMeasurement {
                        frame_i: src,
                        frame_j: dst,
                        sample: idx,
                        target: Pixel::new(100.0, 200.0),
                        sigma: None,
                    });
                }
            }
        }
        KeyframeDataset { intrinsics, keyframes, measurements, meta: Default::default() }
    }

    #[test]
    fn two_keyframes_without_flow_have_two_priors() {
        let (g, x) = build_graph(&dataset(2, &[], 0), &GaugeConfig::default()).unwrap();
        assert_eq!(g.factors().len(), 2);
        assert!(g.factors().iter().all(|f| matches!(f, Factor::Prior(_))));
        assert_eq!(x.poses.len(), 2);
    }

    #[test]
    fn bidirectional_counts() {
        let m = 5;
        let (g, x) = build_graph(&dataset(3, &[(0, 1), (1, 2)], m), &GaugeConfig::default()).unwrap();
        let flows = g.factors().iter().filter(|f| matches!(f, Factor::Flow(_))).count();
        let priors = g.factors().iter().filter(|f| matches!(f, Factor::Prior(_))).count();
        assert_eq!((priors, flows), (2, 4 * m));
        assert_eq!(x.inv_depths.len(), 4 * m);
    }

    #[test]
    fn point_behind_target_is_rejected_with_diagnostic() {
        let mut ds = dataset(2, &[(0, 1)], 1);
        ds.keyframes[1].pose = Pose::from_translation(Vector3::new(0.0, 0.0, 10.0));
        let err = build_graph(&ds, &GaugeConfig::default()).unwrap_err();
        assert!(matches!(err, Error::CheiralityViolation { .. }));
        assert!(err.to_string().contains("measurement #0 (M 0 1 0)"), "{err}");
    }
}
