//! Seeded synthetic scenes: ground-truth trajectories, landmarks, pixel
//! samples and noisy bidirectional flow targets.

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{DatasetMeta, FlowMeasurement, Keyframe, KeyframeDataset, PixelSample};
use crate::camera::{self, PinholeIntrinsics};
use crate::error::{Error, Result};
use crate::liegroup::{Pose, Rotation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryKind {
    /// Straight corridor, camera facing the wall.
    Line,
    /// Outward-facing camera on a partial circle.
    Arc,
    /// Outward-facing camera on a full circle; the last keyframes meet the first.
    Loop,
    /// Forward along a corridor, then back over the same stretch.
    Revisit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: TrajectoryKind,
    pub keyframes: usize,
    pub landmarks: usize,
    /// Flow noise standard deviation, pixels.
    pub pixel_noise: f64,
    /// Keyframe gap within which frames are registered; places within
    /// `(span + 0.5)` keyframe spacings are registered too.
    pub covis_span: usize,
    pub seed: u64,
    /// Seed of the flow noise; defaults to `seed`. Varying it alone keeps the
    /// scene fixed.
    #[serde(default)]
    pub noise_seed: Option<u64>,
    #[serde(default = "default_samples")]
    pub samples_per_keyframe: usize,
    /// Nominal distance between consecutive keyframes, meters.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_samples() -> usize {
    24
}

fn default_step() -> f64 {
    0.25
}

impl ScenarioSpec {
    pub fn new(kind: TrajectoryKind, keyframes: usize, seed: u64) -> Self {
        Self {
            kind,
            keyframes,
            landmarks: 400,
            pixel_noise: 1.0,
            covis_span: 2,
            seed,
            noise_seed: None,
            samples_per_keyframe: default_samples(),
            step: default_step(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.keyframes == 0 || self.landmarks == 0 || self.samples_per_keyframe == 0 || self.covis_span == 0 {
            return Err(Error::Validation("scenario counts must be positive".into()));
        }
        if !(self.pixel_noise >= 0.0 && self.pixel_noise.is_finite()) {
            return Err(Error::Validation(format!("pixel noise {} must be >= 0", self.pixel_noise)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Validation(format!("step {} must be positive", self.step)));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| Error::Validation(format!("scenario spec: {}", e.message())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario spec serializes")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub poses: Vec<Pose>,
    pub landmarks: Vec<Vector3<f64>>,
    /// Landmark behind each pixel sample, per keyframe.
    pub sample_landmarks: Vec<Vec<usize>>,
    /// Radius within which keyframes at any gap are registered, meters.
    pub revisit_radius: f64,
}

pub fn default_intrinsics() -> PinholeIntrinsics {
    PinholeIntrinsics { fx: 320.0, fy: 320.0, cx: 320.0, cy: 240.0, width: 640.0, height: 480.0 }
}

/// Camera looking along `forward` with image y along world +y.
fn look_rotation(forward: &Vector3<f64>) -> Rotation {
    let z = forward.normalize();
    let y = Vector3::y();
    let x = y.cross(&z).normalize();
    let y = z.cross(&x);
    Rotation::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]))
}

fn trajectory(spec: &ScenarioSpec) -> Vec<Pose> {
    let n = spec.keyframes;
    let s = spec.step;
    match spec.kind {
        TrajectoryKind::Line => (0..n).map(|k| Pose::from_translation(Vector3::new(k as f64 * s, 0.0, 0.0))).collect(),
        TrajectoryKind::Revisit => {
            let half = n.div_ceil(2);
            (0..n)
                .map(|k| {
                    let (x, y) = if k < half {
                        (k as f64 * s, 0.0)
                    } else {
                        ((2 * (half - 1)) as f64 * s - k as f64 * s, 0.2 * s)
                    };
                    Pose::from_translation(Vector3::new(x, y, 0.0))
                })
                .collect()
        }
        TrajectoryKind::Arc | TrajectoryKind::Loop => {
            let (radius, dtheta) = match spec.kind {
                TrajectoryKind::Loop => {
                    let dtheta = std::f64::consts::TAU / n as f64;
                    (s / (2.0 * (dtheta / 2.0).sin()), dtheta)
                }
                _ => (2.0, 2.0 * (s / 4.0).asin()),
            };
            (0..n)
                .map(|k| {
                    let theta = k as f64 * dtheta;
                    let dir = Vector3::new(theta.cos(), 0.0, theta.sin());
                    Pose::new(look_rotation(&dir), dir * radius)
                })
                .collect()
        }
    }
}

fn landmarks(spec: &ScenarioSpec, poses: &[Pose], rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    match spec.kind {
        TrajectoryKind::Line | TrajectoryKind::Revisit => {
            let xs: Vec<f64> = poses.iter().map(|p| p.translation.x).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min) - 2.5;
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.5;
            (0..spec.landmarks)
                .map(|_| Vector3::new(rng.gen_range(lo..hi), rng.gen_range(-1.5..1.5), rng.gen_range(3.0..6.0)))
                .collect()
        }
        TrajectoryKind::Arc | TrajectoryKind::Loop => {
            let radius = poses[0].translation.norm();
            let span = match spec.kind {
                TrajectoryKind::Loop => std::f64::consts::TAU,
                _ => {
                    let last = poses[poses.len() - 1].translation;
                    last.z.atan2(last.x).rem_euclid(std::f64::consts::TAU) + 1.2
                }
            };
            (0..spec.landmarks)
                .map(|_| {
                    let a = rng.gen_range(-0.6..span);
                    let r = radius + rng.gen_range(2.5..5.0);
                    Vector3::new(r * a.cos(), rng.gen_range(-1.5..1.5), r * a.sin())
                })
                .collect()
        }
    }
}

const VISIBILITY_MARGIN: f64 = 5.0;
const MIN_VISIBLE_DEPTH: f64 = 0.5;

fn visible(k: &PinholeIntrinsics, pose: &Pose, point: &Vector3<f64>) -> Option<(camera::Pixel, f64)> {
    let pc = pose.inverse().transform_point(point);
    if pc.z < MIN_VISIBLE_DEPTH {
        return None;
    }
    let p = camera::project(k, &pc).ok()?;
    let inside = p.u >= VISIBILITY_MARGIN
        && p.u < k.width - VISIBILITY_MARGIN
        && p.v >= VISIBILITY_MARGIN
        && p.v < k.height - VISIBILITY_MARGIN;
    inside.then_some((p, pc.z))
}

/// Whether keyframes `i` and `j` are registered: within the keyframe span, or
/// back at a place within the revisit radius.
pub fn registered(spec: &ScenarioSpec, gt: &GroundTruth, i: usize, j: usize) -> bool {
    i != j
        && (i.abs_diff(j) <= spec.covis_span
            || (gt.poses[i].translation - gt.poses[j].translation).norm() <= gt.revisit_radius)
}

pub fn simulate_scenario(spec: &ScenarioSpec) -> Result<(KeyframeDataset, GroundTruth)> {
    spec.validate()?;
    let k = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed.unwrap_or(spec.seed) ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, spec.pixel_noise).map_err(|e| Error::Validation(e.to_string()))?;

    let poses = trajectory(spec);
    let points = landmarks(spec, &poses, &mut rng);

    let spacing = if poses.len() > 1 {
        poses.windows(2).map(|w| (w[1].translation - w[0].translation).norm()).sum::<f64>() / (poses.len() - 1) as f64
    } else {
        spec.step
    };
    let revisit_radius = (spec.covis_span as f64 + 0.5) * spacing;

    let mut keyframes = Vec::with_capacity(poses.len());
    let mut sample_landmarks = Vec::with_capacity(poses.len());
    for (id, pose) in poses.iter().enumerate() {
        let mut seen: Vec<usize> = (0..points.len()).filter(|&l| visible(&k, pose, &points[l]).is_some()).collect();
        if seen.is_empty() {
            return Err(Error::DegenerateScenario(format!("no landmark is visible from keyframe {id}")));
        }
        seen.shuffle(&mut rng);
        seen.truncate(spec.samples_per_keyframe);
        seen.sort_unstable();
        let samples = seen
            .iter()
            .map(|&l| {
                let (pixel, z) = visible(&k, pose, &points[l]).expect("visible by construction");
                PixelSample { pixel, inv_depth: 1.0 / z }
            })
            .collect();
        keyframes.push(Keyframe { id, pose: *pose, samples });
        sample_landmarks.push(seen);
    }

    let gt = GroundTruth { poses, landmarks: points, sample_landmarks, revisit_radius };
    let sigma = (spec.pixel_noise > 0.0).then(|| Matrix2::identity() * spec.pixel_noise.powi(2));

    let mut measurements = Vec::new();
    let n = gt.poses.len();
    for i in 0..n {
        for j in 0..n {
            if !registered(spec, &gt, i, j) {
                continue;
            }
            for (s, &l) in gt.sample_landmarks[i].iter().enumerate() {
                let Some((p, _)) = visible(&k, &gt.poses[j], &gt.landmarks[l]) else { continue };
                let (du, dv) = if spec.pixel_noise > 0.0 {
                    (noise.sample(&mut noise_rng), noise.sample(&mut noise_rng))
                } else {
                    (0.0, 0.0)
                };
                measurements.push(FlowMeasurement {
                    frame_i: i,
                    frame_j: j,
                    sample: s,
                    target: camera::Pixel::new(p.u + du, p.v + dv),
                    sigma,
                });
            }
        }
    }

    let ds = KeyframeDataset {
        intrinsics: k,
        keyframes,
        measurements,
        meta: DatasetMeta { pixel_scale: 1.0, source: format!("simulated-{:?}", spec.kind).to_lowercase() },
    };
    ds.validate()?;
    Ok((ds, gt))
}
