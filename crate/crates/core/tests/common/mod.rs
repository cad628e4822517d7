#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2, Matrix6, Vector3, Vector6};
use nalgebra_sparse::CscMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use vocovar::camera::{self, PinholeIntrinsics, Pixel};
use vocovar::factors::{BetweenFactor, FlowFactor, NoiseModel, PriorFactor, ProjectionFactor};
use vocovar::graph::{Factor, FactorGraph, Values};
use vocovar::io::default_intrinsics;
use vocovar::liegroup::{se3_exp, Pose, TangentVector};

pub fn tangent(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> TangentVector {
    TangentVector::new(
        Vector3::from_fn(|_, _| rng.gen_range(-rot..rot)),
        Vector3::from_fn(|_, _| rng.gen_range(-trans..trans)),
    )
}

pub fn pose(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Pose {
    se3_exp(&tangent(rng, rot, trans))
}

pub fn spd2(rng: &mut ChaCha8Rng) -> Matrix2<f64> {
    let a = Matrix2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    a * a.transpose() + Matrix2::identity() * rng.gen_range(0.2..2.0)
}

pub fn spd6(rng: &mut ChaCha8Rng, scale: f64) -> Matrix6<f64> {
    let a = Matrix6::from_fn(|_, _| rng.gen_range(-1.0..1.0));
    (a * a.transpose() + Matrix6::identity()) * scale
}

/// `(T_i, T_j, d, factor)` with the point well in front of camera `j`.
pub fn flow_case(rng: &mut ChaCha8Rng, k: &PinholeIntrinsics) -> (Pose, Pose, f64, FlowFactor) {
    loop {
        let ti = pose(rng, 0.6, 1.0);
        let tj = ti.compose(&pose(rng, 0.3, 0.5));
        let pixel = Pixel::new(rng.gen_range(0.0..k.width), rng.gen_range(0.0..k.height));
        let d = rng.gen_range(0.1..2.0);
        let xi = camera::back_project(k, &pixel, d).unwrap();
        let xj = tj.inverse().compose(&ti).transform_point(&xi);
        if xj.z < 0.3 {
            continue;
        }
        let target = Pixel::new(rng.gen_range(0.0..k.width), rng.gen_range(0.0..k.height));
        let noise = NoiseModel::new(spd2(rng)).unwrap();
        return (ti, tj, d, FlowFactor::new(0, 1, pixel, target, 0, noise).unwrap());
    }
}

/// `(T, L, factor)` with the landmark in front of the camera.
pub fn projection_case(rng: &mut ChaCha8Rng, k: &PinholeIntrinsics) -> (Pose, Vector3<f64>, ProjectionFactor) {
    loop {
        let t = pose(rng, 0.6, 1.0);
        let pc = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..6.0));
        if pc.z < 0.3 {
            continue;
        }
        let l = t.transform_point(&pc);
        let pixel = Pixel::new(rng.gen_range(0.0..k.width), rng.gen_range(0.0..k.height));
        let noise = NoiseModel::new(spd2(rng)).unwrap();
        return (t, l, ProjectionFactor { frame: 0, landmark_var: 0, pixel, noise });
    }
}

/// Central differences of `f` at zero, column by column.
pub fn numeric_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, n: usize, h: f64) -> DMatrix<f64> {
    let m = f(&DVector::zeros(n)).len();
    let mut j = DMatrix::zeros(m, n);
    for c in 0..n {
        let mut dp = DVector::zeros(n);
        dp[c] = h;
        let col = (f(&dp) - f(&(-dp))) / (2.0 * h);
        j.set_column(c, &col);
    }
    j
}

pub fn rel_err(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).norm() / numeric.norm().max(1e-6)
}

pub fn tangent_of(v: &DVector<f64>, off: usize) -> TangentVector {
    TangentVector::from_vector(&Vector6::from_fn(|i, _| v[off + i]))
}

pub fn dense(m: &CscMatrix<f64>) -> DMatrix<f64> {
    nalgebra_sparse::convert::serial::convert_csc_dense(m)
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| a.total_cmp(b));
    e
}

/// Random well-posed graph mixing every factor type: a few poses tied by a
/// prior and between factors, landmarks seen by projection factors and
/// per-pixel inverse depths constrained by flow. Values are slightly off the
/// ground truth so residuals are nonzero.
pub fn random_graph(rng: &mut ChaCha8Rng, max_vars: usize) -> (FactorGraph, Values) {
    let k = default_intrinsics();
    let n_poses = rng.gen_range(2..=5);
    let n_landmarks = rng.gen_range(2..=8);
    let n_depths = rng.gen_range(1..=(max_vars - n_poses - n_landmarks).min(20));

    let gt: Vec<Pose> = (0..n_poses)
        .map(|i| {
            se3_exp(&TangentVector::new(
                Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05)),
                Vector3::new(
                    0.3 * i as f64 + rng.gen_range(-0.05..0.05),
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                ),
            ))
        })
        .collect();
    let points: Vec<Vector3<f64>> = (0..n_landmarks)
        .map(|_| Vector3::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(4.0..8.0)))
        .collect();

    let mut values = Values::default();
    let mut factors = Vec::new();
    for (i, p) in gt.iter().enumerate() {
        values.poses.insert(i, p.compose(&pose(rng, 0.01, 0.01)));
    }
    factors.push(Factor::Prior(PriorFactor {
        frame: 0,
        predicted_pose: gt[0],
        noise: NoiseModel::new(spd6(rng, 1e-2)).unwrap(),
    }));
    for i in 1..n_poses {
        let rel = gt[i - 1].inverse().compose(&gt[i]);
        let noise = NoiseModel::new(spd6(rng, 1e-1)).unwrap();
        factors.push(Factor::Between(BetweenFactor::new(i - 1, i, rel, noise).unwrap()));
    }
    for (l, p) in points.iter().enumerate() {
        values.landmarks.insert(l, p + Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05)));
        for (i, t) in gt.iter().enumerate() {
            let pixel = camera::project(&k, &t.inverse().transform_point(p)).unwrap();
            let noise = NoiseModel::new(spd2(rng)).unwrap();
            factors.push(Factor::Projection(ProjectionFactor { frame: i, landmark_var: l, pixel, noise }));
        }
    }
    for d in 0..n_depths {
        let p = points[rng.gen_range(0..n_landmarks)];
        let i = rng.gen_range(0..n_poses);
        let pc = gt[i].inverse().transform_point(&p);
        let pixel = camera::project(&k, &pc).unwrap();
        values.inv_depths.insert(d, (1.0 / pc.z) * rng.gen_range(0.95..1.05));
        for j in (0..n_poses).filter(|&j| j != i) {
            let target = camera::project(&k, &gt[j].inverse().transform_point(&p)).unwrap();
            let noise = NoiseModel::new(spd2(rng)).unwrap();
            factors.push(Factor::Flow(FlowFactor::new(i, j, pixel, target, d, noise).unwrap()));
        }
    }
    (FactorGraph::new(k, factors), values)
}

/// A factor that can be added to a graph from [`random_graph`].
pub fn random_extra_factor(rng: &mut ChaCha8Rng, g: &FactorGraph, x: &Values) -> Factor {
    let k = *g.intrinsics();
    let poses: Vec<usize> = x.poses.keys().copied().collect();
    let i = poses[rng.gen_range(0..poses.len())];
    match rng.gen_range(0..4) {
        0 => {
            let scale = rng.gen_range(1e-3..1.0);
            Factor::Prior(PriorFactor {
                frame: i,
                predicted_pose: x.poses[&i].compose(&pose(rng, 0.01, 0.01)),
                noise: NoiseModel::new(spd6(rng, scale)).unwrap(),
            })
        }
        1 => {
            let j = poses.iter().copied().find(|&j| j != i).unwrap();
            let rel = x.poses[&i].inverse().compose(&x.poses[&j]);
            Factor::Between(BetweenFactor::new(i, j, rel, NoiseModel::new(spd6(rng, 1e-2)).unwrap()).unwrap())
        }
        2 => {
            let l = rng.gen_range(0..x.landmarks.len());
            let pc = x.poses[&i].inverse().transform_point(&x.landmarks[&l]);
            let pixel = camera::project(&k, &pc).unwrap();
            Factor::Projection(ProjectionFactor {
                frame: i,
                landmark_var: l,
                pixel,
                noise: NoiseModel::new(spd2(rng)).unwrap(),
            })
        }
        _ => {
            let template = g
                .factors()
                .iter()
                .find_map(|f| match f {
                    Factor::Flow(f) => Some(f.clone()),
                    _ => None,
                })
                .expect("graph has flow factors");
            let mut f = template;
            f.target = Pixel::new(f.target.u + rng.gen_range(-2.0..2.0), f.target.v + rng.gen_range(-2.0..2.0));
            f.noise = NoiseModel::new(spd2(rng)).unwrap();
            Factor::Flow(f)
        }
    }
}

/// Relative error between the whitened analytic Jacobian of `f` at `x` and
/// central differences along the retraction, step `h`.
pub fn factor_fd_error(f: &Factor, x: &Values, k: &PinholeIntrinsics, h: f64) -> f64 {
    let layout = vocovar::graph::BlockLayout::new(f.keys());
    let w = f.whitener();
    let (_, js) = f.jacobians(x, k).unwrap();
    let mut analytic = DMatrix::zeros(f.dim(), layout.dim());
    for (key, j) in f.keys().iter().zip(&js) {
        let r = layout.range(key).unwrap();
        analytic.view_mut((0, r.start), (j.nrows(), j.ncols())).copy_from(&(&w * j));
    }
    let numeric =
        numeric_jacobian(|delta| &w * f.residual(&x.retract(&layout, delta).unwrap(), k).unwrap(), layout.dim(), h);
    rel_err(&analytic, &numeric)
}

pub fn flow_factor_case(rng: &mut ChaCha8Rng) -> (Factor, Values) {
    let k = default_intrinsics();
    let (ti, tj, d, f) = flow_case(rng, &k);
    let mut x = Values::default();
    x.poses.insert(0, ti);
    x.poses.insert(1, tj);
    x.inv_depths.insert(0, d);
    (Factor::Flow(f), x)
}

pub fn prior_factor_case(rng: &mut ChaCha8Rng) -> (Factor, Values) {
    let t = pose(rng, 2.5, 3.0);
    let predicted = t.compose(&pose(rng, 1.0, 1.0));
    let mut x = Values::default();
    x.poses.insert(0, t);
    let noise = NoiseModel::new(spd6(rng, 0.1)).unwrap();
    (Factor::Prior(PriorFactor { frame: 0, predicted_pose: predicted, noise }), x)
}

pub fn between_factor_case(rng: &mut ChaCha8Rng) -> (Factor, Values) {
    let ti = pose(rng, 2.5, 3.0);
    let tj = pose(rng, 2.5, 3.0);
    let meas = ti.inverse().compose(&tj).compose(&pose(rng, 1.0, 1.0));
    let mut x = Values::default();
    x.poses.insert(0, ti);
    x.poses.insert(1, tj);
    let noise = NoiseModel::new(spd6(rng, 0.1)).unwrap();
    (Factor::Between(BetweenFactor::new(0, 1, meas, noise).unwrap()), x)
}

pub fn projection_factor_case(rng: &mut ChaCha8Rng) -> (Factor, Values) {
    let k = default_intrinsics();
    let (t, l, f) = projection_case(rng, &k);
    let mut x = Values::default();
    x.poses.insert(0, t);
    x.landmarks.insert(0, l);
    (Factor::Projection(f), x)
}
