mod common;

use nalgebra::{DMatrix, DVector, Matrix2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use vocovar::camera::Pixel;
use vocovar::factors::{self, FlowFactor, NoiseModel};
use vocovar::io::default_intrinsics;
use vocovar::liegroup::{boxplus, Pose, TangentVector};
use vocovar::Error;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn worst(case: fn(&mut ChaCha8Rng) -> (vocovar::graph::Factor, vocovar::graph::Values), seed: u64) -> f64 {
    let k = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..250)
        .map(|_| {
            let (f, x) = case(&mut rng);
            factor_fd_error(&f, &x, &k, H)
        })
        .fold(0.0, f64::max)
}

#[test]
fn flow_jacobians_match_finite_differences() {
    let e = worst(flow_factor_case, 1);
    assert!(e < TOL, "worst relative error {e:e}");
}

#[test]
fn prior_jacobians_match_finite_differences() {
    let e = worst(prior_factor_case, 2);
    assert!(e < TOL, "worst relative error {e:e}");
}

#[test]
fn between_jacobians_match_finite_differences() {
    let e = worst(between_factor_case, 3);
    assert!(e < TOL, "worst relative error {e:e}");
}

#[test]
fn projection_jacobians_match_finite_differences() {
    let e = worst(projection_factor_case, 4);
    assert!(e < TOL, "worst relative error {e:e}");
}

#[test]
fn raw_flow_jacobian_blocks() {
    // Unwhitened blocks against the free functions directly.
    let k = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (ti, tj, d, f) = flow_case(&mut rng, &k);
        let (ji, jj, jd) = factors::flow_jacobians(&ti, &tj, d, &f, &k).unwrap();
        let num = numeric_jacobian(
            |v| {
                let e = factors::flow_residual(
                    &boxplus(&ti, &tangent_of(v, 0)),
                    &boxplus(&tj, &tangent_of(v, 6)),
                    d + v[12],
                    &f,
                    &k,
                )
                .unwrap();
                DVector::from_column_slice(e.as_slice())
            },
            13,
            H,
        );
        let mut ana = DMatrix::zeros(2, 13);
        ana.view_mut((0, 0), (2, 6)).copy_from(&ji);
        ana.view_mut((0, 6), (2, 6)).copy_from(&jj);
        ana.view_mut((0, 12), (2, 1)).copy_from(&jd);
        assert!(rel_err(&ana, &num) < TOL);
    }
}

#[test]
fn flow_residual_is_zero_for_consistent_geometry() {
    let k = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let (ti, tj, d, mut f) = flow_case(&mut rng, &k);
        let xi = vocovar::camera::back_project(&k, &f.pixel, d).unwrap();
        let xj = tj.inverse().compose(&ti).transform_point(&xi);
        f.target = vocovar::camera::project(&k, &xj).unwrap();
        assert!(factors::flow_residual(&ti, &tj, d, &f, &k).unwrap().norm() < 1e-9);
    }
}

#[test]
fn flow_geometry_errors() {
    let k = default_intrinsics();
    let f = FlowFactor::new(0, 1, Pixel::new(320.0, 240.0), Pixel::new(320.0, 240.0), 0, factors::default_flow_noise())
        .unwrap();
    let id = Pose::identity();
    assert!(matches!(factors::flow_residual(&id, &id, 0.0, &f, &k), Err(Error::InvalidInverseDepth(_))));
    assert!(matches!(factors::flow_residual(&id, &id, -1.0, &f, &k), Err(Error::InvalidInverseDepth(_))));
    // Camera j two meters in front of a point one meter deep.
    let tj = Pose::from_translation(Vector3::new(0.0, 0.0, 2.0));
    assert!(matches!(factors::flow_residual(&id, &tj, 1.0, &f, &k), Err(Error::CheiralityViolation { .. })));
    assert!(FlowFactor::new(3, 3, f.pixel, f.target, 0, f.noise).is_err());
}

#[test]
fn inverse_depth_jacobian_vanishes_without_translation() {
    let k = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let ti = pose(&mut rng, 0.5, 1.0);
        let rot = boxplus(&ti, &TangentVector::new(Vector3::new(0.05, -0.03, 0.02), Vector3::zeros()));
        // Same camera center: only rotation between the frames.
        let tj = Pose::new(rot.rotation, ti.translation);
        let f = FlowFactor::new(0, 1, Pixel::new(300.0, 200.0), Pixel::new(0.0, 0.0), 0, factors::default_flow_noise())
            .unwrap();
        let (_, _, jd) = factors::flow_jacobians(&ti, &tj, 0.4, &f, &k).unwrap();
        assert!(jd.norm() < 1e-9);
    }
}

#[test]
fn whitening_scales_with_sigma() {
    let n1 = NoiseModel::<2>::new(Matrix2::identity()).unwrap();
    let n4 = NoiseModel::<2>::new(Matrix2::identity() * 4.0).unwrap();
    let e = nalgebra::Vector2::new(1.0, -2.0);
    assert!((n1.mahalanobis_sq(&e) - 5.0).abs() < 1e-12);
    assert!((n4.mahalanobis_sq(&e) - 1.25).abs() < 1e-12);
    let s = Matrix2::new(2.0, 0.5, 0.5, 1.0);
    let n = NoiseModel::<2>::new(s).unwrap();
    let w = n.whitener();
    assert!((w.transpose() * w - s.try_inverse().unwrap()).norm() < 1e-12);
    assert!(NoiseModel::<2>::new(Matrix2::new(1.0, 2.0, 2.0, 1.0)).is_err());
}
