use std::f64::consts::FRAC_1_SQRT_2;

use approx::assert_relative_eq;
use mlr_em::geometry::{self, PlanarState};
use mlr_em::model;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

#[test]
fn reduce_diagonal_pair() {
    let s = geometry::reduce(&v(&[FRAC_1_SQRT_2, FRAC_1_SQRT_2]), &v(&[1.0, 0.0]), 0.5).unwrap();
    assert_relative_eq!(s.b1, 1.0, epsilon = 1e-15);
    assert_relative_eq!(s.b1_star, FRAC_1_SQRT_2, epsilon = 1e-15);
    assert_relative_eq!(s.b2_star, FRAC_1_SQRT_2, epsilon = 1e-15);
    assert_relative_eq!(s.sigma2_sq, 0.75, epsilon = 1e-15);
}

#[test]
fn reduce_rejects_bad_pairs() {
    assert!(geometry::reduce(&v(&[0.0, 0.0]), &v(&[1.0, 0.0]), 1.0).is_err());
    assert!(geometry::reduce(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]), 1.0).is_err());
    assert!(geometry::reduce(&v(&[1.0]), &v(&[1.0, 0.0]), 1.0).is_err());
    assert!(geometry::reduce(&v(&[1.0]), &v(&[1.0]), 0.0).is_err());
}

#[test]
fn parallel_pair_has_no_orthogonal_part() {
    let (s, frame) = geometry::reduce_with_frame(&v(&[2.0, 0.0, 0.0]), &v(&[-3.0, 0.0, 0.0]), 1.0).unwrap();
    assert_eq!(s.b2_star, 0.0);
    assert_eq!(s.b1_star, -3.0);
    assert!(frame.v2.is_none());
    assert_eq!(geometry::lift_frame(1.5, 0.0, &frame), v(&[1.5, 0.0, 0.0]));
}

#[test]
fn lift_of_unit_coordinates_returns_v1() {
    let (v1, v2) = (v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0]));
    assert_eq!(geometry::lift(1.0, 0.0, &v1, &v2).unwrap(), v1);
}

#[test]
fn lift_in_five_dimensions_has_pythagorean_norm() {
    let a = model::random_init(5, 1.0, 1).unwrap();
    let b = model::random_init(5, 1.0, 2).unwrap();
    let (_, frame) = geometry::reduce_with_frame(&a, &b, 1.0).unwrap();
    let out = geometry::lift(0.3, 0.4, &frame.v1, frame.v2.as_ref().unwrap()).unwrap();
    assert_relative_eq!(out.norm(), 0.5, epsilon = 1e-14);
}

#[test]
fn lift_rejects_non_orthonormal_frames() {
    assert!(geometry::lift(1.0, 1.0, &v(&[1.0, 0.0]), &v(&[1.0, 1.0]).normalize()).is_err());
    assert!(geometry::lift(1.0, 1.0, &v(&[2.0, 0.0]), &v(&[0.0, 1.0])).is_err());
}

#[test]
fn angle_examples() {
    let bs = v(&[1.0, 0.0]);
    let same = geometry::angle_metrics(&bs, &bs).unwrap();
    assert_eq!((same.cos_theta, same.sin_theta, same.theta), (1.0, 0.0, 0.0));
    let flipped = geometry::angle_metrics(&(-&bs), &bs).unwrap();
    assert_eq!((flipped.cos_theta, flipped.sin_theta, flipped.theta), (1.0, 0.0, 0.0));
    let diag = geometry::angle_metrics(&v(&[1.0, 1.0]), &bs).unwrap();
    assert_relative_eq!(diag.cos_theta, FRAC_1_SQRT_2, epsilon = 1e-15);
}

#[test]
fn signed_error_examples() {
    let bs = v(&[0.6, -0.8]);
    assert_eq!(geometry::signed_error(&bs, &bs), 0.0);
    assert_eq!(geometry::signed_error(&(-&bs), &bs), 0.0);
    assert_relative_eq!(geometry::signed_error(&DVector::zeros(2), &bs), 1.0, epsilon = 1e-15);
}

#[test]
fn planar_state_rejects_invalid_fields() {
    assert!(PlanarState::new(-1.0, 0.5, 0.5, 1.0).is_err());
    assert!(PlanarState::new(1.0, 0.5, -0.5, 1.0).is_err());
    assert!(PlanarState::new(1.0, 0.0, 0.0, 1.0).is_err());
    assert!(PlanarState::new(1.0, 0.5, 0.5, 0.0).is_err());
}

fn random_rotation(d: usize, seed: u64) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..d).map(|j| model::random_init(d, 1.0, seed * 1000 + j as u64).unwrap()).collect();
    DMatrix::from_columns(&cols).qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn planar_invariants(d in 1usize..12, s1 in any::<u64>(), s2 in any::<u64>(), scale in 0.01f64..50.0, sigma in 0.01f64..10.0) {
        let beta = model::random_init(d, scale, s1).unwrap();
        let beta_star = model::random_init(d, 1.7, s2).unwrap();
        let s = geometry::reduce(&beta, &beta_star, sigma).unwrap();
        prop_assert!(s.b1 >= 0.0 && s.b2_star >= 0.0);
        prop_assert!((s.b1_star.powi(2) + s.b2_star.powi(2) - 1.7f64.powi(2)).abs() <= 1e-12 * 1.7f64.powi(2));
        prop_assert_eq!(s.sigma2_sq, sigma * sigma + s.b2_star * s.b2_star);
        let m = geometry::angle_metrics(&beta, &beta_star).unwrap();
        prop_assert!((m.cos_theta.powi(2) + m.sin_theta.powi(2) - 1.0).abs() <= 1e-12);
        prop_assert!(m.theta >= 0.0 && m.theta <= std::f64::consts::FRAC_PI_2);
        prop_assert!(geometry::signed_error(&beta, &beta_star) <= (&beta - &beta_star).norm());
        prop_assert!((geometry::signed_error(&beta, &beta_star) - s.signed_error()).abs() <= 1e-12 * (1.0 + scale));
    }

    #[test]
    fn lift_inverts_reduce(d in 2usize..10, s1 in any::<u64>(), s2 in any::<u64>()) {
        let beta = model::random_init(d, 2.0, s1).unwrap();
        let beta_star = model::random_init(d, 1.0, s2).unwrap();
        let (s, frame) = geometry::reduce_with_frame(&beta, &beta_star, 1.0).unwrap();
        let rebuilt_beta = geometry::lift_frame(s.b1, 0.0, &frame);
        let rebuilt_star = geometry::lift_frame(s.b1_star, s.b2_star, &frame);
        prop_assert!((rebuilt_beta - &beta).amax() <= 1e-12);
        prop_assert!((rebuilt_star - &beta_star).amax() <= 1e-12);
    }

    #[test]
    fn reduce_is_rotation_invariant(d in 2usize..8, s1 in any::<u64>(), s2 in 0u64..1_000_000, rot in 0u64..1_000_000) {
        let beta = model::random_init(d, 1.3, s1).unwrap();
        let beta_star = model::random_init(d, 0.9, s2).unwrap();
        let q = random_rotation(d, rot);
        let a = geometry::reduce(&beta, &beta_star, 0.4).unwrap();
        let b = geometry::reduce(&(&q * &beta), &(&q * &beta_star), 0.4).unwrap();
        prop_assert!((a.b1 - b.b1).abs() <= 1e-10);
        prop_assert!((a.b1_star - b.b1_star).abs() <= 1e-10);
        prop_assert!((a.b2_star - b.b2_star).abs() <= 1e-10);
    }
}
