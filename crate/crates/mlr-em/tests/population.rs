mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use mlr_em::diagnostics::{self, CheckMode, Iterate};
use mlr_em::geometry::{self, PlanarState};
use mlr_em::model::{self, GroundTruth};
use mlr_em::population::{self, radial, QuadratureSpec};
use nalgebra::DVector;
use proptest::prelude::*;

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

/// States with `||beta*|| = 1`, angle `theta` and `sigma = 1/eta`.
fn state_from(b1: f64, theta: f64, eta: f64) -> PlanarState {
    PlanarState::new(b1, theta.cos(), theta.sin(), 1.0 / eta).unwrap()
}

fn plane_point(d: usize, c_star: f64, c_orth: f64) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[0] = c_star;
    v[1] = c_orth;
    v
}

#[test]
fn gauss_hermite_table_is_normalized_and_exact() {
    let q = quad();
    assert_eq!(q.nodes.len(), 100);
    assert!((q.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    let moments = [1.0, 0.0, 1.0, 0.0, 3.0, 0.0, 15.0, 0.0, 105.0];
    for (deg, m) in moments.iter().enumerate() {
        let got = q.expect_normal(|x| x.powi(deg as i32));
        assert!((got - m).abs() <= 1e-12 * m.max(1.0), "degree {deg}: {got}");
    }
    assert!(QuadratureSpec::new(4).is_err());
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn radial_moments_match_direct_integration() {
    let sech2 = |x: f64| 1.0 - x.tanh().powi(2);
    for &k in &[-3.0, -0.2, 0.004, 0.05, 0.7, 2.0, 15.0] {
        let r = radial(k);
        let int = |g: &dyn Fn(f64) -> f64| simpson(|s| (-s).exp() * g(s), 0.0, 60.0, 200_000);
        let direct = [
            int(&|s| (k * s).tanh()),
            int(&|s| s * (k * s).tanh()),
            int(&|s| s * sech2(k * s)),
            int(&|s| s * s * (k * s).tanh()),
            int(&|s| s * s * sech2(k * s)),
        ];
        // log cosh overflows for large |ks|; use |ks| + log1p(e^{-2|ks|}) - log 2.
        let psi = int(&|s| {
            let a = (k * s).abs();
            a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
        });
        let got = [r.phi0, r.phi1, r.phi2, r.t2, r.m2];
        for (i, (g, d)) in got.iter().zip(&direct).enumerate() {
            assert!((g - d).abs() <= 1e-10 * (1.0 + d.abs()), "k={k} moment {i}: {g} vs {d}");
        }
        assert!((r.psi - psi).abs() <= 1e-10 * (1.0 + psi.abs()), "k={k} psi: {} vs {psi}", r.psi);
    }
}

#[test]
fn s_vanishes_for_orthogonal_iterate() {
    for &(b1, b2s, sigma) in &[(0.5, 1.0, 1.0), (3.0, 0.2, 0.05), (0.01, 5.0, 2.0)] {
        let st = PlanarState::new(b1, 0.0, b2s, sigma).unwrap();
        let sr = population::compute_s_r(&st, &quad());
        assert!(sr.s.abs() <= 1e-10);
        assert!(sr.r > 0.0);
    }
}

#[test]
fn degenerate_origin_is_flagged() {
    let st = PlanarState::new(0.0, 1.0, 0.5, 1.0).unwrap();
    let step = population::population_em_step(&st, &quad()).unwrap();
    assert!(step.degenerate);
    assert_eq!((step.b1_prime, step.b2_prime), (0.0, 0.0));
    assert!(population::compute_s_r(&st, &quad()).degenerate);
    let truth = GroundTruth::along_first_axis(3, 1.0, 1.0).unwrap();
    assert_eq!(population::population_em_vec(&DVector::zeros(3), &truth, &quad()).unwrap(), DVector::zeros(3));
}

#[test]
fn truth_is_a_fixed_point() {
    for &(b, sigma) in &[(1.0, 2.0), (1.0, 0.5), (1.0, 0.1), (4.0, 0.3)] {
        let st = PlanarState::new(b, b, 0.0, sigma).unwrap();
        let step = population::population_em_step(&st, &quad()).unwrap();
        assert!((step.b1_prime - b).abs() <= 1e-10 * b, "b1' = {}", step.b1_prime);
        assert_eq!(step.b2_prime, 0.0);
    }
}

#[test]
fn large_b1_limit() {
    for &(b1s, b2s) in &[(0.6, 0.8), (2.0, 0.1), (-1.0, 1.0), (0.0, 1e-12)] {
        let st = PlanarState::new(1e6, b1s, b2s, 1.0).unwrap();
        let step = population::population_em_step(&st, &quad()).unwrap();
        let limit = population::b1_limit(b1s, b2s, 1.0);
        assert!((step.b1_prime - limit).abs() <= 1e-3, "{} vs {limit}", step.b1_prime);
    }
    assert!((population::b1_limit(0.0, 0.0, 1.0) - 2.0 / PI).abs() < 1e-15);
    assert!((2.0 / PI - 0.63662).abs() < 1e-5);
}

#[test]
fn reference_state_matches_monte_carlo_fixture() {
    let fx = common::oracle_map();
    let st = PlanarState::new(1.0, 0.6, 0.8, 1.0).unwrap();
    let step = population::population_em_step(&st, &quad()).unwrap();
    for (q, v) in [("S", step.s), ("R", step.r), ("b1_prime", step.b1_prime), ("b2_prime", step.b2_prime)] {
        let e = fx[&("ref".to_string(), q.to_string())];
        assert!(e.agrees(v, 3.0), "{q}: quadrature {v}, MC {} +- {}", e.mean, e.std_error);
    }
}

#[test]
fn trajectory_from_truth_is_a_single_record() {
    let truth = GroundTruth::along_first_axis(4, 1.0, 0.5).unwrap();
    let recs = population::run_population_trajectory(truth.beta_star(), &truth, &quad(), 100, 1e-8).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].l2_error, 0.0);
}

#[test]
fn orthogonal_start_stalls_at_the_saddle() {
    let truth = GroundTruth::along_first_axis(3, 1.0, 1.0).unwrap();
    let q = quad();
    let e = population::find_fixed_point_e(0.0, 1.0, 1.0, &q, 1e-12).unwrap();
    let recs = population::run_population_trajectory(&plane_point(3, 0.0, 0.3), &truth, &q, 300, 1e-8).unwrap();
    assert_eq!(recs.len(), 301);
    let last = recs.last().unwrap();
    assert_eq!(last.b1_star, 0.0);
    assert!((last.b1 - e).abs() < 1e-9);
    assert!((last.l2_error - (e * e + 1.0).sqrt()).abs() < 1e-9);
}

#[test]
fn converging_trajectory_satisfies_population_bounds() {
    let truth = GroundTruth::along_first_axis(10, 1.0, 0.5).unwrap();
    for seed in 0..5 {
        let beta0 = model::random_init(10, 1.0, seed).unwrap();
        let recs = population::run_population_trajectory(&beta0, &truth, &quad(), 500, 1e-8).unwrap();
        assert!(recs.last().unwrap().l2_error <= 1e-8);
        let its: Vec<Iterate> = recs.iter().map(Iterate::from).collect();
        let reports = diagnostics::check_trajectory(&its, 1.0, 0.5, CheckMode::Population).unwrap();
        assert!(reports.iter().any(|r| r.applicable));
        for r in reports.iter().filter(|r| r.applicable) {
            assert!(r.pass && r.margin >= -1e-6, "{r:?}");
        }
    }
}

#[test]
fn fixed_point_along_truth_is_its_norm() {
    for &(b, sigma) in &[(1.0, 1.0), (2.5, 0.4), (1.0, 3.0)] {
        let e = population::find_fixed_point_e(b, 0.0, sigma, &quad(), 1e-10).unwrap();
        assert!((e - b).abs() <= 1e-9, "E = {e}");
    }
}

#[test]
fn orthogonal_fixed_point_inside_monte_carlo_bracket() {
    let e = population::find_fixed_point_e(0.0, 1.0, 1.0, &quad(), 1e-10).unwrap();
    let rows: Vec<_> = common::oracle_rows().into_iter().filter(|r| r.case_id == "fixed_point_orth").collect();
    assert!(!rows.is_empty());
    let t_of = |q: &str| q.trim_start_matches("g@").parse::<f64>().unwrap();
    let lo = rows.iter().filter(|r| r.mean > 3.0 * r.std_error).map(|r| t_of(&r.quantity)).fold(f64::MIN, f64::max);
    let hi = rows.iter().filter(|r| r.mean < -3.0 * r.std_error).map(|r| t_of(&r.quantity)).fold(f64::MAX, f64::min);
    assert!(lo < hi);
    assert!(lo <= e && e <= hi, "E = {e} outside MC bracket [{lo}, {hi}]");
}

#[test]
fn low_snr_fixed_point_and_slope_at_origin() {
    let q = quad();
    let sigma = 100.0;
    let e = population::find_fixed_point_e(0.0, 1.0, sigma, &q, 1e-10).unwrap();
    assert!(e > 0.0 && e < 0.05 * sigma, "E = {e}");
    let h = 1e-4;
    let f = |t: f64| population::population_em_step(&PlanarState::new(t, 0.0, 1.0, sigma).unwrap(), &q).unwrap().b1_prime;
    let fd = (f(h) - f(0.0)) / h;
    let exact = population::f_prime_at_zero(0.0, 1.0, sigma);
    assert!(exact > 1.0 && fd > 1.0);
    assert!((fd - exact).abs() <= 1e-9, "fd {fd} vs {exact}");
    let tilted = population::f_prime_at_zero(0.6, 0.8, 1.0);
    let g = |t: f64| population::population_em_step(&PlanarState::new(t, 0.6, 0.8, 1.0).unwrap(), &q).unwrap().b1_prime;
    assert!((g(2e-5) / 2e-5 - tilted).abs() <= 1e-6 * tilted);
}

#[test]
fn loglik_symmetry_and_global_maximum() {
    let q = quad();
    let truth = GroundTruth::along_first_axis(4, 1.0, 0.5).unwrap();
    let top = population::population_loglik(truth.beta_star(), &truth, &q).unwrap();
    for seed in 0..100 {
        let beta = model::random_init(4, 0.05 + 0.03 * seed as f64, seed).unwrap();
        let l = population::population_loglik(&beta, &truth, &q).unwrap();
        assert_eq!(l, population::population_loglik(&(-&beta), &truth, &q).unwrap());
        assert!(top >= l, "L(beta*) = {top} < L(beta) = {l}");
    }
}

#[test]
fn loglik_gradient_matches_em_step() {
    let q = quad();
    let truth = GroundTruth::along_first_axis(3, 1.0, 0.7).unwrap();
    for seed in 0..10 {
        let beta = model::random_init(3, 0.3 + 0.2 * seed as f64, 100 + seed).unwrap();
        let next = population::population_em_vec(&beta, &truth, &q).unwrap();
        let h = 1e-5;
        let grad = DVector::from_fn(3, |j, _| {
            let mut up = beta.clone();
            let mut dn = beta.clone();
            up[j] += h;
            dn[j] -= h;
            (population::population_loglik(&up, &truth, &q).unwrap() - population::population_loglik(&dn, &truth, &q).unwrap())
                / (2.0 * h)
        });
        let expected = (&next - &beta) / (0.7 * 0.7);
        assert!((&grad - &expected).norm() <= 1e-4 * expected.norm().max(1.0), "{grad} vs {expected}");
    }
}

#[test]
fn loglik_gradient_matches_monte_carlo_fixture() {
    let fx = common::oracle_map();
    let q = quad();
    let truth = GroundTruth::along_first_axis(3, 1.0, 0.5).unwrap();
    for (case, beta) in [
        ("grad_beta_star", truth.beta_star().clone()),
        ("grad_generic", DVector::from_row_slice(&[0.3, -0.5, 0.4])),
    ] {
        let expected = (population::population_em_vec(&beta, &truth, &q).unwrap() - &beta) / 0.25;
        for j in 0..3 {
            let e = fx[&(case.to_string(), format!("grad_{j}"))];
            assert!(e.agrees(expected[j], 3.0), "{case} grad_{j}: {} vs {} +- {}", expected[j], e.mean, e.std_error);
        }
    }
}

#[test]
fn hessian_signs_at_stationary_points() {
    let q = quad();
    for &eta in &[0.5, 1.0, 2.0, 10.0] {
        let sigma = 1.0 / eta;
        let truth = GroundTruth::along_first_axis(2, 1.0, sigma).unwrap();
        let e = population::find_fixed_point_e(0.0, 1.0, sigma, &q, 1e-10).unwrap();
        let saddle = population::hessian_quadform_along_bstar(&plane_point(2, 0.0, e), &truth, &q).unwrap();
        let floor = 1.0 / (sigma * sigma) / (sigma * sigma + 1.0);
        assert!(saddle >= floor - 1e-4, "eta {eta}: {saddle} < {floor}");
        let top = population::hessian_quadform_along_bstar(truth.beta_star(), &truth, &q).unwrap();
        assert!(top <= 0.0, "eta {eta}: {top}");
    }
}

#[test]
fn hessian_matches_monte_carlo_fixture() {
    let fx = common::oracle_map();
    for c in common::oracle_cases().iter().filter(|c| !c.case_id.starts_with("mc")) {
        let st = common::case_state(c);
        let h = population::hessian_quadform_planar(&st, &quad());
        let e = fx[&(c.case_id.clone(), "hessian".to_string())];
        assert!(e.agrees(h, 3.0), "{}: {h} vs {} +- {}", c.case_id, e.mean, e.std_error);
    }
}

#[test]
fn five_fixed_points_and_their_neighbourhoods() {
    let q = quad();
    for &eta in &[0.5, 1.0, 2.0, 10.0] {
        let sigma = 1.0 / eta;
        let truth = GroundTruth::along_first_axis(2, 1.0, sigma).unwrap();
        let e = population::find_fixed_point_e(0.0, 1.0, sigma, &q, 1e-10).unwrap();
        let points = [(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, e), (0.0, -e)];
        for &(a, b) in &points {
            let p = plane_point(2, a, b);
            let r = (population::population_em_vec(&p, &truth, &q).unwrap() - &p).norm();
            assert!(r <= 1e-7, "eta {eta}: residual {r} at ({a}, {b})");
            for k in 0..8 {
                let phi = k as f64 * PI / 4.0 + 0.3;
                let moved = plane_point(2, a + 0.1 * phi.cos(), b + 0.1 * phi.sin());
                let r = (population::population_em_vec(&moved, &truth, &q).unwrap() - &moved).norm();
                assert!(r > 1e-3, "eta {eta}: residual {r} near ({a}, {b})");
            }
        }
    }
}

#[test]
fn doubling_order_changes_little() {
    let (q, q2) = (QuadratureSpec::new(100).unwrap(), QuadratureSpec::new(200).unwrap());
    for c in common::oracle_cases() {
        let st = common::case_state(&c);
        let (a, b) = (population::population_em_step(&st, &q).unwrap(), population::population_em_step(&st, &q2).unwrap());
        assert!((a.b1_prime - b.b1_prime).abs() <= 1e-9, "{}: b1'", c.case_id);
        assert!((a.b2_prime - b.b2_prime).abs() <= 1e-9, "{}: b2'", c.case_id);
    }
}

fn arb_state() -> impl Strategy<Value = PlanarState> {
    (0.01f64..10.0, 0.0f64..PI, 0.1f64..5.0, 0.05f64..20.0)
        .prop_map(|(b1, theta, beta_norm, eta)| {
            PlanarState::new(b1 * beta_norm, beta_norm * theta.cos(), beta_norm * theta.sin(), beta_norm / eta).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn lemma_identity_and_sign_constraints(st in arb_state()) {
        let step = population::population_em_step(&st, &quad()).unwrap();
        prop_assert!((step.b1_prime_direct - (st.b1_star * step.s + step.r)).abs() <= 1e-8 * (1.0 + step.b1_prime.abs()));
        prop_assert_eq!(step.b2_prime, st.b2_star * step.s);
        let folded = population::compute_s_r(&st.folded(), &quad());
        prop_assert!((0.0..=1.0).contains(&folded.s), "S = {}", folded.s);
        prop_assert!(step.r > 0.0);
    }

    #[test]
    fn angle_never_grows(st in arb_state()) {
        let st = st.folded();
        prop_assume!(st.b1_star > 0.0);
        let step = population::population_em_step(&st, &quad()).unwrap();
        let (s_star, c_star) = (st.b2_star, st.b1_star);
        // Angle of beta' = (b1', b2') to beta* = (b1*, b2*).
        let cross = c_star * step.b2_prime - s_star * step.b1_prime;
        let dot = c_star * step.b1_prime + s_star * step.b2_prime;
        let tan_new = cross.abs() / dot;
        prop_assert!(dot > 0.0);
        prop_assert!(tan_new <= s_star / c_star * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn full_space_step_stays_in_plane(d in 3usize..10, s1 in any::<u64>(), s2 in any::<u64>(), eta in 0.2f64..10.0) {
        let beta_star = model::random_init(d, 1.0, s1).unwrap();
        let truth = GroundTruth::new(beta_star.clone(), 1.0 / eta).unwrap();
        let beta = model::random_init(d, 1.5, s2).unwrap();
        let next = population::population_em_vec(&beta, &truth, &quad()).unwrap();
        let (_, frame) = geometry::reduce_with_frame(&beta, &beta_star, truth.sigma()).unwrap();
        let v2 = frame.v2.unwrap();
        let inplane = &frame.v1 * next.dot(&frame.v1) + &v2 * next.dot(&v2);
        prop_assert!((next - inplane).norm() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn contraction_along_the_ray(b1 in 0.05f64..6.0, theta in 0.0f64..FRAC_PI_2, eta in 0.3f64..10.0) {
        let q = quad();
        let st = state_from(b1, theta, eta);
        let e = population::find_fixed_point_e(st.b1_star, st.b2_star, st.sigma, &q, 1e-12).unwrap();
        let step = population::population_em_step(&st, &q).unwrap();
        prop_assert!((step.b1_prime - e).abs() <= (b1 - e).abs() + 1e-10);
    }
}
