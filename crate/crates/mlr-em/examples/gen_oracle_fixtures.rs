//! Regenerates the frozen Monte Carlo fixtures under `tests/fixtures/`.
//!
//! cargo run --release --example gen_oracle_fixtures
//!
//! Output depends only on the seeds below; rerunning reproduces the files.

use std::f64::consts::PI;
use std::path::Path;

use mlr_em::geometry::PlanarState;
use mlr_em::io::{self, OracleCaseRow, OracleRow};
use mlr_em::model::GroundTruth;
use mlr_em::oracle;
use mlr_em::seeds;
use nalgebra::DVector;
use rand::Rng;

const CASE_SEED: u64 = 20_240_101;
const DRAW_SEED: u64 = 77_001;
const DRAWS: usize = 10_000_000;
const RANDOM_CASES: usize = 50;

/// Grid of `t` for the bracket of `f(t) - t` at `b1* = 0, b2* = 1, sigma = 1`.
const BRACKET_T: [f64; 9] = [0.60, 0.62, 0.64, 0.65, 0.66, 0.67, 0.68, 0.70, 0.72];

/// Gradient cases: `beta* = e_1`, `sigma = 0.5`, `d = 3`.
const GRAD_GENERIC: [f64; 3] = [0.3, -0.5, 0.4];

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn planar_rows(case_id: &str, state: &PlanarState, seed: u64, rows: &mut Vec<OracleRow>) {
    let m = oracle::mc_planar(state, DRAWS, seed).expect("valid draws");
    for (q, e) in [
        ("b1_prime", m.b1_prime),
        ("b2_prime", m.b2_prime),
        ("S", m.s),
        ("R", m.r),
        ("loglik", m.loglik),
        ("hessian", m.hessian),
    ] {
        rows.push(OracleRow::new(case_id, q, &e));
    }
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut rng = seeds::stream_rng(CASE_SEED, seeds::PURPOSE_ORACLE, 0);
    let mut cases = vec![OracleCaseRow { case_id: "ref".into(), b1: 1.0, b1_star: 0.6, b2_star: 0.8, sigma: 1.0 }];
    cases.push(OracleCaseRow { case_id: "at_beta_star".into(), b1: 1.3, b1_star: 1.3, b2_star: 0.0, sigma: 0.7 });
    cases.push(OracleCaseRow { case_id: "orthogonal".into(), b1: 0.8, b1_star: 0.0, b2_star: 1.2, sigma: 0.9 });
    for i in 0..RANDOM_CASES {
        let beta_norm = log_uniform(&mut rng, 0.3, 3.0);
        let eta = log_uniform(&mut rng, 0.3, 10.0);
        let theta = rng.random_range(0.0..PI);
        let b1 = beta_norm * log_uniform(&mut rng, 0.1, 3.0);
        cases.push(OracleCaseRow {
            case_id: format!("mc{i:02}"),
            b1,
            b1_star: beta_norm * theta.cos(),
            b2_star: beta_norm * theta.sin(),
            sigma: beta_norm / eta,
        });
    }

    let mut rows = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let state = PlanarState::new(c.b1, c.b1_star, c.b2_star, c.sigma).expect("valid case");
        planar_rows(&c.case_id, &state, seeds::derive(DRAW_SEED, i as u64), &mut rows);
    }

    let bracket_seed = seeds::derive(DRAW_SEED, 1_000);
    for t in BRACKET_T {
        let state = PlanarState::new(t, 0.0, 1.0, 1.0).expect("valid state");
        let m = oracle::mc_planar(&state, DRAWS, bracket_seed).expect("valid draws");
        let g = oracle::McEstimate { mean: m.b1_prime.mean - t, ..m.b1_prime };
        rows.push(OracleRow::new("fixed_point_orth", &format!("g@{t:.2}"), &g));
    }

    let truth = GroundTruth::along_first_axis(3, 1.0, 0.5).expect("valid truth");
    for (case_id, beta, tag) in [
        ("grad_beta_star", truth.beta_star().clone(), 2_000),
        ("grad_generic", DVector::from_row_slice(&GRAD_GENERIC), 2_001),
    ] {
        let grad = oracle::mc_loglik_grad(&beta, &truth, DRAWS, seeds::derive(DRAW_SEED, tag)).expect("valid draws");
        for (j, e) in grad.iter().enumerate() {
            rows.push(OracleRow::new(case_id, &format!("grad_{j}"), e));
        }
    }

    io::write_rows(&dir.join("oracle_cases.csv"), &cases).expect("write cases");
    io::write_rows(&dir.join("oracle_fixtures.csv"), &rows).expect("write fixtures");
    println!("{} cases, {} fixture rows written to {}", cases.len(), rows.len(), dir.display());
}
