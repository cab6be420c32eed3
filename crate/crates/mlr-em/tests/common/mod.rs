#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use mlr_em::geometry::PlanarState;
use mlr_em::io::{self, OracleCaseRow, OracleRow};
use mlr_em::oracle::McEstimate;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn oracle_cases() -> Vec<OracleCaseRow> {
    io::read_rows(&fixture_dir().join("oracle_cases.csv")).expect("oracle_cases.csv")
}

pub fn oracle_rows() -> Vec<OracleRow> {
    io::read_rows(&fixture_dir().join("oracle_fixtures.csv")).expect("oracle_fixtures.csv")
}

/// Fixture estimates keyed by `(case_id, quantity)`.
pub fn oracle_map() -> BTreeMap<(String, String), McEstimate> {
    oracle_rows().into_iter().map(|r| ((r.case_id.clone(), r.quantity.clone()), r.estimate())).collect()
}

pub fn case_state(c: &OracleCaseRow) -> PlanarState {
    PlanarState::new(c.b1, c.b1_star, c.b2_star, c.sigma).expect("valid fixture case")
}

/// The 50 randomly drawn cross-validation cases.
pub fn random_cases() -> Vec<OracleCaseRow> {
    oracle_cases().into_iter().filter(|c| c.case_id.starts_with("mc")).collect()
}
