//! EM and Easy-EM for symmetric two-component mixed linear regression.
//!
//! The crate provides seeded data generation ([`model`]), the planar reduction
//! of iterates ([`geometry`]), an exact population EM operator evaluated by
//! quadrature ([`population`]), finite-sample drivers ([`finite`]), Monte Carlo
//! cross-checks ([`oracle`]), contraction-bound checks ([`diagnostics`]) and a
//! command line front end ([`cli`]).

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod finite;
pub mod geometry;
pub mod io;
pub mod model;
pub mod oracle;
pub mod population;
pub mod seeds;

pub use error::{MlrError, Result};
