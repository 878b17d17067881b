//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

pub mod oracle;

use sopt_core::solver::{Solver, SolverConfig};

pub fn solver() -> Solver {
    Solver::new(SolverConfig::default())
}

/// Reads a file from the repository's `fixtures/` directory.
pub fn fixture(name: &str) -> String {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    std::fs::read_to_string(root.join(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}
