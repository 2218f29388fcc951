//! Shared setup for the criterion benchmarks. Run with
//! `cargo bench -p isokit-bench`.

use std::path::Path;

use isokit_core::ChainModel;

/// Loads one of the shipped fixture models by file name.
pub fn fixture(name: &str) -> ChainModel {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name);
    ChainModel::load(&path).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}
