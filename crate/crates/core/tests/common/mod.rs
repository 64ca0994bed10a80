#![allow(dead_code)]

use std::path::PathBuf;

use ccdae_core::backends::{Backend, TableBackend};
use ccdae_core::{Description, FiniteHypothesisTable};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn fixture(name: &str) -> PathBuf {
    data_dir().join("fixtures").join(name)
}

pub fn table(name: &str) -> FiniteHypothesisTable {
    FiniteHypothesisTable::load(fixture(name)).expect("fixture table loads")
}

pub const ORACLE_TABLES: [&str; 6] = [
    "separable.table",
    "ten.table",
    "three_samples.table",
    "ties.table",
    "subnormal_code.table",
    "identical.table",
];

/// Encoder-only table read back from a table-backend fixture with two
/// contexts over the same descriptions.
pub fn conditionals_table(name: &str, contexts: [&str; 2]) -> FiniteHypothesisTable {
    let backend = TableBackend::load(fixture(name)).expect("backend fixture loads");
    let labels: Vec<String> = backend.fixture().conditional[contexts[0]]
        .keys()
        .cloned()
        .collect();
    let row = |ctx: &str| -> Vec<f64> {
        labels
            .iter()
            .map(|l| {
                backend
                    .cond_logprob(ctx, None, &Description::complete(l.as_str()))
                    .expect("known context")
                    .total
            })
            .collect()
    };
    let rows = [row(contexts[0]), row(contexts[1])];
    FiniteHypothesisTable::from_conditionals(labels, rows).expect("valid conditionals")
}

pub fn rel_err(estimate: f64, exact: f64) -> f64 {
    (estimate - exact).abs() / exact.abs().max(1e-12)
}
