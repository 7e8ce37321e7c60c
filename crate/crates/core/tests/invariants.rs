//! Property suites for the structural invariants, one test per law.

mod common;

use common::checks;

#[test]
fn storage_capacity_law() {
    checks::storage_capacity_law(1000).unwrap();
}

#[test]
fn selected_kb_cap() {
    checks::selected_kb_cap(1000).unwrap();
}

#[test]
fn proof_score_monotonicity() {
    checks::proof_score_monotonicity(1000).unwrap();
}

#[test]
fn split_partition_law() {
    checks::split_partition_law(1000).unwrap();
}
