//! Solver outputs against independent numerical minimization.

mod common;

use common::checks;

#[test]
fn vehicle_tier_matches_oracle() {
    let out = checks::tier1_equivalence(25);
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn matching_is_maximum() {
    let out = checks::matching_exactness(300);
    assert!(out.passed, "{}", out.detail);
}

#[test]
fn rsu_tier_matches_oracle() {
    let out = checks::tier2_equivalence(12);
    assert!(out.passed, "{}", out.detail);
}
