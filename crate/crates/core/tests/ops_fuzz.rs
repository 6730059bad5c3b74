//! Every lifted operator preserves the ground joint log-weight.

mod common;

use common::ops::{fuzz, CASES};

#[test]
fn operators_preserve_the_ground_joint() {
    let (applied, failures) = fuzz(0x5eed, CASES, 20);
    assert!(applied.values().sum::<usize>() >= CASES);
    assert!(failures.is_empty(), "{failures:?}");
}
