//! Shared fixtures for the benches.

use forge_core::gallery::{self, Example};
use forge_core::QuadraticNumber;

pub fn cat_map() -> Example {
    gallery::cat_map_suspension([[2, 1], [1, 1]]).expect("hyperbolic matrix")
}

pub fn broken() -> Example {
    gallery::broken_translation()
}

/// Arc tolerance used by the flowable checks.
pub fn arc() -> QuadraticNumber {
    QuadraticNumber::from_ratio(1, 16)
}
