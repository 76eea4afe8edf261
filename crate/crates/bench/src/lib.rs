//! Fixtures shared by the benchmarks.

use mareg_core::synth::{generate_pair, GeneratorConfig, SyntheticPair};
use mareg_core::Shape3;

/// A deterministic synthetic pair of the given cube size.
pub fn pair(n: usize) -> SyntheticPair {
    generate_pair(1, Shape3::cube(n), &GeneratorConfig::default()).expect("valid bench shape")
}
