//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use floquet_chain::{ChainSpec, DriveProtocol};

/// Chain of `sites` sites at the default coupling and field.
pub fn chain(sites: usize) -> ChainSpec {
    ChainSpec::new(sites, 1.0, 1.0, 20.0).expect("valid chain")
}

/// Two-level step drive with `τ = 0.1π`, `T = 0.25π`.
pub fn drive(a2: f64) -> DriveProtocol {
    DriveProtocol::step(0.0, a2, 0.1 * PI, 0.25 * PI).expect("valid drive")
}
