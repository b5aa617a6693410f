//! Driven spin impurity coupled to an XX spin chain: exact single-excitation
//! dynamics, Floquet spectra and bound-state detection, and the
//! filter-function approximation for short and long times.

pub mod dynamics;
pub mod error;
pub mod filter;
pub mod floquet;
pub mod io;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod special;
pub mod sweep;

pub use num_complex::Complex64 as c64;

pub use error::{Error, Result};
pub use model::{ChainSpec, DriveProtocol, HarmonicDrive, KernelMode, StepDrive};
