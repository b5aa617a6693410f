use num_complex::Complex64 as c64;

use super::{SuperpositionState, Trajectory};
use crate::error::Result;
use crate::model::{ChainSpec, DriveProtocol};

/// `F = ||α|² c + |β|²|² + |αβ|² (1 - |c|²)` for the model-frame amplitude `c`.
pub fn fidelity_from_amplitude(c: c64, state: &SuperpositionState) -> f64 {
    let a2 = state.alpha.norm_sqr();
    let b2 = state.beta.norm_sqr();
    (c * a2 + b2).norm_sqr() + a2 * b2 * (1.0 - c.norm_sqr())
}

/// Initial-state fidelity of the system spin along a trajectory.
///
/// The trajectory's phase frame decides how the spin-frame factor
/// `e^{-i∫(λ+A)/2}` is applied; untagged trajectories are rejected.
pub fn fidelity_series(
    traj: &Trajectory,
    _drive: &DriveProtocol,
    _chain: &ChainSpec,
    state: &SuperpositionState,
) -> Result<Vec<f64>> {
    let model = traj.model_amplitudes()?;
    Ok(model.iter().map(|&c| fidelity_from_amplitude(c, state)).collect())
}
