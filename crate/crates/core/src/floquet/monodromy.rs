use std::sync::Arc;

use num_complex::Complex64 as c64;

use super::{
    classify::classify_or_band, fold, ClassifyOptions, ConvergenceReport, FloquetMode, QuasienergySpectrum, SpectrumEntry,
    SpectrumSolver,
};
use crate::dynamics::StepPropagator;
use crate::error::Result;
use crate::linalg::unitary_eigen;
use crate::model::{ChainSpec, DriveProtocol};

/// Spectrum and full mode set from the one-period propagator.
#[derive(Clone, Debug)]
pub struct MonodromyResult {
    pub spectrum: QuasienergySpectrum,
    /// Modes in the same order as `spectrum.entries`.
    pub modes: Vec<FloquetMode>,
}

impl MonodromyResult {
    pub fn bound_modes(&self) -> Vec<&FloquetMode> {
        self.spectrum.bound_indices().into_iter().map(|i| &self.modes[i]).collect()
    }
}

/// Quasienergies and Floquet modes from the eigen-decomposition of `U(T)`.
///
/// The spectrum is classified with `opts` unless the gap is closed, in which
/// case all entries are marked `Band` and `gap_open` is `Some(false)`.
pub fn monodromy_spectrum(
    chain: &ChainSpec,
    drive: &DriveProtocol,
    opts: &ClassifyOptions,
) -> Result<MonodromyResult> {
    let prop = Arc::new(StepPropagator::new(chain, drive)?);
    let u = prop.monodromy_eigenbasis();
    let (mu, y) = unitary_eigen(&u)?;
    let period = drive.period();
    let omega = drive.omega();
    let n = chain.dim();
    let unitarity_defect = mu.iter().map(|m| (m.norm() - 1.0).abs()).fold(0.0, f64::max);

    let mut entries = Vec::with_capacity(n);
    let mut modes = Vec::with_capacity(n);
    for (a, m) in mu.iter().enumerate() {
        let eps = fold(-m.arg() / period, omega);
        let coeffs: Vec<c64> = (0..n).map(|r| y[(r, a)]).collect();
        let mode = FloquetMode::new(prop.clone(), coeffs, eps);
        let pops: Vec<f64> = mode.u0.iter().map(|c| c.norm_sqr()).collect();
        entries.push(SpectrumEntry::new(eps).with_populations(&pops));
        modes.push(mode);
    }
    let spectrum = QuasienergySpectrum::new(
        omega,
        entries,
        SpectrumSolver::Monodromy,
        ConvergenceReport {
            history: Vec::new(),
            converged: true,
            tolerance: 0.0,
            unitarity_defect: Some(unitarity_defect),
        },
        chain.field,
        2.0 * chain.hopping,
    );
    let spectrum = classify_or_band(spectrum, chain, opts);
    for (mode, entry) in modes.iter_mut().zip(&spectrum.entries) {
        mode.classification = entry.classification;
    }
    Ok(MonodromyResult { spectrum, modes })
}
