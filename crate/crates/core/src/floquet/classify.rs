use serde::{Deserialize, Serialize};

use super::{fold, Classification, QuasienergySpectrum};
use crate::error::{Error, Result};
use crate::model::ChainSpec;

pub const DEFAULT_W_MIN: f64 = 0.25;
pub const DEFAULT_J_LOC: usize = 20;

/// Thresholds of the bound-mode criterion. `gap_tol = None` selects
/// `max(10⁻³ ω, 3 · 4J/L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub gap_tol: Option<f64>,
    pub w_min: f64,
    pub j_loc: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            gap_tol: None,
            w_min: DEFAULT_W_MIN,
            j_loc: DEFAULT_J_LOC,
        }
    }
}

impl ClassifyOptions {
    pub fn resolved_gap_tol(&self, omega: f64, chain: &ChainSpec) -> f64 {
        self.gap_tol
            .unwrap_or_else(|| (1e-3 * omega).max(3.0 * chain.bandwidth() / chain.sites as f64))
    }
}

/// Distance of a quasienergy from the folded band `fold(ε - λ) ∈ [-2J, 2J]`.
pub fn gap_distance(eps: f64, omega: f64, chain: &ChainSpec) -> f64 {
    (fold(eps - chain.field, omega).abs() - 2.0 * chain.hopping).max(0.0)
}

/// Marks each entry `Bound`, `Marginal` or `Band`.
///
/// A mode is `Bound` when its gap distance exceeds `2·gap_tol` and its
/// population on sites `j <= j_loc` exceeds `w_min`. Modes with the weight
/// criterion met but a gap distance in `(gap_tol, 2·gap_tol]` are `Marginal`.
pub fn classify_modes(
    mut spec: QuasienergySpectrum,
    chain: &ChainSpec,
    opts: &ClassifyOptions,
) -> Result<QuasienergySpectrum> {
    let omega = spec.omega;
    if omega <= chain.bandwidth() {
        return Err(Error::GapUndefined {
            omega,
            bandwidth: chain.bandwidth(),
        });
    }
    let gap_tol = opts.resolved_gap_tol(omega, chain);
    for e in spec.entries.iter_mut() {
        e.gap_distance = gap_distance(e.quasienergy, omega, chain);
        if !e.head.is_empty() {
            let upto = (opts.j_loc + 1).min(e.head.len());
            e.region_weight = Some(e.head[..upto].iter().sum());
        }
        let localized = e.region_weight.is_some_and(|w| w > opts.w_min);
        e.classification = if localized && e.gap_distance > 2.0 * gap_tol {
            Classification::Bound
        } else if localized && e.gap_distance > gap_tol {
            Classification::Marginal
        } else {
            Classification::Band
        };
    }
    let mut resolved = *opts;
    resolved.gap_tol = Some(gap_tol);
    spec.thresholds = Some(resolved);
    spec.gap_open = Some(true);
    Ok(spec)
}

/// Classifies, or marks every entry `Band` when the gap is closed.
pub(crate) fn classify_or_band(
    spec: QuasienergySpectrum,
    chain: &ChainSpec,
    opts: &ClassifyOptions,
) -> QuasienergySpectrum {
    let fallback = spec.clone();
    match classify_modes(spec, chain, opts) {
        Ok(s) => s,
        Err(_) => {
            let mut s = fallback;
            for e in s.entries.iter_mut() {
                e.gap_distance = 0.0;
                e.classification = Classification::Band;
            }
            s.gap_open = Some(false);
            s
        }
    }
}
