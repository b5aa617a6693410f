//! Floquet quasienergy spectra, bound-state detection and steady-state
//! predictions.
//!
//! Quasienergies are reported in the frame of the single-excitation matrix
//! `diag(λ+A, λ, …)` and folded into the zone `(-ω/2, ω/2]`. In that frame the
//! environment band folds onto `fold(ε - λ) ∈ [-2J, 2J]`.

mod classify;
mod mode;
mod monodromy;
mod sambe;
mod steady;

use serde::{Deserialize, Serialize};

pub use classify::{classify_modes, gap_distance, ClassifyOptions, DEFAULT_J_LOC, DEFAULT_W_MIN};
pub use mode::{mode_profile, FloquetMode};
pub use monodromy::{monodromy_spectrum, MonodromyResult};
pub use sambe::{
    sambe_eigenvalue_near, sambe_matrix, sambe_matrix_rotated, sambe_quasienergies, solve_sambe, KPolicy,
    SambeForm,
};
pub use steady::{asymptotic_fidelity, fbs_report, fbs_steady_state, FbsReport, Rho2};

/// Folds `e` into `(-ω/2, ω/2]` by subtracting the nearest multiple of `ω`.
pub fn fold(e: f64, omega: f64) -> f64 {
    let mut x = e - (e / omega).round() * omega;
    if x <= -0.5 * omega {
        x += omega;
    } else if x > 0.5 * omega {
        x -= omega;
    }
    x
}

/// Distance between two quasienergies on the circle of circumference `ω`.
pub fn circular_distance(a: f64, b: f64, omega: f64) -> f64 {
    fold(a - b, omega).abs()
}

/// Largest nearest-neighbour distance between two folded sets, taken in both
/// directions. Zero iff each set is contained in the other.
pub fn spectrum_deviation(a: &[f64], b: &[f64], omega: f64) -> f64 {
    fn one_way(a: &[f64], b: &[f64], omega: f64) -> f64 {
        let mut sorted: Vec<f64> = b.iter().map(|&x| fold(x, omega)).collect();
        sorted.sort_by(f64::total_cmp);
        a.iter()
            .map(|&x| {
                let x = fold(x, omega);
                let i = sorted.partition_point(|&y| y < x);
                let n = sorted.len();
                let cands = [i % n, (i + n - 1) % n, 0, n - 1];
                cands
                    .iter()
                    .map(|&j| circular_distance(x, sorted[j], omega))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    one_way(a, b, omega).max(one_way(b, a, omega))
}

/// Pairwise deviation after sorting both folded sets around the circle and
/// aligning them at the best cyclic offset. Requires equal lengths.
pub fn pairwise_deviation(a: &[f64], b: &[f64], omega: f64) -> f64 {
    if a.len() != b.len() || a.is_empty() {
        return f64::INFINITY;
    }
    let mut fa: Vec<f64> = a.iter().map(|&x| fold(x, omega)).collect();
    let mut fb: Vec<f64> = b.iter().map(|&x| fold(x, omega)).collect();
    fa.sort_by(f64::total_cmp);
    fb.sort_by(f64::total_cmp);
    let n = fa.len();
    // Elements near the zone edge may wrap; try small cyclic offsets.
    (0..n.min(3))
        .flat_map(|s| [s, (n - s) % n])
        .map(|shift| {
            (0..n)
                .map(|i| circular_distance(fa[i], fb[(i + shift) % n], omega))
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Band,
    Bound,
    /// In the gap but within twice the gap tolerance of the band edge.
    Marginal,
    /// Not yet classified.
    Unclassified,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Band => "band",
            Classification::Bound => "bound",
            Classification::Marginal => "marginal",
            Classification::Unclassified => "unclassified",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub quasienergy: f64,
    pub classification: Classification,
    pub gap_distance: f64,
    /// `|u₀(0)|²`
    pub impurity_weight: Option<f64>,
    /// `Σ_{j ≤ j_loc} |u_j(0)|²`
    pub region_weight: Option<f64>,
    /// Decay length of `|u_j(0)|` fitted beyond the impurity; `None` if the
    /// profile does not decay.
    pub localization_length: Option<f64>,
    /// Leading site populations `|u_j(0)|²`, kept for re-classification.
    #[serde(skip)]
    pub(crate) head: Vec<f64>,
}

impl SpectrumEntry {
    pub(crate) fn new(quasienergy: f64) -> Self {
        Self {
            quasienergy,
            classification: Classification::Unclassified,
            gap_distance: 0.0,
            impurity_weight: None,
            region_weight: None,
            localization_length: None,
            head: Vec::new(),
        }
    }

    pub(crate) fn with_populations(mut self, pops: &[f64]) -> Self {
        self.impurity_weight = pops.first().copied();
        self.head = pops.iter().take(HEAD_SITES).copied().collect();
        self.localization_length = localization_length(pops);
        self
    }
}

pub(crate) const HEAD_SITES: usize = 64;

/// Fits `log|u_j|² ≈ c - 2j/ξ` over sites beyond the impurity region and
/// returns `ξ` when the slope is negative.
pub(crate) fn localization_length(pops: &[f64]) -> Option<f64> {
    let hi = pops.len().min(HEAD_SITES);
    let pts: Vec<(f64, f64)> = (2..hi)
        .filter(|&j| pops[j] > 1e-28)
        .map(|j| (j as f64, pops[j].ln()))
        .collect();
    if pts.len() < 5 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if slope < -1e-6 {
        Some(-2.0 / slope)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectrumSolver {
    Sambe { k: usize, form: SambeForm },
    Monodromy,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(K, max shift of folded quasienergies relative to the previous K)`.
    pub history: Vec<(usize, f64)>,
    pub converged: bool,
    pub tolerance: f64,
    /// `max_α ||μ_α| - 1|` for monodromy spectra.
    pub unitarity_defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasienergySpectrum {
    pub omega: f64,
    /// `(-ω/2, ω/2]`
    pub zone: (f64, f64),
    pub entries: Vec<SpectrumEntry>,
    pub solver: SpectrumSolver,
    pub convergence: ConvergenceReport,
    pub thresholds: Option<ClassifyOptions>,
    /// Band-centre `λ`, needed to locate the folded band.
    pub band_center: f64,
    pub band_half_width: f64,
    /// `None` until classified; `Some(false)` when the gap is closed.
    pub gap_open: Option<bool>,
}

impl QuasienergySpectrum {
    pub(crate) fn new(
        omega: f64,
        entries: Vec<SpectrumEntry>,
        solver: SpectrumSolver,
        convergence: ConvergenceReport,
        band_center: f64,
        band_half_width: f64,
    ) -> Self {
        Self {
            omega,
            zone: (-0.5 * omega, 0.5 * omega),
            entries,
            solver,
            convergence,
            thresholds: None,
            band_center,
            band_half_width,
            gap_open: None,
        }
    }

    pub fn quasienergies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.quasienergy).collect()
    }

    pub fn count(&self, class: Classification) -> usize {
        self.entries.iter().filter(|e| e.classification == class).count()
    }

    pub fn bound_indices(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.classification == Classification::Bound)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_bound(&self) -> bool {
        self.count(Classification::Bound) > 0
    }

    /// Largest gap distance among entries (0 when all lie in the band).
    pub fn max_gap_distance(&self) -> f64 {
        self.entries.iter().map(|e| e.gap_distance).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fold_zone_edges() {
        assert_eq!(fold(0.5, 1.0), 0.5);
        assert_eq!(fold(-0.5, 1.0), 0.5);
        assert!((fold(2.3, 1.0) - 0.3).abs() < 1e-15);
        assert!((fold(-2.3, 1.0) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn deviation_detects_wrap() {
        let w = 2.0;
        assert!(spectrum_deviation(&[0.999], &[-0.999], w) < 3e-3);
        assert!(pairwise_deviation(&[0.999, 0.1], &[-0.999, 0.1], w) < 3e-3);
        assert!(spectrum_deviation(&[0.5], &[0.0], w) > 0.49);
    }

    #[test]
    fn localization_fit_recovers_length() {
        let pops: Vec<f64> = (0..60).map(|j| (-2.0 * j as f64 / 3.0).exp()).collect();
        let xi = localization_length(&pops).unwrap();
        assert!((xi - 3.0).abs() < 1e-9);
        let flat = vec![0.01; 60];
        assert!(localization_length(&flat).is_none());
    }

    proptest! {
        #[test]
        fn fold_is_brillouin_covariant(e in -500.0f64..500.0, l in -20i32..20, omega in 0.5f64..50.0) {
            let a = fold(e, omega);
            let b = fold(e + l as f64 * omega, omega);
            prop_assert!(a > -0.5 * omega && a <= 0.5 * omega);
            prop_assert!(circular_distance(a, b, omega) < 1e-9 * (1.0 + e.abs()));
        }
    }
}
