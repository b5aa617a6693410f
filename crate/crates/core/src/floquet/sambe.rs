//! Truncated extended-space (Sambe) eigenproblem.
//!
//! States are indexed site-major, `idx = j (2K+1) + (k + K)`, which makes the
//! operator banded: hops between neighbouring sites at equal harmonic sit
//! `2K+1` apart, and harmonic mixing stays inside a site block (σ_z form) or
//! the impurity–first-site block (rotated form).

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use super::classify::classify_or_band;
use super::{
    fold, spectrum_deviation, ClassifyOptions, ConvergenceReport, QuasienergySpectrum, SpectrumEntry,
    SpectrumSolver,
};
use crate::error::{Error, Result};
use crate::filter::renorm_factor;
use crate::linalg::HermitianBand;
use crate::model::{drive_fourier, ChainSpec, DriveProtocol};

/// Which representation of the periodic Hamiltonian is expanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SambeForm {
    /// Drive as `(A(t)/2) σ_z` on the impurity; harmonics `ω_l / 2`.
    /// Quasienergies come out shifted by `-Ā/2` relative to the model frame
    /// and are shifted back before reporting.
    SigmaZ,
    /// Drive removed by the periodic phase `e^{-i∫(A-Ā)}` on the impurity;
    /// the coupling acquires harmonics `g F_n`.
    Rotated,
}

/// Truncation schedule: start at `initial`, grow by `step` until successive
/// folded spectra differ by less than `tol`, stop at `max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPolicy {
    pub initial: usize,
    pub step: usize,
    pub tol: f64,
    pub max: usize,
}

impl Default for KPolicy {
    fn default() -> Self {
        Self {
            initial: 8,
            step: 4,
            tol: 1e-8,
            max: 48,
        }
    }
}

fn index(j: usize, k: i64, k_max: usize) -> usize {
    j * (2 * k_max + 1) + (k + k_max as i64) as usize
}

/// Sambe operator with the drive entering as `(ω_l/2) σ_z`, `σ_z =
/// diag(+1, -1, …, -1)`.
pub fn sambe_matrix(chain: &ChainSpec, drive: &DriveProtocol, k_max: usize) -> HermitianBand {
    let nh = 2 * k_max + 1;
    let n_sites = chain.dim();
    let omega = drive.omega();
    let kk = k_max as i64;
    let mut m = HermitianBand::zeros(n_sites * nh, nh);
    let harmonics: Vec<c64> = (0..=2 * kk).map(|l| drive_fourier(drive, l)).collect();
    for j in 0..n_sites {
        let sign = if j == 0 { 1.0 } else { -1.0 };
        for k in -kk..=kk {
            let i = index(j, k, k_max);
            m.set(i, i, c64::new(chain.field + k as f64 * omega + sign * 0.5 * harmonics[0].re, 0.0));
            for l in (k + 1)..=kk {
                // ⟨j,l| M |j,k⟩ = σ_j ω_{l-k} / 2
                m.set(index(j, l, k_max), i, harmonics[(l - k) as usize] * (0.5 * sign));
            }
            if j + 1 < n_sites {
                let hop = if j == 0 { chain.coupling } else { chain.hopping };
                m.set(index(j + 1, k, k_max), i, c64::new(hop, 0.0));
            }
        }
    }
    m
}

/// Sambe operator in the rotated frame: `diag(λ+Ā, λ, …)` plus chain hops,
/// with the impurity coupling carrying the harmonics `⟨1,l|M|0,k⟩ = g F_{l-k}`.
pub fn sambe_matrix_rotated(chain: &ChainSpec, drive: &DriveProtocol, k_max: usize) -> HermitianBand {
    let nh = 2 * k_max + 1;
    let n_sites = chain.dim();
    let omega = drive.omega();
    let kk = k_max as i64;
    let mean = drive.mean();
    let factors: Vec<c64> = (-2 * kk..=2 * kk).map(|l| renorm_factor(drive, l)).collect();
    let f = |l: i64| factors[(l + 2 * kk) as usize];
    let mut m = HermitianBand::zeros(n_sites * nh, 2 * nh - 1);
    for j in 0..n_sites {
        for k in -kk..=kk {
            let i = index(j, k, k_max);
            let onsite = if j == 0 { chain.field + mean } else { chain.field };
            m.set(i, i, c64::new(onsite + k as f64 * omega, 0.0));
            if j == 0 {
                if n_sites > 1 {
                    for l in -kk..=kk {
                        m.set(index(1, l, k_max), i, f(l - k) * chain.coupling);
                    }
                }
            } else if j + 1 < n_sites {
                m.set(index(j + 1, k, k_max), i, c64::new(chain.hopping, 0.0));
            }
        }
    }
    m
}

fn build(chain: &ChainSpec, drive: &DriveProtocol, k_max: usize, form: SambeForm) -> (HermitianBand, f64) {
    match form {
        SambeForm::SigmaZ => (sambe_matrix(chain, drive, k_max), 0.5 * drive.mean()),
        SambeForm::Rotated => (sambe_matrix_rotated(chain, drive, k_max), 0.0),
    }
}

/// Picks one Brillouin copy of each Floquet state from the full list of
/// Sambe eigenvalues.
///
/// Copies centred on the zeroth harmonic are the least affected by
/// truncation and sit near the band centre, so the window of width `ω` is
/// placed around `center`, with its edges moved into the widest spectral gap
/// so that no state is split across the boundary.
fn select_representatives(eigs: &[f64], center: f64, omega: f64) -> Vec<f64> {
    let mut near: Vec<f64> = eigs
        .iter()
        .filter(|&&e| e >= center - 0.5 * omega && e < center + 0.5 * omega)
        .map(|&e| fold(e - center, omega))
        .collect();
    if near.is_empty() {
        return Vec::new();
    }
    near.sort_by(f64::total_cmp);
    let mut best_gap = near[0] + omega - near[near.len() - 1];
    let mut edge = fold(near[near.len() - 1] + 0.5 * best_gap, omega);
    for w in near.windows(2) {
        let gap = w[1] - w[0];
        if gap > best_gap {
            best_gap = gap;
            edge = 0.5 * (w[0] + w[1]);
        }
    }
    let (lo, hi) = if edge >= 0.0 {
        (center + edge - omega, center + edge)
    } else {
        (center + edge, center + edge + omega)
    };
    eigs.iter().copied().filter(|&e| e >= lo && e < hi).collect()
}

/// Folded quasienergies (model frame) from the truncated operator at `K`.
pub fn sambe_quasienergies(
    chain: &ChainSpec,
    drive: &DriveProtocol,
    k_max: usize,
    form: SambeForm,
) -> Result<Vec<f64>> {
    chain.validate()?;
    drive.validate()?;
    let (m, offset) = build(chain, drive, k_max, form);
    let eigs = m.eigenvalues()?;
    let omega = drive.omega();
    let center = chain.field - offset;
    let reps = select_representatives(&eigs, center, omega);
    if reps.len() != chain.dim() {
        return Err(Error::Eigen(format!(
            "Brillouin-copy selection found {} states, expected {}",
            reps.len(),
            chain.dim()
        )));
    }
    Ok(reps.into_iter().map(|e| fold(e + offset, omega)).collect())
}

/// Eigenvalue (model frame, unfolded) and site populations at `t = 0` of the
/// Sambe eigenvector nearest `target`.
pub fn sambe_eigenvalue_near(
    chain: &ChainSpec,
    drive: &DriveProtocol,
    k_max: usize,
    form: SambeForm,
    target: f64,
) -> Result<(f64, Vec<f64>)> {
    let (m, offset) = build(chain, drive, k_max, form);
    let (val, vec) = m.eigenpair_near(target - offset, 30)?;
    let nh = 2 * k_max + 1;
    let u0: Vec<c64> = vec.chunks(nh).map(|block| block.iter().sum()).collect();
    let total: f64 = u0.iter().map(|c| c.norm_sqr()).sum();
    let pops = u0.iter().map(|c| c.norm_sqr() / total).collect();
    Ok((val + offset, pops))
}

/// Auto-grown Sambe spectrum, classified with `opts`.
///
/// Entries with a nonzero gap distance get site populations from
/// shift-invert iteration on the final operator, so the localization
/// criterion can be applied to them; band entries carry no populations.
pub fn solve_sambe(
    chain: &ChainSpec,
    drive: &DriveProtocol,
    policy: &KPolicy,
    form: SambeForm,
    opts: &ClassifyOptions,
) -> Result<QuasienergySpectrum> {
    if policy.initial == 0 || policy.step == 0 || policy.max < policy.initial {
        return Err(Error::InvalidDrive(format!("invalid K policy {policy:?}")));
    }
    let omega = drive.omega();
    let mut history = Vec::new();
    let mut k = policy.initial;
    let mut prev = sambe_quasienergies(chain, drive, k, form)?;
    let mut shift = f64::INFINITY;
    while k + policy.step <= policy.max {
        k += policy.step;
        let cur = sambe_quasienergies(chain, drive, k, form)?;
        shift = spectrum_deviation(&prev, &cur, omega);
        history.push((k, shift));
        prev = cur;
        if shift < policy.tol {
            break;
        }
    }
    let converged = shift < policy.tol;
    let mut entries: Vec<SpectrumEntry> = prev.iter().map(|&e| SpectrumEntry::new(e)).collect();
    entries.sort_by(|a, b| a.quasienergy.total_cmp(&b.quasienergy));
    let gap_open = omega > chain.bandwidth();
    for e in entries.iter_mut() {
        if gap_open && super::gap_distance(e.quasienergy, omega, chain) > 0.0 {
            let target = chain.field + fold(e.quasienergy - chain.field, omega);
            let (_, pops) = sambe_eigenvalue_near(chain, drive, k, form, target)?;
            *e = SpectrumEntry::new(e.quasienergy).with_populations(&pops);
        }
    }
    let spec = QuasienergySpectrum::new(
        omega,
        entries,
        SpectrumSolver::Sambe { k, form },
        ConvergenceReport {
            history,
            converged,
            tolerance: policy.tol,
            unitarity_defect: None,
        },
        chain.field,
        2.0 * chain.hopping,
    );
    let spec = classify_or_band(spec, chain, opts);
    if !converged {
        return Err(Error::TruncationNotConverged {
            k_max: k,
            last_shift: shift,
            partial: Box::new(spec),
        });
    }
    Ok(spec)
}
