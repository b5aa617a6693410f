//! Long-time predictions carried by a bound Floquet mode.
//!
//! With one bound mode the impurity amplitude tends to
//! `c₀(t) → x u₀(t) e^{-iεt}`, `x = conj(u₀(0))`; every band contribution
//! dephases away.

use num_complex::Complex64 as c64;
use serde::Serialize;

use super::{Classification, FloquetMode, MonodromyResult};
use crate::dynamics::{fidelity_from_amplitude, half_phase, SuperpositionState};
use crate::error::{Error, Result};
use crate::model::{ChainSpec, DriveProtocol};

/// Reduced 2×2 density matrix in the (up, down) basis.
pub type Rho2 = [[c64; 2]; 2];

#[derive(Clone, Debug, Serialize)]
pub struct FbsReport {
    pub found: bool,
    pub quasienergy: Option<f64>,
    /// `|x|²`
    pub overlap_sq: f64,
    pub times: Vec<f64>,
    /// `P_∞(t) = |x|² |u₀(t)|²` over one period.
    pub p_infinity: Vec<f64>,
    /// `Tr_E |u(t)⟩⟨u(t)|` over one period.
    pub rho_fbs: Vec<Rho2>,
    /// Phase `∫_0^t (λ + A + 2ε)/2` of the coherence factor `μ(t) = e^{i·phase}`.
    pub mu_phase: Vec<f64>,
    #[serde(skip)]
    pub mode: Option<FloquetMode>,
}

impl FbsReport {
    /// Period average of `P_∞`.
    pub fn mean_p_infinity(&self) -> f64 {
        if self.p_infinity.is_empty() {
            0.0
        } else {
            self.p_infinity.iter().sum::<f64>() / self.p_infinity.len() as f64
        }
    }

    /// `P_∞(t)` for arbitrary `t`, using periodicity.
    pub fn p_infinity_at(&self, t: f64) -> Result<f64> {
        match &self.mode {
            None => Ok(0.0),
            Some(m) => {
                let r = t.rem_euclid(m.period());
                Ok(m.overlap_x().norm_sqr() * m.impurity_series(&[r])[0].norm_sqr())
            }
        }
    }
}

fn period_times(period: f64, samples: usize) -> Vec<f64> {
    (0..samples).map(|i| i as f64 * period / samples as f64).collect()
}

/// Steady-state population and reduced state for the spin-up initial state.
pub fn fbs_steady_state(mode: &FloquetMode, chain: &ChainSpec, samples: usize) -> Result<FbsReport> {
    if mode.classification != Classification::Bound {
        return Err(Error::NotBound);
    }
    let period = mode.period();
    let times = period_times(period, samples.max(1));
    let u0 = mode.impurity_series(&times);
    let x2 = mode.overlap_x().norm_sqr();
    let p_infinity = u0.iter().map(|u| x2 * u.norm_sqr()).collect();
    let rho_fbs = u0
        .iter()
        .map(|u| {
            let up = u.norm_sqr();
            [[c64::new(up, 0.0), c64::default()], [c64::default(), c64::new(1.0 - up, 0.0)]]
        })
        .collect();
    let drive = DriveProtocol::Step(mode.step_drive());
    let mu_phase = times
        .iter()
        .map(|&t| half_phase(chain, &drive, t) + mode.quasienergy * t)
        .collect();
    Ok(FbsReport {
        found: true,
        quasienergy: Some(mode.quasienergy),
        overlap_sq: x2,
        times,
        p_infinity,
        rho_fbs,
        mu_phase,
        mode: Some(mode.clone()),
    })
}

/// Report for the bound mode with the largest `|x|²`, or an empty report
/// (`P_∞ ≡ 0`) when the spectrum has none.
pub fn fbs_report(result: &MonodromyResult, chain: &ChainSpec, samples: usize) -> Result<FbsReport> {
    let best = result
        .bound_modes()
        .into_iter()
        .max_by(|a, b| a.overlap_x().norm_sqr().total_cmp(&b.overlap_x().norm_sqr()));
    match best {
        Some(mode) => fbs_steady_state(mode, chain, samples),
        None => {
            let period = 2.0 * std::f64::consts::PI / result.spectrum.omega;
            let times = period_times(period, samples.max(1));
            Ok(FbsReport {
                found: false,
                quasienergy: None,
                overlap_sq: 0.0,
                p_infinity: vec![0.0; times.len()],
                rho_fbs: Vec::new(),
                mu_phase: Vec::new(),
                times,
                mode: None,
            })
        }
    }
}

/// Asymptotic fidelity `F_∞(t)` of the initial superposition at `times`.
///
/// Uses the bound-mode limit of the impurity amplitude inside the exact
/// fidelity expression; it is quasi-periodic rather than periodic because of
/// the factor `e^{-iεt}`.
pub fn asymptotic_fidelity(
    mode: &FloquetMode,
    state: &SuperpositionState,
    times: &[f64],
) -> Result<Vec<f64>> {
    if mode.classification != Classification::Bound {
        return Err(Error::NotBound);
    }
    let x = mode.overlap_x();
    let u0 = mode.impurity_series(times);
    Ok(times
        .iter()
        .zip(&u0)
        .map(|(&t, &u)| {
            let c = x * u * c64::from_polar(1.0, -mode.quasienergy * t);
            fidelity_from_amplitude(c, state)
        })
        .collect())
}
