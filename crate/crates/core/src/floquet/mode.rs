use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as c64;

use super::Classification;
use crate::dynamics::{apply_real, StepPropagator};
use crate::model::StepDrive;

/// One Floquet eigenstate `|u(t)⟩ = e^{iεt} U(t, 0) |u(0)⟩`, periodic in `t`.
///
/// Shares the propagator of the spectrum that produced it, so cloning is
/// cheap and modes can be sent across threads.
#[derive(Clone, Debug)]
pub struct FloquetMode {
    propagator: Arc<StepPropagator>,
    /// `u(0)` in the eigenbasis of the first drive segment.
    coeffs: Vec<c64>,
    pub quasienergy: f64,
    /// `u(0)` in the site basis.
    pub u0: Vec<c64>,
    pub classification: Classification,
}

fn segment_integral(kappa: f64, d: f64) -> c64 {
    // ∫_0^d e^{iκs} ds
    if (kappa * d).abs() < 1e-8 {
        c64::new(d, 0.5 * kappa * d * d)
    } else {
        (c64::from_polar(1.0, kappa * d) - 1.0) / c64::new(0.0, kappa)
    }
}

impl FloquetMode {
    pub(crate) fn new(propagator: Arc<StepPropagator>, coeffs: Vec<c64>, quasienergy: f64) -> Self {
        let u0 = propagator.site_from_first_basis(&coeffs);
        Self {
            propagator,
            coeffs,
            quasienergy,
            u0,
            classification: Classification::Unclassified,
        }
    }

    pub fn period(&self) -> f64 {
        self.propagator.drive.period
    }

    pub fn step_drive(&self) -> StepDrive {
        self.propagator.drive
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.period()
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    /// `x = ⟨u(0)|Ψ(0)⟩` for the spin-up initial state.
    pub fn overlap_x(&self) -> c64 {
        self.u0[0].conj()
    }

    /// `⟨u(0)|ψ⟩` for an arbitrary single-excitation state.
    pub fn overlap(&self, psi: &[c64]) -> c64 {
        self.u0.iter().zip(psi).map(|(u, p)| u.conj() * p).sum()
    }

    /// Site amplitudes `u_j(t)`.
    pub fn state_at(&self, t: f64) -> Vec<c64> {
        let (first, coeffs, _) = self.propagator.segment_coeffs_at(&self.coeffs, t);
        let v = self.propagator.segment_vectors(first);
        let phase = c64::from_polar(1.0, self.quasienergy * t);
        apply_real(v, &coeffs, false).into_iter().map(|c| c * phase).collect()
    }

    /// Impurity component `u₀(t)` at sorted times, `O(L)` per sample.
    pub fn impurity_series(&self, times: &[f64]) -> Vec<c64> {
        self.propagator
            .impurity_series_from_coeffs(&self.coeffs, times)
            .into_iter()
            .zip(times)
            .map(|(c, &t)| c * c64::from_polar(1.0, self.quasienergy * t))
            .collect()
    }

    /// `u_j(t)` at `t = iT/m`, `i = 0..m`.
    pub fn period_series(&self, m: usize) -> Vec<Vec<c64>> {
        (0..m).map(|i| self.state_at(i as f64 * self.period() / m as f64)).collect()
    }

    /// Harmonic components `ũ(k) = (1/T) ∫_0^T u(t) e^{-ikωt} dt` for
    /// `k = -K..=K`, indexed `[k + K][j]`. Evaluated in closed form on each
    /// constant-drive segment.
    pub fn harmonics(&self, k_max: usize) -> Vec<Vec<c64>> {
        let prop = &self.propagator;
        let drive = prop.drive;
        let (tau, rest, period) = (drive.tau, drive.rest(), drive.period);
        let eps = self.quasienergy;
        let omega = self.omega();
        let e1 = prop.segment_energies(true);
        let e2 = prop.segment_energies(false);
        let y2 = prop.second_segment_start(&self.coeffs);
        let k_max = k_max as i64;
        (-k_max..=k_max)
            .map(|k| {
                let kw = k as f64 * omega;
                let a: Vec<c64> = self
                    .coeffs
                    .iter()
                    .zip(e1)
                    .map(|(&c, &e)| c * segment_integral(-(e - eps + kw), tau))
                    .collect();
                let shift = c64::from_polar(1.0, (eps - kw) * tau);
                let b: Vec<c64> = y2
                    .iter()
                    .zip(e2)
                    .map(|(&c, &e)| c * segment_integral(-(e - eps + kw), rest) * shift)
                    .collect();
                let ua = apply_real(prop.segment_vectors(true), &a, false);
                let ub = apply_real(prop.segment_vectors(false), &b, false);
                ua.iter().zip(&ub).map(|(x, y)| (x + y) / period).collect()
            })
            .collect()
    }

    /// Brillouin copy `u(t) e^{ilωt}` with quasienergy `ε + lω`.
    pub fn shifted(&self, l: i64) -> FloquetMode {
        let mut m = self.clone();
        m.quasienergy += l as f64 * self.omega();
        m
    }
}

/// Normalized site populations `|u_j(t)|²`.
pub fn mode_profile(mode: &FloquetMode, t: f64) -> Vec<f64> {
    let u = mode.state_at(t);
    let total: f64 = u.iter().map(|c| c.norm_sqr()).sum();
    u.iter().map(|c| c.norm_sqr() / total).collect()
}
