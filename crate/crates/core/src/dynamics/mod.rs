//! Exact time evolution of the impurity amplitude and derived observables.

mod fidelity;
mod lattice;
mod volterra;

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainSpec, DriveProtocol, KernelProvenance};

pub use fidelity::{fidelity_from_amplitude, fidelity_series};
pub(crate) use lattice::{apply_real, lattice_trajectory};
pub use lattice::{
    period_sample_times, propagate_lattice, propagate_rk4, superposition_direct, Rk4Options,
    StepPropagator,
};
pub use volterra::{commensurate_step, solve_volterra, solve_volterra_converged, solve_volterra_with};

/// Phase convention of a stored amplitude.
///
/// `Model` is the amplitude generated by the single-excitation matrix
/// `diag(λ+A, λ, …)`, which equals the Volterra variable `c₀'`. `Spin` carries
/// the extra factor `e^{+i∫(λ+A)/2}` of the spin-up component in the full
/// two-sector state. Moduli agree in both frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseFrame {
    Model,
    Spin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverId {
    VolterraTrapezoid,
    VolterraRichardson,
    LatticeSpectral,
    LatticeRk4,
    RenormalizedCoupling,
}

/// Step-refinement evidence attached to a converged trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Coarse step.
    pub step: f64,
    /// `max_t |P_h - P_{h/2}|`.
    pub halving_drift: f64,
    /// `max_t |P_{h/2} - P_extrapolated|`; an error bound for the returned series.
    pub extrapolation_drift: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub solver: SolverId,
    pub step: Option<f64>,
    pub kernel: Option<KernelProvenance>,
    pub chain: ChainSpec,
    pub drive: DriveProtocol,
    pub certificate: Option<Certificate>,
    #[serde(default)]
    pub approximate: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub c0: Vec<c64>,
    pub p: Vec<f64>,
    /// `None` when the producer did not record a phase convention.
    pub frame: Option<PhaseFrame>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub(crate) fn new(times: Vec<f64>, c0: Vec<c64>, frame: PhaseFrame, meta: TrajectoryMeta) -> Self {
        let p = c0.iter().map(|c| c.norm_sqr()).collect();
        Self {
            times,
            c0,
            p,
            frame: Some(frame),
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Amplitude in the model frame.
    pub fn model_amplitudes(&self) -> Result<Vec<c64>> {
        let frame = self.frame.ok_or(Error::MissingPhaseConvention)?;
        Ok(match frame {
            PhaseFrame::Model => self.c0.clone(),
            PhaseFrame::Spin => self
                .times
                .iter()
                .zip(&self.c0)
                .map(|(&t, &c)| c * c64::from_polar(1.0, -half_phase(&self.meta.chain, &self.meta.drive, t)))
                .collect(),
        })
    }

    /// Re-expresses the amplitudes in the requested frame.
    pub fn to_frame(&self, frame: PhaseFrame) -> Result<Trajectory> {
        let model = self.model_amplitudes()?;
        let c0 = match frame {
            PhaseFrame::Model => model,
            PhaseFrame::Spin => self
                .times
                .iter()
                .zip(model)
                .map(|(&t, c)| c * c64::from_polar(1.0, half_phase(&self.meta.chain, &self.meta.drive, t)))
                .collect(),
        };
        Ok(Trajectory {
            times: self.times.clone(),
            p: self.p.clone(),
            c0,
            frame: Some(frame),
            meta: self.meta.clone(),
        })
    }

    /// Mean of `P` over samples with `start <= t <= end`.
    pub fn window_mean(&self, start: f64, end: f64) -> Option<f64> {
        let vals: Vec<f64> = self
            .times
            .iter()
            .zip(&self.p)
            .filter(|(&t, _)| t >= start - 1e-9 && t <= end + 1e-9)
            .map(|(_, &p)| p)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// `P` at the sample closest to `t`.
    pub fn p_at(&self, t: f64) -> Option<f64> {
        self.index_near(t).map(|i| self.p[i])
    }

    pub fn index_near(&self, t: f64) -> Option<usize> {
        if self.times.is_empty() {
            return None;
        }
        let i = self.times.partition_point(|&x| x < t);
        let candidates = [i.saturating_sub(1), i.min(self.times.len() - 1)];
        candidates
            .into_iter()
            .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
    }
}

/// `θ(t) = ∫_0^t (λ + A)/2`.
pub fn half_phase(chain: &ChainSpec, drive: &DriveProtocol, t: f64) -> f64 {
    0.5 * (chain.field * t + drive.phase_integral(t))
}

/// Initial system state `α|↑⟩ + β|↓⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionState {
    pub alpha: c64,
    pub beta: c64,
}

impl SuperpositionState {
    pub fn new(alpha: c64, beta: c64) -> Result<Self> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "superposition amplitudes not normalized: |α|² + |β|² = {norm}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn equal() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            alpha: c64::new(a, 0.0),
            beta: c64::new(a, 0.0),
        }
    }

    pub fn spin_up() -> Self {
        Self {
            alpha: c64::new(1.0, 0.0),
            beta: c64::default(),
        }
    }

    pub fn spin_down() -> Self {
        Self {
            alpha: c64::default(),
            beta: c64::new(1.0, 0.0),
        }
    }
}
