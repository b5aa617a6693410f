//! Model definition: the chain, the drive, the single-excitation Hamiltonian
//! and the memory kernel of the impurity amplitude.
//!
//! Units are `J = ħ = 1` throughout; the lattice constant is fixed to one.
//! The single-excitation matrix is written as `diag(λ + A, λ, …, λ)` with
//! off-diagonals `(g, J, …, J)`. Scalar offsets proportional to the identity
//! are dropped; the only frame-dependent quantities this affects are phases,
//! which every output tags with its [`PhaseFrame`](crate::dynamics::PhaseFrame).

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_j, bessel_j1_over_z};

/// Mode set used for the memory kernel and the spectral density.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// Plane waves `k = 2πn/L` with uniform weights `g²/L`.
    PaperPlaneWave,
    /// Exact eigenmodes of the open chain, `k = πn/(L+1)`, weights
    /// `g² · 2/(L+1) · sin²k`.
    #[default]
    OpenChainExact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    /// Number of chain sites `L`; the single-excitation space has `L + 1` states.
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "J")]
    pub hopping: f64,
    #[serde(rename = "g")]
    pub coupling: f64,
    #[serde(rename = "lambda")]
    pub field: f64,
    #[serde(default)]
    pub kernel_mode: KernelMode,
}

impl ChainSpec {
    pub fn new(sites: usize, hopping: f64, coupling: f64, field: f64) -> Result<Self> {
        let chain = Self {
            sites,
            hopping,
            coupling,
            field,
            kernel_mode: KernelMode::default(),
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn with_kernel_mode(mut self, mode: KernelMode) -> Self {
        self.kernel_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::InvalidChain(format!("L = {} < 2", self.sites)));
        }
        if !(self.hopping > 0.0 && self.hopping.is_finite()) {
            return Err(Error::InvalidChain(format!("J = {} must be positive", self.hopping)));
        }
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(Error::InvalidChain(format!("g = {} must be non-negative", self.coupling)));
        }
        if !self.field.is_finite() {
            return Err(Error::InvalidChain("lambda must be finite".into()));
        }
        Ok(())
    }

    pub fn lattice_constant(&self) -> f64 {
        1.0
    }

    /// Dimension of the single-excitation space, `L + 1`.
    pub fn dim(&self) -> usize {
        self.sites + 1
    }

    pub fn bandwidth(&self) -> f64 {
        4.0 * self.hopping
    }

    /// Time after which the finite chain returns excitation to the impurity.
    ///
    /// A plane-wave ring of `L` sites refocuses after `L / 2J`; the open chain
    /// needs a round trip to the far end, `L / J`.
    pub fn recurrence_time(&self) -> f64 {
        match self.kernel_mode {
            KernelMode::PaperPlaneWave => self.sites as f64 / (2.0 * self.hopping),
            KernelMode::OpenChainExact => self.sites as f64 / self.hopping,
        }
    }
}

/// Real symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i + 1 == j {
            self.off[i]
        } else if j + 1 == i {
            self.off[j]
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn apply(&self, x: &[c64], y: &mut [c64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = x[i] * self.diag[i];
            if i > 0 {
                acc += x[i - 1] * self.off[i - 1];
            }
            if i + 1 < n {
                acc += x[i + 1] * self.off[i];
            }
            y[i] = acc;
        }
    }
}

/// Single-excitation Hamiltonian with the impurity splitting shifted by
/// `drive_value`.
pub fn build_effective_hamiltonian(chain: &ChainSpec, drive_value: f64) -> Tridiagonal {
    let n = chain.dim();
    let mut diag = vec![chain.field; n];
    diag[0] = chain.field + drive_value;
    let mut off = vec![chain.hopping; n - 1];
    off[0] = chain.coupling;
    Tridiagonal { diag, off }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChainMode {
    pub index: usize,
    pub wave_number: f64,
    pub energy: f64,
    /// `|g_k|²`
    pub weight: f64,
}

pub fn chain_spectrum(chain: &ChainSpec) -> Vec<ChainMode> {
    let l = chain.sites;
    let g2 = chain.coupling * chain.coupling;
    match chain.kernel_mode {
        KernelMode::PaperPlaneWave => (0..l)
            .map(|n| {
                let k = 2.0 * PI * n as f64 / l as f64;
                ChainMode {
                    index: n,
                    wave_number: k,
                    energy: chain.field + 2.0 * chain.hopping * k.cos(),
                    weight: g2 / l as f64,
                }
            })
            .collect(),
        KernelMode::OpenChainExact => (1..=l)
            .map(|n| {
                let k = PI * n as f64 / (l + 1) as f64;
                let s = k.sin();
                ChainMode {
                    index: n,
                    wave_number: k,
                    energy: chain.field + 2.0 * chain.hopping * k.cos(),
                    weight: g2 * 2.0 / (l + 1) as f64 * s * s,
                }
            })
            .collect(),
    }
}

/// Uniform grid `t_i = i·step`, `i = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(step: f64, len: usize) -> Self {
        Self { step, len }
    }

    /// Grid covering `[0, horizon]` with the given step (rounded to the
    /// nearest whole number of steps).
    pub fn covering(horizon: f64, step: f64) -> Self {
        let n = (horizon / step).round() as usize;
        Self { step, len: n + 1 }
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.time(i)).collect()
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.len.saturating_sub(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelProvenance {
    DiscreteSum,
    ContinuumBessel,
}

#[derive(Clone, Debug)]
pub struct MemoryKernel {
    pub grid: TimeGrid,
    pub values: Vec<c64>,
    pub provenance: KernelProvenance,
}

/// Memory kernel `f(x) = Σ_k |g_k|² e^{-i E_k x}` on `grid`.
pub fn kernel(chain: &ChainSpec, grid: TimeGrid, provenance: KernelProvenance) -> MemoryKernel {
    let mut values = rotating_kernel(chain, grid, provenance);
    for (i, v) in values.iter_mut().enumerate() {
        *v *= c64::from_polar(1.0, -chain.field * grid.time(i));
    }
    MemoryKernel {
        grid,
        values,
        provenance,
    }
}

/// Kernel with the band-centre phase removed: `f(x) e^{iλx}`.
pub(crate) fn rotating_kernel(
    chain: &ChainSpec,
    grid: TimeGrid,
    provenance: KernelProvenance,
) -> Vec<c64> {
    let g2 = chain.coupling * chain.coupling;
    let j = chain.hopping;
    match provenance {
        KernelProvenance::DiscreteSum => {
            let modes = chain_spectrum(chain);
            // Degenerate plane-wave pairs share an energy; merge them.
            let mut merged: Vec<(f64, f64)> = Vec::with_capacity(modes.len());
            let mut detunings: Vec<(f64, f64)> = modes
                .iter()
                .map(|m| (m.energy - chain.field, m.weight))
                .collect();
            detunings.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (e, w) in detunings {
                match merged.last_mut() {
                    Some(last) if (last.0 - e).abs() <= 1e-14 * j => last.1 += w,
                    _ => merged.push((e, w)),
                }
            }
            (0..grid.len)
                .map(|i| {
                    let x = grid.time(i);
                    let (mut re, mut im) = (0.0, 0.0);
                    for &(e, w) in &merged {
                        let (s, c) = (e * x).sin_cos();
                        re += w * c;
                        im -= w * s;
                    }
                    c64::new(re, im)
                })
                .collect()
        }
        KernelProvenance::ContinuumBessel => (0..grid.len)
            .map(|i| {
                let z = 2.0 * j * grid.time(i);
                let v = match chain.kernel_mode {
                    KernelMode::PaperPlaneWave => bessel_j(0, z),
                    KernelMode::OpenChainExact => 2.0 * bessel_j1_over_z(z),
                };
                c64::new(g2 * v, 0.0)
            })
            .collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDrive {
    pub a1: f64,
    pub a2: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub period: f64,
}

impl StepDrive {
    pub fn new(a1: f64, a2: f64, tau: f64, period: f64) -> Result<Self> {
        let d = Self { a1, a2, tau, period };
        d.validate()?;
        Ok(d)
    }

    /// Constant drive `A ≡ a`, represented as a step with equal levels.
    pub fn constant(a: f64, period: f64) -> Self {
        Self {
            a1: a,
            a2: a,
            tau: 0.5 * period,
            period,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidDrive(format!("T = {} must be positive", self.period)));
        }
        if !(self.tau > 0.0 && self.tau < self.period) {
            return Err(Error::InvalidDrive(format!(
                "tau = {} must satisfy 0 < tau < T = {}",
                self.tau, self.period
            )));
        }
        if !(self.a1.is_finite() && self.a2.is_finite()) {
            return Err(Error::InvalidDrive("amplitudes must be finite".into()));
        }
        Ok(())
    }

    pub fn rest(&self) -> f64 {
        self.period - self.tau
    }

    pub fn mean(&self) -> f64 {
        (self.a1 * self.tau + self.a2 * self.rest()) / self.period
    }

    pub fn is_constant(&self) -> bool {
        self.a1 == self.a2
    }

    /// `∫_0^t A(t') dt'`
    pub fn phase_integral(&self, t: f64) -> f64 {
        let n = (t / self.period).floor();
        let r = t - n * self.period;
        let within = if r <= self.tau {
            self.a1 * r
        } else {
            self.a1 * self.tau + self.a2 * (r - self.tau)
        };
        n * self.mean() * self.period + within
    }
}

/// Drive given by its Fourier coefficients `ω_l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicDrive {
    #[serde(rename = "T")]
    pub period: f64,
    #[serde(with = "coeff_table")]
    pub coeffs: BTreeMap<i64, c64>,
}

impl HarmonicDrive {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidDrive(format!("T = {} must be positive", self.period)));
        }
        let scale = self.coeffs.values().map(|c| c.norm()).fold(1.0, f64::max);
        for (&l, &c) in &self.coeffs {
            let partner = self.coeffs.get(&-l).copied().unwrap_or_default();
            if (partner - c.conj()).norm() > 1e-12 * scale {
                return Err(Error::InvalidDrive(format!(
                    "coefficient table is not conjugate-symmetric at l = {l}"
                )));
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs.get(&0).map_or(0.0, |c| c.re)
    }
}

mod coeff_table {
    use std::collections::BTreeMap;

    use num_complex::Complex64 as c64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<i64, c64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<(i64, f64, f64)> = map.iter().map(|(&l, c)| (l, c.re, c.im)).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<i64, c64>, D::Error> {
        let rows: Vec<(i64, f64, f64)> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|(l, re, im)| (l, c64::new(re, im))).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriveProtocol {
    Step(StepDrive),
    Harmonics(HarmonicDrive),
}

impl DriveProtocol {
    pub fn step(a1: f64, a2: f64, tau: f64, period: f64) -> Result<Self> {
        Ok(DriveProtocol::Step(StepDrive::new(a1, a2, tau, period)?))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DriveProtocol::Step(s) => s.validate(),
            DriveProtocol::Harmonics(h) => h.validate(),
        }
    }

    pub fn period(&self) -> f64 {
        match self {
            DriveProtocol::Step(s) => s.period,
            DriveProtocol::Harmonics(h) => h.period,
        }
    }

    /// Angular drive frequency `ω = 2π/T`.
    pub fn omega(&self) -> f64 {
        2.0 * PI / self.period()
    }

    /// Time average `Ā`.
    pub fn mean(&self) -> f64 {
        match self {
            DriveProtocol::Step(s) => s.mean(),
            DriveProtocol::Harmonics(h) => h.mean(),
        }
    }

    pub fn as_step(&self) -> Result<&StepDrive> {
        match self {
            DriveProtocol::Step(s) => Ok(s),
            DriveProtocol::Harmonics(_) => Err(Error::NonStepDrive),
        }
    }

    /// `A(t)`, with the step convention `a1` on `(nT, nT+τ]`.
    pub fn value(&self, t: f64) -> f64 {
        match self {
            DriveProtocol::Step(s) => {
                let r = t - (t / s.period).floor() * s.period;
                if r > 0.0 && r <= s.tau {
                    s.a1
                } else {
                    s.a2
                }
            }
            DriveProtocol::Harmonics(h) => {
                let w = 2.0 * PI / h.period;
                h.coeffs
                    .iter()
                    .map(|(&l, &c)| (c * c64::from_polar(1.0, l as f64 * w * t)).re)
                    .sum()
            }
        }
    }

    /// One-sided drive values on the cell `[t0, t1]`: the right limit at `t0`
    /// and the left limit at `t1`.
    pub fn cell_limits(&self, t0: f64, t1: f64) -> (f64, f64) {
        match self {
            DriveProtocol::Step(_) => {
                let a = self.value(0.5 * (t0 + t1));
                (a, a)
            }
            DriveProtocol::Harmonics(_) => (self.value(t0), self.value(t1)),
        }
    }

    /// `∫_0^t A(t') dt'` in closed form.
    pub fn phase_integral(&self, t: f64) -> f64 {
        match self {
            DriveProtocol::Step(s) => s.phase_integral(t),
            DriveProtocol::Harmonics(h) => {
                let w = 2.0 * PI / h.period;
                let mut acc = h.mean() * t;
                for (&l, &c) in &h.coeffs {
                    if l != 0 {
                        let lw = l as f64 * w;
                        let e = (c64::from_polar(1.0, lw * t) - 1.0) / c64::new(0.0, lw);
                        acc += (c * e).re;
                    }
                }
                acc
            }
        }
    }

    /// `∫_0^t [A(t') - Ā] dt'`, periodic in `t`.
    pub fn periodic_phase(&self, t: f64) -> f64 {
        match self {
            DriveProtocol::Step(s) => {
                let r = t - (t / s.period).floor() * s.period;
                s.phase_integral(r) - s.mean() * r
            }
            DriveProtocol::Harmonics(_) => self.phase_integral(t) - self.mean() * t,
        }
    }
}

/// Fourier coefficient `ω_l = (1/T) ∫_0^T A(t) e^{-ilωt} dt`.
pub fn drive_fourier(drive: &DriveProtocol, l: i64) -> c64 {
    match drive {
        DriveProtocol::Step(s) => {
            if l == 0 {
                return c64::new(s.mean(), 0.0);
            }
            let lw_tau = l as f64 * 2.0 * PI / s.period * s.tau;
            let num = (s.a1 - s.a2) * (c64::new(1.0, 0.0) - c64::from_polar(1.0, -lw_tau));
            num / c64::new(0.0, 2.0 * PI * l as f64)
        }
        DriveProtocol::Harmonics(h) => h.coeffs.get(&l).copied().unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain(l: usize) -> ChainSpec {
        ChainSpec::new(l, 1.0, 0.5, 3.0).unwrap()
    }

    #[test]
    fn effective_hamiltonian_small_case() {
        let c = ChainSpec::new(2, 1.0, 0.5, 3.0).unwrap();
        let h = build_effective_hamiltonian(&c, 2.0);
        assert_eq!(h.diag, vec![5.0, 3.0, 3.0]);
        assert_eq!(h.off, vec![0.5, 1.0]);
        let d = h.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[(i, j)].to_bits(), d[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn zero_coupling_decouples_impurity() {
        let mut c = chain(5);
        c.coupling = 0.0;
        let h = build_effective_hamiltonian(&c, 1.0).to_dense();
        for j in 1..6 {
            assert_eq!(h[(0, j)], 0.0);
            assert_eq!(h[(j, 0)], 0.0);
        }
    }

    #[test]
    fn open_chain_block_fills_band() {
        let mut c = ChainSpec::new(400, 1.0, 0.0, 3.0).unwrap();
        c.coupling = 0.0;
        let h = build_effective_hamiltonian(&c, 0.0).to_dense();
        let sub = h.submatrix(1, 1, 400, 400).to_owned();
        let ev = sub.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let lo = ev.first().copied().unwrap();
        let hi = ev.last().copied().unwrap();
        assert!(lo > 1.0 - 1e-12 && lo < 1.0 + 1e-3);
        assert!(hi < 5.0 + 1e-12 && hi > 5.0 - 1e-3);
    }

    #[test]
    fn plane_wave_spectrum() {
        let c = ChainSpec::new(800, 1.0, 1.0, 20.0)
            .unwrap()
            .with_kernel_mode(KernelMode::PaperPlaneWave);
        assert_eq!(chain_spectrum(&c)[0].energy, 22.0);

        let c4 = ChainSpec::new(4, 1.0, 1.0, 0.0)
            .unwrap()
            .with_kernel_mode(KernelMode::PaperPlaneWave);
        let e: Vec<f64> = chain_spectrum(&c4).iter().map(|m| m.energy).collect();
        for (got, want) in e.iter().zip([2.0, 0.0, -2.0, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_sum_to_coupling_squared() {
        for mode in [KernelMode::PaperPlaneWave, KernelMode::OpenChainExact] {
            let c = ChainSpec::new(37, 1.0, 0.7, 2.0).unwrap().with_kernel_mode(mode);
            let s: f64 = chain_spectrum(&c).iter().map(|m| m.weight).sum();
            assert!((s - 0.49).abs() < 1e-14, "{mode:?}");
        }
    }

    #[test]
    fn kernel_at_origin_is_coupling_squared() {
        let c = chain(50);
        let k = kernel(&c, TimeGrid::new(0.1, 10), KernelProvenance::DiscreteSum);
        assert!((k.values[0] - c64::new(0.25, 0.0)).norm() < 1e-15);
        let kb = kernel(&c, TimeGrid::new(0.1, 10), KernelProvenance::ContinuumBessel);
        assert!((kb.values[0] - c64::new(0.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn kernel_modulus_independent_of_field() {
        let c = chain(40);
        let mut shifted = c.clone();
        shifted.field += 5.0;
        let grid = TimeGrid::new(0.37, 40);
        let a = kernel(&c, grid, KernelProvenance::DiscreteSum);
        let b = kernel(&shifted, grid, KernelProvenance::DiscreteSum);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x.norm() - y.norm()).abs() < 1e-13);
        }
    }

    #[test]
    fn continuum_kernel_matches_large_ring() {
        // Oracle: direct plane-wave sum at L = 10^4.
        let c = ChainSpec::new(10_000, 1.0, 1.0, 20.0)
            .unwrap()
            .with_kernel_mode(KernelMode::PaperPlaneWave);
        let grid = TimeGrid::covering(20.0, 0.05);
        let disc = kernel(&c, grid, KernelProvenance::DiscreteSum);
        let cont = kernel(&c, grid, KernelProvenance::ContinuumBessel);
        let dev = disc
            .values
            .iter()
            .zip(&cont.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-3, "max deviation {dev}");
    }

    #[test]
    fn ring_kernel_revives_near_recurrence() {
        let c = ChainSpec::new(60, 1.0, 1.0, 0.0)
            .unwrap()
            .with_kernel_mode(KernelMode::PaperPlaneWave);
        let grid = TimeGrid::covering(40.0, 0.01);
        let k = kernel(&c, grid, KernelProvenance::DiscreteSum);
        let mid = k.values[1000..2000].iter().map(|v| v.norm()).fold(0.0, f64::max);
        let near_revival = k.values[2800..3200].iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(near_revival > 2.0 * mid, "{near_revival} vs {mid}");
        assert_eq!(c.recurrence_time(), 30.0);
    }

    #[test]
    fn step_harmonics_reference_values() {
        let d = DriveProtocol::step(0.0, 2.0, 0.1 * PI, 0.25 * PI).unwrap();
        assert!((drive_fourier(&d, 0).re - 1.2).abs() < 1e-14);

        let flat = DriveProtocol::Step(StepDrive::constant(1.7, 0.9));
        assert_eq!(drive_fourier(&flat, 0).re, 1.7);
        for l in 1..6 {
            assert_eq!(drive_fourier(&flat, l), c64::default());
            assert_eq!(drive_fourier(&flat, -l), c64::default());
        }
    }

    #[test]
    fn step_harmonics_match_quadrature() {
        let d = DriveProtocol::step(0.3, -1.4, 0.37, 1.1).unwrap();
        let w = d.omega();
        for l in [-3i64, -1, 1, 2, 5] {
            // Midpoint sums on each constant segment separately.
            let n = 100_000;
            let mut acc = c64::default();
            for (lo, hi) in [(0.0, 0.37), (0.37, 1.1)] {
                let h = (hi - lo) / n as f64;
                for i in 0..n {
                    let t = lo + (i as f64 + 0.5) * h;
                    acc += d.value(t) * c64::from_polar(1.0, -(l as f64) * w * t) * h;
                }
            }
            acc /= 1.1;
            assert!((acc - drive_fourier(&d, l)).norm() < 1e-8, "l = {l}");
        }
    }

    #[test]
    fn parseval_partial_sums_approach_mean_square() {
        let s = StepDrive::new(0.0, 3.0, 0.4, 1.0).unwrap();
        let d = DriveProtocol::Step(s);
        let mean_sq = (s.a1 * s.a1 * s.tau + s.a2 * s.a2 * s.rest()) / s.period;
        let mut prev_gap = f64::INFINITY;
        for m in [4i64, 16, 64, 256, 1024] {
            let sum: f64 = (-m..=m).map(|l| drive_fourier(&d, l).norm_sqr()).sum();
            let gap = mean_sq - sum;
            assert!(gap >= -1e-12 && gap <= prev_gap + 1e-15);
            prev_gap = gap;
        }
        assert!(prev_gap < 2e-3);
    }

    #[test]
    fn harmonic_drive_round_trip() {
        let d = DriveProtocol::Harmonics(HarmonicDrive {
            period: 2.0,
            coeffs: [(0, c64::new(1.0, 0.0)), (1, c64::new(0.5, 0.25)), (-1, c64::new(0.5, -0.25))]
                .into_iter()
                .collect(),
        });
        d.validate().unwrap();
        assert_eq!(drive_fourier(&d, 1), c64::new(0.5, 0.25));
        assert_eq!(d.mean(), 1.0);
        let json = serde_json::to_string(&d).unwrap();
        let back: DriveProtocol = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        // ∫_0^T (A - Ā) = 0
        assert!(d.periodic_phase(2.0).abs() < 1e-14);
    }

    #[test]
    fn asymmetric_table_rejected() {
        let d = HarmonicDrive {
            period: 1.0,
            coeffs: [(1, c64::new(0.5, 0.25)), (-1, c64::new(0.5, 0.25))].into_iter().collect(),
        };
        assert!(matches!(d.validate(), Err(Error::InvalidDrive(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ChainSpec::new(1, 1.0, 1.0, 0.0).is_err());
        assert!(ChainSpec::new(4, 0.0, 1.0, 0.0).is_err());
        assert!(ChainSpec::new(4, 1.0, -0.1, 0.0).is_err());
        assert!(StepDrive::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(StepDrive::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(StepDrive::new(0.0, 1.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn step_phase_integral_closed_form() {
        let s = StepDrive::new(1.0, 3.0, 0.25, 1.0).unwrap();
        assert!((s.phase_integral(0.25) - 0.25).abs() < 1e-15);
        assert!((s.phase_integral(1.0) - 2.5).abs() < 1e-15);
        assert!((s.phase_integral(2.5) - (5.0 + 0.25 + 0.75)).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn step_harmonics_are_conjugate_symmetric(
            a1 in -40.0f64..40.0, a2 in -40.0f64..40.0,
            frac in 0.01f64..0.99, period in 0.05f64..5.0,
        ) {
            let d = DriveProtocol::step(a1, a2, frac * period, period).unwrap();
            for l in 1..=10 {
                let p = drive_fourier(&d, l);
                let m = drive_fourier(&d, -l);
                prop_assert!((p - m.conj()).norm() <= 1e-12 * (1.0 + p.norm()));
            }
        }
    }
}
