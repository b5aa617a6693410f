//! Direct propagation of the `L + 1` single-excitation amplitudes.
//!
//! For step drives the two static matrices are diagonalized once; the state is
//! carried in the eigenbasis of the current segment, so advancing within a
//! segment is a diagonal phase and switching segments is one orthogonal
//! basis change `W = V₂ᵀ V₁`.

use faer::Mat;
use num_complex::Complex64 as c64;

use super::{half_phase, PhaseFrame, SolverId, SuperpositionState, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::linalg::{tridiagonal_eigen, RealEigen};
use crate::model::{build_effective_hamiltonian, ChainSpec, DriveProtocol, StepDrive, Tridiagonal};

/// Spectral data of the two drive segments.
#[derive(Debug)]
pub struct StepPropagator {
    pub chain: ChainSpec,
    pub drive: StepDrive,
    pub first: RealEigen,
    pub second: RealEigen,
    /// `V₂ᵀ V₁`.
    pub overlap: Mat<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Segment {
    First,
    Second,
}

/// State at the start of a drive segment, in that segment's eigenbasis.
#[derive(Clone, Debug)]
pub(crate) struct SegmentState {
    segment: Segment,
    /// Period index.
    period: u64,
    coeffs: Vec<c64>,
}

impl StepPropagator {
    pub fn new(chain: &ChainSpec, drive: &DriveProtocol) -> Result<Self> {
        chain.validate()?;
        drive.validate()?;
        let step = *drive.as_step()?;
        let first = tridiagonal_eigen(&build_effective_hamiltonian(chain, step.a1))?;
        let second = if step.a1 == step.a2 {
            first.clone()
        } else {
            tridiagonal_eigen(&build_effective_hamiltonian(chain, step.a2))?
        };
        let overlap = second.vectors.transpose() * &first.vectors;
        Ok(Self {
            chain: chain.clone(),
            drive: step,
            first,
            second,
            overlap,
        })
    }

    pub fn dim(&self) -> usize {
        self.chain.dim()
    }

    fn eig(&self, s: Segment) -> &RealEigen {
        match s {
            Segment::First => &self.first,
            Segment::Second => &self.second,
        }
    }

    fn segment_start(&self, s: &SegmentState) -> f64 {
        let base = s.period as f64 * self.drive.period;
        match s.segment {
            Segment::First => base,
            Segment::Second => base + self.drive.tau,
        }
    }

    fn segment_end(&self, s: &SegmentState) -> f64 {
        let base = s.period as f64 * self.drive.period;
        match s.segment {
            Segment::First => base + self.drive.tau,
            Segment::Second => base + self.drive.period,
        }
    }

    /// Projects a site-basis state at `t = 0` onto the first segment's eigenbasis.
    pub(crate) fn start(&self, psi: &[c64]) -> SegmentState {
        SegmentState {
            segment: Segment::First,
            period: 0,
            coeffs: project(&self.first.vectors, psi),
        }
    }

    /// Advances `state` to the beginning of the next segment.
    pub(crate) fn advance(&self, state: &mut SegmentState) {
        let len = match state.segment {
            Segment::First => self.drive.tau,
            Segment::Second => self.drive.rest(),
        };
        let energies = &self.eig(state.segment).values;
        for (c, &e) in state.coeffs.iter_mut().zip(energies) {
            *c *= c64::from_polar(1.0, -e * len);
        }
        state.coeffs = match state.segment {
            Segment::First => apply_real(&self.overlap, &state.coeffs, false),
            Segment::Second => apply_real(&self.overlap, &state.coeffs, true),
        };
        match state.segment {
            Segment::First => state.segment = Segment::Second,
            Segment::Second => {
                state.segment = Segment::First;
                state.period += 1;
            }
        }
    }

    /// Eigenbasis coefficients after evolving for `delta` inside the segment.
    fn evolved_coeffs(&self, state: &SegmentState, delta: f64) -> Vec<c64> {
        let energies = &self.eig(state.segment).values;
        state
            .coeffs
            .iter()
            .zip(energies)
            .map(|(&c, &e)| c * c64::from_polar(1.0, -e * delta))
            .collect()
    }

    /// Impurity amplitude at `t` (inside the current segment).
    fn impurity_at(&self, state: &SegmentState, t: f64) -> c64 {
        let delta = t - self.segment_start(state);
        let eig = self.eig(state.segment);
        let mut acc = c64::default();
        for (q, (&c, &e)) in state.coeffs.iter().zip(&eig.values).enumerate() {
            acc += c * c64::from_polar(eig.vectors[(0, q)], -e * delta);
        }
        acc
    }

    fn sites_at(&self, state: &SegmentState, t: f64) -> Vec<c64> {
        let delta = t - self.segment_start(state);
        let coeffs = self.evolved_coeffs(state, delta);
        let v = &self.eig(state.segment).vectors;
        apply_real(v, &coeffs, false)
    }

    fn norm_at(&self, state: &SegmentState) -> f64 {
        state.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    fn walk<F: FnMut(usize, &SegmentState, f64)>(&self, psi0: &[c64], times: &[f64], visit: F) {
        self.walk_from(self.start(psi0), times, visit)
    }

    fn walk_from<F: FnMut(usize, &SegmentState, f64)>(&self, mut state: SegmentState, times: &[f64], mut visit: F) {
        for (i, &t) in times.iter().enumerate() {
            // Tolerate rounding at a switch time; the state is continuous there.
            while t > self.segment_end(&state) + 1e-12 * self.drive.period {
                self.advance(&mut state);
            }
            visit(i, &state, t);
        }
    }

    /// Impurity amplitudes at sorted `times`, starting from `psi0`.
    pub fn impurity_series(&self, psi0: &[c64], times: &[f64]) -> Vec<c64> {
        let mut out = vec![c64::default(); times.len()];
        self.walk(psi0, times, |i, s, t| out[i] = self.impurity_at(s, t));
        out
    }

    /// Impurity amplitudes at sorted `times` for a state given by its
    /// first-segment eigenbasis coefficients at `t = 0`.
    pub(crate) fn impurity_series_from_coeffs(&self, y: &[c64], times: &[f64]) -> Vec<c64> {
        let state = SegmentState {
            segment: Segment::First,
            period: 0,
            coeffs: y.to_vec(),
        };
        let mut out = vec![c64::default(); times.len()];
        self.walk_from(state, times, |i, s, t| out[i] = self.impurity_at(s, t));
        out
    }

    /// Impurity amplitudes and total norms at sorted `times`.
    pub fn impurity_and_norm(&self, psi0: &[c64], times: &[f64]) -> (Vec<c64>, Vec<f64>) {
        let mut amp = vec![c64::default(); times.len()];
        let mut norm = vec![0.0; times.len()];
        self.walk(psi0, times, |i, s, t| {
            amp[i] = self.impurity_at(s, t);
            norm[i] = self.norm_at(s);
        });
        (amp, norm)
    }

    /// Full site amplitudes at sorted `times`.
    pub fn site_series(&self, psi0: &[c64], times: &[f64]) -> Vec<Vec<c64>> {
        let mut out = vec![Vec::new(); times.len()];
        self.walk(psi0, times, |i, s, t| out[i] = self.sites_at(s, t));
        out
    }

    /// One-period propagator expressed in the first segment's eigenbasis:
    /// `Wᵀ e^{-iD₂(T-τ)} W e^{-iD₁τ}`.
    pub fn monodromy_eigenbasis(&self) -> Mat<c64> {
        let n = self.dim();
        let tau = self.drive.tau;
        let rest = self.drive.rest();
        let ph1: Vec<c64> = self.first.values.iter().map(|&e| c64::from_polar(1.0, -e * tau)).collect();
        let ph2: Vec<c64> = self.second.values.iter().map(|&e| c64::from_polar(1.0, -e * rest)).collect();
        // X = e^{-iD₂(T-τ)} W e^{-iD₁τ}
        let x = Mat::<c64>::from_fn(n, n, |i, j| ph2[i] * self.overlap[(i, j)] * ph1[j]);
        let wt = Mat::<c64>::from_fn(n, n, |i, j| c64::new(self.overlap[(j, i)], 0.0));
        wt * x
    }

    /// Site-basis vector from first-segment eigenbasis coefficients.
    pub(crate) fn site_from_first_basis(&self, y: &[c64]) -> Vec<c64> {
        apply_real(&self.first.vectors, y, false)
    }

    pub(crate) fn segment_coeffs_at(&self, y: &[c64], t: f64) -> (bool, Vec<c64>, f64) {
        let mut state = SegmentState {
            segment: Segment::First,
            period: 0,
            coeffs: y.to_vec(),
        };
        while t > self.segment_end(&state) + 1e-12 * self.drive.period {
            self.advance(&mut state);
        }
        let delta = t - self.segment_start(&state);
        (state.segment == Segment::First, self.evolved_coeffs(&state, delta), delta)
    }

    /// Second-segment eigenbasis coefficients at `t = τ` for first-segment
    /// coefficients `y` at `t = 0`.
    pub(crate) fn second_segment_start(&self, y: &[c64]) -> Vec<c64> {
        let mut state = SegmentState {
            segment: Segment::First,
            period: 0,
            coeffs: y.to_vec(),
        };
        self.advance(&mut state);
        state.coeffs
    }

    pub(crate) fn segment_energies(&self, first: bool) -> &[f64] {
        if first {
            &self.first.values
        } else {
            &self.second.values
        }
    }

    pub(crate) fn segment_vectors(&self, first: bool) -> &Mat<f64> {
        if first {
            &self.first.vectors
        } else {
            &self.second.vectors
        }
    }
}

fn project(v: &Mat<f64>, psi: &[c64]) -> Vec<c64> {
    apply_real(v, psi, true)
}

/// `M x` or `Mᵀ x` for real `M` and complex `x`.
pub(crate) fn apply_real(m: &Mat<f64>, x: &[c64], transpose: bool) -> Vec<c64> {
    let n = m.nrows();
    let mut out = vec![c64::default(); n];
    if transpose {
        for (j, o) in out.iter_mut().enumerate() {
            let col = m.col(j);
            let (mut re, mut im) = (0.0, 0.0);
            for (i, xi) in x.iter().enumerate() {
                let a = col[i];
                re += a * xi.re;
                im += a * xi.im;
            }
            *o = c64::new(re, im);
        }
    } else {
        for (j, xj) in x.iter().enumerate() {
            let col = m.col(j);
            for (i, o) in out.iter_mut().enumerate() {
                let a = col[i];
                o.re += a * xj.re;
                o.im += a * xj.im;
            }
        }
    }
    out
}

/// `T · i / samples_per_period` for all samples up to `horizon`.
pub fn period_sample_times(period: f64, samples_per_period: usize, horizon: f64) -> Vec<f64> {
    let dt = period / samples_per_period as f64;
    let n = (horizon / dt + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let p = (i / samples_per_period) as f64;
            let r = (i % samples_per_period) as f64;
            p * period + r * dt
        })
        .collect()
}

fn unit_impurity(n: usize) -> Vec<c64> {
    let mut psi = vec![c64::default(); n];
    psi[0] = c64::new(1.0, 0.0);
    psi
}

/// Exact piecewise propagation for a step drive, sampled uniformly within
/// each period.
pub fn propagate_lattice(
    chain: &ChainSpec,
    drive: &DriveProtocol,
    horizon: f64,
    samples_per_period: usize,
) -> Result<Trajectory> {
    if samples_per_period == 0 {
        return Err(Error::InvalidDrive("samples_per_period must be positive".into()));
    }
    let prop = StepPropagator::new(chain, drive)?;
    let times = period_sample_times(drive.period(), samples_per_period, horizon);
    Ok(lattice_trajectory(&prop, times))
}

pub(crate) fn lattice_trajectory(prop: &StepPropagator, times: Vec<f64>) -> Trajectory {
    let c0 = prop.impurity_series(&unit_impurity(prop.dim()), &times);
    Trajectory::new(
        times,
        c0,
        PhaseFrame::Model,
        TrajectoryMeta {
            solver: SolverId::LatticeSpectral,
            step: Some(prop.drive.period),
            kernel: None,
            chain: prop.chain.clone(),
            drive: DriveProtocol::Step(prop.drive),
            certificate: None,
            approximate: false,
            warnings: Vec::new(),
        },
    )
}

#[derive(Clone, Copy, Debug)]
pub struct Rk4Options {
    /// Local error tolerance per unit time.
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for Rk4Options {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            initial_step: 1e-3,
        }
    }
}

/// Classical fourth-order Runge-Kutta with step-doubling error control, for
/// drives without piecewise-constant structure. Each accepted step is
/// Richardson-corrected, so the effective local order is five.
pub fn propagate_rk4(
    chain: &ChainSpec,
    drive: &DriveProtocol,
    horizon: f64,
    samples_per_period: usize,
    opts: Rk4Options,
) -> Result<Trajectory> {
    chain.validate()?;
    drive.validate()?;
    if samples_per_period == 0 {
        return Err(Error::InvalidDrive("samples_per_period must be positive".into()));
    }
    let times = period_sample_times(drive.period(), samples_per_period, horizon);
    let n = chain.dim();
    let base = build_effective_hamiltonian(chain, 0.0);
    let step_drive = drive.as_step().ok().copied();
    // Steps never straddle a switch time, and the drive level of a step is
    // taken at its midpoint.
    let next_switch = |t: f64| -> f64 {
        match step_drive {
            Some(s) => {
                let base = (t / s.period).floor() * s.period;
                [base + s.tau, base + s.period, base + s.period + s.tau]
                    .into_iter()
                    .find(|&c| c > t + 1e-12 * s.period)
                    .unwrap_or(f64::INFINITY)
            }
            None => f64::INFINITY,
        }
    };
    let mut y = unit_impurity(n);
    let mut t = 0.0;
    let mut h = opts.initial_step;
    let mut c0 = Vec::with_capacity(times.len());
    let mut buf = Rk4Buffers::new(n);
    for &target in &times {
        while t < target - 1e-14 {
            let stop = target.min(next_switch(t));
            let step = h.min(stop - t);
            let level = step_drive.map(|_| drive.value(t + 0.5 * step));
            let rhs = |tt: f64, y: &[c64], out: &mut [c64]| {
                apply_hamiltonian(&base, level.unwrap_or_else(|| drive.value(tt)), y, out);
                for o in out.iter_mut() {
                    *o = c64::new(o.im, -o.re); // -i·H y
                }
            };
            let full = rk4_step(&rhs, t, &y, step, &mut buf);
            let mid = rk4_step(&rhs, t, &y, 0.5 * step, &mut buf);
            let two = rk4_step(&rhs, t + 0.5 * step, &mid, 0.5 * step, &mut buf);
            let err = two.iter().zip(&full).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / 15.0;
            if err <= opts.tol * step || step < 1e-10 {
                for ((yi, a), b) in y.iter_mut().zip(&two).zip(&full) {
                    *yi = a + (a - b) / 15.0;
                }
                t += step;
                let grow = if err > 0.0 { 0.9 * (opts.tol * step / err).powf(0.2) } else { 2.0 };
                if step == h {
                    h *= grow.clamp(0.3, 2.0);
                }
            } else {
                h = step * (0.9 * (opts.tol * step / err).powf(0.25)).clamp(0.1, 0.9);
            }
        }
        c0.push(y[0]);
    }
    Ok(Trajectory::new(
        times,
        c0,
        PhaseFrame::Model,
        TrajectoryMeta {
            solver: SolverId::LatticeRk4,
            step: Some(h),
            kernel: None,
            chain: chain.clone(),
            drive: drive.clone(),
            certificate: None,
            approximate: false,
            warnings: Vec::new(),
        },
    ))
}

struct Rk4Buffers {
    k: [Vec<c64>; 4],
    tmp: Vec<c64>,
}

impl Rk4Buffers {
    fn new(n: usize) -> Self {
        let z = vec![c64::default(); n];
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z,
        }
    }
}

fn rk4_step<F: Fn(f64, &[c64], &mut [c64])>(f: &F, t: f64, y: &[c64], h: f64, b: &mut Rk4Buffers) -> Vec<c64> {
    let n = y.len();
    f(t, y, &mut b.k[0]);
    for i in 0..n {
        b.tmp[i] = y[i] + b.k[0][i] * (0.5 * h);
    }
    f(t + 0.5 * h, &b.tmp, &mut b.k[1]);
    for i in 0..n {
        b.tmp[i] = y[i] + b.k[1][i] * (0.5 * h);
    }
    f(t + 0.5 * h, &b.tmp, &mut b.k[2]);
    for i in 0..n {
        b.tmp[i] = y[i] + b.k[2][i] * h;
    }
    f(t + h, &b.tmp, &mut b.k[3]);
    (0..n)
        .map(|i| y[i] + (b.k[0][i] + b.k[1][i] * 2.0 + b.k[2][i] * 2.0 + b.k[3][i]) * (h / 6.0))
        .collect()
}

fn apply_hamiltonian(base: &Tridiagonal, drive_value: f64, y: &[c64], out: &mut [c64]) {
    base.apply(y, out);
    out[0] += y[0] * drive_value;
}

/// Fidelity `⟨φ|ρ_S(t)|φ⟩` from a joint evolution of the spin-down vacuum and
/// the single-excitation sector.
///
/// The vacuum carries the phase `e^{+iθ(t)}`, `θ = ∫(λ+A)/2`, and the
/// single-excitation sector evolves with `H_eff - (λ+A)/2`. The chain is traced
/// out explicitly: `ρ↑↑ = |α c₀|²`, `ρ↓↓ = |β|² + |α|² Σ_{j≥1} |c_j|²`,
/// `ρ↑↓ = α c₀ conj(β e^{iθ})`.
pub fn superposition_direct(
    chain: &ChainSpec,
    drive: &DriveProtocol,
    state: SuperpositionState,
    horizon: f64,
    samples_per_period: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let prop = StepPropagator::new(chain, drive)?;
    let times = period_sample_times(drive.period(), samples_per_period, horizon);
    let n = prop.dim();
    let mut psi0 = vec![c64::default(); n];
    psi0[0] = state.alpha;
    let (amp, norm) = prop.impurity_and_norm(&psi0, &times);
    let (a, b) = (state.alpha, state.beta);
    let f = times
        .iter()
        .zip(amp.iter().zip(&norm))
        .map(|(&t, (&c_model, &total))| {
            let theta = half_phase(chain, drive, t);
            let up = c_model * c64::from_polar(1.0, theta);
            let vac = b * c64::from_polar(1.0, theta);
            let rho_uu = up.norm_sqr();
            let rho_dd = vac.norm_sqr() + (total - c_model.norm_sqr());
            let rho_ud = up * vac.conj();
            // ⟨φ|ρ|φ⟩ with φ = (α, β)
            a.norm_sqr() * rho_uu + b.norm_sqr() * rho_dd + 2.0 * (a.conj() * rho_ud * b).re
        })
        .collect();
    Ok((times, f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small_chain() -> ChainSpec {
        ChainSpec::new(30, 1.0, 0.9, 2.0).unwrap()
    }

    #[test]
    fn norm_conserved() {
        let chain = small_chain();
        let d = DriveProtocol::step(0.0, 3.0, 0.3, 0.8).unwrap();
        let prop = StepPropagator::new(&chain, &d).unwrap();
        let times = period_sample_times(0.8, 7, 40.0);
        let sites = prop.site_series(&unit_impurity(31), &times);
        for s in &sites {
            let norm: f64 = s.iter().map(|c| c.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn matches_rk4_reference() {
        let chain = small_chain();
        let d = DriveProtocol::step(0.5, -1.5, 0.3, 0.8).unwrap();
        let exact = propagate_lattice(&chain, &d, 8.0, 16).unwrap();
        // 16 samples per period put both switch times on sample points, so
        // no RK step straddles a discontinuity.
        let rk = propagate_rk4(&chain, &d, 8.0, 16, Rk4Options { tol: 1e-12, initial_step: 1e-4 }).unwrap();
        let dev = exact.p.iter().zip(&rk.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn harmonics_drive_needs_fallback() {
        use crate::model::HarmonicDrive;
        let d = DriveProtocol::Harmonics(HarmonicDrive {
            period: 1.0,
            coeffs: [(0, c64::new(0.5, 0.0))].into_iter().collect(),
        });
        let err = propagate_lattice(&small_chain(), &d, 1.0, 4).unwrap_err();
        assert!(matches!(err, Error::NonStepDrive));
        let tr = propagate_rk4(&small_chain(), &d, 1.0, 4, Rk4Options::default()).unwrap();
        assert_eq!(tr.p[0], 1.0);
    }

    #[test]
    fn spin_down_is_dark() {
        let chain = small_chain();
        let d = DriveProtocol::step(0.0, 3.0, 0.3, 0.8).unwrap();
        let (_, f) = superposition_direct(&chain, &d, SuperpositionState::spin_down(), 5.0, 8).unwrap();
        for v in f {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_up_reduces_to_population() {
        let chain = small_chain();
        let d = DriveProtocol::step(0.0, 3.0, 0.3, 0.8).unwrap();
        let (_, f) = superposition_direct(&chain, &d, SuperpositionState::spin_up(), 5.0, 8).unwrap();
        let tr = propagate_lattice(&chain, &d, 5.0, 8).unwrap();
        for (a, b) in f.iter().zip(&tr.p) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_times_hit_period_boundaries_exactly() {
        let t = period_sample_times(0.25 * PI, 10, 2.0 * PI);
        assert_eq!(t.len(), 81);
        assert_eq!(t[10], 0.25 * PI);
    }
}
