//! Parameter sweeps over one drive parameter, the bound-mode vs plateau
//! correlation, and convergence studies of the default numerics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{commensurate_step, propagate_lattice, solve_volterra_converged, Trajectory};
use crate::error::{Error, Result};
use crate::filter::{filtered_population, FilterOptions, FilterReport};
use crate::floquet::{
    fbs_report, monodromy_spectrum, sambe_eigenvalue_near, Classification, ClassifyOptions, FbsReport,
    QuasienergySpectrum, SambeForm,
};
use crate::model::{ChainSpec, DriveProtocol, KernelProvenance, StepDrive};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// `a₂`
    Amplitude,
    /// `τ`
    SwitchTime,
    /// `T`
    Period,
    /// `a₁ = −a₂`, parameter `a₂`.
    SymmetricAmplitude,
}

impl SweepAxis {
    pub fn apply(self, base: &StepDrive, value: f64) -> StepDrive {
        let mut d = *base;
        match self {
            SweepAxis::Amplitude => d.a2 = value,
            SweepAxis::SwitchTime => d.tau = value,
            SweepAxis::Period => d.period = value,
            SweepAxis::SymmetricAmplitude => {
                d.a1 = -value;
                d.a2 = value;
            }
        }
        d
    }

    pub fn column(self) -> &'static str {
        match self {
            SweepAxis::Amplitude | SweepAxis::SymmetricAmplitude => "a2",
            SweepAxis::SwitchTime => "tau",
            SweepAxis::Period => "T",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepOutput {
    Dynamics,
    Spectrum,
    Fbs,
    Filter,
}

/// Inclusive grid `start, start + step, …, ≤ stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Time window and threshold of the plateau estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauWindow {
    pub start: f64,
    pub end: f64,
    pub threshold: f64,
}

impl Default for PlateauWindow {
    fn default() -> Self {
        Self {
            start: 80.0,
            end: 100.0,
            threshold: 0.05,
        }
    }
}

fn default_outputs() -> Vec<SweepOutput> {
    vec![SweepOutput::Dynamics, SweepOutput::Spectrum, SweepOutput::Fbs]
}

fn default_horizon() -> f64 {
    100.0
}

fn default_spp() -> usize {
    16
}

fn default_fbs_samples() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub range: SweepRange,
    pub chain: ChainSpec,
    /// Drive at which the swept parameter is substituted.
    pub drive: StepDrive,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<SweepOutput>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_spp")]
    pub samples_per_period: usize,
    #[serde(default)]
    pub plateau: PlateauWindow,
    #[serde(default)]
    pub classify: ClassifyOptions,
    #[serde(default = "default_fbs_samples")]
    pub fbs_samples: usize,
}

impl SweepPlan {
    pub fn new(axis: SweepAxis, range: SweepRange, chain: ChainSpec, drive: StepDrive) -> Self {
        Self {
            axis,
            range,
            chain,
            drive,
            outputs: default_outputs(),
            horizon: default_horizon(),
            samples_per_period: default_spp(),
            plateau: PlateauWindow::default(),
            classify: ClassifyOptions::default(),
            fbs_samples: default_fbs_samples(),
        }
    }

    pub fn wants(&self, o: SweepOutput) -> bool {
        self.outputs.contains(&o)
    }

    pub fn grid(&self) -> Vec<f64> {
        self.range.values()
    }

    /// Checks the plan and every grid point; all failures are `PlanInvalid`.
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::PlanInvalid(m));
        if !(self.range.step > 0.0) {
            return invalid(format!("step must be positive, got {}", self.range.step));
        }
        if !(self.range.start.is_finite() && self.range.stop.is_finite()) || self.range.stop < self.range.start {
            return invalid(format!("empty range [{}, {}]", self.range.start, self.range.stop));
        }
        if self.outputs.is_empty() {
            return invalid("no outputs requested".into());
        }
        if !(self.horizon > 0.0) || self.samples_per_period == 0 || self.fbs_samples == 0 {
            return invalid("horizon and sample counts must be positive".into());
        }
        let w = &self.plateau;
        if !(w.start < w.end) || w.start < 0.0 {
            return invalid(format!("plateau window [{}, {}] is empty", w.start, w.end));
        }
        if self.wants(SweepOutput::Dynamics) && w.end > self.horizon * (1.0 + 1e-12) {
            return invalid(format!("plateau window ends at {} beyond horizon {}", w.end, self.horizon));
        }
        self.chain
            .validate()
            .or_else(|e| invalid(format!("chain: {e}")))?;
        for (i, v) in self.grid().into_iter().enumerate() {
            self.axis
                .apply(&self.drive, v)
                .validate()
                .or_else(|e| invalid(format!("grid point {i} ({} = {v}): {e}", self.axis.column())))?;
        }
        Ok(())
    }
}

/// Error recorded for a grid point; the sweep continues past it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub stage: SweepOutput,
    pub kind: String,
    pub message: String,
}

/// One row of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub index: usize,
    pub param: f64,
    /// Whether a `Bound` mode exists; `None` without a spectrum.
    pub fbs: Option<bool>,
    /// Any `Marginal` entry in the spectrum.
    pub marginal: bool,
    pub gap_open: Option<bool>,
    pub gap_distance: Option<f64>,
    /// Mean exact `P` over the plateau window.
    pub plateau: Option<f64>,
    /// Period average of `P_∞` from the dominant bound mode.
    pub p_infinity: Option<f64>,
    /// Filtered `|c₀|²` at the horizon.
    pub filter_prediction: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub index: usize,
    pub param: f64,
    pub drive: StepDrive,
    pub trajectory: Option<Trajectory>,
    pub spectrum: Option<QuasienergySpectrum>,
    pub fbs: Option<FbsReport>,
    pub filter: Option<FilterReport>,
    pub failures: Vec<PointFailure>,
    pub summary: PointSummary,
}

/// Agreement between "a bound mode exists" and "plateau above threshold".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub window: PlateauWindow,
    /// Points with both indicators available and no `Marginal` entry.
    pub considered: usize,
    pub agreeing: usize,
    pub excluded_marginal: usize,
    pub incomplete: usize,
    /// `agreeing / considered`; `None` when nothing was considered.
    pub agreement: Option<f64>,
    /// Grid indices where the indicators disagree.
    pub disagreements: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SweepDataset {
    pub plan: SweepPlan,
    pub points: Vec<SweepPoint>,
    pub correlation: CorrelationSummary,
}

impl SweepDataset {
    pub fn summaries(&self) -> Vec<&PointSummary> {
        self.points.iter().map(|p| &p.summary).collect()
    }

    pub fn failures(&self) -> usize {
        self.points.iter().map(|p| p.failures.len()).sum()
    }
}

fn record<T>(failures: &mut Vec<PointFailure>, stage: SweepOutput, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("sweep stage {stage:?} failed: {e}");
            failures.push(PointFailure {
                stage,
                kind: e.kind().into(),
                message: e.to_string(),
            });
            None
        }
    }
}

/// Computes every requested output at one grid point.
pub fn run_point(plan: &SweepPlan, index: usize, param: f64) -> SweepPoint {
    let drive = plan.axis.apply(&plan.drive, param);
    let protocol = DriveProtocol::Step(drive);
    let chain = &plan.chain;
    let mut failures = Vec::new();

    let trajectory = if plan.wants(SweepOutput::Dynamics) {
        record(
            &mut failures,
            SweepOutput::Dynamics,
            propagate_lattice(chain, &protocol, plan.horizon, plan.samples_per_period),
        )
    } else {
        None
    };

    let need_modes = plan.wants(SweepOutput::Spectrum) || plan.wants(SweepOutput::Fbs);
    let monodromy = if need_modes {
        record(
            &mut failures,
            SweepOutput::Spectrum,
            monodromy_spectrum(chain, &protocol, &plan.classify),
        )
    } else {
        None
    };
    let fbs = match (&monodromy, plan.wants(SweepOutput::Fbs)) {
        (Some(m), true) => record(&mut failures, SweepOutput::Fbs, fbs_report(m, chain, plan.fbs_samples)),
        _ => None,
    };
    let spectrum = monodromy.map(|m| m.spectrum);

    let filter = if plan.wants(SweepOutput::Filter) {
        let opts = FilterOptions {
            samples: 2,
            grid_points: 401,
            ..FilterOptions::default()
        };
        record(
            &mut failures,
            SweepOutput::Filter,
            filtered_population(chain, &protocol, plan.horizon, &opts),
        )
    } else {
        None
    };

    let w = &plan.plateau;
    let summary = PointSummary {
        index,
        param,
        fbs: spectrum.as_ref().map(|s| s.has_bound()),
        marginal: spectrum
            .as_ref()
            .is_some_and(|s| s.count(Classification::Marginal) > 0),
        gap_open: spectrum.as_ref().and_then(|s| s.gap_open),
        gap_distance: spectrum.as_ref().map(|s| s.max_gap_distance()),
        plateau: trajectory.as_ref().and_then(|t| t.window_mean(w.start, w.end)),
        p_infinity: fbs.as_ref().map(|f| f.mean_p_infinity()),
        filter_prediction: filter
            .as_ref()
            .and_then(|f| f.c0_abs.last().map(|c| c * c)),
    };
    SweepPoint {
        index,
        param,
        drive,
        trajectory,
        spectrum,
        fbs,
        filter,
        failures,
        summary,
    }
}

/// Scores the indicator agreement over the summary rows.
pub fn correlation(summaries: &[&PointSummary], window: PlateauWindow) -> CorrelationSummary {
    let mut out = CorrelationSummary {
        window,
        considered: 0,
        agreeing: 0,
        excluded_marginal: 0,
        incomplete: 0,
        agreement: None,
        disagreements: Vec::new(),
    };
    for s in summaries {
        if s.marginal {
            out.excluded_marginal += 1;
            continue;
        }
        match (s.fbs, s.plateau) {
            (Some(bound), Some(p)) => {
                out.considered += 1;
                if bound == (p > window.threshold) {
                    out.agreeing += 1;
                } else {
                    out.disagreements.push(s.index);
                }
            }
            _ => out.incomplete += 1,
        }
    }
    if out.considered > 0 {
        out.agreement = Some(out.agreeing as f64 / out.considered as f64);
    }
    out
}

/// Runs all grid points, in parallel on `workers` threads (`None`: rayon
/// default). Results are ordered by grid index.
pub fn run_sweep(plan: &SweepPlan, workers: Option<usize>) -> Result<SweepDataset> {
    plan.validate()?;
    let grid = plan.grid();
    let work = || -> Vec<SweepPoint> {
        grid.par_iter()
            .enumerate()
            .map(|(i, &v)| run_point(plan, i, v))
            .collect()
    };
    let points = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::PlanInvalid(format!("worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let summaries: Vec<&PointSummary> = points.iter().map(|p| &p.summary).collect();
    let correlation = correlation(&summaries, plan.plateau);
    Ok(SweepDataset {
        plan: plan.clone(),
        points,
        correlation,
    })
}

/// Settings of the convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    /// Horizon of the step-halving check.
    pub step_horizon: f64,
    /// Upper bound on the Volterra step; made commensurate with the drive.
    pub max_step: f64,
    /// Sambe truncation compared against `K + k_increment`.
    pub k: usize,
    pub k_increment: usize,
    pub sambe_form: SambeForm,
    /// Smaller chain of the size-doubling check.
    pub base_sites: usize,
    pub plateau: PlateauWindow,
    pub samples_per_period: usize,
    pub classify: ClassifyOptions,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            step_horizon: 20.0,
            max_step: 4e-3,
            k: 16,
            k_increment: 4,
            sambe_form: SambeForm::Rotated,
            base_sites: 400,
            plateau: PlateauWindow::default(),
            samples_per_period: 16,
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub step: f64,
    pub horizon: f64,
    /// `max_t |P_h − P_{h/2}|`
    pub halving_drift: f64,
    /// Error bound of the extrapolated series.
    pub extrapolation_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck {
    pub k: usize,
    pub k_next: usize,
    /// `(quasienergy, |ε_K − ε_{K+Δ}|)` for each in-gap monodromy entry.
    pub in_gap: Vec<(f64, f64)>,
    pub max_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeCheck {
    pub sites: (usize, usize),
    pub plateaus: (f64, f64),
    pub drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub chain: ChainSpec,
    pub drive: DriveProtocol,
    pub options: ConvergenceOptions,
    pub step: Option<StepCheck>,
    pub truncation: Option<TruncationCheck>,
    pub size: Option<SizeCheck>,
    /// Checks that could not run, with the reason.
    pub skipped: Vec<String>,
}

/// Observable drift under step halving, Sambe truncation growth and chain
/// doubling.
pub fn convergence_report(chain: &ChainSpec, drive: &DriveProtocol, opts: &ConvergenceOptions) -> Result<ConvergenceStudy> {
    chain.validate()?;
    drive.validate()?;
    let mut skipped = Vec::new();

    let h = commensurate_step(drive, opts.max_step)?;
    let traj = solve_volterra_converged(chain, drive, opts.step_horizon, h, KernelProvenance::DiscreteSum)?;
    let step = traj.meta.certificate.map(|c| StepCheck {
        step: c.step,
        horizon: opts.step_horizon,
        halving_drift: c.halving_drift,
        extrapolation_drift: c.extrapolation_drift,
    });

    let truncation = match drive.as_step() {
        Ok(_) if drive.omega() > chain.bandwidth() => {
            let mono = monodromy_spectrum(chain, drive, &opts.classify)?;
            let omega = drive.omega();
            let k_next = opts.k + opts.k_increment;
            let mut in_gap = Vec::new();
            for e in mono.spectrum.entries.iter().filter(|e| e.gap_distance > 0.0) {
                let target = chain.field + crate::floquet::fold(e.quasienergy - chain.field, omega);
                let (a, _) = sambe_eigenvalue_near(chain, drive, opts.k, opts.sambe_form, target)?;
                let (b, _) = sambe_eigenvalue_near(chain, drive, k_next, opts.sambe_form, target)?;
                in_gap.push((e.quasienergy, crate::floquet::circular_distance(a, b, omega)));
            }
            if in_gap.is_empty() {
                skipped.push("truncation: no in-gap quasienergy".into());
                None
            } else {
                let max_drift = in_gap.iter().map(|p| p.1).fold(0.0, f64::max);
                Some(TruncationCheck {
                    k: opts.k,
                    k_next,
                    in_gap,
                    max_drift,
                })
            }
        }
        Ok(_) => {
            skipped.push("truncation: quasienergy gap closed".into());
            None
        }
        Err(_) => {
            skipped.push("truncation: requires a step drive".into());
            None
        }
    };

    let size = if drive.as_step().is_ok() {
        let w = opts.plateau;
        let horizon = w.end;
        let small = ChainSpec {
            sites: opts.base_sites,
            ..chain.clone()
        };
        let large = ChainSpec {
            sites: 2 * opts.base_sites,
            ..chain.clone()
        };
        let p = |c: &ChainSpec| -> Result<f64> {
            let t = propagate_lattice(c, drive, horizon, opts.samples_per_period)?;
            t.window_mean(w.start, w.end)
                .ok_or_else(|| Error::PlanInvalid("empty plateau window".into()))
        };
        let (a, b) = (p(&small)?, p(&large)?);
        Some(SizeCheck {
            sites: (small.sites, large.sites),
            plateaus: (a, b),
            drift: (a - b).abs(),
        })
    } else {
        skipped.push("size: requires a step drive".into());
        None
    };

    Ok(ConvergenceStudy {
        chain: chain.clone(),
        drive: drive.clone(),
        options: opts.clone(),
        step,
        truncation,
        size,
        skipped,
    })
}
