use std::fs;
use std::path::{Path, PathBuf};

use floquet_chain::c64;
use floquet_chain::dynamics::{
    commensurate_step, fidelity_from_amplitude, propagate_lattice, solve_volterra_converged, StepPropagator,
    SuperpositionState,
};
use floquet_chain::filter::{filtered_population, FilterOptions};
use floquet_chain::floquet::{
    fbs_report, mode_profile, monodromy_spectrum, pairwise_deviation, solve_sambe, ClassifyOptions,
    QuasienergySpectrum,
};
use floquet_chain::io::{
    comparison_table, fbs_table, fidelity_table, filter_dynamics_table, filter_spectra_table, mode_table,
    profile_table, spectrum_table, trajectory_table, write_json, write_sweep, SCHEMA_VERSION,
};
use floquet_chain::model::{DriveProtocol, KernelProvenance, StepDrive};
use floquet_chain::presets::Preset;
use floquet_chain::sweep::{
    convergence_report, run_sweep, ConvergenceOptions, PlateauWindow, SweepAxis, SweepOutput, SweepPlan, SweepRange,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{ChainSection, DriveSection, Num, Resolved, RunConfig, Scan};
use crate::error::CliError;

fn sidecar(out: &Path, name: &str, command: &str, r: &Resolved, results: serde_json::Value) -> Result<(), CliError> {
    write_json(
        &out.join(name),
        &json!({
            "command": command,
            "schema_version": SCHEMA_VERSION,
            "code_version": env!("CARGO_PKG_VERSION"),
            "config": r.to_config(),
            "results": results,
        }),
    )?;
    Ok(())
}

fn announce(out: &Path, files: &[&str]) {
    for f in files {
        println!("{}", out.join(f).display());
    }
}

fn unit(n: usize) -> Vec<c64> {
    let mut v = vec![c64::default(); n];
    v[0] = c64::new(1.0, 0.0);
    v
}

pub fn dynamics(r: &Resolved, out: &Path, fidelity: bool) -> Result<(), CliError> {
    let drive = DriveProtocol::Step(r.drive);
    let s = &r.solver;
    let lattice = propagate_lattice(&r.chain, &drive, s.horizon, s.samples_per_period)?;
    let h = commensurate_step(&drive, s.h)?;
    let vh = s.volterra_horizon.min(s.horizon);
    let volterra = solve_volterra_converged(&r.chain, &drive, vh, h, KernelProvenance::DiscreteSum)?;
    let prop = StepPropagator::new(&r.chain, &drive)?;
    let reference = prop.impurity_series(&unit(r.chain.dim()), &volterra.times);
    let residual = volterra
        .p
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - b.norm_sqr()).abs())
        .fold(0.0, f64::max);
    let plateau_start = (s.horizon - 20.0).max(0.0);

    fs::create_dir_all(out)?;
    trajectory_table(&lattice).write(&out.join("dynamics.csv"))?;
    trajectory_table(&volterra).write(&out.join("dynamics_volterra.csv"))?;
    let mut files = vec!["dynamics.csv", "dynamics_volterra.csv"];
    if fidelity {
        let state = SuperpositionState::equal();
        let f: Vec<f64> = lattice.c0.iter().map(|&c| fidelity_from_amplitude(c, &state)).collect();
        fidelity_table(&lattice.times, &f).write(&out.join("fidelity.csv"))?;
        files.push("fidelity.csv");
    }
    sidecar(
        out,
        "dynamics.json",
        "dynamics",
        r,
        json!({
            "lattice": { "solver": lattice.meta.solver, "frame": lattice.frame, "samples": lattice.len() },
            "volterra": {
                "solver": volterra.meta.solver,
                "step": h,
                "horizon": vh,
                "certificate": volterra.meta.certificate,
                "warnings": volterra.meta.warnings,
            },
            "cross_check_max_abs_dp": residual,
            "plateau": { "start": plateau_start, "end": s.horizon, "mean_p": lattice.window_mean(plateau_start, s.horizon) },
        }),
    )?;
    files.push("dynamics.json");
    announce(out, &files);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumSolvers {
    Monodromy,
    Sambe,
    Both,
}

pub fn spectrum(r: &Resolved, out: &Path, scan: Option<Scan>, solvers: SpectrumSolvers) -> Result<(), CliError> {
    let values = match scan {
        Some(s) => {
            let v = SweepRange {
                start: s.start,
                stop: s.stop,
                step: s.step,
            }
            .values();
            if v.is_empty() {
                return Err(CliError::Config(format!("empty a2 scan {}:{}:{}", s.start, s.stop, s.step)));
            }
            v
        }
        None => vec![r.drive.a2],
    };
    let drives: Vec<StepDrive> = values
        .iter()
        .map(|&a2| {
            let mut d = r.drive;
            d.a2 = a2;
            if r.symmetric {
                d.a1 = -a2;
            }
            d.validate().map(|_| d)
        })
        .collect::<Result<_, _>>()?;
    let classify = &r.solver.classify;
    let want_mono = solvers != SpectrumSolvers::Sambe;
    let want_sambe = solvers != SpectrumSolvers::Monodromy;
    let mut mono: Vec<(f64, QuasienergySpectrum)> = Vec::new();
    let mut sambe: Vec<(f64, QuasienergySpectrum)> = Vec::new();
    for (&a2, d) in values.iter().zip(&drives) {
        let drive = DriveProtocol::Step(*d);
        if want_mono {
            mono.push((a2, monodromy_spectrum(&r.chain, &drive, classify)?.spectrum));
        }
        if want_sambe {
            sambe.push((a2, solve_sambe(&r.chain, &drive, &r.solver.k_policy, r.solver.sambe_form, classify)?));
        }
    }
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    if want_mono {
        spectrum_table(mono.iter().map(|(a, s)| (*a, s))).write(&out.join("spectrum.csv"))?;
        files.push("spectrum.csv");
    }
    if want_sambe {
        spectrum_table(sambe.iter().map(|(a, s)| (*a, s))).write(&out.join("spectrum_sambe.csv"))?;
        files.push("spectrum_sambe.csv");
    }
    let deviations: Vec<f64> = mono
        .iter()
        .zip(&sambe)
        .map(|((_, m), (_, s))| pairwise_deviation(&m.quasienergies(), &s.quasienergies(), m.omega))
        .collect();
    let points: Vec<serde_json::Value> = values
        .iter()
        .enumerate()
        .map(|(i, a2)| {
            let pick = |v: &Vec<(f64, QuasienergySpectrum)>| {
                v.get(i).map(|(_, s)| {
                    json!({
                        "solver": s.solver,
                        "bound": s.bound_indices().len(),
                        "gap_open": s.gap_open,
                        "max_gap_distance": s.max_gap_distance(),
                        "convergence": s.convergence,
                    })
                })
            };
            json!({ "a2": a2, "monodromy": pick(&mono), "sambe": pick(&sambe), "deviation": deviations.get(i) })
        })
        .collect();
    sidecar(out, "spectrum.json", "spectrum", r, json!({ "points": points }))?;
    files.push("spectrum.json");
    announce(out, &files);
    Ok(())
}

pub fn fbs(r: &Resolved, out: &Path, profile_time: Option<f64>, harmonics: usize) -> Result<(), CliError> {
    let drive = DriveProtocol::Step(r.drive);
    let result = monodromy_spectrum(&r.chain, &drive, &r.solver.classify)?;
    let report = fbs_report(&result, &r.chain, r.solver.fbs_samples)?;
    let t_profile = profile_time.unwrap_or(r.drive.period / 4.0);
    fs::create_dir_all(out)?;
    fbs_table(&report).write(&out.join("fbs.csv"))?;
    spectrum_table([(r.drive.a2, &result.spectrum)]).write(&out.join("spectrum.csv"))?;
    let mut files = vec!["fbs.csv", "spectrum.csv"];
    let mut region = None;
    if let Some(mode) = &report.mode {
        let pops = mode_profile(mode, t_profile);
        region = Some(pops.iter().take(r.solver.classify.j_loc + 1).sum::<f64>());
        profile_table(&pops).write(&out.join("profile.csv"))?;
        mode_table(mode, harmonics).write(&out.join("mode.csv"))?;
        files.extend(["profile.csv", "mode.csv"]);
    }
    sidecar(
        out,
        "fbs.json",
        "fbs",
        r,
        json!({
            "found": report.found,
            "quasienergy": report.quasienergy,
            "overlap_sq": report.overlap_sq,
            "mean_p_infinity": report.mean_p_infinity(),
            "bound_modes": result.spectrum.bound_indices().len(),
            "profile_time": t_profile,
            "profile_region_weight": region,
            "j_loc": r.solver.classify.j_loc,
            "mode_harmonics": harmonics,
        }),
    )?;
    files.push("fbs.json");
    announce(out, &files);
    Ok(())
}

pub fn filter(r: &Resolved, out: &Path, samples: usize) -> Result<(), CliError> {
    let drive = DriveProtocol::Step(r.drive);
    let horizon = r.solver.horizon;
    let opts = FilterOptions {
        samples: samples.max(2),
        spectrum_times: vec![0.25 * horizon, 0.5 * horizon, horizon],
        ..FilterOptions::default()
    };
    let report = filtered_population(&r.chain, &drive, horizon, &opts)?;
    let prop = StepPropagator::new(&r.chain, &drive)?;
    let exact: Vec<f64> = prop
        .impurity_series(&unit(r.chain.dim()), &report.times)
        .iter()
        .map(|c| c.norm_sqr())
        .collect();
    let filtered: Vec<f64> = report.c0_abs.iter().map(|c| c * c).collect();
    let mono = monodromy_spectrum(&r.chain, &drive, &r.solver.classify)?;
    let fbs = fbs_report(&mono, &r.chain, r.solver.fbs_samples)?;
    fs::create_dir_all(out)?;
    filter_dynamics_table(&report).write(&out.join("filter_dynamics.csv"))?;
    filter_spectra_table(&report).write(&out.join("filter_spectra.csv"))?;
    comparison_table(&report.times, ("P_filtered", "P_exact"), &filtered, &exact).write(&out.join("filter_comparison.csv"))?;
    spectrum_table([(r.drive.a2, &mono.spectrum)]).write(&out.join("spectrum.csv"))?;
    sidecar(
        out,
        "filter.json",
        "filter",
        r,
        json!({
            "omega_a": report.omega_a,
            "frame": report.frame,
            "filtered_final": filtered.last(),
            "exact_final": exact.last(),
            "bound_modes": mono.spectrum.bound_indices().len(),
            "mean_p_infinity": fbs.mean_p_infinity(),
            "options": opts,
        }),
    )?;
    announce(
        out,
        &["filter_dynamics.csv", "filter_spectra.csv", "filter_comparison.csv", "spectrum.csv", "filter.json"],
    );
    Ok(())
}

pub fn converge(r: &Resolved, out: &Path) -> Result<(), CliError> {
    let drive = DriveProtocol::Step(r.drive);
    let opts = ConvergenceOptions {
        max_step: r.solver.h,
        sambe_form: r.solver.sambe_form,
        classify: r.solver.classify,
        base_sites: (r.chain.sites / 2).max(1),
        ..ConvergenceOptions::default()
    };
    let study = convergence_report(&r.chain, &drive, &opts)?;
    fs::create_dir_all(out)?;
    sidecar(out, "converge.json", "converge", r, serde_json::to_value(&study)?)?;
    announce(out, &["converge.json"]);
    Ok(())
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSection {
    pub start: Num,
    pub stop: Num,
    pub step: Num,
}

/// Sweep plan file: the swept axis and range, plus a preset and/or explicit
/// chain and drive sections for the fixed parameters.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub preset: Option<Preset>,
    pub axis: SweepAxis,
    pub range: RangeSection,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub drive: DriveSection,
    pub outputs: Option<Vec<SweepOutput>>,
    pub horizon: Option<Num>,
    pub samples_per_period: Option<usize>,
    pub plateau: Option<PlateauWindow>,
    pub classify: Option<ClassifyOptions>,
    pub fbs_samples: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

pub fn load_plan(path: &Path) -> Result<PlanFile, CliError> {
    let text = fs::read_to_string(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn build_plan(file: &PlanFile) -> Result<SweepPlan, CliError> {
    let base = RunConfig {
        preset: file.preset,
        chain: file.chain.clone(),
        drive: file.drive.clone(),
        ..Default::default()
    };
    let (chain, drive) = match base.resolve() {
        Ok(r) => (r.chain, r.drive),
        Err(CliError::Core(e)) if e.is_validation() => {
            return Err(CliError::Core(floquet_chain::Error::PlanInvalid(e.to_string())))
        }
        Err(e) => return Err(e),
    };
    let axis = match (file.axis, file.preset.map(|p| p.params().symmetric)) {
        (SweepAxis::Amplitude, Some(true)) => SweepAxis::SymmetricAmplitude,
        (a, _) => a,
    };
    let mut plan = SweepPlan::new(
        axis,
        SweepRange {
            start: file.range.start.0,
            stop: file.range.stop.0,
            step: file.range.step.0,
        },
        chain,
        drive,
    );
    if let Some(o) = &file.outputs {
        plan.outputs = o.clone();
    }
    if let Some(h) = file.horizon {
        plan.horizon = h.0;
    }
    if let Some(s) = file.samples_per_period {
        plan.samples_per_period = s;
    }
    if let Some(p) = file.plateau {
        plan.plateau = p;
    }
    if let Some(c) = file.classify {
        plan.classify = c;
    }
    if let Some(n) = file.fbs_samples {
        plan.fbs_samples = n;
    }
    plan.validate()?;
    Ok(plan)
}

pub fn sweep(plan_path: &Path, file: PlanFile, out: &Path, workers: Option<usize>) -> Result<(), CliError> {
    let plan = build_plan(&file)?;
    let data = run_sweep(&plan, workers)?;
    let stem = plan_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sweep".into());
    let dir: PathBuf = out.join(stem);
    write_sweep(&dir, &data)?;
    write_json(&dir.join("plan.json"), &file)?;
    println!("{}", dir.display());
    if let Some(a) = data.correlation.agreement {
        println!(
            "agreement {:.4} over {} points ({} marginal excluded, {} failures)",
            a,
            data.correlation.considered,
            data.correlation.excluded_marginal,
            data.failures()
        );
    }
    Ok(())
}
