//! CSV datasets with a versioned schema line, and JSON sidecars.
//!
//! Every CSV starts with `# schema: <name> v<version>`, then a header row.
//! Floats use the shortest round-trip representation, so identical results
//! give byte-identical files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64 as c64;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::filter::FilterReport;
use crate::floquet::{FbsReport, FloquetMode, QuasienergySpectrum};
use crate::sweep::{ConvergenceOptions, SweepDataset};

pub const SCHEMA_VERSION: u32 = 1;

pub mod schema {
    pub const TRAJECTORY: &str = "trajectory";
    pub const FIDELITY: &str = "fidelity";
    pub const SPECTRUM: &str = "spectrum";
    pub const FBS: &str = "fbs";
    pub const PROFILE: &str = "profile";
    pub const MODE: &str = "mode";
    pub const FILTER_DYNAMICS: &str = "filter-dynamics";
    pub const FILTER_SPECTRA: &str = "filter-spectra";
    pub const SWEEP_SUMMARY: &str = "sweep-summary";
    pub const COMPARISON: &str = "comparison";
}

pub const TRAJECTORY_COLUMNS: [&str; 4] = ["t", "re_c0", "im_c0", "P"];
pub const SPECTRUM_COLUMNS: [&str; 5] = ["param", "quasienergy", "class", "gap_distance", "impurity_weight"];
pub const SUMMARY_COLUMNS: [&str; 8] = [
    "index",
    "param",
    "fbs",
    "marginal",
    "gap_distance",
    "plateau",
    "p_infinity",
    "filter_prediction",
];

/// Shortest round-trip formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn fmt_bool(b: Option<bool>) -> String {
    match b {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => String::new(),
    }
}

/// In-memory CSV table.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub schema: String,
    pub version: u32,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(schema: &str, columns: &[&str]) -> Self {
        Self {
            schema: schema.into(),
            version: SCHEMA_VERSION,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Parses a numeric column; empty cells become `None`.
    pub fn column_f64(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let i = self
            .column_index(name)
            .ok_or_else(|| Error::PlanInvalid(format!("missing column '{name}'")))?;
        self.rows
            .iter()
            .map(|r| {
                let cell = r[i].trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::PlanInvalid(format!("column '{name}': {e}")))
                }
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "# schema: {} v{}", self.schema, self.version)?;
        writeln!(w, "{}", self.columns.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = BufReader::new(fs::File::open(path)?);
        let mut lines = file.lines();
        let bad = |m: &str| Error::PlanInvalid(format!("{}: {m}", path.display()));
        let first = lines.next().ok_or_else(|| bad("empty file"))??;
        let rest = first
            .strip_prefix("# schema: ")
            .ok_or_else(|| bad("missing schema line"))?;
        let (schema, version) = rest.rsplit_once(" v").ok_or_else(|| bad("malformed schema line"))?;
        let version: u32 = version.trim().parse().map_err(|_| bad("malformed schema version"))?;
        let header = lines.next().ok_or_else(|| bad("missing header"))??;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row: Vec<String> = line.split(',').map(str::to_string).collect();
            if row.len() != columns.len() {
                return Err(bad("row width does not match header"));
            }
            rows.push(row);
        }
        Ok(Self {
            schema: schema.into(),
            version,
            columns,
            rows,
        })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Path of the JSON sidecar next to a CSV file.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn trajectory_table(traj: &Trajectory) -> CsvTable {
    let mut t = CsvTable::new(schema::TRAJECTORY, &TRAJECTORY_COLUMNS);
    for ((&time, c), &p) in traj.times.iter().zip(&traj.c0).zip(&traj.p) {
        t.push(vec![fmt_f64(time), fmt_f64(c.re), fmt_f64(c.im), fmt_f64(p)]);
    }
    t
}

pub fn fidelity_table(times: &[f64], fidelity: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(schema::FIDELITY, &["t", "F"]);
    for (&time, &f) in times.iter().zip(fidelity) {
        t.push(vec![fmt_f64(time), fmt_f64(f)]);
    }
    t
}

/// Two series on a shared time axis.
pub fn comparison_table(times: &[f64], names: (&str, &str), a: &[f64], b: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(schema::COMPARISON, &["t", names.0, names.1]);
    for ((&time, &x), &y) in times.iter().zip(a).zip(b) {
        t.push(vec![fmt_f64(time), fmt_f64(x), fmt_f64(y)]);
    }
    t
}

pub fn spectrum_table<'a>(items: impl IntoIterator<Item = (f64, &'a QuasienergySpectrum)>) -> CsvTable {
    let mut t = CsvTable::new(schema::SPECTRUM, &SPECTRUM_COLUMNS);
    for (param, spec) in items {
        for e in &spec.entries {
            t.push(vec![
                fmt_f64(param),
                fmt_f64(e.quasienergy),
                e.classification.as_str().into(),
                fmt_f64(e.gap_distance),
                fmt_opt(e.impurity_weight),
            ]);
        }
    }
    t
}

pub fn fbs_table(report: &FbsReport) -> CsvTable {
    let mut t = CsvTable::new(schema::FBS, &["t", "p_infinity", "rho_uu", "rho_dd", "mu_phase"]);
    for (i, &time) in report.times.iter().enumerate() {
        let rho = report.rho_fbs.get(i);
        t.push(vec![
            fmt_f64(time),
            fmt_f64(report.p_infinity[i]),
            rho.map(|r| fmt_f64(r[0][0].re)).unwrap_or_default(),
            rho.map(|r| fmt_f64(r[1][1].re)).unwrap_or_default(),
            report.mu_phase.get(i).map(|&m| fmt_f64(m)).unwrap_or_default(),
        ]);
    }
    t
}

pub fn profile_table(populations: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(schema::PROFILE, &["j", "population"]);
    for (j, &p) in populations.iter().enumerate() {
        t.push(vec![j.to_string(), fmt_f64(p)]);
    }
    t
}

/// Harmonic components `ũ_j(k)` of a mode.
pub fn mode_table(mode: &FloquetMode, k_max: usize) -> CsvTable {
    let mut t = CsvTable::new(schema::MODE, &["j", "k", "re", "im"]);
    let h = mode.harmonics(k_max);
    let k_max = k_max as i64;
    for j in 0..mode.dim() {
        for (ki, row) in h.iter().enumerate() {
            let c: c64 = row[j];
            t.push(vec![
                j.to_string(),
                (ki as i64 - k_max).to_string(),
                fmt_f64(c.re),
                fmt_f64(c.im),
            ]);
        }
    }
    t
}

pub fn filter_dynamics_table(report: &FilterReport) -> CsvTable {
    let mut t = CsvTable::new(schema::FILTER_DYNAMICS, &["t", "R", "Q", "c0_abs", "P_filtered"]);
    for i in 0..report.times.len() {
        t.push(vec![
            fmt_f64(report.times[i]),
            fmt_f64(report.r[i]),
            fmt_f64(report.q[i]),
            fmt_f64(report.c0_abs[i]),
            fmt_f64(report.c0_abs[i] * report.c0_abs[i]),
        ]);
    }
    t
}

/// Noise spectrum and normalized control spectra `|ε_t(ω)|² / Q(t)`.
pub fn filter_spectra_table(report: &FilterReport) -> CsvTable {
    let mut names = vec!["omega".to_string(), "noise".to_string()];
    names.extend(report.control_spectra.iter().map(|(t, _)| format!("control_t{}", fmt_f64(*t))));
    let cols: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(schema::FILTER_SPECTRA, &cols);
    for (i, &w) in report.omega_grid.iter().enumerate() {
        let mut row = vec![fmt_f64(w), fmt_f64(report.noise_spectrum[i])];
        for (time, spec) in &report.control_spectra {
            let norm = if *time > 0.0 { spec[i] / time } else { 0.0 };
            row.push(fmt_f64(norm));
        }
        t.push(row);
    }
    t
}

pub fn summary_table(data: &SweepDataset) -> CsvTable {
    let mut t = CsvTable::new(schema::SWEEP_SUMMARY, &SUMMARY_COLUMNS);
    for s in data.summaries() {
        t.push(vec![
            s.index.to_string(),
            fmt_f64(s.param),
            fmt_bool(s.fbs),
            fmt_bool(Some(s.marginal)),
            fmt_opt(s.gap_distance),
            fmt_opt(s.plateau),
            fmt_opt(s.p_infinity),
            fmt_opt(s.filter_prediction),
        ]);
    }
    t
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    code_version: &'static str,
    plan: &'a crate::sweep::SweepPlan,
    convergence_defaults: ConvergenceOptions,
    correlation: &'a crate::sweep::CorrelationSummary,
    points: Vec<PointEntry<'a>>,
}

#[derive(Serialize)]
struct PointEntry<'a> {
    index: usize,
    param: f64,
    files: Vec<String>,
    failures: &'a [crate::sweep::PointFailure],
}

fn point_name(kind: &str, index: usize) -> String {
    format!("{kind}_{index:04}.csv")
}

/// Writes `manifest.json`, `summary.csv`, `spectrum.csv` and per-point files
/// under `points/`.
pub fn write_sweep(dir: &Path, data: &SweepDataset) -> Result<()> {
    fs::create_dir_all(dir.join("points"))?;
    let mut entries = Vec::with_capacity(data.points.len());
    for p in &data.points {
        let mut files = Vec::new();
        if let Some(traj) = &p.trajectory {
            let name = format!("points/{}", point_name("dynamics", p.index));
            trajectory_table(traj).write(&dir.join(&name))?;
            files.push(name);
        }
        if let Some(fbs) = &p.fbs {
            let name = format!("points/{}", point_name("fbs", p.index));
            fbs_table(fbs).write(&dir.join(&name))?;
            files.push(name);
        }
        if let Some(f) = &p.filter {
            let name = format!("points/{}", point_name("filter", p.index));
            filter_dynamics_table(f).write(&dir.join(&name))?;
            files.push(name);
        }
        entries.push(PointEntry {
            index: p.index,
            param: p.param,
            files,
            failures: &p.failures,
        });
    }
    spectrum_table(data.points.iter().filter_map(|p| p.spectrum.as_ref().map(|s| (p.param, s))))
        .write(&dir.join("spectrum.csv"))?;
    summary_table(data).write(&dir.join("summary.csv"))?;
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            schema_version: SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION"),
            plan: &data.plan,
            convergence_defaults: ConvergenceOptions::default(),
            correlation: &data.correlation,
            points: entries,
        },
    )
}
