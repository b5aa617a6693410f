//! Run configuration: presets, TOML/JSON files and command-line overrides.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use floquet_chain::floquet::{ClassifyOptions, KPolicy, SambeForm};
use floquet_chain::model::{ChainSpec, KernelMode, StepDrive};
use floquet_chain::presets::Preset;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "FLOQUET_CHAIN_OUTPUT_DIR";

/// A number in units of `J` or `1/J`, optionally written as a multiple of π
/// (`"0.25pi"`, `"pi"`, `"-2π"`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Num(pub f64);

impl FromStr for Num {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let (body, scale) = if let Some(b) = lower.strip_suffix("pi") {
            (b.to_string(), PI)
        } else if let Some(b) = t.strip_suffix('π') {
            (b.to_string(), PI)
        } else {
            (t.to_string(), 1.0)
        };
        let body = body.trim().trim_end_matches('*').trim();
        let value = match body {
            "" | "+" => 1.0,
            "-" => -1.0,
            b => b.parse::<f64>().map_err(|_| format!("invalid number '{s}'"))?,
        };
        let v = value * scale;
        if v.is_finite() {
            Ok(Num(v))
        } else {
            Err(format!("non-finite number '{s}'"))
        }
    }
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            I(i64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Num(v)),
            Raw::I(v) => Ok(Num(v as f64)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `start:stop:step`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scan {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl FromStr for Scan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected start:stop:step, got '{s}'"));
        }
        let n = |p: &str| p.parse::<Num>().map(|n| n.0);
        Ok(Scan {
            start: n(parts[0])?,
            stop: n(parts[1])?,
            step: n(parts[2])?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(rename = "L", alias = "sites", skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[serde(rename = "J", alias = "hopping", skip_serializing_if = "Option::is_none")]
    pub hopping: Option<Num>,
    #[serde(rename = "g", alias = "coupling", skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Num>,
    #[serde(rename = "lambda", alias = "field", skip_serializing_if = "Option::is_none")]
    pub field: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_mode: Option<KernelMode>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a1: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a2: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<Num>,
    #[serde(rename = "T", alias = "period", skip_serializing_if = "Option::is_none")]
    pub period: Option<Num>,
    /// Keep `a₁ = −a₂` when `a₂` is set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetric: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Upper bound on the Volterra step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Num>,
    /// Horizon of the Volterra cross-check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volterra_horizon: Option<Num>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples_per_period: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_initial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sambe_form: Option<SambeForm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_loc: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fbs_samples: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// File form of a run configuration. Every field is optional; missing
/// values come from the preset, then from built-in defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        parse_config_text(path, &text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(mut self, other: RunConfig) -> Self {
        macro_rules! take {
            ($($sec:ident . $f:ident),*) => { $( if other.$sec.$f.is_some() { self.$sec.$f = other.$sec.$f; } )* };
        }
        if other.preset.is_some() {
            self.preset = other.preset;
        }
        take!(
            chain.sites, chain.hopping, chain.coupling, chain.field, chain.kernel_mode,
            drive.a1, drive.a2, drive.tau, drive.period, drive.symmetric,
            solver.h, solver.horizon, solver.volterra_horizon, solver.samples_per_period,
            solver.k_initial, solver.k_step, solver.k_tol, solver.k_max, solver.sambe_form,
            solver.gap_tol, solver.w_min, solver.j_loc, solver.fbs_samples,
            output.dir
        );
        self
    }

    /// Expands the preset, applies defaults and validates.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let preset = self.preset.map(|p| p.params());
        let base_chain = preset.as_ref().map(|p| p.chain.clone()).unwrap_or(ChainSpec {
            sites: 800,
            hopping: 1.0,
            coupling: 1.0,
            field: 20.0,
            kernel_mode: KernelMode::OpenChainExact,
        });
        let c = &self.chain;
        let chain = ChainSpec {
            sites: c.sites.unwrap_or(base_chain.sites),
            hopping: c.hopping.map_or(base_chain.hopping, |n| n.0),
            coupling: c.coupling.map_or(base_chain.coupling, |n| n.0),
            field: c.field.map_or(base_chain.field, |n| n.0),
            kernel_mode: c.kernel_mode.unwrap_or(base_chain.kernel_mode),
        };
        chain.validate()?;

        let base_drive = preset.as_ref().map(|p| p.drive).unwrap_or(StepDrive {
            a1: 0.0,
            a2: 0.0,
            tau: 0.1 * PI,
            period: 0.25 * PI,
        });
        let d = &self.drive;
        let symmetric = d
            .symmetric
            .unwrap_or(preset.as_ref().is_some_and(|p| p.symmetric));
        let a2 = d.a2.map_or(base_drive.a2, |n| n.0);
        let a1 = match (d.a1, symmetric) {
            (Some(a1), _) => a1.0,
            (None, true) => -a2,
            (None, false) => base_drive.a1,
        };
        let drive = StepDrive {
            a1,
            a2,
            tau: d.tau.map_or(base_drive.tau, |n| n.0),
            period: d.period.map_or(base_drive.period, |n| n.0),
        };
        drive.validate()?;

        let s = &self.solver;
        let default_policy = KPolicy::default();
        let default_classify = ClassifyOptions::default();
        let solver = Solver {
            h: s.h.map_or(2e-3, |n| n.0),
            horizon: s.horizon.map_or(preset.as_ref().map_or(100.0, |p| p.horizon), |n| n.0),
            volterra_horizon: s.volterra_horizon.map_or(20.0, |n| n.0),
            samples_per_period: s.samples_per_period.unwrap_or(32),
            k_policy: KPolicy {
                initial: s.k_initial.unwrap_or(default_policy.initial),
                step: s.k_step.unwrap_or(default_policy.step),
                tol: s.k_tol.unwrap_or(default_policy.tol),
                max: s.k_max.unwrap_or(default_policy.max),
            },
            sambe_form: s.sambe_form.unwrap_or(SambeForm::Rotated),
            classify: ClassifyOptions {
                gap_tol: s.gap_tol.or(default_classify.gap_tol),
                w_min: s.w_min.unwrap_or(default_classify.w_min),
                j_loc: s.j_loc.unwrap_or(default_classify.j_loc),
            },
            fbs_samples: s.fbs_samples.unwrap_or(256),
        };
        solver.validate()?;
        Ok(Resolved {
            preset: self.preset,
            chain,
            drive,
            symmetric,
            solver,
            output_dir: self.output.dir.clone(),
        })
    }
}

pub fn parse_config_text(path: &Path, text: &str) -> Result<RunConfig, CliError> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solver {
    pub h: f64,
    pub horizon: f64,
    pub volterra_horizon: f64,
    pub samples_per_period: usize,
    pub k_policy: KPolicy,
    pub sambe_form: SambeForm,
    pub classify: ClassifyOptions,
    pub fbs_samples: usize,
}

impl Solver {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.h > 0.0) {
            return bad(format!("solver.h must be positive, got {}", self.h));
        }
        if !(self.horizon > 0.0) || !(self.volterra_horizon > 0.0) {
            return bad("solver horizons must be positive".into());
        }
        if self.samples_per_period == 0 || self.fbs_samples == 0 {
            return bad("sample counts must be positive".into());
        }
        let k = &self.k_policy;
        if k.initial == 0 || k.step == 0 || k.max < k.initial || !(k.tol > 0.0) {
            return bad(format!("invalid K policy {k:?}"));
        }
        if self.classify.gap_tol.is_some_and(|g| !(g > 0.0)) || !(self.classify.w_min >= 0.0) {
            return bad("classification thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Fully resolved run parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub preset: Option<Preset>,
    pub chain: ChainSpec,
    pub drive: StepDrive,
    pub symmetric: bool,
    pub solver: Solver,
    pub output_dir: Option<PathBuf>,
}

impl Resolved {
    /// Config with every field explicit; resolving it reproduces `self`.
    pub fn to_config(&self) -> RunConfig {
        let s = &self.solver;
        RunConfig {
            preset: self.preset,
            chain: ChainSection {
                sites: Some(self.chain.sites),
                hopping: Some(Num(self.chain.hopping)),
                coupling: Some(Num(self.chain.coupling)),
                field: Some(Num(self.chain.field)),
                kernel_mode: Some(self.chain.kernel_mode),
            },
            drive: DriveSection {
                a1: Some(Num(self.drive.a1)),
                a2: Some(Num(self.drive.a2)),
                tau: Some(Num(self.drive.tau)),
                period: Some(Num(self.drive.period)),
                symmetric: Some(self.symmetric),
            },
            solver: SolverSection {
                h: Some(Num(s.h)),
                horizon: Some(Num(s.horizon)),
                volterra_horizon: Some(Num(s.volterra_horizon)),
                samples_per_period: Some(s.samples_per_period),
                k_initial: Some(s.k_policy.initial),
                k_step: Some(s.k_policy.step),
                k_tol: Some(s.k_policy.tol),
                k_max: Some(s.k_policy.max),
                sambe_form: Some(s.sambe_form),
                gap_tol: s.classify.gap_tol,
                w_min: Some(s.classify.w_min),
                j_loc: Some(s.classify.j_loc),
                fbs_samples: Some(s.fbs_samples),
            },
            output: OutputSection {
                dir: self.output_dir.clone(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_suffix() {
        assert_eq!("0.25pi".parse::<Num>().unwrap().0, 0.25 * PI);
        assert_eq!("pi".parse::<Num>().unwrap().0, PI);
        assert_eq!("-2PI".parse::<Num>().unwrap().0, -2.0 * PI);
        assert_eq!("0.1π".parse::<Num>().unwrap().0, 0.1 * PI);
        assert_eq!("0.5*pi".parse::<Num>().unwrap().0, 0.5 * PI);
        assert_eq!("36".parse::<Num>().unwrap().0, 36.0);
        assert!("abc".parse::<Num>().is_err());
        assert!("1e999".parse::<Num>().is_err());
    }

    #[test]
    fn scan_parse() {
        let s: Scan = "0:40:0.5".parse().unwrap();
        assert_eq!((s.start, s.stop, s.step), (0.0, 40.0, 0.5));
        assert!("0:1".parse::<Scan>().is_err());
    }

    #[test]
    fn preset_with_override() {
        let cfg = RunConfig {
            preset: Some(Preset::Fig2),
            drive: DriveSection {
                a2: Some(Num(1.5)),
                ..Default::default()
            },
            ..Default::default()
        };
        let r = cfg.resolve().unwrap();
        assert_eq!(r.drive.a2, 1.5);
        assert_eq!(r.drive.period, 0.05 * PI);
        assert_eq!(r.chain.sites, 800);
    }

    #[test]
    fn symmetric_preset_tracks_a2() {
        let cfg = RunConfig {
            preset: Some(Preset::Fig4),
            drive: DriveSection {
                a2: Some(Num(20.0)),
                ..Default::default()
            },
            ..Default::default()
        };
        let r = cfg.resolve().unwrap();
        assert_eq!((r.drive.a1, r.drive.a2), (-20.0, 20.0));
    }

    #[test]
    fn toml_sections_and_pi_strings() {
        let text = r#"
preset = "fig1"
[chain]
L = 100
g = 0.5
[drive]
a2 = 3.2
tau = "0.1pi"
T = "0.25pi"
[solver]
horizon = 50
"#;
        let cfg = parse_config_text(Path::new("run.toml"), text).unwrap();
        let r = cfg.resolve().unwrap();
        assert_eq!(r.chain.sites, 100);
        assert_eq!(r.chain.coupling, 0.5);
        assert_eq!(r.drive.tau, 0.1 * PI);
        assert_eq!(r.solver.horizon, 50.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config_text(Path::new("x.toml"), "[chain]\nsitez = 3\n").is_err());
    }

    #[test]
    fn resolved_round_trip() {
        let cfg = RunConfig {
            preset: Some(Preset::Fig5),
            ..Default::default()
        };
        let r = cfg.resolve().unwrap();
        let json = serde_json::to_string(&r.to_config()).unwrap();
        let back = parse_config_text(Path::new("c.json"), &json).unwrap();
        assert_eq!(back.resolve().unwrap(), r);
        let toml_text = toml::to_string(&r.to_config()).unwrap();
        let back = parse_config_text(Path::new("c.toml"), &toml_text).unwrap();
        assert_eq!(back.resolve().unwrap(), r);
    }

    #[test]
    fn invalid_drive_is_validation_error() {
        let cfg = RunConfig {
            drive: DriveSection {
                tau: Some(Num(1.0)),
                period: Some(Num(0.5)),
                ..Default::default()
            },
            ..Default::default()
        };
        let err = cfg.resolve().unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
