//! Named parameter sets for the six figure families.
//!
//! Energies are in units of `J` and times in `1/J`, with `J = 1`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainSpec, KernelMode, StepDrive};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Fig1,
        Preset::Fig2,
        Preset::Fig3,
        Preset::Fig4,
        Preset::Fig5,
        Preset::Fig6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
        }
    }

    /// Resolved parameters.
    pub fn params(self) -> PresetParams {
        let chain = ChainSpec {
            sites: 800,
            hopping: 1.0,
            coupling: 1.0,
            field: 20.0,
            kernel_mode: KernelMode::OpenChainExact,
        };
        let base = |a1: f64, a2: f64, tau: f64, period: f64| StepDrive { a1, a2, tau, period };
        let (drive, horizon, symmetric) = match self {
            Preset::Fig1 => (base(0.0, 0.0, 0.1 * PI, 0.25 * PI), 100.0, false),
            Preset::Fig2 => (base(0.0, 36.0, 0.02 * PI, 0.05 * PI), 100.0, false),
            Preset::Fig3 => (base(0.0, 3.2, 0.1 * PI, 0.25 * PI), 100.0, false),
            Preset::Fig4 => (base(-10.0, 10.0, 0.2 * PI, 0.4 * PI), 100.0, true),
            Preset::Fig5 => (base(0.0, 3.2, 0.1 * PI, 0.25 * PI), 100.0, false),
            Preset::Fig6 => (base(0.0, 3.2, 0.1 * PI, 0.25 * PI), 100.0, false),
        };
        PresetParams {
            preset: self,
            chain,
            drive,
            horizon,
            symmetric,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::PlanInvalid(format!("unknown preset '{s}' (expected fig1..fig6)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetParams {
    pub preset: Preset,
    pub chain: ChainSpec,
    pub drive: StepDrive,
    /// Default evolution horizon.
    pub horizon: f64,
    /// `a₁ = −a₂` is maintained when `a₂` is overridden.
    pub symmetric: bool,
}

impl PresetParams {
    /// Sets `a₂`, keeping `a₁ = −a₂` for symmetric presets.
    pub fn with_a2(mut self, a2: f64) -> Self {
        self.drive.a2 = a2;
        if self.symmetric {
            self.drive.a1 = -a2;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in Preset::ALL {
            let params = p.params();
            params.chain.validate().unwrap();
            params.drive.validate().unwrap();
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn symmetric_override() {
        let p = Preset::Fig4.params().with_a2(20.0);
        assert_eq!((p.drive.a1, p.drive.a2), (-20.0, 20.0));
        let q = Preset::Fig1.params().with_a2(5.0);
        assert_eq!((q.drive.a1, q.drive.a2), (0.0, 5.0));
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!("fig7".parse::<Preset>().is_err());
    }
}
