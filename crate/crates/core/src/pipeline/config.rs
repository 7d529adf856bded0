use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DeviceParams, EnergyBounds, WitnessCertificate};
use crate::sim::DriftModel;

/// Full protocol configuration, one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub device: DeviceParams,
    /// Assumed energy bounds the witness is evaluated on. These are
    /// operator-chosen and may sit above the device's actual photon
    /// numbers to leave headroom for calibration uncertainty.
    pub energy: EnergyBounds,
    pub certificate: WitnessCertificate,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessForm {
    /// `gamma` multiplies joint frequencies f(x,b).
    #[default]
    Joint,
    /// `gamma` multiplies conditional frequencies f(b|x); converted on load.
    Conditional,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExtractorSeed {
    /// Operating-system entropy. Not reproducible.
    #[default]
    System,
    /// Raw bit-packed seed file.
    File { path: PathBuf },
    /// ChaCha20 expansion of a fixed value. Reproducible; for testing and
    /// replay only.
    Deterministic { value: u64 },
}

fn default_eps_extract() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Rounds per block, n.
    pub block_size: u64,
    pub blocks: usize,
    /// Master simulator seed; block seeds derive from it.
    pub seed: u64,
    #[serde(default)]
    pub drift: DriftModel,
    #[serde(default)]
    pub witness_form: WitnessForm,
    /// Certify a recorded round log instead of simulating.
    #[serde(default)]
    pub round_log: Option<PathBuf>,
    #[serde(default = "default_eps_extract")]
    pub eps_extract: f64,
    #[serde(default)]
    pub extractor_seed: ExtractorSeed,
    /// Reuse one seed for every block instead of fresh seed bits per block.
    #[serde(default)]
    pub reuse_extractor_seed: bool,
    /// Model-based probability of passing, used only to report ε'.
    #[serde(default)]
    pub pr_pass: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Newline-delimited JSON report.
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Concatenated certified bits, bit-packed.
    #[serde(default)]
    pub bits: Option<PathBuf>,
    #[serde(default)]
    pub figures_dir: Option<PathBuf>,
    #[serde(default)]
    pub figures: FigureConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FigureConfig {
    pub phase_points: usize,
    /// Monte Carlo rounds per phase point; 0 skips the simulated column.
    pub mc_rounds: u64,
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub steps: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            phase_points: 50,
            mc_rounds: 1_000_000,
            alpha_range: [0.0, 0.6],
            beta_range: [0.0, 25.0],
            steps: 61,
        }
    }
}

impl Config {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.certificate.clone().validate()?;
        if (self.device.p1() - self.energy.p1()).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "device p1 = {} disagrees with energy p1 = {}",
                self.device.p1(),
                self.energy.p1()
            )));
        }
        let p = &self.protocol;
        if p.block_size == 0 {
            return Err(Error::Config("protocol.block_size must be >= 1".into()));
        }
        if p.blocks == 0 {
            return Err(Error::Config("protocol.blocks must be >= 1".into()));
        }
        if !(p.eps_extract > 0.0 && p.eps_extract < 1.0) {
            return Err(Error::Config("protocol.eps_extract must lie in (0,1)".into()));
        }
        if let Some(pr) = p.pr_pass {
            if !(pr > 0.0 && pr <= 1.0) {
                return Err(Error::Config("protocol.pr_pass must lie in (0,1]".into()));
            }
        }
        p.drift.validate()?;
        Ok(())
    }

    /// Certificate in joint form, converting a conditional-form witness with
    /// the configured input bias.
    pub fn effective_certificate(&self) -> WitnessCertificate {
        match self.protocol.witness_form {
            WitnessForm::Joint => self.certificate.clone(),
            WitnessForm::Conditional => {
                let c = &self.certificate;
                WitnessCertificate::from_conditional(c.gamma, c.zeta, self.device.p1(), c.h, c.c, c.d, c.epsilon)
            }
        }
    }
}
