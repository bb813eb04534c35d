//! Scenario configuration, loadable from TOML.

use crate::aes::AesArchitecture;
use crate::attacks::cema::CemaConfig;
use crate::attacks::template::TemplateConfig;
use crate::attacks::tvla::TvlaConfig;
use crate::em::ProbeSite;
use crate::error::{Error, Result};
use crate::ivr::IvrParams;
use crate::leakage::{PulseKind, PulseShape};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The fixed plaintext of fixed-vs-random campaigns. Block files do not
/// record class labels; membership is recovered by comparing against this.
pub const FIXED_PLAINTEXT: [u8; 16] = [
    0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee,
    0xff,
];

/// How the AES macro is powered during a campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Direct external supply, no regulator in the package.
    Standalone,
    /// Integrated buck regulator with a fixed switching pattern.
    BaselineIvr,
    /// Integrated buck regulator with the randomized switching pattern.
    RandomizedIvr,
}

impl PowerMode {
    pub fn code(self) -> u8 {
        match self {
            PowerMode::Standalone => 0,
            PowerMode::BaselineIvr => 1,
            PowerMode::RandomizedIvr => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(PowerMode::Standalone),
            1 => Ok(PowerMode::BaselineIvr),
            2 => Ok(PowerMode::RandomizedIvr),
            other => Err(Error::Store(format!("unknown power mode code {other}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PowerMode::Standalone => "standalone",
            PowerMode::BaselineIvr => "baseline_ivr",
            PowerMode::RandomizedIvr => "randomized_ivr",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        match label {
            "standalone" => Ok(PowerMode::Standalone),
            "baseline_ivr" => Ok(PowerMode::BaselineIvr),
            "randomized_ivr" => Ok(PowerMode::RandomizedIvr),
            other => Err(Error::Config(format!("unknown power mode \"{other}\""))),
        }
    }
}

/// Digitizer and padding geometry.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CaptureConfig {
    /// Regulator integration rate in samples per second.
    pub sim_rate_hz: f64,
    /// Stored trace rate after decimation.
    pub trace_rate_hz: f64,
    /// Quiet time recorded before the first AES cycle.
    pub pre_pad_s: f64,
    /// Quiet time recorded after the last AES cycle.
    pub post_pad_s: f64,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            sim_rate_hz: 25e9,
            trace_rate_hz: 5e9,
            pre_pad_s: 40e-9,
            post_pad_s: 40e-9,
        }
    }
}

impl CaptureConfig {
    pub fn decimation(&self) -> Result<usize> {
        let ratio = self.sim_rate_hz / self.trace_rate_hz;
        let rounded = ratio.round();
        if !(ratio.is_finite() && rounded >= 1.0 && (ratio - rounded).abs() < 1e-9) {
            return Err(Error::Config(format!(
                "simulation rate {:.3e} must be an integer multiple of trace rate {:.3e}",
                self.sim_rate_hz, self.trace_rate_hz
            )));
        }
        Ok(rounded as usize)
    }
}

/// Everything needed to reproduce one measurement campaign.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub arch: AesArchitecture,
    pub mode: PowerMode,
    /// Probe placement label, e.g. "node_vss_aes" or "small_loop_loc2".
    pub probe: String,
    pub n_traces: usize,
    pub seed: u64,
    pub key: [u8; 16],
    /// Standard deviation of additive recording noise, in probe units.
    pub noise_sigma: f64,
    pub aes_clock_hz: f64,
    /// Static draw of the AES macro in amperes.
    pub quiescent_a: f64,
    pub pulse: PulseShape,
    pub capture: CaptureConfig,
    pub ivr: IvrParams,
    pub tvla: TvlaConfig,
    pub cema: CemaConfig,
    pub template: TemplateConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            arch: AesArchitecture::LowPower,
            mode: PowerMode::Standalone,
            probe: ProbeSite::NodeAesGround.label().into(),
            n_traces: 1000,
            seed: 1,
            key: [
                0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09,
                0xcf, 0x4f, 0x3c,
            ],
            noise_sigma: 2e-3,
            aes_clock_hz: 100e6,
            quiescent_a: 25e-3,
            pulse: PulseShape {
                kind: PulseKind::Triangular,
                duration: 2e-9,
                charge_per_transition: 6.25e-12,
            },
            capture: CaptureConfig::default(),
            ivr: IvrParams::default(),
            tvla: TvlaConfig::default(),
            cema: CemaConfig::default(),
            template: TemplateConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn probe_site(&self) -> Result<ProbeSite> {
        ProbeSite::parse(&self.probe)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traces == 0 {
            return Err(Error::Config("n_traces must be nonzero".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "noise sigma must be finite and nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if !(self.aes_clock_hz.is_finite() && self.aes_clock_hz > 0.0) {
            return Err(Error::Config(format!(
                "aes clock must be positive, got {}",
                self.aes_clock_hz
            )));
        }
        if !(self.quiescent_a.is_finite() && self.quiescent_a >= 0.0) {
            return Err(Error::Config(format!(
                "quiescent draw must be nonnegative, got {}",
                self.quiescent_a
            )));
        }
        self.probe_site()?;
        self.pulse.validate()?;
        self.capture.decimation()?;
        self.ivr.validate()?;
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
