//! Near-field probe models.
//!
//! The package is reduced to five current-carrying branches. Node probes
//! report a bandwidth-limited, scaled copy of one branch current, standing
//! in for a contact measurement at a pin. Loop probes respond to the time
//! derivative of every branch current weighted by a mutual coupling, which
//! is how a small magnetic loop above the package sees the die.

use crate::dsp::{butter_bandpass, butter_lowpass, single_pole_highpass, SosFilter};
use crate::error::{Error, Result};
use crate::waveform::{SignalUnit, WaveformTrace};
use serde::{Deserialize, Serialize};

/// Currents of the package branches, on one common sample grid.
#[derive(Clone, Debug)]
pub struct BranchSet {
    /// Regulator input draw from the external rail.
    pub ivr_input: WaveformTrace,
    /// Inductor (bondwire) current.
    pub inductor: WaveformTrace,
    /// External AES supply pin; only bonded in the standalone arrangement.
    pub aes_supply: WaveformTrace,
    /// AES ground return bondwire.
    pub aes_ground: WaveformTrace,
    /// Output capacitor loop.
    pub output_loop: WaveformTrace,
}

impl BranchSet {
    pub fn validate(&self) -> Result<()> {
        let first = &self.ivr_input;
        for (name, b) in self.branches() {
            if b.len() != first.len()
                || (b.sample_rate() - first.sample_rate()).abs()
                    > 1e-9 * first.sample_rate()
            {
                return Err(Error::GridMismatch(format!(
                    "branch {name} has {} samples at {:.3e} Sa/s, expected {} at {:.3e} Sa/s",
                    b.len(),
                    b.sample_rate(),
                    first.len(),
                    first.sample_rate()
                )));
            }
        }
        Ok(())
    }

    pub fn branches(&self) -> [(&'static str, &WaveformTrace); 5] {
        [
            ("ivr_input", &self.ivr_input),
            ("inductor", &self.inductor),
            ("aes_supply", &self.aes_supply),
            ("aes_ground", &self.aes_ground),
            ("output_loop", &self.output_loop),
        ]
    }

    pub fn sample_rate(&self) -> f64 {
        self.ivr_input.sample_rate()
    }

    pub fn len(&self) -> usize {
        self.ivr_input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ivr_input.is_empty()
    }
}

/// Mutual coupling of a loop probe to each branch, in henries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchCouplings {
    pub ivr_input: f64,
    pub inductor: f64,
    pub aes_supply: f64,
    pub aes_ground: f64,
    pub output_loop: f64,
}

impl BranchCouplings {
    fn as_array(&self) -> [f64; 5] {
        [
            self.ivr_input,
            self.inductor,
            self.aes_supply,
            self.aes_ground,
            self.output_loop,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Node,
    SmallLoop,
    LargeLoop,
}

/// Optional package-resonance coloration: a second-order peak added on top
/// of the flat response.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResonanceSpec {
    pub center_hz: f64,
    pub q: f64,
    pub gain: f64,
}

/// Electrical model of one probe.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// Loop-probe couplings; ignored by node probes.
    pub couplings: BranchCouplings,
    /// Node-probe transimpedance in probe units per ampere.
    pub node_scale: f64,
    /// First-order AC-coupling corner in hertz.
    pub low_cutoff_hz: f64,
    /// Butterworth low-pass corner in hertz; skipped when it exceeds what
    /// the sample rate can represent.
    pub high_cutoff_hz: f64,
    pub high_order: usize,
    /// Disabled by default.
    pub resonance: Option<ResonanceSpec>,
}

impl ProbeConfig {
    fn validate(&self) -> Result<()> {
        if !(self.low_cutoff_hz >= 0.0 && self.high_cutoff_hz > 0.0) {
            return Err(Error::Config("probe cutoffs must be positive".into()));
        }
        if self.high_order == 0 {
            return Err(Error::Config("probe low-pass order must be nonzero".into()));
        }
        Ok(())
    }

    fn high_cutoff_active(&self, rate: f64) -> bool {
        self.high_cutoff_hz < 0.45 * rate
    }

    fn build_filters(&self, rate: f64) -> Result<Vec<SosFilter>> {
        let mut filters = Vec::new();
        if self.low_cutoff_hz > 0.0 {
            filters.push(single_pole_highpass(self.low_cutoff_hz, rate)?);
        }
        if self.high_cutoff_active(rate) {
            filters.push(butter_lowpass(self.high_order, self.high_cutoff_hz, rate)?);
        }
        Ok(filters)
    }

    fn apply(&self, mut samples: Vec<f64>, rate: f64) -> Result<Vec<f64>> {
        for f in self.build_filters(rate)? {
            samples = f.filter(&samples);
        }
        if let Some(res) = self.resonance {
            let bw = res.center_hz / res.q;
            let peak = butter_bandpass(
                2,
                res.center_hz - bw / 2.0,
                res.center_hz + bw / 2.0,
                rate,
            )?;
            let colored = peak.filter(&samples);
            for (s, c) in samples.iter_mut().zip(colored) {
                *s += res.gain * c;
            }
        }
        Ok(samples)
    }

    /// Magnitude of the probe's filter chain at `freq`.
    pub fn response(&self, freq: f64, rate: f64) -> f64 {
        let mut mag = 1.0;
        if self.low_cutoff_hz > 0.0 {
            if let Ok(f) = single_pole_highpass(self.low_cutoff_hz, rate) {
                mag *= f.response(freq, rate).norm();
            }
        }
        if self.high_cutoff_active(rate) {
            if let Ok(f) = butter_lowpass(self.high_order, self.high_cutoff_hz, rate) {
                mag *= f.response(freq, rate).norm();
            }
        }
        mag
    }
}

/// Central-difference time derivative; one-sided at the ends.
fn derivative(x: &[f64], rate: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    out[0] = (x[1] - x[0]) * rate;
    out[n - 1] = (x[n - 1] - x[n - 2]) * rate;
    for i in 1..n - 1 {
        out[i] = (x[i + 1] - x[i - 1]) * rate * 0.5;
    }
    out
}

/// Contact measurement of one branch current.
pub fn node_probe(branch: &WaveformTrace, probe: &ProbeConfig) -> Result<WaveformTrace> {
    probe.validate()?;
    let rate = branch.sample_rate();
    let scaled: Vec<f64> = branch.samples().iter().map(|s| s * probe.node_scale).collect();
    WaveformTrace::new(
        probe.apply(scaled, rate)?,
        rate,
        branch.start_time(),
        SignalUnit::ProbeUnits,
    )
}

/// Inductive pickup of all branches: coupling-weighted sum of current
/// derivatives through the probe's bandwidth chain.
pub fn loop_probe(branches: &BranchSet, probe: &ProbeConfig) -> Result<WaveformTrace> {
    probe.validate()?;
    branches.validate()?;
    let rate = branches.sample_rate();
    let couplings = probe.couplings.as_array();
    let mut acc = vec![0.0; branches.len()];
    for ((_, branch), c) in branches.branches().iter().zip(couplings) {
        if c == 0.0 {
            continue;
        }
        for (a, d) in acc.iter_mut().zip(derivative(branch.samples(), rate)) {
            *a += c * d;
        }
    }
    WaveformTrace::new(
        probe.apply(acc, rate)?,
        rate,
        branches.ivr_input.start_time(),
        SignalUnit::ProbeUnits,
    )
}

/// Measurement positions with calibrated coupling profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSite {
    NodeIvrInput,
    NodeInductor,
    NodeAesSupply,
    NodeAesGround,
    SmallLoopLoc1,
    SmallLoopLoc2,
    LargeLoopLoc1,
}

impl ProbeSite {
    pub const ALL: [ProbeSite; 7] = [
        ProbeSite::NodeIvrInput,
        ProbeSite::NodeInductor,
        ProbeSite::NodeAesSupply,
        ProbeSite::NodeAesGround,
        ProbeSite::SmallLoopLoc1,
        ProbeSite::SmallLoopLoc2,
        ProbeSite::LargeLoopLoc1,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ProbeSite::NodeIvrInput => "node_vin_ivr",
            ProbeSite::NodeInductor => "node_vind",
            ProbeSite::NodeAesSupply => "node_vdd_aes",
            ProbeSite::NodeAesGround => "node_vss_aes",
            ProbeSite::SmallLoopLoc1 => "small_loop_loc1",
            ProbeSite::SmallLoopLoc2 => "small_loop_loc2",
            ProbeSite::LargeLoopLoc1 => "large_loop_loc1",
        }
    }

    pub fn parse(label: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.label() == label)
            .ok_or_else(|| Error::UnknownPlacement(label.to_string()))
    }

    /// Branch a node probe contacts, if this is a node site.
    pub fn node_branch(self) -> Option<fn(&BranchSet) -> &WaveformTrace> {
        match self {
            ProbeSite::NodeIvrInput => Some(|b| &b.ivr_input),
            ProbeSite::NodeInductor => Some(|b| &b.inductor),
            ProbeSite::NodeAesSupply => Some(|b| &b.aes_supply),
            ProbeSite::NodeAesGround => Some(|b| &b.aes_ground),
            _ => None,
        }
    }
}

/// Probe configuration for a named measurement position.
pub fn placement_profile(label: &str) -> Result<ProbeConfig> {
    let site = ProbeSite::parse(label)?;
    Ok(site_profile(site))
}

/// Calibrated probe profiles. Location 1 hovers over the AES corner of the
/// die, location 2 over the regulator passives; the large loop spans the
/// whole package and trades bandwidth for coverage.
pub fn site_profile(site: ProbeSite) -> ProbeConfig {
    let node = ProbeConfig {
        kind: ProbeKind::Node,
        couplings: BranchCouplings::default(),
        node_scale: 1.0,
        low_cutoff_hz: 100e3,
        high_cutoff_hz: 3e9,
        high_order: 2,
        resonance: None,
    };
    match site {
        ProbeSite::NodeIvrInput
        | ProbeSite::NodeInductor
        | ProbeSite::NodeAesSupply
        | ProbeSite::NodeAesGround => node,
        ProbeSite::SmallLoopLoc1 => ProbeConfig {
            kind: ProbeKind::SmallLoop,
            couplings: BranchCouplings {
                ivr_input: 0.2e-9,
                inductor: 0.3e-9,
                aes_supply: 1.0e-9,
                aes_ground: 1.0e-9,
                output_loop: 0.4e-9,
            },
            node_scale: 0.0,
            low_cutoff_hz: 1e6,
            high_cutoff_hz: 3e9,
            high_order: 2,
            resonance: None,
        },
        ProbeSite::SmallLoopLoc2 => ProbeConfig {
            kind: ProbeKind::SmallLoop,
            couplings: BranchCouplings {
                ivr_input: 0.6e-9,
                inductor: 1.5e-9,
                aes_supply: 0.3e-9,
                aes_ground: 0.3e-9,
                output_loop: 0.3e-9,
            },
            node_scale: 0.0,
            low_cutoff_hz: 1e6,
            high_cutoff_hz: 3e9,
            high_order: 2,
            resonance: None,
        },
        ProbeSite::LargeLoopLoc1 => ProbeConfig {
            kind: ProbeKind::LargeLoop,
            couplings: BranchCouplings {
                ivr_input: 0.8e-9,
                inductor: 0.8e-9,
                aes_supply: 0.8e-9,
                aes_ground: 0.8e-9,
                output_loop: 0.8e-9,
            },
            node_scale: 0.0,
            low_cutoff_hz: 1e6,
            high_cutoff_hz: 35e6,
            high_order: 2,
            resonance: None,
        },
    }
}

/// Runs the probe belonging to `site` over a branch set.
pub fn probe_site(branches: &BranchSet, site: ProbeSite) -> Result<WaveformTrace> {
    let cfg = site_profile(site);
    match site.node_branch() {
        Some(select) => node_probe(select(branches), &cfg),
        None => loop_probe(branches, &cfg),
    }
}
