//! End-to-end trace generation.
//!
//! One simulated recording runs: draw a plaintext, encrypt for activity,
//! shape the load-current waveform at the integration rate, route it through
//! the power-delivery branches of the selected package, apply the probe,
//! decimate to the stored rate, and add recording noise. All randomness is
//! drawn from per-trace seeded streams so campaigns replay bit-identically.

use crate::aes::{self, AesArchitecture};
use crate::config::{PowerMode, ScenarioConfig, FIXED_PLAINTEXT};
use crate::dsp::decimate;
use crate::em::{self, BranchCouplings, BranchSet, ProbeConfig, ProbeSite};
use crate::error::{Error, Result};
use crate::ivr::{IvrMode, IvrSimulator};
use crate::leakage::{activity_to_current, add_noise, SynthesisParams};
use crate::traceset::{ClassLabel, TraceSet, TraceSetBuilder};
use crate::waveform::{SignalUnit, WaveformTrace};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::ops::Range;

/// How plaintexts are drawn over a campaign.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaintextPolicy {
    /// Uniform random plaintext per trace (key-recovery campaigns).
    Random,
    /// Interleaved fixed/random classes (leakage assessment campaigns).
    FixedVsRandom,
}

/// Campaign generation knobs beyond the scenario config.
#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub policy: PlaintextPolicy,
    /// Stored-sample window kept from each trace; `None` keeps everything.
    pub keep: Option<Range<usize>>,
    /// Probe sites recorded from the shared branch simulation; `None` uses
    /// the scenario's probe.
    pub sites: Option<Vec<ProbeSite>>,
}

impl GenerateOptions {
    pub fn new(policy: PlaintextPolicy) -> Self {
        Self {
            policy,
            keep: None,
            sites: None,
        }
    }
}

/// Field-coupling multipliers of the die-internal current loops, by package.
///
/// In the regulator packages the AES supply loop closes on die through the
/// output capacitor, so only a small fraction of its area is visible to an
/// external magnetic probe; in the standalone package the same current runs
/// out through board traces. Contact (node) probes are unaffected.
fn loop_exposure(mode: PowerMode) -> BranchCouplings {
    match mode {
        PowerMode::Standalone => BranchCouplings {
            ivr_input: 1.0,
            inductor: 1.0,
            aes_supply: 1.0,
            aes_ground: 1.0,
            output_loop: 1.0,
        },
        PowerMode::BaselineIvr | PowerMode::RandomizedIvr => BranchCouplings {
            ivr_input: 1.0,
            inductor: 1.0,
            aes_supply: 0.0,
            aes_ground: 0.01,
            output_loop: 0.05,
        },
    }
}

fn apply_exposure(mut probe: ProbeConfig, mode: PowerMode) -> ProbeConfig {
    let e = loop_exposure(mode);
    probe.couplings.ivr_input *= e.ivr_input;
    probe.couplings.inductor *= e.inductor;
    probe.couplings.aes_supply *= e.aes_supply;
    probe.couplings.aes_ground *= e.aes_ground;
    probe.couplings.output_loop *= e.output_loop;
    probe
}

/// Stored-trace sample range covering the given AES clock cycles, padded by
/// `margin_s` on both sides. Cycle positions assume zero clock phase; the
/// margin must absorb the per-trace phase draw of up to one clock period.
pub fn cycle_window(cfg: &ScenarioConfig, cycles: Range<usize>, margin_s: f64) -> Range<usize> {
    let t_clk = 1.0 / cfg.aes_clock_hz;
    let rate = cfg.capture.trace_rate_hz;
    let t0 = cfg.capture.pre_pad_s + cycles.start as f64 * t_clk - margin_s;
    let t1 = cfg.capture.pre_pad_s + cycles.end as f64 * t_clk + t_clk + margin_s;
    let start = (t0 * rate).floor().max(0.0) as usize;
    let end = (t1 * rate).ceil() as usize;
    start..end
}

struct SimulatedTrace {
    plaintext: [u8; 16],
    ciphertext: [u8; 16],
    label: Option<ClassLabel>,
    branches: BranchSet,
    noise_seed: u64,
}

/// Drives full campaigns for one scenario.
pub struct ScenarioRunner {
    cfg: ScenarioConfig,
    decimation: usize,
    /// Settled regulator snapshot shared by every trace; absent when the
    /// AES macro runs from the external supply.
    regulator: Option<IvrSimulator>,
}

impl ScenarioRunner {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let decimation = cfg.capture.decimation()?;
        let regulator = match cfg.mode {
            PowerMode::Standalone => None,
            PowerMode::BaselineIvr | PowerMode::RandomizedIvr => {
                let sim_rate = cfg.ivr.stage.sim_rate();
                if (sim_rate - cfg.capture.sim_rate_hz).abs() > 1e-6 * sim_rate {
                    return Err(Error::GridMismatch(format!(
                        "regulator integrates at {:.6e} Sa/s but capture expects {:.6e} Sa/s",
                        sim_rate, cfg.capture.sim_rate_hz
                    )));
                }
                Some(IvrSimulator::settle(
                    ivr_mode(cfg.mode),
                    &cfg.ivr,
                    cfg.quiescent_a,
                    cfg.seed,
                )?)
            }
        };
        Ok(Self {
            cfg,
            decimation,
            regulator,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// Generates the campaign for the scenario's own probe site.
    pub fn generate(&self, options: &GenerateOptions) -> Result<TraceSet> {
        let sites = match &options.sites {
            Some(s) => s.clone(),
            None => vec![self.cfg.probe_site()?],
        };
        let mut sets = self.generate_sites(options, &sites)?;
        Ok(sets.remove(0))
    }

    /// Generates one campaign per probe site from a single pass of the
    /// underlying power simulation.
    pub fn generate_sites(
        &self,
        options: &GenerateOptions,
        sites: &[ProbeSite],
    ) -> Result<Vec<TraceSet>> {
        if sites.is_empty() {
            return Err(Error::Config("no probe sites requested".into()));
        }
        let probes: Vec<ProbeConfig> = sites
            .iter()
            .map(|&s| apply_exposure(em::site_profile(s), self.cfg.mode))
            .collect();
        let mut builders: Vec<TraceSetBuilder> = sites
            .iter()
            .map(|_| {
                let mut b = TraceSetBuilder::new(self.cfg.capture.trace_rate_hz);
                b.set_key(self.cfg.key);
                b
            })
            .collect();

        for i in 0..self.cfg.n_traces {
            let sim = self.simulate_trace(i, options.policy)?;
            for ((site, probe), builder) in sites.iter().zip(&probes).zip(&mut builders) {
                let raw = match site.node_branch() {
                    Some(select) => em::node_probe(select(&sim.branches), probe)?,
                    None => em::loop_probe(&sim.branches, probe)?,
                };
                let stored = decimate(&raw, self.decimation)?;
                let stored = match &options.keep {
                    Some(keep) => {
                        if keep.end > stored.len() || keep.start >= keep.end {
                            return Err(Error::Config(format!(
                                "keep window {}..{} outside trace of {} samples",
                                keep.start,
                                keep.end,
                                stored.len()
                            )));
                        }
                        stored.slice(keep.start, keep.end)?
                    }
                    None => stored,
                };
                let site_seed = sim.noise_seed ^ ((site_code(*site) as u64) << 56);
                let noisy = add_noise(&stored, self.cfg.noise_sigma, site_seed)?;
                builder.push(&noisy, sim.plaintext, sim.ciphertext, sim.label)?;
            }
        }
        builders.into_iter().map(|b| b.finish()).collect()
    }

    /// One recording's branch currents at the stored rate, plus crypto data.
    fn simulate_trace(&self, index: usize, policy: PlaintextPolicy) -> Result<SimulatedTrace> {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1 + index as u64);

        let (plaintext, label) = match policy {
            PlaintextPolicy::Random => {
                let mut pt = [0u8; 16];
                rng.fill_bytes(&mut pt);
                (pt, None)
            }
            PlaintextPolicy::FixedVsRandom => {
                if index % 2 == 0 {
                    // The stream still consumes a draw so both classes see
                    // identical downstream randomness.
                    let mut pt = [0u8; 16];
                    rng.fill_bytes(&mut pt);
                    (FIXED_PLAINTEXT, Some(ClassLabel::Fixed))
                } else {
                    let mut pt = [0u8; 16];
                    rng.fill_bytes(&mut pt);
                    (pt, Some(ClassLabel::Random))
                }
            }
        };

        let (ciphertext, activity) = match cfg.arch {
            AesArchitecture::HighPerformance => aes::encrypt_hp(&cfg.key, &plaintext),
            AesArchitecture::LowPower => aes::encrypt_lp(&cfg.key, &plaintext),
        };

        let clock_period = 1.0 / cfg.aes_clock_hz;
        let clock_phase = rng.random::<f64>() * clock_period;
        let synth = SynthesisParams {
            sample_rate: cfg.capture.sim_rate_hz,
            clock_hz: cfg.aes_clock_hz,
            clock_phase,
            quiescent: cfg.quiescent_a,
            pre_pad: cfg.capture.pre_pad_s,
            post_pad: cfg.capture.post_pad_s,
        };
        let load = activity_to_current(&activity, &cfg.pulse, &synth)?;

        let preroll = match cfg.mode {
            // Measurement trigger and switching clock share a reference, so
            // the baseline ripple repeats identically every recording.
            PowerMode::Standalone | PowerMode::BaselineIvr => 0u64,
            // The randomizer pattern free-runs against the trigger.
            PowerMode::RandomizedIvr => {
                let pattern_steps = cfg.ivr.randomizer.pattern_cycles()
                    * cfg.ivr.stage.steps_per_cycle as u64;
                rng.random_range(0..pattern_steps)
            }
        };
        let noise_seed: u64 = rng.random();

        let zero = WaveformTrace::constant(
            0.0,
            load.len(),
            load.sample_rate(),
            load.start_time(),
            SignalUnit::Amperes,
        )?;
        let branches = match cfg.mode {
            PowerMode::Standalone => BranchSet {
                ivr_input: zero.clone(),
                inductor: zero.clone(),
                aes_supply: load.clone(),
                aes_ground: load,
                output_loop: zero,
            },
            PowerMode::BaselineIvr | PowerMode::RandomizedIvr => {
                let run = self
                    .regulator
                    .as_ref()
                    .expect("regulator settled for IVR modes")
                    .run_window(&load, preroll)?;
                let cap_samples: Vec<f64> = run
                    .inductor_current
                    .samples()
                    .iter()
                    .zip(load.samples())
                    .map(|(il, ld)| il - ld)
                    .collect();
                let output_loop = WaveformTrace::new(
                    cap_samples,
                    load.sample_rate(),
                    load.start_time(),
                    SignalUnit::Amperes,
                )?;
                BranchSet {
                    ivr_input: run.input_current,
                    inductor: run.inductor_current,
                    aes_supply: zero,
                    aes_ground: load,
                    output_loop,
                }
            }
        };

        Ok(SimulatedTrace {
            plaintext,
            ciphertext,
            label,
            branches,
            noise_seed,
        })
    }
}

fn ivr_mode(mode: PowerMode) -> IvrMode {
    match mode {
        PowerMode::BaselineIvr => IvrMode::Baseline,
        PowerMode::RandomizedIvr => IvrMode::Randomized,
        PowerMode::Standalone => IvrMode::Baseline,
    }
}

fn site_code(site: ProbeSite) -> u8 {
    ProbeSite::ALL
        .iter()
        .position(|&s| s == site)
        .expect("site listed in ALL") as u8
}
