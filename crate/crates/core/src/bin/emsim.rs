//! Command-line front end: trace generation, storage, and the analysis
//! suite (leakage assessment, correlation attack, template attack, noise
//! calibration, spectrum export).

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use emsim_core::attacks::{cema, template, tvla};
use emsim_core::calibrate::{calibrate_noise, CalibrationSpec};
use emsim_core::config::{PowerMode, ScenarioConfig, FIXED_PLAINTEXT};
use emsim_core::dsp::power_spectrum;
use emsim_core::pipeline::{GenerateOptions, PlaintextPolicy, ScenarioRunner};
use emsim_core::report;
use emsim_core::store;
use emsim_core::traceset::{ClassLabel, TraceSet};
use emsim_core::waveform::{SignalUnit, WaveformTrace};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "emsim",
    about = "Electromagnetic side-channel studies of AES behind integrated regulators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Policy {
    /// Uniform random plaintexts (key-recovery campaigns).
    Random,
    /// Interleaved fixed/random plaintexts (leakage assessment).
    FixedVsRandom,
}

impl From<Policy> for PlaintextPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Random => PlaintextPolicy::Random,
            Policy::FixedVsRandom => PlaintextPolicy::FixedVsRandom,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a scenario configuration populated with defaults.
    InitConfig {
        /// Output TOML path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a campaign and store it as a trace file.
    Simulate {
        /// Scenario TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output trace file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "random")]
        policy: Policy,
        /// Override the scenario trace count.
        #[arg(long)]
        n_traces: Option<usize>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the probe site label.
        #[arg(long)]
        probe: Option<String>,
        /// Override the power mode (standalone, baseline_ivr, randomized_ivr).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Fixed-vs-random leakage assessment of a stored campaign.
    Tvla {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Per-cell CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Correlation key-recovery attack against a stored campaign.
    Cema {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the attacked key byte.
        #[arg(long)]
        byte: Option<usize>,
        /// Checkpoint CSV output path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Template-matching attack (carrier subtraction before correlation).
    Template {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint CSV of the post-subtraction attack.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Find the recording-noise level that puts disclosure in a target window.
    Calibrate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Smallest acceptable disclosure count.
        #[arg(long, default_value_t = 600)]
        target_lo: usize,
        /// One past the largest acceptable disclosure count.
        #[arg(long, default_value_t = 1800)]
        target_hi: usize,
        /// Reference campaign size.
        #[arg(long, default_value_t = 6000)]
        n_traces: usize,
        /// Write the scenario back with the calibrated noise level.
        #[arg(long)]
        write_config: Option<PathBuf>,
    },
    /// Averaged power spectrum of stored traces.
    Spectrum {
        #[arg(long)]
        traces: PathBuf,
        /// CSV output path.
        #[arg(long)]
        csv: PathBuf,
        /// Number of traces averaged.
        #[arg(long, default_value_t = 16)]
        count: usize,
    },
    /// Header and shape of a stored trace file.
    Info {
        #[arg(long)]
        traces: PathBuf,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => {
            ScenarioConfig::load(p).with_context(|| format!("loading scenario {}", p.display()))
        }
        None => Ok(ScenarioConfig::default()),
    }
}

/// Trace files do not carry class labels; fixed-class membership is
/// recovered by matching plaintexts against the standard fixed input.
fn relabel(set: TraceSet) -> Result<TraceSet> {
    let labels: Vec<ClassLabel> = set
        .plaintexts()
        .iter()
        .map(|pt| {
            if *pt == FIXED_PLAINTEXT {
                ClassLabel::Fixed
            } else {
                ClassLabel::Random
            }
        })
        .collect();
    let fixed = labels.iter().filter(|&&l| l == ClassLabel::Fixed).count();
    if fixed == 0 || fixed == labels.len() {
        bail!(
            "campaign is single-class ({} of {} fixed); capture with --policy fixed-vs-random",
            fixed,
            labels.len()
        );
    }
    Ok(set.with_labels(labels)?)
}

fn open_csv(path: &Path) -> Result<BufWriter<File>> {
    let file =
        File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::InitConfig { out } => {
            let cfg = ScenarioConfig::default();
            std::fs::write(&out, cfg.to_toml_string()?)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote default scenario to {}", out.display());
        }
        Command::Simulate {
            config,
            out,
            policy,
            n_traces,
            seed,
            probe,
            mode,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(n) = n_traces {
                cfg.n_traces = n;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = probe {
                cfg.probe = p;
            }
            if let Some(m) = mode {
                cfg.mode = PowerMode::parse(&m)?;
            }
            let site = cfg.probe_site()?;
            let runner = ScenarioRunner::new(cfg.clone())?;
            let set = runner.generate(&GenerateOptions::new(policy.into()))?;
            store::save(&out, &set, cfg.mode, site)?;
            println!(
                "{}: {} traces x {} samples at {:.3e} Sa/s, probe {}, mode {}",
                out.display(),
                set.n_traces(),
                set.n_samples(),
                set.sample_rate(),
                site.label(),
                cfg.mode.label()
            );
        }
        Command::Tvla {
            traces,
            config,
            csv,
        } => {
            let cfg = load_config(&config)?;
            let (set, _, _) = store::load(&traces)?;
            let set = relabel(set)?;
            let report = tvla::run(&set, &cfg.tvla)?;
            if let Some(path) = csv {
                report::tvla_csv(&mut open_csv(&path)?, &report)?;
            }
            print!("{}", report::tvla_summary(&report));
        }
        Command::Cema {
            traces,
            config,
            byte,
            csv,
        } => {
            let cfg = load_config(&config)?;
            let mut attack = cfg.cema.clone();
            if let Some(b) = byte {
                attack.byte_idx = b;
            }
            let (set, _, _) = store::load(&traces)?;
            let report = cema::run(&set, &attack)?;
            if let Some(path) = csv {
                report::cema_csv(&mut open_csv(&path)?, &report)?;
            }
            print!("{}", report::cema_summary(&report));
            let mtd = cema::mtd(&set, &attack)?;
            print!("{}", report::mtd_summary(&mtd));
        }
        Command::Template {
            traces,
            config,
            csv,
        } => {
            let cfg = load_config(&config)?;
            let (set, _, _) = store::load(&traces)?;
            let report = template::run(&set, &cfg.template)?;
            if let Some(path) = csv {
                report::cema_csv(&mut open_csv(&path)?, &report.cema)?;
            }
            print!("{}", report::template_summary(&report));
        }
        Command::Calibrate {
            config,
            target_lo,
            target_hi,
            n_traces,
            write_config,
        } => {
            let scenario = load_config(&config)?;
            let mut spec = CalibrationSpec::new(scenario.clone(), scenario.cema.clone());
            spec.target_mtd = target_lo..target_hi;
            spec.n_traces = n_traces;
            let outcome = calibrate_noise(&spec)?;
            for step in &outcome.steps {
                match step.mtd {
                    Some(m) => println!("sigma {:.4e}: disclosure at {m}", step.sigma),
                    None => println!("sigma {:.4e}: not reached", step.sigma),
                }
            }
            println!(
                "calibrated sigma {:.4e} (disclosure at {} traces)",
                outcome.sigma, outcome.mtd
            );
            if let Some(path) = write_config {
                let mut updated = scenario;
                updated.noise_sigma = outcome.sigma;
                std::fs::write(&path, updated.to_toml_string()?)
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("wrote calibrated scenario to {}", path.display());
            }
        }
        Command::Spectrum { traces, csv, count } => {
            let (set, _, _) = store::load(&traces)?;
            let n = count.min(set.n_traces());
            if n == 0 {
                bail!("trace file is empty");
            }
            let t = set.n_samples();
            let mut avg = vec![0.0; t / 2 + 1];
            let mut freqs = Vec::new();
            for i in 0..n {
                let row = WaveformTrace::new(
                    set.trace(i).to_vec(),
                    set.sample_rate(),
                    0.0,
                    SignalUnit::ProbeUnits,
                )?;
                let (f, p) = power_spectrum(&row);
                if freqs.is_empty() {
                    freqs = f;
                }
                for (a, v) in avg.iter_mut().zip(&p) {
                    *a += v / n as f64;
                }
            }
            report::spectrum_csv(&mut open_csv(&csv)?, &freqs, &avg)?;
            println!("wrote {} spectral bins from {} traces", freqs.len(), n);
        }
        Command::Info { traces } => {
            let (set, mode, probe) = store::load(&traces)?;
            println!(
                "{} traces x {} samples at {:.3e} Sa/s",
                set.n_traces(),
                set.n_samples(),
                set.sample_rate()
            );
            println!("mode {}, probe {}", mode.label(), probe.label());
            println!(
                "key {}",
                set.key()
                    .map_or("absent".to_string(), |k| k
                        .iter()
                        .map(|b| format!("{b:02x}"))
                        .collect::<String>())
            );
        }
    }
    Ok(())
}
