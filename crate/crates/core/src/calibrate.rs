//! Recording-noise calibration.
//!
//! Cross-mode comparisons only mean something when every campaign shares the
//! same measurement floor. This module picks that floor empirically: generate
//! one noiseless reference campaign, overlay synthetic recording noise at
//! increasing levels, and keep the level at which key recovery needs a trace
//! count inside a requested window.

use crate::attacks::cema::{self, CemaConfig};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::pipeline::{GenerateOptions, PlaintextPolicy, ScenarioRunner};
use crate::traceset::TraceSet;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::ops::Range;

/// Adds independent Gaussian noise to every sample of a copy of `set`.
/// Row `i` draws from stream `1 + i` of a generator seeded with `seed`, so
/// overlays replay exactly.
pub fn overlay_noise(set: &TraceSet, sigma: f64, seed: u64) -> Result<TraceSet> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!(
            "noise level must be finite and non-negative, got {sigma}"
        )));
    }
    let mut traces = set.traces().to_owned();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        for (i, mut row) in traces.rows_mut().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1 + i as u64);
            for v in row.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    let mut out = TraceSet::new(
        traces,
        set.sample_rate(),
        set.plaintexts().to_vec(),
        set.ciphertexts().to_vec(),
    )?;
    if let Some(key) = set.key() {
        out = out.with_key(key);
    }
    if let Some(labels) = set.labels() {
        out = out.with_labels(labels.to_vec())?;
    }
    Ok(out)
}

/// What to sweep and where the disclosure count should land.
#[derive(Clone, Debug)]
pub struct CalibrationSpec {
    pub scenario: ScenarioConfig,
    pub cema: CemaConfig,
    /// Stored-sample window kept from each generated trace.
    pub keep: Option<Range<usize>>,
    /// Acceptable measurements-to-disclosure, half-open.
    pub target_mtd: Range<usize>,
    /// Size of the noiseless reference campaign.
    pub n_traces: usize,
    /// Ascending noise levels tried before bisection, in probe units.
    pub sigma_grid: Vec<f64>,
    /// Log-space bisection steps once the target is bracketed.
    pub refine_iters: usize,
}

impl CalibrationSpec {
    pub fn new(scenario: ScenarioConfig, cema: CemaConfig) -> Self {
        let sigma_grid = (0..9).map(|i| 1e-4 * 10f64.powf(i as f64 / 2.0)).collect();
        Self {
            scenario,
            cema,
            keep: None,
            target_mtd: 600..1800,
            n_traces: 6000,
            sigma_grid,
            refine_iters: 10,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CalibrationStep {
    pub sigma: f64,
    pub mtd: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CalibrationOutcome {
    pub sigma: f64,
    pub mtd: usize,
    /// Every level evaluated, in evaluation order.
    pub steps: Vec<CalibrationStep>,
}

/// Generates the reference campaign for `spec` and sweeps the noise level.
pub fn calibrate_noise(spec: &CalibrationSpec) -> Result<CalibrationOutcome> {
    let mut scenario = spec.scenario.clone();
    scenario.noise_sigma = 0.0;
    scenario.n_traces = spec.n_traces;
    let runner = ScenarioRunner::new(scenario)?;
    let mut options = GenerateOptions::new(PlaintextPolicy::Random);
    options.keep = spec.keep.clone();
    let clean = runner.generate(&options)?;
    calibrate_noise_on(
        &clean,
        &spec.cema,
        spec.target_mtd.clone(),
        &spec.sigma_grid,
        spec.refine_iters,
        spec.scenario.seed,
    )
}

/// Noise sweep against an existing noiseless campaign.
pub fn calibrate_noise_on(
    clean: &TraceSet,
    cema: &CemaConfig,
    target: Range<usize>,
    sigma_grid: &[f64],
    refine_iters: usize,
    seed: u64,
) -> Result<CalibrationOutcome> {
    if target.is_empty() {
        return Err(Error::Calibration("empty target window".into()));
    }
    if sigma_grid.is_empty() {
        return Err(Error::Calibration("empty noise grid".into()));
    }
    if sigma_grid.windows(2).any(|w| w[0] >= w[1]) || sigma_grid[0] <= 0.0 {
        return Err(Error::Calibration(
            "noise grid must be positive and strictly increasing".into(),
        ));
    }
    let budget = clean.n_traces();
    if !cema
        .checkpoints
        .iter()
        .any(|&c| target.contains(&c) && c <= budget)
    {
        return Err(Error::Calibration(format!(
            "no ranking checkpoint inside the target window {}..{}",
            target.start, target.end
        )));
    }

    let mut steps = Vec::new();
    let eval = |sigma: f64, steps: &mut Vec<CalibrationStep>| -> Result<Option<usize>> {
        let overlay_seed = seed ^ sigma.to_bits().rotate_left(17);
        let noisy = overlay_noise(clean, sigma, overlay_seed)?;
        let mtd = cema::mtd(&noisy, cema)?.reached;
        steps.push(CalibrationStep { sigma, mtd });
        Ok(mtd)
    };
    // Disclosure count grows with the noise level, so walk the grid until
    // the target is hit or bracketed.
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    for &sigma in sigma_grid {
        let mtd = eval(sigma, &mut steps)?;
        match mtd {
            Some(m) if target.contains(&m) => {
                return Ok(CalibrationOutcome {
                    sigma,
                    mtd: m,
                    steps,
                });
            }
            Some(m) if m < target.start => lo = Some(sigma),
            _ => {
                hi = Some(sigma);
                break;
            }
        }
    }
    let (mut lo, mut hi) = match (lo, hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, Some(first)) => {
            return Err(Error::Calibration(format!(
                "grid starts too high: disclosure already past {} at sigma {first:.3e}",
                target.end
            )));
        }
        _ => {
            return Err(Error::Calibration(format!(
                "grid ends too low: disclosure still below {} at sigma {:.3e}",
                target.start,
                sigma_grid[sigma_grid.len() - 1]
            )));
        }
    };
    for _ in 0..refine_iters {
        let mid = ((lo.ln() + hi.ln()) * 0.5).exp();
        let mtd = eval(mid, &mut steps)?;
        match mtd {
            Some(m) if target.contains(&m) => {
                return Ok(CalibrationOutcome {
                    sigma: mid,
                    mtd: m,
                    steps,
                });
            }
            Some(m) if m < target.start => lo = mid,
            _ => hi = mid,
        }
    }
    let trail: Vec<String> = steps
        .iter()
        .map(|s| match s.mtd {
            Some(m) => format!("{:.3e}->{m}", s.sigma),
            None => format!("{:.3e}->none", s.sigma),
        })
        .collect();
    Err(Error::Calibration(format!(
        "no level landed in {}..{} after {} evaluations: {}",
        target.start,
        target.end,
        steps.len(),
        trail.join(", ")
    )))
}
