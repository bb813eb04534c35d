//! Correlation key-recovery attack.
//!
//! For each of the 256 guesses of one key byte, a power-model hypothesis is
//! correlated per sample against the band-filtered traces. The guess with
//! the largest |r| anywhere wins; measurements-to-disclosure is the trace
//! count past which the correct guess stays ranked first.

use crate::aes::{self, model_hd_last_round, model_hw_first_sbox};
use crate::error::{Error, Result};
use crate::traceset::TraceSet;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerModel {
    /// Hamming distance across the final-round state overwrite, computed
    /// from ciphertext bytes.
    HdLastRound,
    /// Hamming weight of the first-round S-box output, computed from
    /// plaintext bytes.
    HwFirstSbox,
}

impl PowerModel {
    pub fn hypothesis(
        &self,
        pt: &[u8; 16],
        ct: &[u8; 16],
        guess: u8,
        byte_idx: usize,
    ) -> Result<u32> {
        match self {
            PowerModel::HdLastRound => model_hd_last_round(ct, guess, byte_idx),
            PowerModel::HwFirstSbox => {
                if byte_idx >= 16 {
                    return Err(Error::ByteIndex(byte_idx));
                }
                Ok(model_hw_first_sbox(pt[byte_idx], guess))
            }
        }
    }

    /// Key byte value the attack should rank first when the key is known.
    pub fn correct_guess(&self, key: &[u8; 16], byte_idx: usize) -> Result<u8> {
        match self {
            PowerModel::HdLastRound => {
                let rk10 = aes::round10_key(key);
                Ok(rk10[aes::hd_model_key_byte(byte_idx)?])
            }
            PowerModel::HwFirstSbox => {
                if byte_idx >= 16 {
                    return Err(Error::ByteIndex(byte_idx));
                }
                Ok(key[byte_idx])
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CemaConfig {
    pub model: PowerModel,
    pub byte_idx: usize,
    /// Analysis bands as (center, width) pairs in hertz. Empty means one
    /// all-pass band (attack the raw trace).
    pub bands: Vec<(f64, f64)>,
    pub filter_order: usize,
    /// Sample region to attack after filtering and alignment.
    pub region: Option<Range<usize>>,
    pub max_align_offset: Option<usize>,
    /// Trace counts at which intermediate rankings are recorded; the full
    /// count is always included.
    pub checkpoints: Vec<usize>,
}

impl Default for CemaConfig {
    fn default() -> Self {
        Self {
            model: PowerModel::HdLastRound,
            byte_idx: 0,
            bands: vec![(100e6, 40e6), (200e6, 40e6)],
            filter_order: 4,
            region: None,
            max_align_offset: None,
            checkpoints: vec![100, 200, 500, 1000, 2000, 5000, 10000, 20000, 50000],
        }
    }
}

/// Ranking snapshot after `n_traces` recordings.
#[derive(Clone, Copy, Debug)]
pub struct CemaCheckpoint {
    pub n_traces: usize,
    pub best_guess: u8,
    pub best_corr: f64,
    /// 1-based rank of the correct guess, when the key is known.
    pub correct_rank: Option<usize>,
    pub correct_corr: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct CemaBandResult {
    pub center_hz: f64,
    pub width_hz: f64,
    pub best_guess: u8,
    pub best_corr: f64,
    pub correct_rank: Option<usize>,
    pub checkpoints: Vec<CemaCheckpoint>,
}

impl CemaBandResult {
    /// Smallest checkpoint from which the correct guess stays ranked first
    /// through the end of the budget; `None` when it never locks in.
    pub fn stable_disclosure(&self) -> Option<usize> {
        let mut stable = None;
        for cp in self.checkpoints.iter().rev() {
            match cp.correct_rank {
                Some(1) => stable = Some(cp.n_traces),
                _ => break,
            }
        }
        stable
    }
}

#[derive(Clone, Debug)]
pub struct CemaReport {
    pub model: PowerModel,
    pub byte_idx: usize,
    pub bands: Vec<CemaBandResult>,
}

impl CemaReport {
    /// Band whose final best correlation is strongest.
    pub fn best_band(&self) -> Option<&CemaBandResult> {
        self.bands
            .iter()
            .max_by(|a, b| a.best_corr.total_cmp(&b.best_corr))
    }

    /// Best stable disclosure point across bands.
    pub fn stable_disclosure(&self) -> Option<usize> {
        self.bands.iter().filter_map(|b| b.stable_disclosure()).min()
    }
}

/// Measurements-to-disclosure outcome.
#[derive(Clone, Debug)]
pub struct MtdReport {
    pub budget: usize,
    /// Smallest checkpoint from which the correct guess stays ranked first
    /// through the end of the budget, per band.
    pub per_band: Vec<(f64, Option<usize>)>,
    /// Best (smallest) stable disclosure point across bands.
    pub reached: Option<usize>,
}

/// Streaming per-guess accumulators over one band.
struct Accumulator {
    n: usize,
    t_len: usize,
    sum_t: Vec<f64>,
    sum_tt: Vec<f64>,
    sum_h: [f64; 256],
    sum_hh: [f64; 256],
    sum_ht: Vec<f64>,
}

impl Accumulator {
    fn new(t_len: usize) -> Self {
        Self {
            n: 0,
            t_len,
            sum_t: vec![0.0; t_len],
            sum_tt: vec![0.0; t_len],
            sum_h: [0.0; 256],
            sum_hh: [0.0; 256],
            sum_ht: vec![0.0; 256 * t_len],
        }
    }

    fn push(&mut self, trace: &[f64], hyps: &[f64; 256]) {
        self.n += 1;
        for (j, &x) in trace.iter().enumerate() {
            self.sum_t[j] += x;
            self.sum_tt[j] += x * x;
        }
        for g in 0..256 {
            let h = hyps[g];
            self.sum_h[g] += h;
            self.sum_hh[g] += h * h;
            let row = &mut self.sum_ht[g * self.t_len..(g + 1) * self.t_len];
            for (acc, &x) in row.iter_mut().zip(trace) {
                *acc += h * x;
            }
        }
    }

    /// Peak |r| over the region for every guess.
    fn peak_correlations(&self) -> [f64; 256] {
        let n = self.n as f64;
        let mut peaks = [0.0f64; 256];
        for g in 0..256 {
            let var_h = n * self.sum_hh[g] - self.sum_h[g] * self.sum_h[g];
            if var_h <= 0.0 {
                continue;
            }
            let row = &self.sum_ht[g * self.t_len..(g + 1) * self.t_len];
            let mut best = 0.0f64;
            for j in 0..self.t_len {
                let var_t = n * self.sum_tt[j] - self.sum_t[j] * self.sum_t[j];
                if var_t <= 0.0 {
                    continue;
                }
                let cov = n * row[j] - self.sum_h[g] * self.sum_t[j];
                let r = (cov / (var_h * var_t).sqrt()).abs();
                if r > best {
                    best = r;
                }
            }
            peaks[g] = best;
        }
        peaks
    }
}

/// Sorts guesses by peak correlation, strongest first; ties keep the lower
/// byte value first.
fn rank_guesses(peaks: &[f64; 256]) -> Vec<u8> {
    let mut order: Vec<u8> = (0..=255).collect();
    order.sort_by(|&a, &b| {
        peaks[b as usize]
            .total_cmp(&peaks[a as usize])
            .then(a.cmp(&b))
    });
    order
}

fn snapshot(acc: &Accumulator, correct: Option<u8>) -> CemaCheckpoint {
    let peaks = acc.peak_correlations();
    let order = rank_guesses(&peaks);
    let best = order[0];
    CemaCheckpoint {
        n_traces: acc.n,
        best_guess: best,
        best_corr: peaks[best as usize],
        correct_rank: correct
            .map(|c| 1 + order.iter().position(|&g| g == c).expect("exhaustive order")),
        correct_corr: correct.map(|c| peaks[c as usize]),
    }
}

fn hypothesis_table(set: &TraceSet, cfg: &CemaConfig) -> Result<Vec<[f64; 256]>> {
    (0..set.n_traces())
        .map(|i| {
            let pt = &set.plaintexts()[i];
            let ct = &set.ciphertexts()[i];
            let mut h = [0.0f64; 256];
            for (g, slot) in h.iter_mut().enumerate() {
                *slot = cfg.model.hypothesis(pt, ct, g as u8, cfg.byte_idx)? as f64;
            }
            Ok(h)
        })
        .collect()
}

fn band_list(cfg: &CemaConfig) -> Vec<Option<(f64, f64)>> {
    if cfg.bands.is_empty() {
        vec![None]
    } else {
        cfg.bands.iter().copied().map(Some).collect()
    }
}

fn run_band(
    set: &TraceSet,
    cfg: &CemaConfig,
    band: Option<(f64, f64)>,
    hyps: &[[f64; 256]],
    correct: Option<u8>,
) -> Result<CemaBandResult> {
    let prepared: Array2<f64> = match band {
        Some((center, width)) => {
            super::prepare_band(
                &set.traces().to_owned(),
                set.sample_rate(),
                center,
                width,
                cfg.filter_order,
                cfg.max_align_offset,
            )?
            .0
        }
        None => set.traces().to_owned(),
    };
    let region = match &cfg.region {
        Some(r) => {
            if r.end > prepared.ncols() || r.start >= r.end {
                return Err(Error::Config(format!(
                    "attack region {}..{} outside trace of {} samples",
                    r.start,
                    r.end,
                    prepared.ncols()
                )));
            }
            r.clone()
        }
        None => 0..prepared.ncols(),
    };

    let mut marks: Vec<usize> = cfg
        .checkpoints
        .iter()
        .copied()
        .filter(|&c| c > 0 && c < set.n_traces())
        .collect();
    marks.push(set.n_traces());
    marks.sort_unstable();
    marks.dedup();

    let mut acc = Accumulator::new(region.len());
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut next_mark = 0;
    for (i, row) in prepared.rows().into_iter().enumerate() {
        let slice = &row.as_slice().expect("row-major matrix")[region.clone()];
        acc.push(slice, &hyps[i]);
        if next_mark < marks.len() && acc.n == marks[next_mark] {
            checkpoints.push(snapshot(&acc, correct));
            next_mark += 1;
        }
    }
    let last = *checkpoints.last().expect("final checkpoint always present");
    let (center_hz, width_hz) = band.unwrap_or((0.0, set.sample_rate()));
    Ok(CemaBandResult {
        center_hz,
        width_hz,
        best_guess: last.best_guess,
        best_corr: last.best_corr,
        correct_rank: last.correct_rank,
        checkpoints,
    })
}

/// Runs the attack over every configured band.
pub fn run(set: &TraceSet, cfg: &CemaConfig) -> Result<CemaReport> {
    if set.n_traces() < 2 {
        return Err(Error::TraceSet("attack needs at least two traces".into()));
    }
    let correct = match set.key() {
        Some(key) => Some(cfg.model.correct_guess(&key, cfg.byte_idx)?),
        None => None,
    };
    let hyps = hypothesis_table(set, cfg)?;
    let bands = band_list(cfg)
        .into_iter()
        .map(|band| run_band(set, cfg, band, &hyps, correct))
        .collect::<Result<Vec<_>>>()?;
    Ok(CemaReport {
        model: cfg.model,
        byte_idx: cfg.byte_idx,
        bands,
    })
}

/// Finds, per band, the smallest checkpoint after which the correct guess
/// holds rank one through the rest of the budget.
pub fn mtd(set: &TraceSet, cfg: &CemaConfig) -> Result<MtdReport> {
    set.key_or_err()?;
    let report = run(set, cfg)?;
    let per_band: Vec<(f64, Option<usize>)> = report
        .bands
        .iter()
        .map(|band| (band.center_hz, band.stable_disclosure()))
        .collect();
    let reached = per_band.iter().filter_map(|&(_, s)| s).min();
    Ok(MtdReport {
        budget: set.n_traces(),
        per_band,
        reached,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes;
    use crate::traceset::TraceSetBuilder;
    use crate::waveform::{SignalUnit, WaveformTrace};
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const KEY: [u8; 16] = [
        0x2b, 0x7e, 0x15, 0x16, 0x28, 0xae, 0xd2, 0xa6, 0xab, 0xf7, 0x15, 0x88, 0x09, 0xcf, 0x4f,
        0x3c,
    ];

    fn random_block(rng: &mut ChaCha8Rng) -> [u8; 16] {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        b
    }

    /// Traces whose sample 3 carries the model value plus noise.
    fn model_set(
        model: PowerModel,
        byte_idx: usize,
        n: usize,
        noise: f64,
        seed: u64,
    ) -> TraceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let correct = model.correct_guess(&KEY, byte_idx).unwrap();
        let mut b = TraceSetBuilder::new(1e9);
        b.set_key(KEY);
        for _ in 0..n {
            let pt = random_block(&mut rng);
            let ct = aes::encrypt(&KEY, &pt);
            let h = model.hypothesis(&pt, &ct, correct, byte_idx).unwrap() as f64;
            let samples: Vec<f64> = (0..8)
                .map(|j| {
                    let jitter: f64 = rng.random::<f64>() - 0.5;
                    if j == 3 {
                        0.04 * h + noise * jitter
                    } else {
                        noise * jitter
                    }
                })
                .collect();
            let w = WaveformTrace::new(samples, 1e9, 0.0, SignalUnit::ProbeUnits).unwrap();
            b.push(&w, pt, ct, None).unwrap();
        }
        b.finish().unwrap()
    }

    fn raw_cfg(model: PowerModel, byte_idx: usize, checkpoints: Vec<usize>) -> CemaConfig {
        CemaConfig {
            model,
            byte_idx,
            bands: Vec::new(),
            filter_order: 4,
            region: None,
            max_align_offset: None,
            checkpoints,
        }
    }

    /// Direct Pearson correlation for one guess and sample.
    fn naive_corr(set: &TraceSet, cfg: &CemaConfig, guess: u8, sample: usize) -> f64 {
        let n = set.n_traces();
        let h: Vec<f64> = (0..n)
            .map(|i| {
                cfg.model
                    .hypothesis(&set.plaintexts()[i], &set.ciphertexts()[i], guess, cfg.byte_idx)
                    .unwrap() as f64
            })
            .collect();
        let x: Vec<f64> = (0..n).map(|i| set.trace(i)[sample]).collect();
        let mh = h.iter().sum::<f64>() / n as f64;
        let mx = x.iter().sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut vh = 0.0;
        let mut vx = 0.0;
        for i in 0..n {
            cov += (h[i] - mh) * (x[i] - mx);
            vh += (h[i] - mh) * (h[i] - mh);
            vx += (x[i] - mx) * (x[i] - mx);
        }
        cov / (vh * vx).sqrt()
    }

    #[test]
    fn streaming_matches_naive_pearson() {
        let set = model_set(PowerModel::HdLastRound, 0, 80, 0.15, 5);
        let cfg = raw_cfg(PowerModel::HdLastRound, 0, vec![]);
        let report = run(&set, &cfg).unwrap();
        let band = &report.bands[0];
        // Recompute the winning guess's peak with the direct formula.
        let g = band.best_guess;
        let best_naive = (0..set.n_samples())
            .map(|j| naive_corr(&set, &cfg, g, j).abs())
            .fold(0.0, f64::max);
        assert_relative_eq!(band.best_corr, best_naive, epsilon = 1e-9);
    }

    #[test]
    fn correlation_is_invariant_to_affine_trace_scaling() {
        let set = model_set(PowerModel::HdLastRound, 5, 60, 0.1, 9);
        let scaled_rows: Vec<f64> = set
            .traces()
            .iter()
            .map(|v| 3.75 * v - 42.0)
            .collect();
        let scaled = TraceSet::new(
            Array2::from_shape_vec((set.n_traces(), set.n_samples()), scaled_rows).unwrap(),
            set.sample_rate(),
            set.plaintexts().to_vec(),
            set.ciphertexts().to_vec(),
        )
        .unwrap()
        .with_key(KEY);
        let cfg = raw_cfg(PowerModel::HdLastRound, 5, vec![]);
        let a = run(&set, &cfg).unwrap();
        let b = run(&scaled, &cfg).unwrap();
        assert_eq!(a.bands[0].best_guess, b.bands[0].best_guess);
        // The streaming sums shift under an affine map, so agreement is
        // tight but not bit-exact.
        assert_relative_eq!(a.bands[0].best_corr, b.bands[0].best_corr, max_relative = 1e-9);
    }

    #[test]
    fn hd_model_recovers_round10_key_byte() {
        for byte_idx in [0usize, 7, 13] {
            let set = model_set(PowerModel::HdLastRound, byte_idx, 400, 0.4, 17);
            let cfg = raw_cfg(PowerModel::HdLastRound, byte_idx, vec![50, 100, 200]);
            let report = run(&set, &cfg).unwrap();
            let band = &report.bands[0];
            let expect = PowerModel::HdLastRound.correct_guess(&KEY, byte_idx).unwrap();
            assert_eq!(band.best_guess, expect);
            assert_eq!(band.correct_rank, Some(1));
        }
    }

    #[test]
    fn hw_model_recovers_first_round_key_byte() {
        let set = model_set(PowerModel::HwFirstSbox, 2, 400, 0.4, 23);
        let cfg = raw_cfg(PowerModel::HwFirstSbox, 2, vec![]);
        let report = run(&set, &cfg).unwrap();
        assert_eq!(report.bands[0].best_guess, KEY[2]);
    }

    #[test]
    fn mtd_stabilizes_on_clean_leak_and_fails_on_noise() {
        let set = model_set(PowerModel::HdLastRound, 0, 300, 0.02, 31);
        let cfg = raw_cfg(PowerModel::HdLastRound, 0, vec![25, 50, 100, 200]);
        let report = mtd(&set, &cfg).unwrap();
        let reached = report.reached.expect("clean leak must disclose");
        assert!(reached <= 50, "disclosure at {reached}");

        // Pure noise: the correct guess cannot stay on top.
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut b = TraceSetBuilder::new(1e9);
        b.set_key(KEY);
        for _ in 0..300 {
            let pt = random_block(&mut rng);
            let ct = aes::encrypt(&KEY, &pt);
            let samples: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
            let w = WaveformTrace::new(samples, 1e9, 0.0, SignalUnit::ProbeUnits).unwrap();
            b.push(&w, pt, ct, None).unwrap();
        }
        let noise_set = b.finish().unwrap();
        let noise_report = mtd(&noise_set, &cfg).unwrap();
        assert_eq!(noise_report.budget, 300);
        assert_eq!(noise_report.reached, None);
    }

    #[test]
    fn mtd_requires_a_key() {
        let set = model_set(PowerModel::HdLastRound, 0, 50, 0.1, 41);
        let unkeyed = TraceSet::new(
            set.traces().to_owned(),
            set.sample_rate(),
            set.plaintexts().to_vec(),
            set.ciphertexts().to_vec(),
        )
        .unwrap();
        let cfg = raw_cfg(PowerModel::HdLastRound, 0, vec![]);
        assert!(matches!(mtd(&unkeyed, &cfg), Err(Error::MissingKey)));
    }

    #[test]
    fn tied_peaks_rank_lower_byte_first() {
        let peaks = [0.5f64; 256];
        let order = rank_guesses(&peaks);
        assert_eq!(order[0], 0);
        assert_eq!(order[255], 255);
    }

    #[test]
    fn checkpoints_are_clipped_and_terminated_at_budget() {
        let set = model_set(PowerModel::HdLastRound, 0, 60, 0.1, 43);
        let cfg = raw_cfg(PowerModel::HdLastRound, 0, vec![10, 30, 60, 500]);
        let report = run(&set, &cfg).unwrap();
        let ns: Vec<usize> = report.bands[0]
            .checkpoints
            .iter()
            .map(|c| c.n_traces)
            .collect();
        assert_eq!(ns, vec![10, 30, 60]);
    }
}
