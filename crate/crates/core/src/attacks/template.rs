//! Template matching with average subtraction.
//!
//! A reference segment is learned from the first recordings, located in
//! every trace by normalized cross-correlation, and the located segments
//! are averaged. Subtracting that average strips waveform content common
//! to all traces; the residuals then go through the correlation attack.

use super::cema::{self, CemaConfig, CemaReport};
use crate::error::{Error, Result};
use crate::traceset::{TraceSet, TraceSetBuilder};
use crate::waveform::{SignalUnit, WaveformTrace};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TemplateConfig {
    /// Segment length in samples.
    pub template_len: usize,
    /// Number of leading traces averaged into the template.
    pub template_traces: usize,
    /// Segment start used in those leading traces.
    pub anchor: usize,
    /// Candidate segment starts searched in every trace; `None` tries all.
    pub search: Option<Range<usize>>,
    /// Matches correlating below this are dropped from the attack.
    pub ncc_floor: f64,
    /// Attack run on the average-subtracted residuals.
    pub cema: CemaConfig,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self {
            template_len: 3000,
            template_traces: 50,
            anchor: 0,
            search: None,
            ncc_floor: 0.5,
            cema: CemaConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TemplateReport {
    pub used: usize,
    pub excluded: usize,
    pub mean_ncc: f64,
    /// Matched segment start per trace; `None` when rejected.
    pub offsets: Vec<Option<usize>>,
    pub cema: CemaReport,
}

/// Normalized correlation of the template against every candidate start.
struct Matcher {
    template: Vec<f64>,
    template_fft: Vec<Complex64>,
    fft_len: usize,
    t_energy: f64,
    t_mean: f64,
    planner_fwd: std::sync::Arc<dyn rustfft::Fft<f64>>,
    planner_inv: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Matcher {
    fn new(template: Vec<f64>, trace_len: usize) -> Self {
        let l = template.len();
        let fft_len = (trace_len + l).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(fft_len);
        let inv = planner.plan_fft_inverse(fft_len);

        let t_mean = template.iter().sum::<f64>() / l as f64;
        let t_energy = template.iter().map(|v| (v - t_mean) * (v - t_mean)).sum();

        // Reversed template so that convolution computes correlation.
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        for (i, &v) in template.iter().rev().enumerate() {
            buf[i] = Complex64::new(v, 0.0);
        }
        fwd.process(&mut buf);
        Self {
            template,
            template_fft: buf,
            fft_len,
            t_energy,
            t_mean,
            planner_fwd: fwd,
            planner_inv: inv,
        }
    }

    /// Best (start, ncc) within `search`; ties take the earliest start.
    fn best_match(&self, x: &[f64], search: &Range<usize>) -> Option<(usize, f64)> {
        let l = self.template.len();
        if self.t_energy <= 0.0 {
            return None;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        for (i, &v) in x.iter().enumerate() {
            buf[i] = Complex64::new(v, 0.0);
        }
        self.planner_fwd.process(&mut buf);
        for (a, b) in buf.iter_mut().zip(&self.template_fft) {
            *a *= b;
        }
        self.planner_inv.process(&mut buf);
        let scale = 1.0 / self.fft_len as f64;

        let mut s1 = vec![0.0; x.len() + 1];
        let mut s2 = vec![0.0; x.len() + 1];
        for (i, &v) in x.iter().enumerate() {
            s1[i + 1] = s1[i] + v;
            s2[i + 1] = s2[i] + v * v;
        }

        let mut best: Option<(usize, f64)> = None;
        for s in search.clone() {
            let dot = buf[s + l - 1].re * scale;
            let wsum = s1[s + l] - s1[s];
            let wsq = s2[s + l] - s2[s];
            let x_energy = wsq - wsum * wsum / l as f64;
            if x_energy <= 0.0 {
                continue;
            }
            let cov = dot - wsum * self.t_mean;
            let ncc = cov / (x_energy * self.t_energy).sqrt();
            if best.map_or(true, |(_, b)| ncc > b) {
                best = Some((s, ncc));
            }
        }
        best
    }
}

/// Runs the full match, average, subtract, attack chain.
pub fn run(set: &TraceSet, cfg: &TemplateConfig) -> Result<TemplateReport> {
    let t_len = set.n_samples();
    let l = cfg.template_len;
    if l == 0 || l > t_len {
        return Err(Error::Config(format!(
            "template of {l} samples does not fit traces of {t_len}"
        )));
    }
    if cfg.anchor + l > t_len {
        return Err(Error::Config(format!(
            "template anchor {} plus length {l} exceeds trace of {t_len}",
            cfg.anchor
        )));
    }
    let m = cfg.template_traces.clamp(1, set.n_traces());
    let search = match &cfg.search {
        Some(r) => {
            if r.start >= r.end || r.end > t_len - l + 1 {
                return Err(Error::Config(format!(
                    "search range {}..{} invalid for {} candidate starts",
                    r.start,
                    r.end,
                    t_len - l + 1
                )));
            }
            r.clone()
        }
        None => 0..t_len - l + 1,
    };

    let mut template = vec![0.0; l];
    for i in 0..m {
        for (acc, v) in template
            .iter_mut()
            .zip(set.trace(i).iter().skip(cfg.anchor).take(l))
        {
            *acc += v;
        }
    }
    for v in &mut template {
        *v /= m as f64;
    }
    let matcher = Matcher::new(template, t_len);

    let mut offsets: Vec<Option<usize>> = Vec::with_capacity(set.n_traces());
    let mut ncc_sum = 0.0;
    let mut segments: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in 0..set.n_traces() {
        let row = set.trace(i);
        let row = row.as_slice().expect("row-major trace matrix");
        match matcher.best_match(row, &search) {
            Some((s, ncc)) if ncc >= cfg.ncc_floor => {
                offsets.push(Some(s));
                ncc_sum += ncc;
                segments.push((i, row[s..s + l].to_vec()));
            }
            _ => offsets.push(None),
        }
    }
    let used = segments.len();
    let excluded = set.n_traces() - used;
    if used < 2 {
        return Err(Error::TraceSet(format!(
            "only {used} of {} traces matched the template",
            set.n_traces()
        )));
    }

    let mut grand = vec![0.0; l];
    for (_, seg) in &segments {
        for (g, v) in grand.iter_mut().zip(seg) {
            *g += v;
        }
    }
    for g in &mut grand {
        *g /= used as f64;
    }

    let mut builder = TraceSetBuilder::new(set.sample_rate());
    if let Some(key) = set.key() {
        builder.set_key(key);
    }
    for (i, seg) in &segments {
        let residual: Vec<f64> = seg.iter().zip(&grand).map(|(v, g)| v - g).collect();
        let w = WaveformTrace::new(residual, set.sample_rate(), 0.0, SignalUnit::ProbeUnits)?;
        builder.push(&w, set.plaintexts()[*i], set.ciphertexts()[*i], None)?;
    }
    let residuals = builder.finish()?;
    let cema_report = cema::run(&residuals, &cfg.cema)?;

    Ok(TemplateReport {
        used,
        excluded,
        mean_ncc: ncc_sum / used as f64,
        offsets,
        cema: cema_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes;
    use crate::attacks::cema::PowerModel;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const KEY: [u8; 16] = [
        0x10, 0xa5, 0x88, 0x69, 0xd7, 0x4b, 0xe5, 0xa3, 0x74, 0xcf, 0x86, 0x7c, 0xfb, 0x47, 0x38,
        0x59,
    ];

    fn smooth_pattern(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        let mut v = 0.0;
        (0..len)
            .map(|_| {
                v = 0.9 * v + (rng.random::<f64>() - 0.5);
                v
            })
            .collect()
    }

    #[test]
    fn matching_recovers_known_segment_starts() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let l = 128;
        let t_len = 512;
        let anchor = 100;
        let pattern = smooth_pattern(&mut rng, l);
        let starts = [anchor, anchor, anchor, 40usize, 200, 311, 0, 384];
        let mut b = TraceSetBuilder::new(1e9);
        for (i, &s) in starts.iter().enumerate() {
            let mut samples: Vec<f64> =
                (0..t_len).map(|_| 0.01 * (rng.random::<f64>() - 0.5)).collect();
            for (j, &p) in pattern.iter().enumerate() {
                samples[s + j] += p;
            }
            let w = WaveformTrace::new(samples, 1e9, 0.0, SignalUnit::ProbeUnits).unwrap();
            b.push(&w, [i as u8; 16], [i as u8; 16], None).unwrap();
        }
        // One garbage trace with no pattern at all.
        let noise: Vec<f64> = (0..t_len).map(|_| rng.random::<f64>() - 0.5).collect();
        let w = WaveformTrace::new(noise, 1e9, 0.0, SignalUnit::ProbeUnits).unwrap();
        b.push(&w, [99; 16], [99; 16], None).unwrap();

        let set = b.finish().unwrap();
        let cfg = TemplateConfig {
            template_len: l,
            template_traces: 3,
            anchor,
            search: None,
            ncc_floor: 0.6,
            cema: CemaConfig {
                checkpoints: vec![],
                bands: vec![],
                ..CemaConfig::default()
            },
        };
        let report = run(&set, &cfg).unwrap();
        assert_eq!(report.used, starts.len());
        assert_eq!(report.excluded, 1);
        for (got, want) in report.offsets.iter().zip(starts) {
            assert_eq!(*got, Some(want));
        }
        assert_eq!(report.offsets.last().unwrap(), &None);
        assert!(report.mean_ncc > 0.9);
    }

    #[test]
    fn average_subtraction_exposes_leak_under_common_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let l = 256;
        let t_len = 1024;
        let n = 240;
        let pattern: Vec<f64> = smooth_pattern(&mut rng, l).iter().map(|v| 4.0 * v).collect();
        let byte_idx = 0;
        let starts: Vec<usize> = (0..n).map(|_| rng.random_range(0..t_len - l)).collect();
        let mut b = TraceSetBuilder::new(1e9);
        b.set_key(KEY);
        for &s in &starts {
            let mut pt = [0u8; 16];
            rng.fill_bytes(&mut pt);
            let ct = aes::encrypt(&KEY, &pt);
            let correct = PowerModel::HdLastRound.correct_guess(&KEY, byte_idx).unwrap();
            let h = PowerModel::HdLastRound
                .hypothesis(&pt, &ct, correct, byte_idx)
                .unwrap() as f64;
            let mut samples: Vec<f64> =
                (0..t_len).map(|_| 0.02 * (rng.random::<f64>() - 0.5)).collect();
            for (j, &p) in pattern.iter().enumerate() {
                samples[s + j] += p;
            }
            // Data-dependent wiggle rides at a fixed lag inside the segment.
            samples[s + 77] += 0.06 * h;
            let w = WaveformTrace::new(samples, 1e9, 0.0, SignalUnit::ProbeUnits).unwrap();
            b.push(&w, pt, ct, None).unwrap();
        }
        let set = b.finish().unwrap();
        let cfg = TemplateConfig {
            template_len: l,
            template_traces: 1,
            anchor: starts[0],
            search: None,
            ncc_floor: 0.5,
            cema: CemaConfig {
                model: PowerModel::HdLastRound,
                byte_idx,
                bands: vec![],
                filter_order: 4,
                region: None,
                max_align_offset: None,
                checkpoints: vec![],
            },
        };
        let report = run(&set, &cfg).unwrap();
        assert!(report.used > 200, "only {} matched", report.used);
        let band = &report.cema.bands[0];
        assert_eq!(band.correct_rank, Some(1));
    }

    #[test]
    fn rejects_impossible_geometry() {
        let mut b = TraceSetBuilder::new(1e9);
        let w = WaveformTrace::constant(1.0, 64, 1e9, 0.0, SignalUnit::ProbeUnits).unwrap();
        b.push(&w, [0; 16], [0; 16], None).unwrap();
        b.push(&w, [1; 16], [1; 16], None).unwrap();
        let set = b.finish().unwrap();
        let mut cfg = TemplateConfig {
            template_len: 128,
            ..TemplateConfig::default()
        };
        assert!(run(&set, &cfg).is_err());
        cfg.template_len = 32;
        cfg.anchor = 40;
        assert!(run(&set, &cfg).is_err());
        // Constant traces have no template energy to match.
        cfg.anchor = 0;
        assert!(run(&set, &cfg).is_err());
    }
}
