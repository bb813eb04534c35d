//! Fixed-vs-random leakage assessment.
//!
//! Welch's t statistic is evaluated per sample between the fixed-plaintext
//! and random-plaintext classes, at moment orders one to three, in each
//! frequency band and time window. Any |t| beyond the decision threshold
//! marks the recording as leaking.

use crate::dsp::{FilterBankSpec, WindowSpec};
use crate::error::{Error, Result};
use crate::traceset::TraceSet;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const DEFAULT_THRESHOLD: f64 = 4.5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TvlaConfig {
    pub bank: FilterBankSpec,
    pub window: WindowSpec,
    pub orders: Vec<u32>,
    pub threshold: f64,
    pub filter_order: usize,
    /// Alignment search half-width in samples; `None` analyses as recorded.
    pub max_align_offset: Option<usize>,
}

impl Default for TvlaConfig {
    fn default() -> Self {
        Self {
            bank: FilterBankSpec::default(),
            window: WindowSpec {
                width_s: 200e-9,
                stride_s: 200e-9,
            },
            orders: vec![1, 2, 3],
            threshold: DEFAULT_THRESHOLD,
            filter_order: 4,
            max_align_offset: None,
        }
    }
}

/// One (band, window, order) cell of the assessment.
#[derive(Clone, Debug)]
pub struct TvlaCell {
    pub band_hz: f64,
    pub window: Range<usize>,
    pub order: u32,
    pub max_abs_t: f64,
    pub argmax_sample: usize,
    /// True when every sample in the window had zero pooled variance.
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct TvlaReport {
    pub cells: Vec<TvlaCell>,
    pub threshold: f64,
    pub n_fixed: usize,
    pub n_random: usize,
    pub align_degenerate: usize,
}

impl TvlaReport {
    pub fn max_abs_t(&self) -> f64 {
        self.cells.iter().map(|c| c.max_abs_t).fold(0.0, f64::max)
    }

    pub fn leaks(&self) -> bool {
        self.cells.iter().any(|c| c.max_abs_t > self.threshold)
    }

    pub fn worst_cell(&self) -> Option<&TvlaCell> {
        self.cells
            .iter()
            .max_by(|a, b| a.max_abs_t.total_cmp(&b.max_abs_t))
    }
}

/// Welch's t between two samples; `(0, true)` when the pooled variance
/// vanishes.
pub fn welch_t(a: &[f64], b: &[f64]) -> (f64, bool) {
    if a.len() < 2 || b.len() < 2 {
        return (0.0, true);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let denom = va / a.len() as f64 + vb / b.len() as f64;
    if denom <= 0.0 {
        return (0.0, true);
    }
    ((ma - mb) / denom.sqrt(), false)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Per-sample t statistics at the given moment order.
///
/// Order 1 compares raw samples. Order 2 compares per-class mean-centered
/// squares. Order 3 compares per-class standardized cubes.
pub fn t_statistics(
    traces: &Array2<f64>,
    fixed: &[usize],
    random: &[usize],
    order: u32,
) -> Result<Vec<f64>> {
    if !(1..=3).contains(&order) {
        return Err(Error::Config(format!("unsupported t-test order {order}")));
    }
    if fixed.len() < 2 || random.len() < 2 {
        return Err(Error::TraceSet(format!(
            "need at least two traces per class, got {} fixed and {} random",
            fixed.len(),
            random.len()
        )));
    }
    let t_len = traces.ncols();
    let class_moments = |idx: &[usize]| -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; t_len];
        let mut sq = vec![0.0; t_len];
        for &i in idx {
            for (j, v) in traces.row(i).iter().enumerate() {
                mean[j] += v;
                sq[j] += v * v;
            }
        }
        let n = idx.len() as f64;
        let mut std = vec![0.0; t_len];
        for j in 0..t_len {
            mean[j] /= n;
            // Population spread of the class, used only to standardize.
            let var = (sq[j] / n - mean[j] * mean[j]).max(0.0);
            std[j] = var.sqrt();
        }
        (mean, std)
    };

    let transformed = |idx: &[usize], mean: &[f64], std: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut s1 = vec![0.0; t_len];
        let mut s2 = vec![0.0; t_len];
        for &i in idx {
            for (j, v) in traces.row(i).iter().enumerate() {
                let y = match order {
                    1 => *v,
                    2 => {
                        let c = v - mean[j];
                        c * c
                    }
                    _ => {
                        if std[j] > 0.0 {
                            let z = (v - mean[j]) / std[j];
                            z * z * z
                        } else {
                            0.0
                        }
                    }
                };
                s1[j] += y;
                s2[j] += y * y;
            }
        }
        (s1, s2)
    };

    let (mean_f, std_f) = class_moments(fixed);
    let (mean_r, std_r) = class_moments(random);
    let (f1, f2) = transformed(fixed, &mean_f, &std_f);
    let (r1, r2) = transformed(random, &mean_r, &std_r);

    let nf = fixed.len() as f64;
    let nr = random.len() as f64;
    let mut t = vec![0.0; t_len];
    for j in 0..t_len {
        let mf = f1[j] / nf;
        let mr = r1[j] / nr;
        let vf = (f2[j] - f1[j] * f1[j] / nf) / (nf - 1.0);
        let vr = (r2[j] - r1[j] * r1[j] / nr) / (nr - 1.0);
        let denom = vf / nf + vr / nr;
        t[j] = if denom > 0.0 {
            (mf - mr) / denom.sqrt()
        } else {
            0.0
        };
    }
    Ok(t)
}

/// Full banked, windowed assessment of a labeled trace set.
pub fn run(set: &TraceSet, cfg: &TvlaConfig) -> Result<TvlaReport> {
    cfg.bank.validate()?;
    let (fixed, random) = set.class_indices()?;
    let mut cells = Vec::new();
    let mut align_degenerate = 0;
    for center in cfg.bank.centers() {
        let (band, degenerate) = super::prepare_band(
            &set.traces().to_owned(),
            set.sample_rate(),
            center,
            cfg.bank.bandwidth_hz,
            cfg.filter_order,
            cfg.max_align_offset,
        )?;
        align_degenerate += degenerate;
        let windows = crate::dsp::windows(band.ncols(), set.sample_rate(), &cfg.window);
        for &order in &cfg.orders {
            let t = t_statistics(&band, &fixed, &random, order)?;
            for w in &windows {
                let mut max_abs = 0.0;
                let mut argmax = w.start;
                let mut all_zero = true;
                for j in w.clone() {
                    if t[j] != 0.0 {
                        all_zero = false;
                    }
                    if t[j].abs() > max_abs {
                        max_abs = t[j].abs();
                        argmax = j;
                    }
                }
                cells.push(TvlaCell {
                    band_hz: center,
                    window: w.clone(),
                    order,
                    max_abs_t: max_abs,
                    argmax_sample: argmax,
                    degenerate: all_zero,
                });
            }
        }
    }
    Ok(TvlaReport {
        cells,
        threshold: cfg.threshold,
        n_fixed: fixed.len(),
        n_random: random.len(),
        align_degenerate,
    })
}
