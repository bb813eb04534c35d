//! Trace matrices with their crypto metadata.
//!
//! Attacks consume an N-by-T matrix of recorded samples plus the plaintext
//! and ciphertext of each encryption. Fixed-vs-random campaigns also carry a
//! class label per trace.

use crate::dsp::align_offset;
use crate::error::{Error, Result};
use crate::waveform::WaveformTrace;
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Fixed,
    Random,
}

/// A recorded campaign: one row per encryption.
#[derive(Clone, Debug)]
pub struct TraceSet {
    traces: Array2<f64>,
    sample_rate: f64,
    plaintexts: Vec<[u8; 16]>,
    ciphertexts: Vec<[u8; 16]>,
    key: Option<[u8; 16]>,
    labels: Option<Vec<ClassLabel>>,
}

impl TraceSet {
    pub fn new(
        traces: Array2<f64>,
        sample_rate: f64,
        plaintexts: Vec<[u8; 16]>,
        ciphertexts: Vec<[u8; 16]>,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::TraceSet(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        let n = traces.nrows();
        if n == 0 || traces.ncols() == 0 {
            return Err(Error::TraceSet("trace matrix is empty".into()));
        }
        if plaintexts.len() != n || ciphertexts.len() != n {
            return Err(Error::TraceSet(format!(
                "{} traces but {} plaintexts and {} ciphertexts",
                n,
                plaintexts.len(),
                ciphertexts.len()
            )));
        }
        if let Some(bad) = traces.iter().position(|v| !v.is_finite()) {
            return Err(Error::TraceSet(format!(
                "non-finite sample at flat index {bad}"
            )));
        }
        Ok(Self {
            traces,
            sample_rate,
            plaintexts,
            ciphertexts,
            key: None,
            labels: None,
        })
    }

    pub fn with_key(mut self, key: [u8; 16]) -> Self {
        self.key = Some(key);
        self
    }

    pub fn with_labels(mut self, labels: Vec<ClassLabel>) -> Result<Self> {
        if labels.len() != self.n_traces() {
            return Err(Error::TraceSet(format!(
                "{} labels for {} traces",
                labels.len(),
                self.n_traces()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_traces(&self) -> usize {
        self.traces.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.traces.ncols()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn traces(&self) -> ArrayView2<'_, f64> {
        self.traces.view()
    }

    pub fn trace(&self, i: usize) -> ArrayView1<'_, f64> {
        self.traces.row(i)
    }

    pub fn plaintexts(&self) -> &[[u8; 16]] {
        &self.plaintexts
    }

    pub fn ciphertexts(&self) -> &[[u8; 16]] {
        &self.ciphertexts
    }

    pub fn key(&self) -> Option<[u8; 16]> {
        self.key
    }

    pub fn key_or_err(&self) -> Result<[u8; 16]> {
        self.key.ok_or(Error::MissingKey)
    }

    pub fn labels(&self) -> Option<&[ClassLabel]> {
        self.labels.as_deref()
    }

    /// Row indices of the fixed and random classes.
    pub fn class_indices(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::TraceSet("trace set carries no class labels".into()))?;
        let mut fixed = Vec::new();
        let mut random = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            match l {
                ClassLabel::Fixed => fixed.push(i),
                ClassLabel::Random => random.push(i),
            }
        }
        Ok((fixed, random))
    }

    pub fn mean_trace(&self) -> Vec<f64> {
        let n = self.n_traces() as f64;
        let mut mean = vec![0.0; self.n_samples()];
        for row in self.traces.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        mean
    }

    /// Trace restricted to a sample range, keeping metadata.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<TraceSet> {
        if range.end > self.n_samples() || range.start >= range.end {
            return Err(Error::TraceSet(format!(
                "window {}..{} outside 0..{}",
                range.start,
                range.end,
                self.n_samples()
            )));
        }
        Ok(TraceSet {
            traces: self.traces.slice(ndarray::s![.., range]).to_owned(),
            sample_rate: self.sample_rate,
            plaintexts: self.plaintexts.clone(),
            ciphertexts: self.ciphertexts.clone(),
            key: self.key,
            labels: self.labels.clone(),
        })
    }

    /// Aligns every trace to the first one and trims the search margin,
    /// leaving rows directly comparable sample by sample.
    pub fn align(&self, max_offset: usize) -> Result<(TraceSet, AlignReport)> {
        let (aligned, report) = align_rows(&self.traces, max_offset)?;
        let set = TraceSet {
            traces: aligned,
            sample_rate: self.sample_rate,
            plaintexts: self.plaintexts.clone(),
            ciphertexts: self.ciphertexts.clone(),
            key: self.key,
            labels: self.labels.clone(),
        };
        Ok((set, report))
    }
}

/// Per-trace alignment outcome over a whole set.
#[derive(Clone, Debug, Default)]
pub struct AlignReport {
    pub offsets: Vec<isize>,
    pub nccs: Vec<f64>,
    pub degenerate: usize,
}

/// Aligns each row of `traces` against row zero by integer shift within
/// `max_offset`, returning rows trimmed to the common interior.
pub fn align_rows(traces: &Array2<f64>, max_offset: usize) -> Result<(Array2<f64>, AlignReport)> {
    let n = traces.nrows();
    let t = traces.ncols();
    if n == 0 {
        return Err(Error::TraceSet("no rows to align".into()));
    }
    if 2 * max_offset >= t {
        return Err(Error::OffsetTooLarge {
            offset: max_offset,
            limit: t / 2,
        });
    }
    let reference: Vec<f64> = traces.row(0).to_vec();
    let out_len = t - 2 * max_offset;
    let mut out = Array2::zeros((n, out_len));
    let mut report = AlignReport::default();
    for (i, row) in traces.rows().into_iter().enumerate() {
        let row: Vec<f64> = row.to_vec();
        let res = if i == 0 {
            crate::dsp::AlignResult {
                offset: 0,
                ncc: 1.0,
                degenerate: false,
            }
        } else {
            align_offset(&row, &reference, max_offset)?
        };
        if res.degenerate {
            report.degenerate += 1;
        }
        let start = (max_offset as isize + res.offset) as usize;
        for (dst, src) in out.row_mut(i).iter_mut().zip(&row[start..start + out_len]) {
            *dst = *src;
        }
        report.offsets.push(res.offset);
        report.nccs.push(res.ncc);
    }
    Ok((out, report))
}

/// Incremental construction of a [`TraceSet`] one recording at a time.
#[derive(Clone, Debug)]
pub struct TraceSetBuilder {
    flat: Vec<f64>,
    n_samples: Option<usize>,
    sample_rate: f64,
    plaintexts: Vec<[u8; 16]>,
    ciphertexts: Vec<[u8; 16]>,
    labels: Vec<ClassLabel>,
    key: Option<[u8; 16]>,
}

impl TraceSetBuilder {
    pub fn new(sample_rate: f64) -> Self {
        Self {
            flat: Vec::new(),
            n_samples: None,
            sample_rate,
            plaintexts: Vec::new(),
            ciphertexts: Vec::new(),
            labels: Vec::new(),
            key: None,
        }
    }

    pub fn set_key(&mut self, key: [u8; 16]) {
        self.key = Some(key);
    }

    pub fn n_traces(&self) -> usize {
        self.plaintexts.len()
    }

    pub fn push(
        &mut self,
        trace: &WaveformTrace,
        plaintext: [u8; 16],
        ciphertext: [u8; 16],
        label: Option<ClassLabel>,
    ) -> Result<()> {
        if (trace.sample_rate() - self.sample_rate).abs() > 1e-9 * self.sample_rate {
            return Err(Error::GridMismatch(format!(
                "trace rate {:.6e} differs from set rate {:.6e}",
                trace.sample_rate(),
                self.sample_rate
            )));
        }
        match self.n_samples {
            None => self.n_samples = Some(trace.len()),
            Some(t) if t != trace.len() => {
                return Err(Error::TraceSet(format!(
                    "trace of {} samples in a set of {}-sample traces",
                    trace.len(),
                    t
                )))
            }
            _ => {}
        }
        if let Some(l) = label {
            if self.labels.len() != self.plaintexts.len() {
                return Err(Error::TraceSet(
                    "labels must be given for every trace or none".into(),
                ));
            }
            self.labels.push(l);
        } else if !self.labels.is_empty() {
            return Err(Error::TraceSet(
                "labels must be given for every trace or none".into(),
            ));
        }
        self.flat.extend_from_slice(trace.samples());
        self.plaintexts.push(plaintext);
        self.ciphertexts.push(ciphertext);
        Ok(())
    }

    pub fn finish(self) -> Result<TraceSet> {
        let t = self
            .n_samples
            .ok_or_else(|| Error::TraceSet("no traces pushed".into()))?;
        let n = self.plaintexts.len();
        let traces = Array2::from_shape_vec((n, t), self.flat)
            .map_err(|e| Error::TraceSet(e.to_string()))?;
        let mut set = TraceSet::new(traces, self.sample_rate, self.plaintexts, self.ciphertexts)?;
        if let Some(key) = self.key {
            set = set.with_key(key);
        }
        if !self.labels.is_empty() {
            set = set.with_labels(self.labels)?;
        }
        Ok(set)
    }
}
