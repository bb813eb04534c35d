//! Filtering, alignment and spectral tools shared by the probe models and
//! the attack code.
//!
//! Filters are Butterworth designs realized as cascaded biquad sections via
//! the bilinear transform. Offline analysis uses [`SosFilter::filtfilt`]
//! (forward-backward, zero phase); the probe models in [`crate::em`] use the
//! causal form.

use crate::error::{Error, Result};
use crate::waveform::WaveformTrace;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// One second-order section in direct form II transposed.
#[derive(Clone, Copy, Debug)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Runs the section starting from steady state for a constant input
    /// equal to the first sample, as if the signal had been held there
    /// forever. Constants therefore pass low-pass sections unchanged and
    /// vanish through high-pass sections without a start-up step.
    fn run(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(x.len());
        let (mut s1, mut s2) = match x.first() {
            Some(&x0) => {
                let a_dc = 1.0 + self.a1 + self.a2;
                let y_dc = if a_dc.abs() > 1e-12 {
                    x0 * (self.b0 + self.b1 + self.b2) / a_dc
                } else {
                    0.0
                };
                let s2 = self.b2 * x0 - self.a2 * y_dc;
                (self.b1 * x0 - self.a1 * y_dc + s2, s2)
            }
            None => (0.0, 0.0),
        };
        for &xi in x {
            let y = self.b0 * xi + s1;
            s1 = self.b1 * xi - self.a1 * y + s2;
            s2 = self.b2 * xi - self.a2 * y;
            out.push(y);
        }
    }
}

/// Cascade of second-order sections.
#[derive(Clone, Debug)]
pub struct SosFilter {
    sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Causal filtering, each section initialized at steady state for the
    /// first input sample.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut tmp = Vec::new();
        for s in &self.sections {
            s.run(&cur, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
        }
        cur
    }

    /// Forward-backward filtering with odd-reflection padding; zero phase
    /// and squared magnitude response.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = (8 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in 0..pad {
            ext.push(2.0 * x[0] - x[pad - i]);
        }
        ext.extend_from_slice(x);
        for i in 0..pad {
            ext.push(2.0 * x[n - 1] - x[n - 2 - i]);
        }
        let mut y = self.filter(&ext);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }

    /// Complex frequency response at `freq` for sample rate `rate`.
    pub fn response(&self, freq: f64, rate: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq / rate;
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
        }
        h
    }
}

/// Left-half-plane poles of the analog Butterworth prototype.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + order as f64 + 1.0)
                / (2.0 * order as f64);
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn bilinear(pole: Complex64, fs2: f64) -> Complex64 {
    (fs2 + pole) / (fs2 - pole)
}

fn check_corner(freq: f64, rate: f64) -> Result<()> {
    if !(freq.is_finite() && freq > 0.0 && freq < rate / 2.0) {
        return Err(Error::BandOutOfRange {
            center: freq,
            width: 0.0,
            nyquist: rate / 2.0,
        });
    }
    Ok(())
}

/// Groups complex poles into conjugate pairs (plus at most one real pole)
/// and emits denominator coefficients per section.
fn pole_sections(poles: &[Complex64]) -> Vec<(f64, f64)> {
    let mut complex: Vec<Complex64> = poles.iter().filter(|p| p.im > 1e-12).cloned().collect();
    let reals: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= 1e-12)
        .map(|p| p.re)
        .collect();
    complex.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
    let mut out = Vec::new();
    for p in complex {
        out.push((-2.0 * p.re, p.norm_sqr()));
    }
    let mut reals = reals.into_iter();
    while let (Some(r1), r2) = (reals.next(), reals.next()) {
        match r2 {
            Some(r2) => out.push((-(r1 + r2), r1 * r2)),
            None => out.push((-r1, 0.0)),
        }
    }
    out
}

fn normalize_at(mut sections: Vec<Biquad>, freq: f64, rate: f64) -> SosFilter {
    let f = SosFilter { sections: sections.clone() };
    let gain = f.response(freq, rate).norm();
    if gain > 0.0 {
        let scale = 1.0 / gain;
        sections[0].b0 *= scale;
        sections[0].b1 *= scale;
        sections[0].b2 *= scale;
    }
    SosFilter { sections }
}

/// Butterworth low-pass of the given order.
pub fn butter_lowpass(order: usize, cutoff: f64, rate: f64) -> Result<SosFilter> {
    check_corner(cutoff, rate)?;
    if order == 0 {
        return Err(Error::Config("filter order must be at least 1".into()));
    }
    let fs2 = 2.0 * rate;
    let warped = fs2 * (std::f64::consts::PI * cutoff / rate).tan();
    let zpoles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * warped, fs2))
        .collect();
    let sections = pole_sections(&zpoles)
        .into_iter()
        .map(|(a1, a2)| {
            let second = a2 != 0.0;
            Biquad {
                b0: 1.0,
                b1: if second { 2.0 } else { 1.0 },
                b2: if second { 1.0 } else { 0.0 },
                a1,
                a2,
            }
        })
        .collect();
    Ok(normalize_at(sections, 0.0, rate))
}

/// Butterworth high-pass of the given order.
pub fn butter_highpass(order: usize, cutoff: f64, rate: f64) -> Result<SosFilter> {
    check_corner(cutoff, rate)?;
    if order == 0 {
        return Err(Error::Config("filter order must be at least 1".into()));
    }
    let fs2 = 2.0 * rate;
    let warped = fs2 * (std::f64::consts::PI * cutoff / rate).tan();
    let zpoles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(warped / p, fs2))
        .collect();
    let sections = pole_sections(&zpoles)
        .into_iter()
        .map(|(a1, a2)| {
            let second = a2 != 0.0;
            Biquad {
                b0: 1.0,
                b1: if second { -2.0 } else { -1.0 },
                b2: if second { 1.0 } else { 0.0 },
                a1,
                a2,
            }
        })
        .collect();
    Ok(normalize_at(sections, rate / 2.0, rate))
}

/// Butterworth band-pass. `order` counts the total poles of the band-pass
/// and must be even; the default analysis filters use order 4.
pub fn butter_bandpass(order: usize, low: f64, high: f64, rate: f64) -> Result<SosFilter> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::Config(format!(
            "band-pass order must be even and nonzero, got {order}"
        )));
    }
    if !(low > 0.0 && high > low) {
        return Err(Error::Config(format!(
            "band edges must satisfy 0 < low < high, got {low}..{high}"
        )));
    }
    check_corner(high, rate)?;
    let fs2 = 2.0 * rate;
    let w1 = fs2 * (std::f64::consts::PI * low / rate).tan();
    let w2 = fs2 * (std::f64::consts::PI * high / rate).tan();
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;
    let n = order / 2;

    // Each prototype pole p maps to the two roots of s^2 - bw*p*s + w0^2.
    let mut apoles = Vec::with_capacity(order);
    for p in prototype_poles(n) {
        let half = 0.5 * bw * p;
        let disc = (half * half - Complex64::new(w0 * w0, 0.0)).sqrt();
        apoles.push(half + disc);
        apoles.push(half - disc);
    }
    let zpoles: Vec<Complex64> = apoles.into_iter().map(|p| bilinear(p, fs2)).collect();
    let sections: Vec<Biquad> = pole_sections(&zpoles)
        .into_iter()
        .map(|(a1, a2)| Biquad {
            // One zero at z = 1 and one at z = -1 per section.
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1,
            a2,
        })
        .collect();
    let center = (low * high).sqrt();
    Ok(normalize_at(sections, center, rate))
}

/// Single-pole DC blocker.
pub fn single_pole_highpass(cutoff: f64, rate: f64) -> Result<SosFilter> {
    check_corner(cutoff, rate)?;
    let t = (std::f64::consts::PI * cutoff / rate).tan();
    let a = (1.0 - t) / (1.0 + t);
    let g = (1.0 + a) / 2.0;
    Ok(SosFilter {
        sections: vec![Biquad {
            b0: g,
            b1: -g,
            b2: 0.0,
            a1: -a,
            a2: 0.0,
        }],
    })
}

/// Sliding analysis filter bank.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FilterBankSpec {
    pub start_hz: f64,
    pub stop_hz: f64,
    pub step_hz: f64,
    pub bandwidth_hz: f64,
    pub order: usize,
}

impl Default for FilterBankSpec {
    fn default() -> Self {
        Self {
            start_hz: 30e6,
            stop_hz: 500e6,
            step_hz: 10e6,
            bandwidth_hz: 20e6,
            order: 4,
        }
    }
}

impl FilterBankSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_hz > 0.0 && self.stop_hz >= self.start_hz && self.step_hz > 0.0) {
            return Err(Error::Config(format!(
                "filter bank edges invalid: start {} stop {} step {}",
                self.start_hz, self.stop_hz, self.step_hz
            )));
        }
        if self.bandwidth_hz <= 0.0 {
            return Err(Error::Config("filter bank bandwidth must be positive".into()));
        }
        if self.start_hz - self.bandwidth_hz / 2.0 <= 0.0 {
            return Err(Error::Config(
                "lowest band extends to or below zero frequency".into(),
            ));
        }
        Ok(())
    }

    /// Band center frequencies from start to stop inclusive.
    pub fn centers(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u32;
        loop {
            let f = self.start_hz + k as f64 * self.step_hz;
            if f > self.stop_hz * (1.0 + 1e-9) {
                break;
            }
            out.push(f);
            k += 1;
        }
        out
    }
}

/// Zero-phase band-pass of one trace around `center`.
pub fn bandpass(
    trace: &WaveformTrace,
    center: f64,
    width: f64,
    order: usize,
) -> Result<WaveformTrace> {
    let rate = trace.sample_rate();
    let low = center - width / 2.0;
    let high = center + width / 2.0;
    if low <= 0.0 || high >= rate / 2.0 {
        return Err(Error::BandOutOfRange {
            center,
            width,
            nyquist: rate / 2.0,
        });
    }
    let filt = butter_bandpass(order, low, high, rate)?;
    WaveformTrace::new(
        filt.filtfilt(trace.samples()),
        rate,
        trace.start_time(),
        trace.unit(),
    )
}

/// Applies every band of the filter bank to one trace.
pub fn filter_bank(trace: &WaveformTrace, spec: &FilterBankSpec) -> Result<Vec<WaveformTrace>> {
    spec.validate()?;
    spec.centers()
        .into_iter()
        .map(|c| bandpass(trace, c, spec.bandwidth_hz, spec.order))
        .collect()
}

/// Sliding window geometry in seconds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width_s: f64,
    pub stride_s: f64,
}

/// Sample ranges of every full window over a trace of `len` samples.
pub fn windows(len: usize, rate: f64, spec: &WindowSpec) -> Vec<Range<usize>> {
    let width = (spec.width_s * rate).round() as usize;
    let stride = (spec.stride_s * rate).round().max(1.0) as usize;
    if width == 0 || width > len {
        return Vec::new();
    }
    let mut out = Vec::with_capacity((len - width) / stride + 1);
    let mut start = 0;
    while start + width <= len {
        out.push(start..start + width);
        start += stride;
    }
    out
}

/// Anti-aliased integer-factor downsampling with a Blackman-windowed sinc.
pub fn decimate(trace: &WaveformTrace, factor: usize) -> Result<WaveformTrace> {
    if factor == 0 {
        return Err(Error::Config("decimation factor must be nonzero".into()));
    }
    if factor == 1 {
        return Ok(trace.clone());
    }
    let x = trace.samples();
    let taps = 12 * factor + 1;
    let half = (taps - 1) / 2;
    // Pass 80% of the output Nyquist band.
    let fc = 0.8 * 0.5 / factor as f64;
    let mut h = Vec::with_capacity(taps);
    let mut sum = 0.0;
    for i in 0..taps {
        let m = i as f64 - half as f64;
        let sinc = if m == 0.0 {
            2.0 * fc
        } else {
            (2.0 * std::f64::consts::PI * fc * m).sin() / (std::f64::consts::PI * m)
        };
        let w = 0.42
            - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos()
            + 0.08 * (4.0 * std::f64::consts::PI * i as f64 / (taps - 1) as f64).cos();
        let v = sinc * w;
        sum += v;
        h.push(v);
    }
    for v in &mut h {
        *v /= sum;
    }

    let n_out = x.len().div_ceil(factor);
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        let center = m * factor;
        let mut acc = 0.0;
        for (i, &hi) in h.iter().enumerate() {
            let idx = center as isize + i as isize - half as isize;
            if idx >= 0 && (idx as usize) < x.len() {
                acc += hi * x[idx as usize];
            }
        }
        out.push(acc);
    }
    WaveformTrace::new(
        out,
        trace.sample_rate() / factor as f64,
        trace.start_time(),
        trace.unit(),
    )
}

/// Outcome of aligning one trace against a reference.
#[derive(Clone, Copy, Debug)]
pub struct AlignResult {
    /// Samples the trace must be shifted left to match the reference.
    pub offset: isize,
    /// Normalized correlation at the chosen offset.
    pub ncc: f64,
    /// Set when either signal had no variance over the compared region.
    pub degenerate: bool,
}

/// Finds the integer shift of `x` against `reference` maximizing normalized
/// cross-correlation over the interior region. Ties prefer the smaller
/// absolute shift, negative first.
pub fn align_offset(x: &[f64], reference: &[f64], max_offset: usize) -> Result<AlignResult> {
    let n = x.len().min(reference.len());
    if 2 * max_offset >= n {
        return Err(Error::OffsetTooLarge {
            offset: max_offset,
            limit: n / 2,
        });
    }
    let lo = max_offset;
    let hi = n - max_offset;
    let region = hi - lo;

    let stats = |s: &[f64], shift: isize| -> (f64, f64) {
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in lo..hi {
            let v = s[(i as isize + shift) as usize];
            sum += v;
            sq += v * v;
        }
        let mean = sum / region as f64;
        (mean, sq - sum * sum / region as f64)
    };

    let (mu_r, var_r) = stats(reference, 0);
    if var_r <= 0.0 {
        return Ok(AlignResult {
            offset: 0,
            ncc: 0.0,
            degenerate: true,
        });
    }

    let mut best = AlignResult {
        offset: 0,
        ncc: f64::MIN,
        degenerate: false,
    };
    let mut any_variance = false;
    // Visit shifts by growing magnitude so ties keep the smallest |shift|.
    let mut shifts = vec![0isize];
    for d in 1..=max_offset as isize {
        shifts.push(-d);
        shifts.push(d);
    }
    for delta in shifts {
        let (mu_x, var_x) = stats(x, delta);
        if var_x <= 0.0 {
            continue;
        }
        any_variance = true;
        let mut cov = 0.0;
        for i in lo..hi {
            cov += (x[(i as isize + delta) as usize] - mu_x) * (reference[i] - mu_r);
        }
        let ncc = cov / (var_x * var_r).sqrt();
        if ncc > best.ncc {
            best = AlignResult {
                offset: delta,
                ncc,
                degenerate: false,
            };
        }
    }
    if !any_variance {
        return Ok(AlignResult {
            offset: 0,
            ncc: 0.0,
            degenerate: true,
        });
    }
    Ok(best)
}

/// Spectrogram geometry.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpectrogramSpec {
    pub fft_len: usize,
    pub hop: usize,
}

/// Short-time magnitude spectrum: `frames[t][k]` is the magnitude of bin `k`
/// in frame `t` under a Hann window.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f64>>,
    pub freqs: Vec<f64>,
    pub times: Vec<f64>,
}

pub fn spectrogram(trace: &WaveformTrace, spec: &SpectrogramSpec) -> Result<Spectrogram> {
    if spec.fft_len < 2 || spec.hop == 0 {
        return Err(Error::Config("spectrogram needs fft_len >= 2 and hop >= 1".into()));
    }
    let x = trace.samples();
    if x.len() < spec.fft_len {
        return Err(Error::Config(format!(
            "trace of {} samples shorter than one frame of {}",
            x.len(),
            spec.fft_len
        )));
    }
    let rate = trace.sample_rate();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(spec.fft_len);
    let window: Vec<f64> = (0..spec.fft_len)
        .map(|i| {
            0.5 - 0.5
                * (2.0 * std::f64::consts::PI * i as f64 / (spec.fft_len - 1) as f64).cos()
        })
        .collect();
    let n_bins = spec.fft_len / 2 + 1;

    let mut frames = Vec::new();
    let mut times = Vec::new();
    let mut start = 0;
    let mut buf = vec![Complex64::new(0.0, 0.0); spec.fft_len];
    while start + spec.fft_len <= x.len() {
        for i in 0..spec.fft_len {
            buf[i] = Complex64::new(x[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..n_bins].iter().map(|c| c.norm()).collect());
        times.push(trace.time_at(start + spec.fft_len / 2));
        start += spec.hop;
    }
    let freqs = (0..n_bins).map(|k| k as f64 * rate / spec.fft_len as f64).collect();
    Ok(Spectrogram { frames, freqs, times })
}

/// Full-length magnitude-squared spectrum with a rectangular window,
/// returning only nonnegative frequencies.
pub fn power_spectrum(trace: &WaveformTrace) -> (Vec<f64>, Vec<f64>) {
    let x = trace.samples();
    let n = x.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    let n_bins = n / 2 + 1;
    let rate = trace.sample_rate();
    let freqs = (0..n_bins).map(|k| k as f64 * rate / n as f64).collect();
    let power = buf[..n_bins]
        .iter()
        .map(|c| c.norm_sqr() / (n as f64 * n as f64))
        .collect();
    (freqs, power)
}

/// Signal power at a single frequency via the Goertzel recurrence.
pub fn goertzel_power(x: &[f64], rate: f64, freq: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / rate;
    let coeff = 2.0 * w.cos();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &v in x {
        let s0 = v + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
    }
    let n = x.len() as f64;
    (s1 * s1 + s2 * s2 - coeff * s1 * s2) / (n * n)
}
