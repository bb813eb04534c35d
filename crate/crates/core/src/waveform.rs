use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Physical unit attached to a sampled waveform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalUnit {
    Amperes,
    Volts,
    /// Probe output after coupling and bandwidth shaping; proportional to
    /// volts but left unscaled.
    ProbeUnits,
}

/// Uniformly sampled real-valued signal.
///
/// Construction validates the invariants relied on downstream: a positive
/// sample rate, at least one sample and every sample finite. Transforms build
/// new traces through [`WaveformTrace::new`], so a non-finite value raised by
/// a simulation step surfaces as an explicit error instead of propagating.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformTrace {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
    unit: SignalUnit,
}

impl WaveformTrace {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: f64,
        start_time: f64,
        unit: SignalUnit,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Config(format!(
                "sample rate must be positive and finite, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        if let Some(idx) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(idx));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
            unit,
        })
    }

    /// Constant-valued trace, handy for quiescent loads and test fixtures.
    pub fn constant(
        value: f64,
        len: usize,
        sample_rate: f64,
        start_time: f64,
        unit: SignalUnit,
    ) -> Result<Self> {
        Self::new(vec![value; len], sample_rate, start_time, unit)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn unit(&self) -> SignalUnit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample spacing in seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt()
    }

    pub fn time_at(&self, idx: usize) -> f64 {
        self.start_time + idx as f64 * self.dt()
    }

    /// Copy of the sample window `[start, end)` keeping the time axis.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.samples.len() {
            return Err(Error::Config(format!(
                "slice {start}..{end} out of range for {} samples",
                self.samples.len()
            )));
        }
        Self::new(
            self.samples[start..end].to_vec(),
            self.sample_rate,
            self.time_at(start),
            self.unit,
        )
    }

    /// Integral over the full duration, with each sample owning one sample
    /// period. This matches `duration()` (n samples cover n * dt seconds),
    /// so charge bookkeeping against a constant baseline is exact.
    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.dt()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_empty_and_nonfinite() {
        assert!(matches!(
            WaveformTrace::new(vec![], 1.0, 0.0, SignalUnit::Amperes),
            Err(Error::EmptyWaveform)
        ));
        assert!(matches!(
            WaveformTrace::new(vec![0.0, f64::NAN], 1.0, 0.0, SignalUnit::Amperes),
            Err(Error::NonFinite(1))
        ));
        assert!(WaveformTrace::new(vec![0.0], 0.0, 0.0, SignalUnit::Amperes).is_err());
        assert!(WaveformTrace::new(vec![0.0], -5.0, 0.0, SignalUnit::Amperes).is_err());
    }

    #[test]
    fn integral_matches_closed_form() {
        let trace =
            WaveformTrace::constant(2.0, 10, 10.0, 0.0, SignalUnit::Amperes).unwrap();
        assert_relative_eq!(trace.integral(), 2.0, max_relative = 1e-12);

        // Ramp 0..1 over n samples at dt = 1/(n-1): sum i/(n-1) * dt = n/(2(n-1)).
        let n = 1001;
        let samples: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let rate = (n - 1) as f64;
        let trace = WaveformTrace::new(samples, rate, 0.0, SignalUnit::Amperes).unwrap();
        let expected = n as f64 / (2.0 * (n - 1) as f64);
        assert_relative_eq!(trace.integral(), expected, max_relative = 1e-12);
    }

    #[test]
    fn slice_keeps_time_axis() {
        let trace =
            WaveformTrace::new(vec![1.0, 2.0, 3.0, 4.0], 10.0, 1.0, SignalUnit::Volts).unwrap();
        let cut = trace.slice(2, 4).unwrap();
        assert_eq!(cut.samples(), &[3.0, 4.0]);
        assert_relative_eq!(cut.start_time(), 1.2);
        assert!(trace.slice(3, 3).is_err());
        assert!(trace.slice(0, 5).is_err());
    }
}
