//! Conversion of switching activity into a supply-current waveform.
//!
//! Every clock cycle of an [`ActivityTrace`](crate::aes::ActivityTrace)
//! draws one current pulse whose area is the cycle weight times a fixed
//! charge per register-bit toggle. Pulses ride on a constant quiescent
//! current and are placed on the output sample grid at the cycle start plus
//! a configurable clock phase. Sampled pulse values are rescaled so each
//! pulse integrates to its nominal charge exactly, keeping total drawn
//! charge independent of where pulse edges fall between samples.

use crate::aes::ActivityTrace;
use crate::error::{Error, Result};
use crate::waveform::{SignalUnit, WaveformTrace};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseKind {
    Rectangular,
    Triangular,
    /// Instant rise followed by an exponential decay with a time constant of
    /// one fifth of the pulse duration.
    RcDecay,
}

/// Current pulse drawn per clock cycle.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PulseShape {
    pub kind: PulseKind,
    /// Pulse support in seconds.
    pub duration: f64,
    /// Charge per register-bit toggle, in coulombs.
    pub charge_per_transition: f64,
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config(format!(
                "pulse duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.charge_per_transition.is_finite() && self.charge_per_transition > 0.0) {
            return Err(Error::Config(format!(
                "charge per transition must be positive, got {}",
                self.charge_per_transition
            )));
        }
        Ok(())
    }

    /// Unit-amplitude shape value at normalized position `u` in `[0, 1]`.
    fn value(&self, u: f64) -> f64 {
        match self.kind {
            PulseKind::Rectangular => 1.0,
            PulseKind::Triangular => 1.0 - (2.0 * u - 1.0).abs(),
            PulseKind::RcDecay => (-5.0 * u).exp(),
        }
    }
}

/// Placement of activity pulses on the output grid.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SynthesisParams {
    /// Output sample rate in Sa/s.
    pub sample_rate: f64,
    /// Engine clock frequency in Hz.
    pub clock_hz: f64,
    /// Offset of the first clock edge from the end of the leading pad, in
    /// seconds; must lie in `[0, clock period)`.
    pub clock_phase: f64,
    /// Constant baseline current in amperes.
    pub quiescent: f64,
    /// Quiescent-only time prepended before the first cycle, in seconds.
    pub pre_pad: f64,
    /// Quiescent-only time appended after the last cycle start plus one
    /// clock period; must cover at least one pulse duration.
    pub post_pad: f64,
}

impl SynthesisParams {
    pub fn clock_period(&self) -> f64 {
        1.0 / self.clock_hz
    }

    fn validate(&self, shape: &PulseShape) -> Result<()> {
        shape.validate()?;
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return Err(Error::Config(format!(
                "clock frequency must be positive, got {}",
                self.clock_hz
            )));
        }
        let min_rate = 10.0 / shape.duration;
        if !(self.sample_rate.is_finite()) || self.sample_rate + 1e-9 < min_rate {
            return Err(Error::SampleRateTooLow {
                rate: self.sample_rate,
                min: min_rate,
            });
        }
        if !(0.0..self.clock_period()).contains(&self.clock_phase) {
            return Err(Error::Config(format!(
                "clock phase {} outside [0, {})",
                self.clock_phase,
                self.clock_period()
            )));
        }
        if self.pre_pad < 0.0 || self.post_pad < shape.duration {
            return Err(Error::Config(
                "pads must be nonnegative and the trailing pad must cover one pulse".into(),
            ));
        }
        if !(self.quiescent.is_finite() && self.quiescent >= 0.0) {
            return Err(Error::Config(format!(
                "quiescent current must be nonnegative, got {}",
                self.quiescent
            )));
        }
        Ok(())
    }

    /// Number of output samples produced for `n_cycles` of activity. The
    /// grid reserves one extra clock period after the last cycle so traces
    /// keep the same length for every phase in `[0, clock period)`.
    pub fn samples_for(&self, n_cycles: usize) -> usize {
        let total =
            self.pre_pad + (n_cycles as f64 + 1.0) * self.clock_period() + self.post_pad;
        (total * self.sample_rate).round() as usize
    }
}

/// Renders an activity trace into a supply-current waveform.
pub fn activity_to_current(
    act: &ActivityTrace,
    shape: &PulseShape,
    params: &SynthesisParams,
) -> Result<WaveformTrace> {
    params.validate(shape)?;
    if act.records.is_empty() {
        return Err(Error::Config("activity trace is empty".into()));
    }
    let dt = 1.0 / params.sample_rate;
    let n = params.samples_for(act.records.len());
    let mut samples = vec![params.quiescent; n];

    let period = params.clock_period();
    for rec in &act.records {
        let weight = rec.weight();
        if weight == 0.0 {
            continue;
        }
        let t0 = params.pre_pad + params.clock_phase + rec.cycle as f64 * period;
        let first = (t0 * params.sample_rate).ceil() as usize;
        let last = ((t0 + shape.duration) * params.sample_rate).floor() as usize;
        let last = last.min(n - 1);
        if first > last {
            continue;
        }
        // Evaluate the raw shape, then rescale so the sampled pulse carries
        // exactly weight * charge.
        let mut raw = 0.0;
        for i in first..=last {
            raw += shape.value((i as f64 * dt - t0) / shape.duration);
        }
        if raw <= 0.0 {
            continue;
        }
        let scale = weight * shape.charge_per_transition / (raw * dt);
        for i in first..=last {
            samples[i] += scale * shape.value((i as f64 * dt - t0) / shape.duration);
        }
    }

    WaveformTrace::new(samples, params.sample_rate, 0.0, SignalUnit::Amperes)
}

/// Adds white Gaussian noise; `sigma == 0` returns the input unchanged.
pub fn add_noise(trace: &WaveformTrace, sigma: f64, seed: u64) -> Result<WaveformTrace> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::Config(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(trace.clone());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let samples = trace
        .samples()
        .iter()
        .map(|s| s + normal.sample(&mut rng))
        .collect();
    WaveformTrace::new(samples, trace.sample_rate(), trace.start_time(), trace.unit())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{encrypt_hp, encrypt_lp, ActivityRecord, ActivityTrace, AesArchitecture};
    use approx::assert_relative_eq;

    fn shape(kind: PulseKind) -> PulseShape {
        PulseShape {
            kind,
            duration: 2e-9,
            charge_per_transition: 6.25e-12,
        }
    }

    fn params() -> SynthesisParams {
        SynthesisParams {
            sample_rate: 5e9,
            clock_hz: 100e6,
            clock_phase: 0.0,
            quiescent: 0.025,
            pre_pad: 20e-9,
            post_pad: 20e-9,
        }
    }

    fn single_cycle(weight: u32) -> ActivityTrace {
        ActivityTrace {
            architecture: AesArchitecture::HighPerformance,
            records: vec![ActivityRecord {
                cycle: 0,
                state_transitions: weight,
                key_transitions: 0,
                comb_weight: 0.0,
            }],
        }
    }

    #[test]
    fn charge_is_conserved() {
        let key = [7u8; 16];
        let pt = [3u8; 16];
        for kind in [PulseKind::Rectangular, PulseKind::Triangular, PulseKind::RcDecay] {
            for (_, act) in [encrypt_hp(&key, &pt), encrypt_lp(&key, &pt)] {
                let sh = shape(kind);
                let p = params();
                let trace = activity_to_current(&act, &sh, &p).unwrap();
                let drawn = trace.integral() - p.quiescent * trace.duration();
                let expected = act.total_weight() * sh.charge_per_transition;
                assert_relative_eq!(drawn, expected, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn isolated_pulse_carries_cycle_charge() {
        for weight in [1u32, 64, 128] {
            let sh = shape(PulseKind::Triangular);
            let p = params();
            let trace = activity_to_current(&single_cycle(weight), &sh, &p).unwrap();
            let drawn = trace.integral() - p.quiescent * trace.duration();
            assert_relative_eq!(
                drawn,
                weight as f64 * sh.charge_per_transition,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn trace_returns_to_quiescent_between_pulses() {
        let (_, act) = encrypt_hp(&[1u8; 16], &[2u8; 16]);
        let sh = shape(PulseKind::Rectangular);
        let p = params();
        let trace = activity_to_current(&act, &sh, &p).unwrap();
        let rate = p.sample_rate;
        // Halfway through each cycle the pulse (2 ns of a 10 ns period) is over.
        for c in 0..act.records.len() {
            let t = p.pre_pad + (c as f64 + 0.6) * p.clock_period();
            let idx = (t * rate) as usize;
            assert_eq!(trace.samples()[idx], p.quiescent, "cycle {c}");
        }
        // And the pulse region sits above quiescent.
        let t = p.pre_pad + 0.5 * sh.duration;
        assert!(trace.samples()[(t * rate) as usize] > p.quiescent);
    }

    #[test]
    fn expected_length_matches() {
        let (_, act) = encrypt_lp(&[0u8; 16], &[0u8; 16]);
        let p = params();
        let trace = activity_to_current(&act, &shape(PulseKind::Triangular), &p).unwrap();
        assert_eq!(trace.len(), p.samples_for(act.records.len()));
    }

    #[test]
    fn clock_phase_shifts_by_whole_samples() {
        let (_, act) = encrypt_hp(&[9u8; 16], &[4u8; 16]);
        let sh = shape(PulseKind::Triangular);
        let p0 = params();
        let shift_samples = 25usize;
        let mut p1 = params();
        p1.clock_phase = shift_samples as f64 / p0.sample_rate;
        let a = activity_to_current(&act, &sh, &p0).unwrap();
        let b = activity_to_current(&act, &sh, &p1).unwrap();
        // Compare the interior where both traces contain the full pulse
        // train. Pulse placement arithmetic is floating point, so allow a
        // few ulps of rounding at the pulse edges.
        let n = a.len() - shift_samples;
        for i in 0..n {
            let diff = (b.samples()[shift_samples + i] - a.samples()[i]).abs();
            assert!(diff < 1e-12, "sample {i}: diff {diff:.3e}");
        }
    }

    #[test]
    fn sample_rate_precondition() {
        let act = single_cycle(10);
        let sh = shape(PulseKind::Rectangular);
        let mut p = params();
        p.sample_rate = 4.0 / sh.duration;
        assert!(matches!(
            activity_to_current(&act, &sh, &p),
            Err(Error::SampleRateTooLow { .. })
        ));
    }

    #[test]
    fn noise_is_seeded_and_optional() {
        let (_, act) = encrypt_hp(&[5u8; 16], &[6u8; 16]);
        let clean = activity_to_current(&act, &shape(PulseKind::Triangular), &params()).unwrap();
        let same = add_noise(&clean, 0.0, 1).unwrap();
        assert_eq!(clean.samples(), same.samples());

        let a = add_noise(&clean, 1e-3, 42).unwrap();
        let b = add_noise(&clean, 1e-3, 42).unwrap();
        let c = add_noise(&clean, 1e-3, 43).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_ne!(a.samples(), c.samples());

        let n = clean.len() as f64;
        let mean_shift = (a.integral() - clean.integral()) / clean.duration();
        assert!(mean_shift.abs() < 5.0 * 1e-3 / n.sqrt());
        let var: f64 = a
            .samples()
            .iter()
            .zip(clean.samples())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / n;
        assert_relative_eq!(var.sqrt(), 1e-3, max_relative = 0.05);

        assert!(add_noise(&clean, -1.0, 0).is_err());
    }
}
