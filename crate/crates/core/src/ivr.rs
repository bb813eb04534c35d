//! Switched-inductor voltage regulator with a digital feedback loop.
//!
//! The power stage is a synchronous buck: a switch node driven between the
//! input rail and ground, a bondwire-class inductor and an on-die output
//! capacitor. Integration runs at a fixed number of substeps per switching
//! cycle with trapezoidal updates; switch on-intervals are resolved with
//! fractional overlap per substep, so volt-seconds are preserved exactly no
//! matter where an edge falls between samples.
//!
//! The feedback path samples the output once per switching cycle: an ADC
//! quantizes the output voltage, a PID filter in code units produces a duty
//! command, and a DPWM quantizer maps it onto the switch timing. In
//! randomized mode a small linear-feedback shift register delays the clock
//! edge of each cycle by a pseudo-random amount held for a fixed number of
//! cycles. The delayed clock drives the whole digital path, so the ADC
//! sampling instant and the switch pulse shift together; duty, and with it
//! the delivered volt-seconds, is unchanged.

use crate::error::{Error, Result};
use crate::waveform::{SignalUnit, WaveformTrace};
use serde::{Deserialize, Serialize};

/// Buck power stage parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PowerStageParams {
    /// Input rail in volts.
    pub v_in: f64,
    /// Inductance in henries.
    pub inductance: f64,
    /// Output capacitance in farads.
    pub capacitance: f64,
    /// Switching frequency in hertz.
    pub switching_frequency: f64,
    /// Series resistance of the inductor path in ohms.
    pub r_inductor: f64,
    /// Integration substeps per switching cycle.
    pub steps_per_cycle: u32,
}

impl Default for PowerStageParams {
    fn default() -> Self {
        Self {
            v_in: 1.2,
            inductance: 5.8e-9,
            capacitance: 50e-9,
            switching_frequency: 125e6,
            r_inductor: 0.1,
            steps_per_cycle: 200,
        }
    }
}

impl PowerStageParams {
    pub fn switching_period(&self) -> f64 {
        1.0 / self.switching_frequency
    }

    /// Integration step in seconds.
    pub fn dt(&self) -> f64 {
        self.switching_period() / self.steps_per_cycle as f64
    }

    /// Integration grid rate in Sa/s.
    pub fn sim_rate(&self) -> f64 {
        self.switching_frequency * self.steps_per_cycle as f64
    }

    /// Corner frequency of the LC output filter.
    pub fn lc_corner(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * (self.inductance * self.capacitance).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("v_in", self.v_in),
            ("inductance", self.inductance),
            ("capacitance", self.capacitance),
            ("switching_frequency", self.switching_frequency),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.r_inductor.is_finite() && self.r_inductor >= 0.0) {
            return Err(Error::Config("r_inductor must be nonnegative".into()));
        }
        if self.steps_per_cycle < 100 {
            return Err(Error::Config(format!(
                "need at least 100 integration steps per switching cycle, got {}",
                self.steps_per_cycle
            )));
        }
        if self.lc_corner() >= self.switching_frequency {
            return Err(Error::Config(format!(
                "LC corner {:.3e} Hz must sit below the switching frequency {:.3e} Hz",
                self.lc_corner(),
                self.switching_frequency
            )));
        }
        Ok(())
    }
}

/// Digital feedback parameters. The PID filter works on ADC code error and
/// produces a duty correction added to the feedforward ratio.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Regulation target in volts.
    pub v_ref: f64,
    pub adc_bits: u32,
    /// ADC input range in volts, converted from zero.
    pub adc_full_scale: f64,
    pub dpwm_bits: u32,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup clamp on the integral term, in duty units.
    pub integral_limit: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            v_ref: 0.9,
            adc_bits: 7,
            adc_full_scale: 1.2,
            dpwm_bits: 8,
            kp: 1.0e-3,
            ki: 6.0e-5,
            kd: 0.0,
            integral_limit: 0.5,
        }
    }
}

impl ControllerParams {
    /// One ADC step in volts.
    pub fn adc_lsb(&self) -> f64 {
        self.adc_full_scale / (1u64 << self.adc_bits) as f64
    }

    /// Quantizes a voltage to a mid-tread ADC code, saturating at the range
    /// ends. Rounding keeps the zero-error bin centered on the reference,
    /// which the loop needs to regulate without a half-bin offset.
    pub fn adc_code(&self, v: f64) -> u32 {
        let max_code = (1u64 << self.adc_bits) as f64 - 1.0;
        let clamped = v.clamp(0.0, self.adc_full_scale);
        ((clamped / self.adc_lsb()).round()).min(max_code) as u32
    }

    pub fn v_ref_code(&self) -> u32 {
        self.adc_code(self.v_ref)
    }

    /// Largest duty the DPWM can express.
    pub fn duty_max(&self) -> f64 {
        let levels = (1u64 << self.dpwm_bits) as f64;
        (levels - 1.0) / levels
    }

    /// Quantizes a duty command onto the DPWM grid.
    pub fn quantize_duty(&self, duty: f64) -> f64 {
        let levels = (1u64 << self.dpwm_bits) as f64;
        (duty.clamp(0.0, self.duty_max()) * levels).floor() / levels
    }

    pub fn validate(&self, stage: &PowerStageParams) -> Result<()> {
        if !(self.v_ref > 0.0 && self.v_ref < stage.v_in) {
            return Err(Error::Config(format!(
                "v_ref {} must lie inside (0, v_in {})",
                self.v_ref, stage.v_in
            )));
        }
        if self.adc_bits == 0 || self.adc_bits > 16 || self.dpwm_bits == 0 || self.dpwm_bits > 20 {
            return Err(Error::Config("converter bit widths out of range".into()));
        }
        if self.adc_full_scale < self.v_ref {
            return Err(Error::Config("ADC full scale below v_ref".into()));
        }
        Ok(())
    }
}

/// Control-loop randomizer parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RandomizerParams {
    /// Edge delay per LFSR count, in seconds.
    pub delay_unit: f64,
    /// Switching cycles a delay value is held before the LFSR steps.
    pub update_divider: u32,
    /// Initial register contents, nonzero, 4 bits.
    pub lfsr_seed: u8,
}

impl Default for RandomizerParams {
    fn default() -> Self {
        Self {
            // One 64th of the switching period.
            delay_unit: 0.125e-9,
            update_divider: 4,
            lfsr_seed: 0b0001,
        }
    }
}

/// Number of distinct states the 4-bit register walks through.
pub const LFSR_PERIOD: usize = 15;

/// Advances the 4-bit Fibonacci LFSR with taps at bits 3 and 2
/// (polynomial x^4 + x^3 + 1).
pub fn lfsr_next(state: u8) -> Result<u8> {
    if state == 0 || state > 0xf {
        return Err(Error::ZeroLfsrState);
    }
    let feedback = ((state >> 3) ^ (state >> 2)) & 1;
    Ok(((state << 1) & 0xf) | feedback)
}

impl RandomizerParams {
    pub fn validate(&self, stage: &PowerStageParams) -> Result<()> {
        if self.lfsr_seed == 0 || self.lfsr_seed > 0xf {
            return Err(Error::ZeroLfsrState);
        }
        if self.update_divider == 0 {
            return Err(Error::Config("update divider must be at least 1".into()));
        }
        if !(self.delay_unit.is_finite() && self.delay_unit >= 0.0) {
            return Err(Error::Config("delay unit must be nonnegative".into()));
        }
        if self.delay_unit * 15.0 >= stage.switching_period() {
            return Err(Error::Config(
                "maximum edge delay must stay inside one switching cycle".into(),
            ));
        }
        Ok(())
    }

    /// Length of the repeating delay pattern in switching cycles.
    pub fn pattern_cycles(&self) -> u64 {
        LFSR_PERIOD as u64 * self.update_divider as u64
    }
}

/// Edge delay applied during switching cycle `cycle`, counting from the
/// cycle where the register still holds its seed value.
pub fn randomizer_delay(params: &RandomizerParams, cycle: u64) -> Result<f64> {
    if params.lfsr_seed == 0 || params.lfsr_seed > 0xf {
        return Err(Error::ZeroLfsrState);
    }
    let steps = (cycle / params.update_divider as u64) % LFSR_PERIOD as u64;
    let mut state = params.lfsr_seed;
    for _ in 0..steps {
        state = lfsr_next(state)?;
    }
    Ok(state as f64 * params.delay_unit)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvrMode {
    Baseline,
    Randomized,
}

/// Full regulator configuration.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IvrParams {
    pub stage: PowerStageParams,
    pub ctrl: ControllerParams,
    pub randomizer: RandomizerParams,
    /// Switching cycles simulated before the output window to reach steady
    /// state.
    pub settle_cycles: u32,
    /// Allowed distance of the settled output mean from `v_ref`, in ADC
    /// least significant bits.
    pub settle_tolerance_lsb: f64,
}

impl Default for IvrParams {
    fn default() -> Self {
        Self {
            stage: PowerStageParams::default(),
            ctrl: ControllerParams::default(),
            randomizer: RandomizerParams::default(),
            settle_cycles: 1500,
            settle_tolerance_lsb: 1.0,
        }
    }
}

impl IvrParams {
    pub fn validate(&self) -> Result<()> {
        self.stage.validate()?;
        self.ctrl.validate(&self.stage)?;
        self.randomizer.validate(&self.stage)?;
        if self.settle_cycles == 0 {
            return Err(Error::Config("settle pre-roll must be nonzero".into()));
        }
        Ok(())
    }
}

/// Continuous state advanced by the integrator.
#[derive(Clone, Copy, Debug)]
pub struct IvrState {
    pub inductor_current: f64,
    pub v_out: f64,
    /// PID integral term in duty units.
    pub integral: f64,
    /// Previous cycle's code error, for the derivative term.
    pub prev_error: f64,
    /// Duty applied during the current cycle.
    pub duty: f64,
    /// Absolute step index on the integration grid.
    pub step: u64,
    /// On-interval of the current cycle in steps relative to its cycle start.
    on_curr: (f64, f64),
    /// On-interval of the previous cycle, relative to the current cycle
    /// start (negative offsets), to honor edges delayed across the boundary.
    on_prev: (f64, f64),
    /// Absolute step at which the controller fires for the current cycle,
    /// the cycle start plus the randomized clock delay.
    sample_step: u64,
    /// Clock delay of the current cycle in integration steps.
    delay_steps: f64,
}

impl IvrState {
    fn cold() -> Self {
        Self {
            inductor_current: 0.0,
            v_out: 0.0,
            integral: 0.0,
            prev_error: 0.0,
            duty: 0.0,
            step: 0,
            on_curr: (0.0, 0.0),
            on_prev: (0.0, 0.0),
            sample_step: 0,
            delay_steps: 0.0,
        }
    }
}

/// Per-cycle controller log.
#[derive(Clone, Copy, Debug)]
pub struct CycleLog {
    pub cycle: u64,
    pub duty: f64,
    pub delay: f64,
}

/// Branch waveforms produced by a regulator run, all on the integration grid
/// of the load window.
#[derive(Clone, Debug)]
pub struct IvrRun {
    /// Current drawn from the input rail (inductor current chopped by the
    /// high-side switch).
    pub input_current: WaveformTrace,
    pub inductor_current: WaveformTrace,
    pub v_out: WaveformTrace,
    pub v_sw: WaveformTrace,
    /// Controller decisions for every cycle overlapping the window.
    pub cycles: Vec<CycleLog>,
}

/// One PID update on ADC-code error, returning the quantized duty.
pub fn controller_update(
    v_out_sample: f64,
    ctrl: &ControllerParams,
    v_in: f64,
    integral: &mut f64,
    prev_error: &mut f64,
) -> (u32, f64) {
    let code = ctrl.adc_code(v_out_sample);
    let error = ctrl.v_ref_code() as f64 - code as f64;
    *integral =
        (*integral + ctrl.ki * error).clamp(-ctrl.integral_limit, ctrl.integral_limit);
    let derivative = error - *prev_error;
    *prev_error = error;
    let feedforward = ctrl.v_ref / v_in;
    let duty = feedforward + ctrl.kp * error + *integral + ctrl.kd * derivative;
    (code, ctrl.quantize_duty(duty))
}

/// Advances the power stage by one integration step under a fixed switch
/// drive, using a trapezoidal update.
pub fn step_power_stage(
    state: &IvrState,
    stage: &PowerStageParams,
    i_load: f64,
    on_fraction: f64,
) -> IvrState {
    let dt = stage.dt();
    let v_drive = on_fraction * stage.v_in;
    let l = stage.inductance;
    let c = stage.capacitance;
    let r = stage.r_inductor;

    let i0 = state.inductor_current;
    let v0 = state.v_out;
    let di0 = (v_drive - v0 - r * i0) / l;
    let dv0 = (i0 - i_load) / c;
    let i1 = i0 + dt * di0;
    let v1 = v0 + dt * dv0;
    let di1 = (v_drive - v1 - r * i1) / l;
    let dv1 = (i1 - i_load) / c;

    let mut next = *state;
    next.inductor_current = i0 + 0.5 * dt * (di0 + di1);
    next.v_out = v0 + 0.5 * dt * (dv0 + dv1);
    next.step = state.step + 1;
    next
}

/// Fraction of the step `[s, s+1)` (in steps since cycle start) covered by
/// the on-intervals of the current and previous cycles.
fn on_fraction(state: &IvrState, s: f64) -> f64 {
    let overlap = |(b, e): (f64, f64)| -> f64 { (e.min(s + 1.0) - b.max(s)).clamp(0.0, 1.0) };
    overlap(state.on_curr) + overlap(state.on_prev)
}

/// Regulator simulator carrying a settled operating point.
///
/// [`IvrSimulator::settle`] brings the regulator to periodic steady state
/// once; [`IvrSimulator::run_window`] then clones that state for each
/// measurement window, optionally free-running a pre-roll first so windows
/// start at arbitrary phases of the switching cycle and randomizer pattern.
#[derive(Clone, Debug)]
pub struct IvrSimulator {
    params: IvrParams,
    mode: IvrMode,
    state: IvrState,
    /// Randomizer pattern offset in cycles, fixed by the run seed.
    cycle_offset: u64,
    quiescent_load: f64,
}

impl IvrSimulator {
    /// Runs the settle pre-roll under a constant load and verifies
    /// regulation. The seed picks the starting point within the randomizer
    /// pattern.
    pub fn settle(
        mode: IvrMode,
        params: &IvrParams,
        quiescent_load: f64,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let cycle_offset = seed % params.randomizer.pattern_cycles();
        let mut sim = Self {
            params: *params,
            mode,
            state: IvrState::cold(),
            cycle_offset,
            quiescent_load,
        };

        let steps = params.settle_cycles as u64 * params.stage.steps_per_cycle as u64;
        // In randomized mode the steady state is a limit cycle locked to the
        // delay pattern, so the mean is taken over one whole pattern.
        let check_cycles = params.randomizer.pattern_cycles().max(16);
        let check_steps = check_cycles * params.stage.steps_per_cycle as u64;
        let mut tail_sum = 0.0;
        let mut tail_count = 0u64;
        sim.advance(steps, |_| quiescent_load, |step, st| {
            if step + check_steps >= steps {
                tail_sum += st.v_out;
                tail_count += 1;
            }
        })?;

        let mean = tail_sum / tail_count as f64;
        let tol = params.settle_tolerance_lsb * params.ctrl.adc_lsb();
        if (mean - params.ctrl.v_ref).abs() > tol {
            return Err(Error::SettleFailed(format!(
                "output mean {mean:.6} V vs target {:.6} V after {} cycles (tolerance {tol:.6} V)",
                params.ctrl.v_ref, params.settle_cycles
            )));
        }
        Ok(sim)
    }

    pub fn params(&self) -> &IvrParams {
        &self.params
    }

    /// Advances `steps` integration steps, feeding `load(step)` amperes and
    /// reporting each completed step to `observe`.
    fn advance(
        &mut self,
        steps: u64,
        load: impl Fn(u64) -> f64,
        mut observe: impl FnMut(u64, &IvrState),
    ) -> Result<()> {
        let spc = self.params.stage.steps_per_cycle as u64;
        for s in 0..steps {
            if self.state.step % spc == 0 {
                self.begin_cycle()?;
            }
            if self.state.step == self.state.sample_step {
                self.fire_controller();
            }
            let pos = (self.state.step % spc) as f64;
            let frac = on_fraction(&self.state, pos);
            self.state = step_power_stage(&self.state, &self.params.stage, load(s), frac);
            observe(s, &self.state);
        }
        if !(self.state.inductor_current.is_finite() && self.state.v_out.is_finite()) {
            return Err(Error::NonFinite(self.state.step as usize));
        }
        Ok(())
    }

    /// Resolves the clock delay for the cycle starting at the current step
    /// and schedules the controller on the delayed edge.
    fn begin_cycle(&mut self) -> Result<()> {
        let spc = self.params.stage.steps_per_cycle as f64;
        let cycle = self.state.step / self.params.stage.steps_per_cycle as u64;
        let delay = match self.mode {
            IvrMode::Baseline => 0.0,
            IvrMode::Randomized => {
                randomizer_delay(&self.params.randomizer, cycle + self.cycle_offset)?
            }
        };
        let delay_steps = delay / self.params.stage.dt();
        self.state.on_prev = (
            self.state.on_curr.0 - spc,
            self.state.on_curr.1 - spc,
        );
        // The switch stays off until the controller fires on the delayed
        // edge and lays out the on-interval.
        self.state.on_curr = (f64::INFINITY, f64::INFINITY);
        self.state.delay_steps = delay_steps;
        self.state.sample_step = self.state.step + delay_steps.floor() as u64;
        Ok(())
    }

    /// ADC sample, PID update and pulse layout, on the delayed clock edge.
    fn fire_controller(&mut self) {
        let spc = self.params.stage.steps_per_cycle as f64;
        let (_code, duty) = controller_update(
            self.state.v_out,
            &self.params.ctrl,
            self.params.stage.v_in,
            &mut self.state.integral,
            &mut self.state.prev_error,
        );
        let d = self.state.delay_steps;
        self.state.on_curr = (d, d + duty * spc);
        self.state.duty = duty;
    }

    /// Clones the settled state and simulates `preroll_steps` of quiescent
    /// free-run followed by the load window, recording branch waveforms for
    /// the window only.
    pub fn run_window(&self, load: &WaveformTrace, preroll_steps: u64) -> Result<IvrRun> {
        let stage = &self.params.stage;
        let sim_rate = stage.sim_rate();
        if (load.sample_rate() - sim_rate).abs() > 1e-6 * sim_rate {
            return Err(Error::GridMismatch(format!(
                "load sampled at {:.6e} Sa/s, integration grid at {:.6e} Sa/s",
                load.sample_rate(),
                sim_rate
            )));
        }

        let mut sim = self.clone();
        let quiescent = sim.quiescent_load;
        sim.advance(preroll_steps, |_| quiescent, |_, _| {})?;

        let n = load.len();
        let mut input_current = Vec::with_capacity(n);
        let mut inductor_current = Vec::with_capacity(n);
        let mut v_out = Vec::with_capacity(n);
        let mut v_sw = Vec::with_capacity(n);
        let mut cycles = Vec::new();
        let spc = stage.steps_per_cycle as u64;
        let samples = load.samples();
        let v_in = stage.v_in;

        let mut prev_i = sim.state.inductor_current;
        let first_step = sim.state.step;
        sim.advance(n as u64, |s| samples[s as usize], |s, st| {
            let pos = ((first_step + s) % spc) as f64;
            let frac = on_fraction(st, pos);
            let mid_i = 0.5 * (prev_i + st.inductor_current);
            prev_i = st.inductor_current;
            input_current.push(mid_i * frac);
            inductor_current.push(st.inductor_current);
            v_out.push(st.v_out);
            v_sw.push(frac * v_in);
            // Log at the cycle's last step, after the delayed controller
            // update has set the duty.
            if (first_step + s) % spc == spc - 1 {
                cycles.push(((first_step + s) / spc, st.duty));
            }
        })?;

        let start = first_step as f64 * stage.dt();
        let cycles = cycles
            .into_iter()
            .map(|(cycle, duty)| {
                let delay = match self.mode {
                    IvrMode::Baseline => 0.0,
                    IvrMode::Randomized => {
                        randomizer_delay(&self.params.randomizer, cycle + self.cycle_offset)
                            .unwrap_or(0.0)
                    }
                };
                CycleLog { cycle, duty, delay }
            })
            .collect();

        Ok(IvrRun {
            input_current: WaveformTrace::new(input_current, sim_rate, start, SignalUnit::Amperes)?,
            inductor_current: WaveformTrace::new(
                inductor_current,
                sim_rate,
                start,
                SignalUnit::Amperes,
            )?,
            v_out: WaveformTrace::new(v_out, sim_rate, start, SignalUnit::Volts)?,
            v_sw: WaveformTrace::new(v_sw, sim_rate, start, SignalUnit::Volts)?,
            cycles,
        })
    }
}

/// Settles the regulator under the load's leading sample, then simulates the
/// load window. The seed selects the randomizer pattern phase.
pub fn run_ivr(
    load: &WaveformTrace,
    mode: IvrMode,
    params: &IvrParams,
    seed: u64,
) -> Result<IvrRun> {
    let sim = IvrSimulator::settle(mode, params, load.samples()[0], seed)?;
    sim.run_window(load, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn quiescent_load(params: &IvrParams, amps: f64, cycles: u64) -> WaveformTrace {
        WaveformTrace::constant(
            amps,
            (cycles * params.stage.steps_per_cycle as u64) as usize,
            params.stage.sim_rate(),
            0.0,
            SignalUnit::Amperes,
        )
        .unwrap()
    }

    #[test]
    fn lfsr_walks_all_nonzero_states() {
        // Independent bit-level enumeration of x^4 + x^3 + 1.
        let mut bits = [false, false, false, true]; // [b3, b2, b1, b0] of 0b0001
        let mut expected = Vec::new();
        for _ in 0..LFSR_PERIOD {
            let value = (bits[0] as u8) << 3
                | (bits[1] as u8) << 2
                | (bits[2] as u8) << 1
                | bits[3] as u8;
            expected.push(value);
            let fb = bits[0] ^ bits[1];
            bits = [bits[1], bits[2], bits[3], fb];
        }

        let mut state = 0b0001u8;
        let mut seen = Vec::new();
        for _ in 0..LFSR_PERIOD {
            seen.push(state);
            state = lfsr_next(state).unwrap();
        }
        assert_eq!(state, 0b0001, "sequence must close after {LFSR_PERIOD} steps");
        assert_eq!(seen, expected);
        let mut sorted = seen.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1u8..16).collect::<Vec<_>>());
    }

    #[test]
    fn lfsr_rejects_zero() {
        assert!(matches!(lfsr_next(0), Err(Error::ZeroLfsrState)));
        assert!(matches!(lfsr_next(0x10), Err(Error::ZeroLfsrState)));
    }

    #[test]
    fn delay_holds_for_divider_and_repeats() {
        let rp = RandomizerParams::default();
        let delays: Vec<f64> = (0..180)
            .map(|c| randomizer_delay(&rp, c).unwrap())
            .collect();
        for k in 0..15 {
            for i in 1..4 {
                assert_eq!(delays[4 * k + i], delays[4 * k], "group {k}");
            }
        }
        // Consecutive register values always differ, so the delay changes at
        // every divider boundary and the pattern spans 60 cycles.
        for k in 0..14 {
            assert_ne!(delays[4 * k], delays[4 * (k + 1)]);
        }
        for c in 0..120 {
            assert_eq!(delays[c], delays[c + 60]);
        }
        // Delay scale: register values 1..=15 times the unit.
        let max = delays.iter().cloned().fold(0.0f64, f64::max);
        let min = delays.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(max, 15.0 * rp.delay_unit);
        assert_relative_eq!(min, 1.0 * rp.delay_unit);
    }

    #[test]
    fn quantizer_examples() {
        let ctrl = ControllerParams::default();
        assert_eq!(ctrl.adc_code(0.6), 64);
        assert_eq!(ctrl.v_ref_code(), 96);
        assert_relative_eq!(ctrl.quantize_duty(0.5), 128.0 / 256.0);
        assert_eq!(ctrl.adc_code(5.0), 127);
        assert_eq!(ctrl.adc_code(-1.0), 0);
        assert_relative_eq!(ctrl.quantize_duty(2.0), 255.0 / 256.0);
    }

    #[test]
    fn settles_and_regulates() {
        let params = IvrParams::default();
        let sim = IvrSimulator::settle(IvrMode::Baseline, &params, 0.025, 0).unwrap();
        let load = quiescent_load(&params, 0.025, 64);
        let run = sim.run_window(&load, 0).unwrap();
        let mean = run.v_out.mean();
        assert!(
            (mean - params.ctrl.v_ref).abs() <= params.ctrl.adc_lsb(),
            "mean output {mean} V"
        );
    }

    #[test]
    fn settle_failure_is_reported() {
        let mut params = IvrParams::default();
        params.settle_cycles = 2;
        let err = IvrSimulator::settle(IvrMode::Baseline, &params, 0.025, 0);
        assert!(matches!(err, Err(Error::SettleFailed(_))));
    }

    #[test]
    fn charge_balance_and_ripple() {
        let params = IvrParams::default();
        let sim = IvrSimulator::settle(IvrMode::Baseline, &params, 0.025, 0).unwrap();
        let cycles = 64u64;
        let load = quiescent_load(&params, 0.025, cycles);
        let run = sim.run_window(&load, 0).unwrap();

        // Inductor charge equals load charge over whole periods.
        let q_l = run.inductor_current.mean();
        assert_relative_eq!(q_l, 0.025, max_relative = 0.01);

        // Volt-second balance: the average drive voltage covers the output
        // plus the resistive drop.
        let v_drive = run.v_sw.mean();
        let v_expected = run.v_out.mean() + params.stage.r_inductor * q_l;
        assert_relative_eq!(v_drive, v_expected, max_relative = 0.01);

        // Ripple against the ideal buck formula.
        let spc = params.stage.steps_per_cycle as usize;
        let one_cycle = &run.inductor_current.samples()[..spc];
        let ripple = one_cycle.iter().cloned().fold(f64::MIN, f64::max)
            - one_cycle.iter().cloned().fold(f64::MAX, f64::min);
        let duty = run.cycles[0].duty;
        let expected = run.v_out.mean() * (1.0 - duty)
            / (params.stage.inductance * params.stage.switching_frequency);
        assert_relative_eq!(ripple, expected, max_relative = 0.05);
    }

    #[test]
    fn duty_updates_once_per_cycle() {
        let params = IvrParams::default();
        let sim = IvrSimulator::settle(IvrMode::Baseline, &params, 0.025, 0).unwrap();
        let load = quiescent_load(&params, 0.025, 32);
        let run = sim.run_window(&load, 0).unwrap();
        assert_eq!(run.cycles.len(), 32);
        let codes: Vec<u64> = run.cycles.iter().map(|c| c.cycle).collect();
        for w in codes.windows(2) {
            assert_eq!(w[1], w[0] + 1);
        }
    }

    #[test]
    fn randomized_matches_baseline_with_zero_delay() {
        let mut params = IvrParams::default();
        params.randomizer.delay_unit = 0.0;
        let load = quiescent_load(&params, 0.025, 16);
        let a = run_ivr(&load, IvrMode::Baseline, &params, 7).unwrap();
        let b = run_ivr(&load, IvrMode::Randomized, &params, 7).unwrap();
        assert_eq!(a.inductor_current.samples(), b.inductor_current.samples());
        assert_eq!(a.input_current.samples(), b.input_current.samples());
        assert_eq!(a.v_out.samples(), b.v_out.samples());
        assert_eq!(a.v_sw.samples(), b.v_sw.samples());
    }

    #[test]
    fn randomizer_preserves_volt_seconds() {
        let params = IvrParams::default();
        let load = quiescent_load(&params, 0.025, 120);
        let base = run_ivr(&load, IvrMode::Baseline, &params, 0).unwrap();
        let rand = run_ivr(&load, IvrMode::Randomized, &params, 0).unwrap();
        // Same average drive and regulation in both modes.
        assert_relative_eq!(base.v_sw.mean(), rand.v_sw.mean(), max_relative = 5e-3);
        assert!((rand.v_out.mean() - params.ctrl.v_ref).abs() <= params.ctrl.adc_lsb());
        // But the switching waveforms differ sample-wise.
        assert_ne!(base.v_sw.samples(), rand.v_sw.samples());
    }

    #[test]
    fn randomized_cycle_residual_repeats_at_pattern_period() {
        let params = IvrParams::default();
        let sim = IvrSimulator::settle(IvrMode::Randomized, &params, 0.025, 0).unwrap();
        let patterns = 6u64;
        let load = quiescent_load(&params, 0.025, patterns * 60);
        let run = sim.run_window(&load, 0).unwrap();
        let spc = params.stage.steps_per_cycle as usize;
        let x = run.inductor_current.samples();

        // Remove the cycle-periodic component, keeping the randomizer's
        // signature.
        let mut mean_cycle = vec![0.0; spc];
        let n_cycles = x.len() / spc;
        for c in 0..n_cycles {
            for s in 0..spc {
                mean_cycle[s] += x[c * spc + s];
            }
        }
        for m in &mut mean_cycle {
            *m /= n_cycles as f64;
        }
        let resid: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v - mean_cycle[i % spc])
            .collect();

        let corr_at = |lag_cycles: usize| -> f64 {
            let lag = lag_cycles * spc;
            let n = resid.len() - lag;
            let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
            for i in 0..n {
                num += resid[i] * resid[i + lag];
                da += resid[i] * resid[i];
                db += resid[i + lag] * resid[i + lag];
            }
            num / (da.sqrt() * db.sqrt())
        };

        assert!(corr_at(60) > 0.95, "pattern period autocorrelation too low");
        for lag in [4usize, 20, 28, 44] {
            assert!(
                corr_at(lag) < 0.8,
                "unexpected periodicity at {lag} cycles: {}",
                corr_at(lag)
            );
        }
    }

    #[test]
    fn load_grid_is_checked() {
        let params = IvrParams::default();
        let sim = IvrSimulator::settle(IvrMode::Baseline, &params, 0.0, 0).unwrap();
        let load = WaveformTrace::constant(0.0, 1000, 1e9, 0.0, SignalUnit::Amperes).unwrap();
        assert!(matches!(
            sim.run_window(&load, 0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn parameter_validation() {
        let mut p = IvrParams::default();
        p.stage.steps_per_cycle = 50;
        assert!(p.validate().is_err());

        let mut p = IvrParams::default();
        p.stage.capacitance = 1e-3;
        // LC corner must stay below the switching frequency; a huge cap is
        // fine, so push the corner up instead.
        p.stage.capacitance = 1e-12;
        p.stage.inductance = 1e-12;
        assert!(p.validate().is_err());

        let mut p = IvrParams::default();
        p.randomizer.lfsr_seed = 0;
        assert!(matches!(p.validate(), Err(Error::ZeroLfsrState)));

        let mut p = IvrParams::default();
        p.randomizer.delay_unit = 1e-9;
        assert!(p.validate().is_err());
    }
}
