//! Simulation and analysis toolkit for electromagnetic side-channel
//! evaluation of AES hardware powered through an integrated buck regulator.
//!
//! The crate is organized as a pipeline:
//!
//! * [`aes`] — cycle-accurate AES-128 engine models that report register
//!   switching activity alongside the ciphertext.
//! * [`leakage`] — converts switching activity into a supply-current waveform.
//! * [`ivr`] — switched-inductor regulator simulation with a digital feedback
//!   loop and an optional control-loop randomizer.
//! * [`em`] — near-field probe models that turn branch currents into
//!   measured traces.
//! * [`dsp`] — filtering, alignment, decimation and spectral tools shared by
//!   the attack code.
//! * [`attacks`] — leakage detection (Welch t-test) and key recovery
//!   (correlation analysis, template-assisted correlation analysis).
//! * [`pipeline`], [`config`], [`store`], [`calibrate`], [`report`] — the
//!   measurement-campaign harness used by the `emsim` binary.

pub mod aes;
pub mod attacks;
pub mod calibrate;
pub mod config;
pub mod dsp;
pub mod em;
pub mod error;
pub mod ivr;
pub mod leakage;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod traceset;
pub mod waveform;

pub use error::{Error, Result};
pub use waveform::{SignalUnit, WaveformTrace};
