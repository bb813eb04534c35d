//! Side-channel analyses run against recorded trace sets.

pub mod cema;
pub mod template;
pub mod tvla;

use crate::dsp::butter_bandpass;
use crate::error::Result;
use crate::traceset::align_rows;
use ndarray::Array2;

/// Zero-phase band-pass of every row, then optional alignment to the first
/// filtered row with the search margin trimmed away.
pub(crate) fn prepare_band(
    traces: &Array2<f64>,
    rate: f64,
    center_hz: f64,
    width_hz: f64,
    order: usize,
    max_align: Option<usize>,
) -> Result<(Array2<f64>, usize)> {
    let filter = butter_bandpass(
        order,
        center_hz - width_hz / 2.0,
        center_hz + width_hz / 2.0,
        rate,
    )?;
    let mut filtered = Array2::zeros(traces.raw_dim());
    for (src, mut dst) in traces.rows().into_iter().zip(filtered.rows_mut()) {
        let y = filter.filtfilt(src.as_slice().expect("row-major trace matrix"));
        for (d, v) in dst.iter_mut().zip(y) {
            *d = v;
        }
    }
    match max_align {
        Some(max) if max > 0 => {
            let (aligned, report) = align_rows(&filtered, max)?;
            Ok((aligned, report.degenerate))
        }
        _ => Ok((filtered, 0)),
    }
}
