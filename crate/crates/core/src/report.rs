//! CSV and plain-text rendering of analysis results.
//!
//! Attack modules return structured reports; everything here is formatting
//! only, so the CLI and test harnesses can share one set of writers.

use crate::attacks::cema::{CemaReport, MtdReport};
use crate::attacks::template::TemplateReport;
use crate::attacks::tvla::TvlaReport;
use crate::error::{Error, Result};
use std::io::Write;

/// One row per leakage-assessment cell.
pub fn tvla_csv<W: Write>(w: &mut W, report: &TvlaReport) -> Result<()> {
    writeln!(
        w,
        "band_hz,window_start,window_end,order,max_abs_t,argmax_sample,degenerate,exceeds"
    )?;
    for cell in &report.cells {
        writeln!(
            w,
            "{:.6e},{},{},{},{:.6},{},{},{}",
            cell.band_hz,
            cell.window.start,
            cell.window.end,
            cell.order,
            cell.max_abs_t,
            cell.argmax_sample,
            cell.degenerate,
            cell.max_abs_t > report.threshold
        )?;
    }
    Ok(())
}

pub fn tvla_summary(report: &TvlaReport) -> String {
    let mut out = String::new();
    let mut orders: Vec<u32> = report.cells.iter().map(|c| c.order).collect();
    orders.sort_unstable();
    orders.dedup();
    for order in orders {
        let max = report
            .cells
            .iter()
            .filter(|c| c.order == order)
            .map(|c| c.max_abs_t)
            .fold(0.0, f64::max);
        out.push_str(&format!("order {order}: max |t| = {max:.2}\n"));
    }
    if let Some(worst) = report.worst_cell() {
        out.push_str(&format!(
            "worst cell: band {:.1} MHz, samples {}..{}, order {}\n",
            worst.band_hz / 1e6,
            worst.window.start,
            worst.window.end,
            worst.order
        ));
    }
    let verdict = if report.leaks() {
        format!("LEAK: exceeds threshold {:.2}", report.threshold)
    } else {
        format!("quiet: all cells within threshold {:.2}", report.threshold)
    };
    out.push_str(&format!(
        "{verdict} ({} fixed / {} random traces)\n",
        report.n_fixed, report.n_random
    ));
    out
}

/// One row per band and ranking checkpoint.
pub fn cema_csv<W: Write>(w: &mut W, report: &CemaReport) -> Result<()> {
    writeln!(
        w,
        "band_hz,width_hz,n_traces,best_guess,best_corr,correct_rank,correct_corr"
    )?;
    for band in &report.bands {
        for cp in &band.checkpoints {
            writeln!(
                w,
                "{:.6e},{:.6e},{},{},{:.6},{},{}",
                band.center_hz,
                band.width_hz,
                cp.n_traces,
                cp.best_guess,
                cp.best_corr,
                cp.correct_rank.map_or(String::new(), |r| r.to_string()),
                cp.correct_corr
                    .map_or(String::new(), |c| format!("{c:.6}")),
            )?;
        }
    }
    Ok(())
}

pub fn cema_summary(report: &CemaReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "model {:?}, key byte {}\n",
        report.model, report.byte_idx
    ));
    for band in &report.bands {
        let rank = band
            .correct_rank
            .map_or("unknown".to_string(), |r| r.to_string());
        out.push_str(&format!(
            "band {:.1} MHz: best guess 0x{:02x} (|r| = {:.4}), correct guess rank {}\n",
            band.center_hz / 1e6,
            band.best_guess,
            band.best_corr,
            rank
        ));
    }
    out
}

pub fn mtd_csv<W: Write>(w: &mut W, report: &MtdReport) -> Result<()> {
    writeln!(w, "band_hz,mtd")?;
    for (band, mtd) in &report.per_band {
        writeln!(
            w,
            "{:.6e},{}",
            band,
            mtd.map_or(String::new(), |m| m.to_string())
        )?;
    }
    Ok(())
}

pub fn mtd_summary(report: &MtdReport) -> String {
    match report.reached {
        Some(m) => format!(
            "measurements to disclosure: {m} traces (budget {})\n",
            report.budget
        ),
        None => format!(
            "measurements to disclosure: not reached within {} traces\n",
            report.budget
        ),
    }
}

pub fn template_summary(report: &TemplateReport) -> String {
    let mut out = format!(
        "template matched {} traces ({} excluded), mean ncc {:.3}\n",
        report.used, report.excluded, report.mean_ncc
    );
    out.push_str(&cema_summary(&report.cema));
    out
}

/// Frequency/power pairs, typically from `dsp::power_spectrum`.
pub fn spectrum_csv<W: Write>(w: &mut W, freqs: &[f64], power: &[f64]) -> Result<()> {
    if freqs.len() != power.len() {
        return Err(Error::Config(format!(
            "{} frequencies but {} power samples",
            freqs.len(),
            power.len()
        )));
    }
    writeln!(w, "freq_hz,power")?;
    for (f, p) in freqs.iter().zip(power) {
        writeln!(w, "{f:.6e},{p:.6e}")?;
    }
    Ok(())
}
