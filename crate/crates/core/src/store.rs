//! Binary trace files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BSIM"
//! 4       4     u32 format version (currently 1)
//! 8       4     u32 trace count N
//! 12      4     u32 samples per trace T
//! 16      8     f64 sample rate in Sa/s
//! 24      1     u8 power mode (0 standalone, 1 baseline, 2 randomized)
//! 25      1     u8 probe site (index into the placement list)
//! 26      16*N  plaintexts
//! +       16*N  ciphertexts
//! +       16    key
//! +       8*N*T samples, trace-major
//! ```

use crate::config::PowerMode;
use crate::em::ProbeSite;
use crate::error::{Error, Result};
use crate::traceset::TraceSet;
use ndarray::Array2;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"BSIM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 26;

/// Exact file size for a campaign of `n` traces of `t` samples.
pub fn file_size(n: u64, t: u64) -> u64 {
    HEADER_LEN + 32 * n + 16 + 8 * n * t
}

fn probe_code(site: ProbeSite) -> u8 {
    ProbeSite::ALL
        .iter()
        .position(|&s| s == site)
        .expect("site listed in ALL") as u8
}

fn probe_from_code(code: u8) -> Result<ProbeSite> {
    ProbeSite::ALL
        .get(code as usize)
        .copied()
        .ok_or_else(|| Error::Store(format!("unknown probe site code {code}")))
}

/// Writes a campaign to disk. The set must carry its key.
pub fn save(path: &Path, set: &TraceSet, mode: PowerMode, probe: ProbeSite) -> Result<()> {
    let key = set
        .key()
        .ok_or_else(|| Error::Store("trace set has no key to record".into()))?;
    let n = set.n_traces();
    let t = set.n_samples();
    if n > u32::MAX as usize || t > u32::MAX as usize {
        return Err(Error::Store(format!("campaign of {n}x{t} exceeds format limits")));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(t as u32).to_le_bytes())?;
    w.write_all(&set.sample_rate().to_le_bytes())?;
    w.write_all(&[mode.code(), probe_code(probe)])?;
    for pt in set.plaintexts() {
        w.write_all(pt)?;
    }
    for ct in set.ciphertexts() {
        w.write_all(ct)?;
    }
    w.write_all(&key)?;
    for row in set.traces().rows() {
        for v in row {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Reads a campaign back. Labels are not stored; fixed-vs-random sets are
/// relabeled from the plaintexts by the caller.
pub fn load(path: &Path) -> Result<(TraceSet, PowerMode, ProbeSite)> {
    let mut r = BufReader::new(File::open(path)?);
    let magic: [u8; 4] = read_exact_array(&mut r)?;
    if magic != MAGIC {
        return Err(Error::Store(format!(
            "bad magic {:02x?}, not a trace file",
            magic
        )));
    }
    let version = u32::from_le_bytes(read_exact_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Store(format!(
            "unsupported format version {version}, expected {VERSION}"
        )));
    }
    let n = u32::from_le_bytes(read_exact_array(&mut r)?) as usize;
    let t = u32::from_le_bytes(read_exact_array(&mut r)?) as usize;
    let rate = f64::from_le_bytes(read_exact_array(&mut r)?);
    let flags: [u8; 2] = read_exact_array(&mut r)?;
    let mode = PowerMode::from_code(flags[0])?;
    let probe = probe_from_code(flags[1])?;

    let mut plaintexts = Vec::with_capacity(n);
    for _ in 0..n {
        plaintexts.push(read_exact_array::<16>(&mut r)?);
    }
    let mut ciphertexts = Vec::with_capacity(n);
    for _ in 0..n {
        ciphertexts.push(read_exact_array::<16>(&mut r)?);
    }
    let key: [u8; 16] = read_exact_array(&mut r)?;

    let mut flat = vec![0.0f64; n * t];
    let mut buf = [0u8; 8];
    for v in flat.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Store("trailing bytes after trace payload".into()));
    }

    let traces = Array2::from_shape_vec((n, t), flat)
        .map_err(|e| Error::Store(e.to_string()))?;
    let set = TraceSet::new(traces, rate, plaintexts, ciphertexts)?.with_key(key);
    Ok((set, mode, probe))
}
