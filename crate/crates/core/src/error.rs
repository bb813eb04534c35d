use thiserror::Error;

/// Errors produced by simulation, analysis and storage routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("byte index {0} out of range (state has 16 bytes)")]
    ByteIndex(usize),

    #[error("LFSR register must be nonzero")]
    ZeroLfsrState,

    #[error("sample rate {rate:.3e} Sa/s too low, need at least {min:.3e} Sa/s")]
    SampleRateTooLow { rate: f64, min: f64 },

    #[error("waveform must contain at least one sample")]
    EmptyWaveform,

    #[error("non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("sample grid mismatch: {0}")]
    GridMismatch(String),

    #[error("regulator failed to settle: {0}")]
    SettleFailed(String),

    #[error("band {center:.3e} Hz (width {width:.3e} Hz) does not fit below Nyquist {nyquist:.3e} Hz")]
    BandOutOfRange { center: f64, width: f64, nyquist: f64 },

    #[error("alignment search of {offset} samples exceeds the limit of {limit} samples")]
    OffsetTooLarge { offset: usize, limit: usize },

    #[error("unknown probe placement '{0}'")]
    UnknownPlacement(String),

    #[error("trace set carries no key, cannot rank the true key byte")]
    MissingKey,

    #[error("inconsistent trace set: {0}")]
    TraceSet(String),

    #[error("trace store: {0}")]
    Store(String),

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
