use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no DFT bin strictly inside band [{low} Hz, {high} Hz]")]
    EmptyBand { low: f64, high: f64 },

    #[error("zero energy: {0}")]
    ZeroEnergy(String),

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: f64, right: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reflector {index} coincides with a transducer at {position:?}")]
    CoincidentReflector { index: usize, position: [f64; 3] },

    #[error("pixel ({u}, {v}) needs lag {lag} for tx {tx} / mic {mic}, outside available range [{min}, {max}]")]
    LagOutOfRange {
        u: usize,
        v: usize,
        tx: usize,
        mic: usize,
        lag: i64,
        min: i64,
        max: i64,
    },

    #[error("{path}: row {row}: {message}")]
    Parse { path: PathBuf, row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
