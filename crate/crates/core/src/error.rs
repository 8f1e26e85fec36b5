use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input file {0}")]
    MissingFile(PathBuf),

    #[error("malformed raster header in {file}: {reason}")]
    MalformedHeader { file: String, reason: String },

    #[error("malformed raster data in {file}: {reason}")]
    MalformedData { file: String, reason: String },

    #[error("dimension mismatch: {what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        what: String,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },

    #[error("unknown land-cover code {code} at row {row}, col {col}")]
    UnknownLandCover { code: f64, row: usize, col: usize },

    #[error("invalid study area: {0}")]
    InvalidArea(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("meteorological input error: {0}")]
    Meteo(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("infeasible placement: {0}")]
    Infeasible(String),

    #[error("capacity exceeded: requested {requested} trees but only {available} fit")]
    Capacity { requested: usize, available: usize },

    #[error("sky view factor maps are missing or stale for the current vegetation")]
    StaleSvf,

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
