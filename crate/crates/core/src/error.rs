use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Parse errors carry the 1-based line number of the offending record so
/// that measurement files can be fixed by hand.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}{msg} at line {line}", fmt_path(.path))]
    Parse {
        path: Option<PathBuf>,
        line: u64,
        msg: String,
    },

    #[error("invalid counter name: {0}")]
    InvalidCounter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("insufficient overlap: {matched} matched key(s), need at least 2")]
    InsufficientOverlap { matched: usize },

    #[error("ambiguous key at TIME={0}")]
    AmbiguousKey(u64),

    #[error("rank-deficient design, drop a predictor ({0})")]
    RankDeficient(String),

    #[error("not enough rows: {rows} row(s) for {params} parameter(s)")]
    TooFewRows { rows: usize, params: usize },

    #[error("unknown counter: {0}")]
    UnknownCounter(String),

    #[error("frequency channel absent{}", .0.map(|i| format!(" at row {i}")).unwrap_or_default())]
    MissingFrequency(Option<usize>),

    #[error("length mismatch: {0} actual vs {1} predicted")]
    LengthMismatch(usize, usize),

    #[error("empty sample set")]
    Empty,

    #[error("actual power below zero guard at sample {index} ({value})")]
    ZeroActual { index: usize, value: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible folds: {0}")]
    Folds(String),

    #[error("invalid search configuration: {0}")]
    SearchConfig(String),

    #[error("invalid generator spec: {0}")]
    GenSpec(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn fmt_path(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(path: Option<&std::path::Path>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.map(|p| p.to_path_buf()),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
