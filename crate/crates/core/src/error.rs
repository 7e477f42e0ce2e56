use thiserror::Error;

/// Errors raised by the numerical engine.
///
/// Most numerical "failures" in this crate are reported as data (flags in a
/// report); only malformed input and violated preconditions end up here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("unknown state identifier {0}")]
    UnknownState(u32),

    #[error("word {word:?} is not admissible at position {position}")]
    Inadmissible { word: Vec<u32>, position: usize },

    #[error("truncation too small: no connecting path from state {from} to state {to}")]
    TruncationTooSmall { from: u32, to: u32 },

    #[error("resolvent condition violated: lambda = {lambda} but r(M_VV) = {radius} (margin {margin:e})")]
    Resolvent { lambda: f64, radius: f64, margin: f64 },

    #[error("series diverges: eta = {eta} <= r(M_VV) = {radius}")]
    Divergence { eta: f64, radius: f64 },

    #[error("degenerate block {block}: {reason}")]
    DegenerateBlock { block: usize, reason: String },

    #[error("degenerate coupling between blocks {i} and {j}: {reason}")]
    DegenerateCoupling { i: usize, j: usize, reason: String },

    #[error("no component with positive pressure: every transitive component is degenerate")]
    EmptyMaximalSet,

    #[error("interval system violates {clause}: {detail}")]
    Construction { clause: String, detail: String },

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
