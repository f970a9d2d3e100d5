use std::path::PathBuf;

use crate::model::EventId;

/// Errors produced anywhere in the synthesis pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown event name `{0}`")]
    UnknownEvent(String),

    #[error("unknown metric id `{0}`")]
    UnknownMetric(String),

    #[error("metric `{metric}` is undefined: denominator `{denominator}` is zero")]
    UndefinedMetric { metric: String, denominator: EventId },

    #[error("metric `{metric}` needs event `{event}`, which is absent from the counts")]
    MissingEvent { metric: String, event: EventId },

    #[error("block `{0}` does not resolve in the library")]
    UnresolvedBlock(String),

    #[error("block `{0}` has no calibrated profile")]
    Uncalibrated(String),

    #[error("block `{block}` profile lacks event `{event}`")]
    IncompleteProfile { block: String, event: EventId },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("invalid linear system: {0}")]
    InvalidSystem(String),

    #[error("every block was pruned from the selection (eps = {eps:e})")]
    EmptySelection { eps: f64 },

    #[error("accuracy is undefined for metric `{metric}`: real value is zero")]
    UndefinedAccuracy { metric: String },

    #[error("correlation is undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("mean relative error is undefined: x[{index}] is zero")]
    UndefinedError { index: usize },

    #[error("report is incomplete: metric `{0}` has no accuracy")]
    IncompleteReport(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate event `{event}`")]
    DuplicateEvent { line: usize, event: EventId },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn in_round(self, round: usize) -> Self {
        Error::Round { round, source: Box::new(self) }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File { path: path.into(), source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
