//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the mining pipeline.
///
/// [`Error::is_user`] separates bad input (config, data files) from internal
/// failures; the CLI maps the former to exit code 1 and the latter to 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("no rows in {path}")]
    EmptyPanel { path: String },

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("row {row}: bar violates price invariants ({reason})")]
    InvalidBar { row: usize, reason: String },

    #[error("duplicate bar for ({ticker}, {date}) at row {row}")]
    DuplicateBar {
        ticker: String,
        date: String,
        row: usize,
    },

    #[error("calendar too short: need {needed} days, have {have}")]
    CalendarTooShort { needed: usize, have: usize },

    #[error("insufficient history for {what} at day {day}")]
    InsufficientHistory { what: String, day: usize },

    #[error("insufficient future data: day {day} + {horizon} exceeds series end")]
    InsufficientFuture { day: usize, horizon: usize },

    #[error("degenerate cross-section on day {day}: {count} eligible tickers")]
    DegenerateCrossSection { day: usize, count: usize },

    #[error("unknown ticker {0}")]
    UnknownTicker(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("prior produced only {got} valid targets (need {need})")]
    TooFewTargets { got: usize, need: usize },

    #[error("factor collapse: all sampled days degenerate for {steps} consecutive steps")]
    FactorCollapse { steps: usize },

    #[error("no eligible days in range")]
    NoEligibleDays,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {need} points for k={k} clustering, have {have}")]
    TooFewPoints { need: usize, have: usize, k: usize },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("empty pool {0}")]
    EmptyPool(String),

    #[error("missing manifest {0}")]
    MissingManifest(String),

    #[error("lookback {lookback} exceeds window length {window}")]
    LookbackExceedsWindow { lookback: usize, window: usize },

    #[error("cannot parse expression: {0}")]
    ExprParse(String),

    #[error("model file {path}: {reason}")]
    ModelFile { path: String, reason: String },
}

impl Error {
    /// True when the error stems from user input (files, config, CLI args)
    /// rather than an internal failure.
    pub fn is_user(&self) -> bool {
        !matches!(self, Error::NonFiniteGradient { .. } | Error::FactorCollapse { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
