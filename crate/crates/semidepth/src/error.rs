//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error enum. Validation-style failures (bad shapes, bad inputs,
/// malformed files) are distinguished from numeric failures (non-finite
/// values, diverged runs, exhausted probe budgets) so callers can map them to
/// distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Two fields that must share dimensions do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A field is smaller than an operation requires.
    #[error("input too small: {0}")]
    TooSmall(String),

    /// A value lies outside the operation's domain (e.g. negative disparity).
    #[error("domain error: {0}")]
    Domain(String),

    /// An input is structurally valid but degenerate (e.g. no valid pixels).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A serialized payload does not follow its format.
    #[error("format error: {0}")]
    Format(String),

    /// A value cannot be represented by the target encoding.
    #[error("range error: {0}")]
    Range(String),

    /// A configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A gradient or loss value became non-finite.
    #[error("non-finite value in {what} at scale {scale}, pixel ({row}, {col})")]
    NonFinite {
        what: String,
        scale: usize,
        row: usize,
        col: usize,
    },

    /// An optimization run produced a non-finite loss and was aborted.
    #[error("optimization diverged at step {step} (last finite total: {last_total})")]
    Diverged { step: usize, last_total: f64 },

    /// The gradient checker could not find enough well-conditioned probes.
    #[error("probe exhaustion: accepted {accepted} of {requested} probes after {attempts} draws")]
    ProbesExhausted {
        accepted: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// True for failures of numeric origin (as opposed to invalid inputs).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::Diverged { .. }
                | Error::ProbesExhausted { .. }
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
