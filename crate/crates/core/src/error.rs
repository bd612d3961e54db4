//! Crate-wide error type.
//!
//! Every fallible operation in the pipeline returns one of these variants;
//! the CLI maps any of them to exit code 2 and prints the variant name so
//! scripts can tell a broken input from a rejected login.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input: bad magic, unparseable header, non-numeric field.
    #[error("FormatError: {0}")]
    Format(String),

    /// Input ends before the declared payload is complete.
    #[error("TruncationError: {0}")]
    Truncation(String),

    /// Recognized but unsupported input (e.g. PPM maxval != 255, unknown
    /// template format version).
    #[error("UnsupportedError: {0}")]
    Unsupported(String),

    /// Image and mask shapes disagree.
    #[error("DimensionError: {0}")]
    Dimension(String),

    /// An operation that needs at least one value received none.
    #[error("EmptySeriesError: {0}")]
    EmptySeries(String),

    /// Timestamps out of order.
    #[error("OrderError: {0}")]
    Order(String),

    /// Not enough samples for the requested statistic.
    #[error("TooShortError: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    /// No samples precede the stimulus onset, so no resting position exists.
    #[error("NoBaselineError: {0}")]
    NoBaseline(String),

    /// Zero-variance input; the requested statistic is undefined.
    #[error("DegenerateError: {0}")]
    Degenerate(String),

    /// Argument outside its mathematical domain.
    #[error("DomainError: {0}")]
    Domain(String),

    /// Modality mismatch, duplicate, or missing.
    #[error("ModalityError: {0}")]
    Modality(String),

    /// Simulated population too small for the protocol.
    #[error("PopulationError: {0}")]
    Population(String),

    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn too_short(needed: usize, got: usize) -> Self {
        Error::TooShort { needed, got }
    }
}
