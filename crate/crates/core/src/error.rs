use std::io;

use thiserror::Error;

/// Everything that can go wrong in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected \"UCEB\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported UCEB version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: {section} needs {needed} bytes, {available} available")]
    Truncated {
        section: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after id table")]
    TrailingBytes(usize),
    #[error("unknown flag bits {0:#x}")]
    UnknownFlags(u32),
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("embedding set is empty")]
    EmptySet,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("id at row {0} is not valid UTF-8")]
    InvalidId(usize),
    #[error("id at row {row} is {len} bytes, longer than {max}")]
    IdTooLong { row: usize, len: usize, max: usize },
    #[error("negative label {label} at row {row}")]
    NegativeLabel { row: usize, label: i64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate vector at row {0}: norm below threshold")]
    DegenerateVector(usize),
    #[error("prototype {0} has zero norm on the selected features")]
    DegeneratePrototype(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("labels are required for this operation")]
    MissingLabels,
    #[error("label {label} at row {row} is outside [0, {bound})")]
    LabelOutOfRange { row: usize, label: i64, bound: usize },
    #[error("label {label} at row {row} is not in the selected class subset")]
    LabelNotSelected { row: usize, label: usize },
    #[error("class subset of size {subset} cannot hold {positives} distinct positives")]
    SubsetTooSmall { subset: usize, positives: usize },
    #[error("class {label} has a single member (row {row}) and cannot be a query")]
    SingletonClass { row: usize, label: i64 },
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("no query has a relevant gallery item")]
    NoRelevantQueries,
    #[error("covariance rank is below the requested {0} components")]
    RankDeficient(usize),
    #[error("label spaces differ between splits: {0}")]
    LabelSpaceMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures that originate in reading or decoding files.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::BadMagic(_)
                | Error::UnsupportedVersion(_)
                | Error::Truncated { .. }
                | Error::TrailingBytes(_)
                | Error::UnknownFlags(_)
                | Error::ZeroDim
                | Error::DuplicateId(_)
                | Error::InvalidId(_)
                | Error::IdTooLong { .. }
                | Error::NegativeLabel { .. }
                | Error::Json(_)
        )
    }
}
