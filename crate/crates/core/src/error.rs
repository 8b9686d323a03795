use std::fmt;

use thiserror::Error;

use crate::config::ConfigIssue;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network configuration: {0}")]
    Config(IssueList),

    #[error("monomial count C({fanin}+{degree}, {degree}) overflows")]
    MonomialOverflow { fanin: usize, degree: u32 },

    #[error("lookup table entry count overflows (2^{exponent})")]
    EntryOverflow { exponent: u64 },

    /// Unit would need more than `cap` entries; carries the parameters that produced it.
    #[error("{kind} table for layer {layer} neuron {neuron} needs 2^{input_bits} entries, above cap 2^{cap_bits} ({detail})")]
    EnumerationCap {
        kind: &'static str,
        layer: usize,
        neuron: usize,
        input_bits: u32,
        cap_bits: u32,
        detail: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("weight vector of length {len} cannot be split into {groups} groups")]
    Indivisible { len: usize, groups: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("unsupported {kind} version {found} (expected {expected})")]
    Version { kind: &'static str, found: u32, expected: u32 },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "E_CONFIG",
            Error::MonomialOverflow { .. } | Error::EntryOverflow { .. } => "E_OVERFLOW",
            Error::EnumerationCap { .. } => "E_ENUM_CAP",
            Error::Dimension(_) => "E_DIMENSION",
            Error::Indivisible { .. } => "E_INDIVISIBLE",
            Error::Diverged(_) => "E_DIVERGED",
            Error::Dataset(_) => "E_DATASET",
            Error::Parse { .. } => "E_PARSE",
            Error::Version { .. } => "E_VERSION",
            Error::Invalid(_) => "E_INVALID",
            Error::Io(_) => "E_IO",
            Error::Json(_) => "E_FORMAT",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IssueList(pub Vec<ConfigIssue>);

impl fmt::Display for IssueList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}
