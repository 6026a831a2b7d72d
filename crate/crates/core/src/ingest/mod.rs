//! Transfer-log, service-registry, class-label and metadata ingestion.
//!
//! All amounts are integers in base units (10^-6 token). Parsing is strict:
//! unknown tokens, categories or classes are errors rather than silently
//! dropped rows.

mod address;
mod event;
mod parse;
mod registry;
mod validate;

use std::fmt;

use thiserror::Error;

pub use address::{normalize_address, Address, TxHash};
pub use event::{
    format_amount, parse_amount, parse_timestamp, EventLog, Token, TransferEvent, WalletIndex, BASE_UNITS_PER_TOKEN,
};
pub use parse::{
    parse_label_registry, parse_metadata, parse_transfer_row, parse_transfers, parse_transfers_with,
    parse_wallet_labels, write_labels, write_metadata, write_registry, write_transfers, ParseOptions,
    ParsedTransfers, LABELS_HEADER, METADATA_HEADER, REGISTRY_HEADER, TRANSFERS_HEADER,
};
pub use registry::{AddressMetadata, ClassLabels, LabelRegistry, MetadataTable, RiskClass, ServiceCategory};
pub use validate::{validate_log, ValidationReport};

/// A malformed data row, with its 1-based line number in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed address {0:?}")]
    MalformedAddress(String),
    #[error("malformed transaction hash {0:?}")]
    MalformedTxHash(String),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("{0}")]
    Row(RowError),
    #[error("parse aborted after {} malformed rows (budget {budget}); first: {}", errors.len(), errors[0])]
    ParseAborted { budget: usize, errors: Vec<RowError> },
    #[error("line {line}: unknown service category {token:?}")]
    UnknownCategory { line: u64, token: String },
    #[error("line {line}: unknown class {token:?}")]
    UnknownClass { line: u64, token: String },
    #[error("line {line}: address {address} labeled {existing} and {new}")]
    ConflictingLabel {
        line: u64,
        address: String,
        existing: String,
        new: String,
    },
    #[error("i/o: {0}")]
    Io(String),
}
