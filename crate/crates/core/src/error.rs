//! Crate-wide error type and result alias.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // cell tables and manifests
    #[error("required column `{column}` not found")]
    MissingColumn { column: String },
    #[error("non-finite value at row {row}, column `{column}`")]
    NonFiniteValue { row: usize, column: String },
    #[error("duplicate cell id {id}")]
    DuplicateCellId { id: u64 },
    #[error("cell table is empty")]
    EmptyTable,
    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("{total} cells is too few for k={k} clusters")]
    TooFewCells { total: usize, k: usize },
    #[error("label propagation requires at least one labeled cell")]
    NoSeedLabels,
    #[error("manifest error: {reason}")]
    Manifest { reason: String },

    // geometry
    #[error("degenerate input: {reason}")]
    DegenerateInput { reason: String },
    #[error("edge list is empty")]
    EmptyEdgeList,

    // multiplex
    #[error("node {index} has no cell-type label")]
    UntypedNode { index: usize },

    // precompute
    #[error("node index {index} out of range for n={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: String, got: String },
    #[error("bad magic bytes (not a recognized file)")]
    BadMagic,
    #[error("format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file truncated or payload size inconsistent with header")]
    TruncatedFile,
    #[error("corrupt file: {reason}")]
    CorruptFile { reason: String },

    // model and training
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("no observed events in batch")]
    NoEvents,
    #[error("no valid labels available")]
    NoValidLabels,
    #[error("no precomputed cache for image `{image_id}`")]
    MissingCache { image_id: String },

    // metrics
    #[error("only one class present; AUC undefined")]
    SingleClass,
    #[error("no comparable pairs; concordance undefined")]
    NoComparablePairs,

    // plumbing
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input (data, config, manifest),
    /// as opposed to runtime failures. Drives the CLI exit code.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn { .. }
                | Error::NonFiniteValue { .. }
                | Error::DuplicateCellId { .. }
                | Error::EmptyTable
                | Error::InvalidConfig { .. }
                | Error::TooFewCells { .. }
                | Error::NoSeedLabels
                | Error::Manifest { .. }
                | Error::DegenerateInput { .. }
                | Error::EmptyEdgeList
                | Error::UntypedNode { .. }
                | Error::SingleClass
                | Error::NoComparablePairs
                | Error::NoValidLabels
        )
    }

    /// Short machine-readable code for structured error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingColumn { .. } => "missing_column",
            Error::NonFiniteValue { .. } => "non_finite_value",
            Error::DuplicateCellId { .. } => "duplicate_cell_id",
            Error::EmptyTable => "empty_table",
            Error::InvalidConfig { .. } => "invalid_config",
            Error::TooFewCells { .. } => "too_few_cells",
            Error::NoSeedLabels => "no_seed_labels",
            Error::Manifest { .. } => "manifest",
            Error::DegenerateInput { .. } => "degenerate_input",
            Error::EmptyEdgeList => "empty_edge_list",
            Error::UntypedNode { .. } => "untyped_node",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::BadMagic => "bad_magic",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::TruncatedFile => "truncated_file",
            Error::CorruptFile { .. } => "corrupt_file",
            Error::EmptyGraph => "empty_graph",
            Error::NoEvents => "no_events",
            Error::NoValidLabels => "no_valid_labels",
            Error::MissingCache { .. } => "missing_cache",
            Error::SingleClass => "single_class",
            Error::NoComparablePairs => "no_comparable_pairs",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
