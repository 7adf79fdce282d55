//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the pipeline, from file parsing to
/// the numeric kernels.
#[derive(Error, Debug)]
pub enum Error {
    /// Dimension mismatch between operands, or a non-square matrix where a
    /// square one is required.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input values outside the mathematical domain of an operation
    /// (negative weights, asymmetric adjacency, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A malformed line in a text input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An integer field too large to represent.
    #[error("range error at line {line}: {msg}")]
    Range { line: usize, msg: String },

    /// A structurally invalid file (bad magic bytes, truncated payload,
    /// inconsistent header).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input carrying invalid content (non-finite values,
    /// out-of-range ids, mismatched row counts).
    #[error("data error: {0}")]
    Data(String),

    /// A non-finite value produced inside the decode pipeline. `stage` names
    /// the pipeline stage that produced it.
    #[error("numeric error in stage '{stage}': {msg}")]
    Numeric { stage: String, msg: String },

    /// An argument outside its documented range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A pair file mapping one entity to several counterparts.
    #[error("one-to-one violation: {0}")]
    OneToOne(String),

    /// An operation whose result is mathematically undefined on this input
    /// (mean over an empty set and the like).
    #[error("undefined result: {0}")]
    Undefined(String),

    /// A linear system without a unique solution. `component` identifies the
    /// connected component that has no boundary values.
    #[error("singular system: component {component} ({size} nodes, e.g. node {example}) has no seed")]
    SingularComponent {
        component: usize,
        size: usize,
        example: usize,
    },

    /// An index referring outside the object it indexes into.
    #[error("index error: {0}")]
    Index(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
