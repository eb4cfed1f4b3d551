use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A parse failure with its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("clock cannot move back from {now} to {to}")]
    ClockRegression { now: String, to: String },
    #[error("a transaction is already open")]
    TxnAlreadyOpen,
    #[error("no open transaction")]
    NoOpenTxn,
    #[error("{0} is not allowed inside an open transaction")]
    TxnOpen(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("table {0} already exists")]
    DuplicateTable(String),
    #[error("{0}")]
    SchemaMismatch(String),
    #[error("{0}")]
    UnresolvedName(String),
    #[error("{0}")]
    TypeError(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("table {0} is INSERT ONLY")]
    InsertOnlyViolation(String),
    #[error("{0}")]
    IncreasingViolation(String),
    #[error("row of {table} satisfies its finalization predicate and cannot be inserted")]
    FinalizedRowInsert { table: String },
    #[error("final row of {table} cannot be updated or deleted")]
    FinalizedRowMutation { table: String },
    #[error("finalization predicate is not monotone: {0}")]
    NonMonotonePredicate(String),
    #[error("table {0} already has an expiration policy")]
    PolicyExists(String),
    #[error("table {0} has no expiration policy")]
    NoPolicy(String),
    #[error("query reads expired data of {table} (policy: {policy})")]
    ExpiredDataError { table: String, policy: String },
    #[error("{0}")]
    NotFinalizable(String),
    #[error("invalid change range: {0}")]
    InvalidRange(String),
    #[error("unknown change format {0}")]
    UnknownFormat(String),
    #[error("{0}")]
    NotInsertOnly(String),
    #[error("cursor {0} already exists")]
    DuplicateCursor(String),
    #[error("unknown cursor {0}")]
    UnknownCursor(String),
    #[error("cursor {0} is not open")]
    CursorNotOpen(String),
    #[error("cursor {0} is already open")]
    AlreadyOpen(String),
    #[error("{0}")]
    DependentCursorOpen(String),
    #[error("task {0} already exists")]
    DuplicateTask(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown target table {0}")]
    UnknownTarget(String),
    #[error("task {task}: cannot go from {from} to {to}")]
    IllegalTransition { task: String, from: String, to: String },
    #[error("{0}")]
    ApplyConflict(String),
    #[error("task {task} failed: {reason}")]
    TaskFailed { task: String, reason: String },
    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    /// Stable name of the error kind, used by `--@expect-error`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax(_) => "SyntaxError",
            Error::ClockRegression { .. } => "ClockRegression",
            Error::TxnAlreadyOpen => "TxnAlreadyOpen",
            Error::NoOpenTxn => "NoOpenTxn",
            Error::TxnOpen(_) => "TxnOpen",
            Error::UnknownTable(_) => "UnknownTable",
            Error::DuplicateTable(_) => "DuplicateTable",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::UnresolvedName(_) => "UnresolvedName",
            Error::TypeError(_) => "TypeError",
            Error::DivisionByZero => "DivisionByZero",
            Error::InsertOnlyViolation(_) => "InsertOnlyViolation",
            Error::IncreasingViolation(_) => "IncreasingViolation",
            Error::FinalizedRowInsert { .. } => "FinalizedRowInsert",
            Error::FinalizedRowMutation { .. } => "FinalizedRowMutation",
            Error::NonMonotonePredicate(_) => "NonMonotonePredicate",
            Error::PolicyExists(_) => "PolicyExists",
            Error::NoPolicy(_) => "NoPolicy",
            Error::ExpiredDataError { .. } => "ExpiredDataError",
            Error::NotFinalizable(_) => "NotFinalizable",
            Error::InvalidRange(_) => "InvalidRange",
            Error::UnknownFormat(_) => "UnknownFormat",
            Error::NotInsertOnly(_) => "NotInsertOnly",
            Error::DuplicateCursor(_) => "DuplicateCursor",
            Error::UnknownCursor(_) => "UnknownCursor",
            Error::CursorNotOpen(_) => "CursorNotOpen",
            Error::AlreadyOpen(_) => "AlreadyOpen",
            Error::DependentCursorOpen(_) => "DependentCursorOpen",
            Error::DuplicateTask(_) => "DuplicateTask",
            Error::UnknownTask(_) => "UnknownTask",
            Error::UnknownTarget(_) => "UnknownTarget",
            Error::IllegalTransition { .. } => "IllegalTransition",
            Error::ApplyConflict(_) => "ApplyConflict",
            Error::TaskFailed { .. } => "TaskFailed",
            Error::Unsupported(_) => "Unsupported",
        }
    }
}
