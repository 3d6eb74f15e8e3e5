use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level index {index} out of range for factor {factor} ({levels} levels)")]
    Index {
        factor: usize,
        index: usize,
        levels: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("non-finite parameter ({parameter}) in chain {chain} at iteration {iteration}")]
    NonFiniteState {
        chain: usize,
        iteration: usize,
        parameter: String,
    },

    #[error("dataset has no observations")]
    EmptyData,

    #[error("two-way table is incomplete: {missing} of {total} cells have no observation")]
    IncompleteTable { missing: usize, total: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row(s) {rows:?}: {message}")]
    Parse { rows: Vec<usize>, message: String },

    #[error("file is empty: {0}")]
    EmptyFile(String),

    #[error("draws file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt record at line {line}: {message}")]
    CorruptRecord { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn layout(msg: impl Into<String>) -> Self {
        Error::LayoutMismatch(msg.into())
    }
}
