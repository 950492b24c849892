use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },
    #[error("truncated {format} file: expected {expected} bytes, found {found}")]
    Truncated { format: &'static str, expected: u64, found: u64 },
    #[error("{format} file has {extra} trailing bytes")]
    TrailingBytes { format: &'static str, extra: u64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("zero dimension in header (rows={rows}, dim={dim})")]
    ZeroDims { rows: u64, dim: u64 },
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("missing index {0}")]
    MissingIndex(usize),
    #[error("duplicate index {0}")]
    DuplicateIndex(usize),
    #[error("no data rows")]
    Empty,
    #[error("placed only {placed} of {classes} class centers at the requested separation")]
    Placement { placed: usize, classes: usize },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] reid_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn csv(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        Self::Csv { line, reason: e.to_string() }
    }
}
