use thiserror::Error;

/// Faults of the window substrate.
#[derive(Debug, Error)]
pub enum WinError {
    #[error("window `{0}` already exists")]
    Duplicate(String),
    #[error("invalid argument: {0}")]
    Argument(&'static str),
    #[error("cells {offset}..{offset}+{len} outside window of {cells} cells")]
    Bounds {
        offset: usize,
        len: usize,
        cells: usize,
    },
    #[error("rank {rank} outside communicator of {size}")]
    Rank { rank: usize, size: usize },
    #[error("contract violation: {0}")]
    Contract(&'static str),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Window(#[from] WinError),
    #[error(transparent)]
    Core(#[from] a2ws_core::Error),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("config line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },
    #[error("I/O error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("worker thread panicked: {0}")]
    Worker(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
