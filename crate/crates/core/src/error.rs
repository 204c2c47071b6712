use thiserror::Error;

#[derive(Debug, Error)]
pub enum DmeshError {
    #[error("degenerate pair: points {0} and {1} share a position")]
    DegeneratePair(usize, usize),
    #[error("degenerate simplex {0:?}")]
    DegenerateSimplex(Vec<usize>),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("empty cell")]
    EmptyCell,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("empty surface: no face passes the sampling cull")]
    EmptySurface,
    #[error("empty mesh")]
    EmptyMesh,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DmeshError>;
