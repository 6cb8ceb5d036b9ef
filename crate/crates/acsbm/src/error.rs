//! Error type shared across the crate.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// Mismatched or impossible dimensions (e.g. non-square B, d > n).
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value is outside its mathematical domain (probability out of
    /// [0,1], non-positive level count, label out of range, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The model itself is invalid: the expanded block matrix leaves [0,1],
    /// a rank assumption fails, a probability cell is degenerate.
    #[error("model error: {0}")]
    Model(String),

    /// A numerical routine failed to converge or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Bad experiment or CLI configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Input data does not match the expected file format.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
