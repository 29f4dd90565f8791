use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] leh::Error),

    #[error("{0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for bad input or usage, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_numeric_from_input_errors() {
        let numeric = CliError::Core(leh::Error::Singular {
            interval: 3,
            msg: "x".into(),
        });
        assert_eq!(numeric.exit_code(), 3);
        assert_eq!(CliError::Core(leh::Error::Config("bad".into())).exit_code(), 2);
        assert_eq!(CliError::Usage("bad".into()).exit_code(), 2);
    }
}
