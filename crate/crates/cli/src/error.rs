use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] minmap_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Process exit status: 2 for bad input, 3 for chart-domain violations,
    /// 4 for numerical failures, 1 for i/o.
    pub fn exit_code(&self) -> i32 {
        use minmap_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_domain_error() => 3,
            CliError::Core(
                E::Parse(_) | E::InvalidGrid(_) | E::InvalidParameter(_) | E::TooFewLevels { .. },
            ) => 2,
            CliError::Core(E::NonNestedSpacings { .. }) => 2,
            CliError::Core(_) => 4,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }
}
