use aoi_core::AoiError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("property violated: {0}")]
    Property(String),

    #[error(transparent)]
    Core(#[from] AoiError),

    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CliError::Validation(vec![msg.into()])
    }

    /// Process exit status: 2 for bad input, 3 for exhausted budgets,
    /// 4 for a violated property, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Toml(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Property(_) => 4,
            CliError::Core(e) => match e {
                AoiError::InvalidInput(_)
                | AoiError::Unsupported(_)
                | AoiError::Parse { .. }
                | AoiError::Precondition(_)
                | AoiError::InsufficientData(_) => 2,
                AoiError::Budget { .. } => 3,
                AoiError::Consistency { .. } => 4,
                _ => 1,
            },
            CliError::Csv(_) | CliError::Io(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::invalid("x").exit_code(), 2);
        assert_eq!(CliError::Budget("x".into()).exit_code(), 3);
        assert_eq!(CliError::Property("x".into()).exit_code(), 4);
        assert_eq!(CliError::from(AoiError::Budget { needed: 2, limit: 1 }).exit_code(), 3);
        assert_eq!(CliError::from(AoiError::Unsupported("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(AoiError::TruncatedSource { slot: 3 }).exit_code(), 1);
    }

    #[test]
    fn validation_lists_every_field() {
        let e = CliError::Validation(vec!["sim.users: must be positive".into(), "channel.p: empty".into()]);
        let text = e.to_string();
        assert!(text.contains("sim.users") && text.contains("channel.p"));
    }
}
