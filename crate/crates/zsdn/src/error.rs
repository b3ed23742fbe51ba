use std::path::PathBuf;

/// Exit status for malformed input or inconsistent configuration.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for failures while running a valid configuration.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] zsdn_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        AppError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(zsdn_core::Error::Diverged { .. }) => EXIT_RUNTIME,
            AppError::Core(_) | AppError::Config(_) | AppError::Format { .. } | AppError::Json { .. } => {
                EXIT_VALIDATION
            }
            AppError::Io { .. } | AppError::Image { .. } => EXIT_RUNTIME,
        }
    }
}

pub type AppResult<T> = Result<T, AppError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let v = AppError::Config("x".into()).exit_code();
        let r = AppError::io("p", std::io::Error::other("gone")).exit_code();
        assert_ne!(v, 0);
        assert_ne!(r, 0);
        assert_ne!(v, r);
        let diverged = AppError::Core(zsdn_core::Error::Diverged { epoch: 1, loss: 1e9 });
        assert_eq!(diverged.exit_code(), EXIT_RUNTIME);
    }
}
