//! Process-level error classes with a stable exit-code contract:
//! 2 for configuration problems, 3 for data problems, 4 for model problems.

use cadrec_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Model(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        AppError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        AppError::Data(msg.into())
    }

    pub fn model(msg: impl Into<String>) -> Self {
        AppError::Model(msg.into())
    }
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig { .. } | CoreError::KTooLarge { .. } => {
                AppError::Config(e.to_string())
            }
            CoreError::IdOutOfRange { .. }
            | CoreError::EmptyCorpus
            | CoreError::EmptyInput(_)
            | CoreError::DuplicateItem(_)
            | CoreError::OverlappingItem(_) => AppError::Data(e.to_string()),
            CoreError::DimMismatch { .. } | CoreError::NonFinite { .. } => {
                AppError::Model(e.to_string())
            }
        }
    }
}
