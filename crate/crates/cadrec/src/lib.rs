//! Standard-library companion to `cadrec-core`: file formats, configuration,
//! checkpointing, the parallel trainer, report writers, and the CLI glue.

pub mod checkpoint;
pub mod config;
pub mod dataio;
pub mod error;
pub mod report;
pub mod trainer;

pub use error::AppError;

pub type AppResult<T> = std::result::Result<T, AppError>;
