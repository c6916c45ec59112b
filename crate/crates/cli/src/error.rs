use nmr_reservoir::linalg::LinalgError;
use nmr_reservoir::readout::ReadoutError;
use nmr_reservoir::reservoir::ReservoirError;
use nmr_reservoir::tasks::TaskError;
use std::path::PathBuf;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const IO: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, arguments or input data.
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("no data")]
    NoData,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Format { .. } | CliError::NoData => {
                exit::VALIDATION
            }
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Io { .. } => exit::IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps a task failure with the task it came from.
    pub fn in_task(task: &str, e: TaskError) -> Self {
        match CliError::from(e) {
            CliError::Validation(m) => CliError::Validation(format!("{task}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{task}: {m}")),
            other => other,
        }
    }
}

fn linalg_is_numerical(e: &LinalgError) -> bool {
    !matches!(
        e,
        LinalgError::DimensionMismatch { .. } | LinalgError::Empty(_)
    )
}

fn readout_is_numerical(e: &ReadoutError) -> bool {
    match e {
        ReadoutError::NonFinite(_) => true,
        ReadoutError::Linalg(l) => linalg_is_numerical(l),
        _ => false,
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        let numerical = match &e {
            TaskError::Readout(r) => readout_is_numerical(r),
            TaskError::Reservoir(ReservoirError::Linalg(l)) => linalg_is_numerical(l),
            _ => false,
        };
        if numerical {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<ReservoirError> for CliError {
    fn from(e: ReservoirError) -> Self {
        TaskError::from(e).into()
    }
}
