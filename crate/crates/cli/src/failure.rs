use std::fmt;

use propensity::models::TrainError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

/// A command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Diverged(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
            Failure::Diverged(_) => EXIT_DIVERGED,
        }
    }

    pub fn data(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Failure::Data(format!("{context}: {err}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Diverged(m) => write!(f, "training diverged: {m}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<propensity::Error> for Failure {
    fn from(e: propensity::Error) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Invalid(e) => e.into(),
            TrainError::Diverged(d) => {
                Failure::Diverged(format!("non-finite loss {} at epoch {}, step {}", d.loss, d.epoch, d.step))
            }
        }
    }
}
