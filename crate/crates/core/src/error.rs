use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("thermal runaway: spectral denominator {min_abs:.3e} below floor {floor:.1e}")]
    Runaway { min_abs: f64, floor: f64 },

    #[error("{stage} did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence {
        stage: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("variation exponent {0:.3} exceeds cap")]
    Overflow(f64),

    #[error("parse error in {source_name}: {msg}")]
    Parse { source_name: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn parse(source_name: impl ToString, msg: impl ToString) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            msg: msg.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
