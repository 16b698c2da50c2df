use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{source}")]
    Core {
        stage: &'static str,
        #[source]
        source: gtherm::Error,
    },

    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => match source {
                gtherm::Error::NonConvergence { .. }
                | gtherm::Error::Runaway { .. }
                | gtherm::Error::Calibration(_) => 3,
                _ => 2,
            },
            CliError::Validation(_) => 4,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core { stage, .. } => stage,
            CliError::Validation(_) => "validate",
        }
    }

    /// One line, `key=value` fields, message quoted.
    pub fn record(&self) -> String {
        let msg = self.to_string().replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
        format!("error stage={} code={} msg=\"{}\"", self.stage(), self.exit_code(), msg)
    }
}

pub trait At<T> {
    fn at(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> At<T> for gtherm::Result<T> {
    fn at(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { stage, source })
    }
}

impl<T> At<T> for std::io::Result<T> {
    fn at(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Core { stage, source: e.into() })
    }
}
