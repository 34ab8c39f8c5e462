use thiserror::Error;

/// Run failures that abort a command, mapped onto process exit codes.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) | Failure::Io(_) => 3,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config_error",
            Failure::Numerical(_) => "numerical_failure",
            Failure::Io(_) => "io_failure",
        }
    }
}

impl From<fracmono_core::Error> for Failure {
    fn from(e: fracmono_core::Error) -> Self {
        use fracmono_core::Error as E;
        match e {
            E::Argument(m) | E::Resource(m) => Failure::Config(m),
            E::Numerical(m) => Failure::Numerical(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}
