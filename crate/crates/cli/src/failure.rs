use std::fmt;
use std::io;

use cstn_core::Error;

/// Error categories with their process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Config,
    MissingInput,
    Corrupt,
    Numerical,
    Other,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::MissingInput => 3,
            Kind::Corrupt => 4,
            Kind::Numerical => 5,
            Kind::Other => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Config => "config",
            Kind::MissingInput => "missing-input",
            Kind::Corrupt => "corrupt-artifact",
            Kind::Numerical => "numerical-abort",
            Kind::Other => "error",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, message)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.as_str(), self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match &e {
            Error::Shape { .. }
            | Error::InvalidArgument(_)
            | Error::UnknownParam(_)
            | Error::ConfigMismatch(_)
            | Error::Parse(_) => Kind::Config,
            Error::Corrupt(_) | Error::Version { .. } | Error::Csv(_) => Kind::Corrupt,
            Error::NonFinite(_) | Error::DegenerateStats(_) => Kind::Numerical,
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => Kind::MissingInput,
            Error::Io(_) => Kind::Other,
        };
        Failure::new(kind, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::from(Error::Io(e))
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::from(Error::Csv(e))
    }
}
