use std::fmt;
use std::io;

use dashpc_core::acuity::AcuityError;
use dashpc_core::manifest::PackageError;
use dashpc_core::metrics::MetricsError;
use dashpc_core::{PlyError, SubsampleError};
use dashpc_net::client::ClientError;
use dashpc_net::server::ServeError;
use dashpc_net::throttle::ThrottleError;

use crate::seq::SequenceError;

/// Process exit status, stable for scripting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Usage = 2,
    Data = 3,
    Network = 4,
}

/// A failed subcommand: exit status plus a one-line diagnostic.
#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl fmt::Display) -> Self {
        CliError {
            code: ExitCode::Usage,
            message: message.to_string(),
        }
    }

    pub fn data(message: impl fmt::Display) -> Self {
        CliError {
            code: ExitCode::Data,
            message: message.to_string(),
        }
    }

    pub fn network(message: impl fmt::Display) -> Self {
        CliError {
            code: ExitCode::Network,
            message: message.to_string(),
        }
    }

    pub fn io(context: impl fmt::Display, e: io::Error) -> Self {
        CliError::data(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Keep diagnostics to one line.
        f.write_str(&self.message.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<SubsampleError> for CliError {
    fn from(e: SubsampleError) -> Self {
        match e {
            SubsampleError::EmptyCloud => CliError::data(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<AcuityError> for CliError {
    fn from(e: AcuityError) -> Self {
        match e {
            AcuityError::DegenerateBox => CliError::data(e),
            AcuityError::Subsample(s) => s.into(),
            _ => CliError::usage(e),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::InvalidPeak(_) => CliError::usage(e),
            _ => CliError::data(e),
        }
    }
}

impl From<PackageError> for CliError {
    fn from(e: PackageError) -> Self {
        match e {
            PackageError::Subsample { ref source, .. } => CliError {
                code: match source {
                    SubsampleError::EmptyCloud => ExitCode::Data,
                    _ => ExitCode::Usage,
                },
                message: e.to_string(),
            },
            PackageError::Ladder { .. } => CliError::usage(e),
            _ => CliError::data(e),
        }
    }
}

impl From<SequenceError> for CliError {
    fn from(e: SequenceError) -> Self {
        match e {
            SequenceError::Missing(_) => CliError::data(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<ThrottleError> for CliError {
    fn from(e: ThrottleError) -> Self {
        CliError::usage(format!("throttle: {e}"))
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Bind { .. } | ServeError::Runtime(_) => CliError::network(e),
            _ => CliError::data(e),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Config(_) => CliError::usage(e),
            ClientError::Fetch { .. } | ClientError::TooManyFailures(_) => CliError::network(e),
            _ => CliError::data(e),
        }
    }
}

pub fn ply_error(path: &std::path::Path, e: PlyError) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}
