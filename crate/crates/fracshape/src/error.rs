use fracshape_core::Error;

/// Failure with its process exit code: 2 validation, 3 non-convergence, 4 guard,
/// 1 for I/O.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn non_convergence(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn code(&self) -> i32 {
        self.code
    }

    /// The one-line form written to stderr.
    pub fn line(&self) -> String {
        format!("ERROR {}: {}", self.code, self.message.replace('\n', " "))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NotConverged { .. } | Error::Singular => 3,
            Error::EnumerationGuard { .. } | Error::SizeGuard { .. } => 4,
            _ => 2,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}
