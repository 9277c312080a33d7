//! Failures mapped to process exit codes.

use std::fmt;

use tilesr_core::Error as CoreError;

/// Exit codes: 2 usage, 3 input data, 4 model or training state, 1 other.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 2,
    Data = 3,
    Model = 4,
    Other = 1,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn usage(e: anyhow::Error) -> Self {
        CliError {
            kind: ExitKind::Usage,
            source: e,
        }
    }

    pub fn data(e: anyhow::Error) -> Self {
        CliError {
            kind: ExitKind::Data,
            source: e,
        }
    }

    pub fn model(e: anyhow::Error) -> Self {
        CliError {
            kind: ExitKind::Model,
            source: e,
        }
    }

    pub fn other(e: anyhow::Error) -> Self {
        CliError {
            kind: ExitKind::Other,
            source: e,
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Some causes already embed their source in their own message.
        let mut text = String::new();
        for cause in self.source.chain() {
            let msg = cause.to_string();
            if !text.ends_with(&msg) {
                if !text.is_empty() {
                    text.push_str(": ");
                }
                text.push_str(&msg);
            }
        }
        f.write_str(&text)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = if e.is_data_error() {
            ExitKind::Data
        } else {
            match e {
                CoreError::Spec(_) | CoreError::WeightFormat(_) | CoreError::NonFinite { .. } => ExitKind::Model,
                CoreError::InvalidArgument { .. } => ExitKind::Usage,
                _ => ExitKind::Other,
            }
        };
        CliError { kind, source: e.into() }
    }
}
