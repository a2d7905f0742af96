//! Process-level error category for every command.
//!
//! Each variant owns one documented exit code, so scripts can branch on
//! what went wrong: 1 usage/configuration, 2 data, 3 backend, 4 budget.
//! Success is 0, as always.

use weakrec_core::error::{
    CorpusError, GateError, LlmError, MergeError, MetricsError, ProfileError, PromptError,
    RecsysError, ReportError,
};

/// Top-level failure of a command, tagged with its exit-code category.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Bad invocation or configuration (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable, malformed, or insufficient data (exit 2).
    #[error("{0}")]
    Data(String),
    /// The completion backend failed (exit 3).
    #[error("{0}")]
    Backend(String),
    /// A spend ceiling was reached (exit 4).
    #[error("{0}")]
    Budget(String),
}

impl RunError {
    /// The documented exit code for this category.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Data(_) => 2,
            RunError::Backend(_) => 3,
            RunError::Budget(_) => 4,
        }
    }

    /// Prefixes the message with the pipeline stage that failed.
    pub fn at_stage(self, stage: &str) -> RunError {
        match self {
            RunError::Usage(m) => RunError::Usage(format!("{stage}: {m}")),
            RunError::Data(m) => RunError::Data(format!("{stage}: {m}")),
            RunError::Backend(m) => RunError::Backend(format!("{stage}: {m}")),
            RunError::Budget(m) => RunError::Budget(format!("{stage}: {m}")),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<CorpusError> for RunError {
    fn from(e: CorpusError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<MetricsError> for RunError {
    fn from(e: MetricsError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<RecsysError> for RunError {
    fn from(e: RecsysError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<ProfileError> for RunError {
    fn from(e: ProfileError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<GateError> for RunError {
    fn from(e: GateError) -> Self {
        match e {
            // A threshold outside [0,1] is a configuration mistake.
            GateError::ThresholdOutOfRange { .. } => RunError::Usage(e.to_string()),
            GateError::EmptyProfiles => RunError::Data(e.to_string()),
        }
    }
}

impl From<PromptError> for RunError {
    fn from(e: PromptError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<LlmError> for RunError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::Budget(_) => RunError::Budget(e.to_string()),
            _ => RunError::Backend(e.to_string()),
        }
    }
}

impl From<MergeError> for RunError {
    fn from(e: MergeError) -> Self {
        RunError::Data(e.to_string())
    }
}

impl From<ReportError> for RunError {
    fn from(e: ReportError) -> Self {
        RunError::Data(e.to_string())
    }
}
