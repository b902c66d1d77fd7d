//! Findings shared by the report-valued validators.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    /// Stable machine-readable code, e.g. `dev-arc-order`.
    pub code: String,
    /// What the finding is about (diagram id, arc, subsystem, ...).
    pub subject: String,
    pub message: String,
}

impl Finding {
    pub fn error(code: &str, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code: code.to_string(),
            subject: subject.into(),
            message: message.into(),
        }
    }

    pub fn warning(code: &str, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            code: code.to_string(),
            subject: subject.into(),
            message: message.into(),
        }
    }
}

/// True when no finding is an error.
pub fn passes(findings: &[Finding]) -> bool {
    findings.iter().all(|f| f.severity != Severity::Error)
}

pub fn has_code(findings: &[Finding], code: &str) -> bool {
    findings.iter().any(|f| f.code == code)
}
