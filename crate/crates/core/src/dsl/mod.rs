//! Text formats: `.fm` schema files and `.fms` scenario files.
//!
//! Both are free-form token streams with `#` line comments. Cross references
//! in a schema may point forward; they are resolved once the whole file has
//! been read.

mod format;
mod lexer;
mod parser;
mod scenario;

use std::fmt;

use serde::Serialize;

pub use format::format_schema;
pub use parser::{parse_schema, parse_schema_file, parse_schema_parts};
pub use scenario::{parse_scenario, parse_scenario_file, Injection, Scenario, ScenarioError, TimeMachine};

use crate::validate::Severity;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub(crate) fn start_of(file: &str) -> SourceSpan {
        SourceSpan {
            file: file.to_string(),
            line: 1,
            column: 1,
            length: 0,
        }
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

/// A located problem found while reading a file.
///
/// Syntax problems use `P-*` codes. Structural problems detected while
/// building the schema carry the validator rule code (`V-*`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseDiagnostic {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub span: SourceSpan,
}

impl ParseDiagnostic {
    pub(crate) fn error(code: &str, message: impl Into<String>, span: SourceSpan) -> ParseDiagnostic {
        ParseDiagnostic {
            severity: Severity::Error,
            code: code.to_string(),
            message: message.into(),
            span,
        }
    }

    /// True for problems that are not syntax errors: the text is well formed
    /// but violates a schema rule.
    pub fn is_rule_violation(&self) -> bool {
        self.code.starts_with("V-")
    }
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}[{}] {}", self.span, self.severity, self.code, self.message)
    }
}

pub(crate) fn sort_diagnostics(diags: &mut [ParseDiagnostic]) {
    diags.sort_by_key(|d| (d.span.line, d.span.column));
}
