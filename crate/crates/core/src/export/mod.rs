//! Deterministic serialisation: DOT diagrams, trace documents and text
//! timelines.

mod document;
mod dot;
mod timeline;

use thiserror::Error;

pub use document::{trace_to_document, DocumentEvent, TraceDocument, TraceMeta};
pub use dot::{to_dot, DotDocument};
pub use timeline::{timeline, timeline_of};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("no event named `{0}` in the schema")]
    UnknownEvent(String),
    #[error("malformed trace document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid trace document: {0}")]
    InvalidDocument(String),
}
