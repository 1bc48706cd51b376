use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ExportError;
use crate::event::{EventInstance, Trace};
use crate::sim::SimResult;

/// Machine-readable trace: one record per event instance, in trace order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceDocument {
    pub meta: TraceMeta,
    pub events: Vec<DocumentEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceMeta {
    pub schema: String,
    pub scenario: String,
    /// `quiescence` or `max_ticks`.
    pub terminated: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentEvent {
    pub name: String,
    pub start: u64,
    pub end: u64,
    pub gaps: Vec<[u64; 2]>,
    /// Index of the parallel group, counted from 0 in start order.
    pub group: usize,
}

pub fn trace_to_document(result: &SimResult, schema_name: &str, scenario_name: &str) -> TraceDocument {
    TraceDocument::from_trace(
        &result.trace,
        TraceMeta {
            schema: schema_name.to_string(),
            scenario: scenario_name.to_string(),
            terminated: result.terminated.as_str().to_string(),
        },
    )
}

impl TraceDocument {
    pub fn from_trace(trace: &Trace, meta: TraceMeta) -> TraceDocument {
        let events = trace
            .groups()
            .iter()
            .enumerate()
            .flat_map(|(group, g)| {
                g.instances.iter().map(move |i| DocumentEvent {
                    name: i.event.clone(),
                    start: i.start,
                    end: i.end,
                    gaps: i.gaps.iter().map(|&(a, b)| [a, b]).collect(),
                    group,
                })
            })
            .collect();
        TraceDocument { meta, events }
    }

    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("plain data serialises");
        text.push('\n');
        text
    }

    /// Parses and checks a document: instances must be well formed and
    /// group indices must number the distinct start ticks from 0.
    pub fn from_json(text: &str) -> Result<TraceDocument, ExportError> {
        let doc: TraceDocument = serde_json::from_str(text)?;
        if !matches!(doc.meta.terminated.as_str(), "quiescence" | "max_ticks") {
            return Err(ExportError::InvalidDocument(format!(
                "unknown termination reason `{}`",
                doc.meta.terminated
            )));
        }
        let mut by_start: BTreeMap<u64, usize> = BTreeMap::new();
        for e in &doc.events {
            let group = *by_start.entry(e.start).or_insert(e.group);
            if group != e.group {
                return Err(ExportError::InvalidDocument(format!(
                    "events starting at tick {} are in different groups",
                    e.start
                )));
            }
        }
        for (rank, (start, group)) in by_start.iter().enumerate() {
            if rank != *group {
                return Err(ExportError::InvalidDocument(format!(
                    "events starting at tick {start} should be in group {rank}, not {group}"
                )));
            }
        }
        doc.to_trace()?;
        Ok(doc)
    }

    pub fn to_trace(&self) -> Result<Trace, ExportError> {
        let instances = self
            .events
            .iter()
            .map(|e| {
                EventInstance::new(
                    e.name.clone(),
                    e.start,
                    e.end,
                    e.gaps.iter().map(|&[a, b]| (a, b)).collect(),
                )
                .map_err(|err| ExportError::InvalidDocument(err.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trace::from_instances(instances))
    }
}
