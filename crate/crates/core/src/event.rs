//! Events as things with machines, and the relations between traces.
//!
//! An [`EventDef`] names a closed region of the static diagram. Containment
//! between regions is the only notion of one event implying another; a
//! composed event is the union of its parts. Traces group timestamped
//! [`EventInstance`]s by start tick.

use std::collections::{BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::model::{
    region_closure, ElementRef, EventDecl, EventSource, ModelError, Path, RegionItem, Schema,
};
use crate::validate::{self, Rule, ValidationDiagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("event `{0}` has an empty region")]
    EmptyRegion(String),
    #[error("event `{0}` is already defined")]
    DuplicateName(String),
    #[error("events were defined against different schemas")]
    SchemaMismatch,
    #[error("cannot compose an event from no parts")]
    EmptyParts,
    #[error("trace is empty")]
    EmptyTrace,
    #[error("unknown event `{0}`")]
    UnknownEvent(String),
    #[error("event duration must be at least one tick")]
    ZeroDuration,
    #[error("invalid instance of `{event}`: {reason}")]
    InvalidInstance { event: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A named region of the schema plus timing metadata.
///
/// The event's own create/process machine and its time machine are implicit:
/// they exist at simulation time, not in the diagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDef {
    pub name: String,
    pub label: Option<String>,
    pub source: EventSource,
    pub region: BTreeSet<RegionItem>,
    pub duration: u64,
    pub properties: BTreeSet<String>,
    schema: u64,
}

impl EventDef {
    pub fn with_label(mut self, label: impl Into<String>) -> EventDef {
        self.label = Some(label.into());
        self
    }

    pub fn with_properties<I, S>(mut self, properties: I) -> EventDef
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.properties.extend(properties.into_iter().map(Into::into));
        self
    }

    /// Fingerprint of the schema this event was defined against.
    pub fn schema_fingerprint(&self) -> u64 {
        self.schema
    }

    pub fn is_composed(&self) -> bool {
        matches!(self.source, EventSource::Compose(_))
    }
}

/// Defines an event over the region spanned by `refs`. The name must not be
/// taken by an event already in `schema`.
pub fn define_event(
    schema: &Schema,
    name: &str,
    refs: &[Path],
    duration: Option<u64>,
) -> Result<EventDef, EventError> {
    if schema.event(name).is_some() {
        return Err(EventError::DuplicateName(name.to_string()));
    }
    define_region_event(schema, name, refs, duration)
}

fn define_region_event(
    schema: &Schema,
    name: &str,
    refs: &[Path],
    duration: Option<u64>,
) -> Result<EventDef, EventError> {
    let duration = duration.unwrap_or(1);
    if duration == 0 {
        return Err(EventError::ZeroDuration);
    }
    let resolved = refs
        .iter()
        .map(|p| schema.resolve(p))
        .collect::<Result<Vec<ElementRef>, _>>()?;
    let region = region_closure(schema, &resolved)?;
    if region.is_empty() {
        return Err(EventError::EmptyRegion(name.to_string()));
    }
    Ok(EventDef {
        name: name.to_string(),
        label: None,
        source: EventSource::Region(refs.to_vec()),
        region,
        duration,
        properties: BTreeSet::new(),
        schema: schema.fingerprint(),
    })
}

/// True iff `inner`'s region lies within `outer`'s.
pub fn contains(outer: &EventDef, inner: &EventDef) -> Result<bool, EventError> {
    if outer.schema != inner.schema {
        return Err(EventError::SchemaMismatch);
    }
    Ok(inner.region.is_subset(&outer.region))
}

/// Event-level implication is region containment: whenever `a` occurs in a
/// region, `b` occurs there too.
///
/// A false answer says nothing about non-occurrence. `b` failing to occur
/// does not rule out `a`'s siblings: "walking" not occurring leaves room for
/// "walking nonslowly" to have been what the speaker meant, so no
/// counterfactual is derived here.
pub fn implies(a: &EventDef, b: &EventDef) -> Result<bool, EventError> {
    contains(a, b)
}

/// Combines `parts` into one event: region is the closed union, duration
/// the longest part, properties the union.
pub fn compose(schema: &Schema, name: &str, parts: &[&EventDef]) -> Result<EventDef, EventError> {
    if parts.is_empty() {
        return Err(EventError::EmptyParts);
    }
    if parts.iter().any(|p| p.schema != schema.fingerprint()) {
        return Err(EventError::SchemaMismatch);
    }
    let union: BTreeSet<ElementRef> = parts
        .iter()
        .flat_map(|p| p.region.iter().cloned().map(ElementRef::from))
        .collect();
    let region = region_closure(schema, &union)?;
    Ok(EventDef {
        name: name.to_string(),
        label: None,
        source: EventSource::Compose(parts.iter().map(|p| p.name.clone()).collect()),
        region,
        duration: parts.iter().map(|p| p.duration).max().unwrap_or(1),
        properties: parts.iter().flat_map(|p| p.properties.iter().cloned()).collect(),
        schema: schema.fingerprint(),
    })
}

/// Wraps a trace as a single event composed of the events it mentions.
pub fn trace_event(schema: &Schema, name: &str, trace: &Trace) -> Result<EventDef, EventError> {
    let mut seen = HashSet::new();
    let mut parts = Vec::new();
    for inst in trace.instances() {
        if seen.insert(inst.event.as_str()) {
            let def = schema
                .event(&inst.event)
                .ok_or_else(|| EventError::UnknownEvent(inst.event.clone()))?;
            parts.push(def);
        }
    }
    if parts.is_empty() {
        return Err(EventError::EmptyTrace);
    }
    compose(schema, name, &parts)
}

/// Defines every declared event, resolving compositions in dependency order.
pub(crate) fn define_all(
    schema: &Schema,
    decls: &[EventDecl],
) -> Result<Vec<EventDef>, Vec<ValidationDiagnostic>> {
    let mut diags = Vec::new();
    let mut names = HashSet::new();
    for d in decls {
        if !names.insert(d.name.as_str()) {
            diags.push(ValidationDiagnostic::error(
                Rule::Region,
                d.name.clone(),
                format!("event `{}` declared twice", d.name),
            ));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let mut defined: HashMap<&str, EventDef> = HashMap::new();
    let mut pending: Vec<&EventDecl> = Vec::new();
    for d in decls {
        match &d.source {
            EventSource::Region(refs) => {
                if refs.is_empty() {
                    diags.push(ValidationDiagnostic::error(
                        Rule::Region,
                        d.name.clone(),
                        "event region is empty",
                    ));
                    continue;
                }
                match define_region_event(schema, &d.name, refs, d.duration) {
                    Ok(def) => {
                        let mut def = def.with_properties(d.properties.iter().cloned());
                        def.label = d.label.clone();
                        defined.insert(&d.name, def);
                    }
                    Err(err) => diags.push(ValidationDiagnostic::error(
                        Rule::Region,
                        d.name.clone(),
                        err.to_string(),
                    )),
                }
            }
            EventSource::Compose(parts) => {
                if parts.is_empty() {
                    diags.push(ValidationDiagnostic::error(
                        Rule::Region,
                        d.name.clone(),
                        EventError::EmptyParts.to_string(),
                    ));
                } else if d.duration.is_some() || !d.properties.is_empty() {
                    diags.push(ValidationDiagnostic::error(
                        Rule::Region,
                        d.name.clone(),
                        "a composed event takes its duration and properties from its parts",
                    ));
                } else if let Some(missing) = parts.iter().find(|p| !names.contains(p.as_str())) {
                    diags.push(ValidationDiagnostic::error(
                        Rule::Region,
                        d.name.clone(),
                        format!("composed from undefined event `{missing}`"),
                    ));
                } else {
                    pending.push(d);
                }
            }
        }
    }

    // Compositions may refer to events declared later in the file.
    loop {
        let before = pending.len();
        pending.retain(|d| {
            let EventSource::Compose(parts) = &d.source else {
                return false;
            };
            let Some(defs) = parts
                .iter()
                .map(|p| defined.get(p.as_str()))
                .collect::<Option<Vec<_>>>()
            else {
                return true;
            };
            let mut def = compose(schema, &d.name, &defs).expect("parts share the schema");
            def.source = d.source.clone();
            def.label = d.label.clone();
            defined.insert(&d.name, def);
            false
        });
        if pending.is_empty() || pending.len() == before {
            break;
        }
    }
    for d in pending {
        diags.push(ValidationDiagnostic::error(
            Rule::Region,
            d.name.clone(),
            "composition refers back to itself",
        ));
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let defs: Vec<EventDef> = decls
        .iter()
        .map(|d| defined.remove(d.name.as_str()).expect("all defined"))
        .collect();
    for def in &defs {
        diags.extend(
            validate::check_region(schema, &def.name, &def.region, &def.source)
                .into_iter()
                .filter(ValidationDiagnostic::is_error),
        );
    }
    if diags.is_empty() {
        Ok(defs)
    } else {
        Err(diags)
    }
}

/// One occurrence of an event. Ticks are half-open: the instance occupies
/// `start..end`, and each gap `(from, to)` is an idle stretch `from..to`
/// strictly inside it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventInstance {
    pub event: String,
    pub start: u64,
    pub end: u64,
    pub gaps: Vec<(u64, u64)>,
}

impl EventInstance {
    pub fn new(
        event: impl Into<String>,
        start: u64,
        end: u64,
        gaps: Vec<(u64, u64)>,
    ) -> Result<EventInstance, EventError> {
        let event = event.into();
        let bad = |reason: &str| EventError::InvalidInstance {
            event: event.clone(),
            reason: reason.to_string(),
        };
        if start > end {
            return Err(bad("start after end"));
        }
        let mut last = start;
        for &(from, to) in &gaps {
            if from <= last || to >= end || from >= to {
                return Err(bad("gaps must be ordered, disjoint and strictly inside the instance"));
            }
            last = to;
        }
        Ok(EventInstance {
            event,
            start,
            end,
            gaps,
        })
    }

    /// Builds an instance from the set of ticks at which the event was
    /// active; returns `None` for an empty set.
    pub fn from_ticks(event: impl Into<String>, ticks: &BTreeSet<u64>) -> Option<EventInstance> {
        let start = *ticks.first()?;
        let last = *ticks.last()?;
        let mut gaps = Vec::new();
        let mut prev = start;
        for &t in ticks.iter().skip(1) {
            if t > prev + 1 {
                gaps.push((prev + 1, t));
            }
            prev = t;
        }
        Some(EventInstance {
            event: event.into(),
            start,
            end: last + 1,
            gaps,
        })
    }
}

/// Instances that share a start tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelGroup {
    pub start: u64,
    pub instances: Vec<EventInstance>,
}

/// A sequence of parallel groups ordered by strictly increasing start tick.
///
/// Within a group instances are kept sorted by event name, then end tick,
/// so a trace has exactly one representation whatever order its instances
/// were collected in.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    groups: Vec<ParallelGroup>,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    pub fn from_instances<I>(instances: I) -> Trace
    where
        I: IntoIterator<Item = EventInstance>,
    {
        let mut trace = Trace::new();
        for inst in instances {
            trace.insert(inst);
        }
        trace
    }

    pub fn insert(&mut self, instance: EventInstance) {
        match self.groups.binary_search_by_key(&instance.start, |g| g.start) {
            Ok(i) => {
                let group = &mut self.groups[i].instances;
                let at = group.partition_point(|x| instance_order(x) <= instance_order(&instance));
                group.insert(at, instance);
            }
            Err(i) => self.groups.insert(
                i,
                ParallelGroup {
                    start: instance.start,
                    instances: vec![instance],
                },
            ),
        }
    }

    pub fn groups(&self) -> &[ParallelGroup] {
        &self.groups
    }

    /// Instances in trace order: groups by start, then in-group order.
    pub fn instances(&self) -> impl Iterator<Item = &EventInstance> {
        self.groups.iter().flat_map(|g| g.instances.iter())
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.instances.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.instances().map(|i| i.event.as_str()).collect()
    }
}

fn instance_order(i: &EventInstance) -> (&str, u64, &[(u64, u64)]) {
    (&i.event, i.end, &i.gaps)
}

/// Whether `candidate` embeds in `reference`.
///
/// The flattened name sequence of `candidate` must be an order-preserving
/// subsequence of `reference`'s, with instances that share a group in
/// `candidate` landing in one group of `reference`.
pub fn subtrace(candidate: &Trace, reference: &Trace) -> bool {
    // Greedy earliest placement: a position (group, offset) that is earlier
    // dominates every later one, so the first feasible placement of each
    // candidate group never blocks a later group.
    let refs = &reference.groups;
    let mut group = 0;
    let mut offset = 0;
    'outer: for cand in &candidate.groups {
        while group < refs.len() {
            if let Some(end) = embed_from(&cand.instances, &refs[group].instances, offset) {
                offset = end;
                continue 'outer;
            }
            group += 1;
            offset = 0;
        }
        return false;
    }
    true
}

/// Matches the names of `needle` as a subsequence of `hay[from..]`; returns
/// the index just past the last match.
fn embed_from(needle: &[EventInstance], hay: &[EventInstance], from: usize) -> Option<usize> {
    let mut pos = from;
    for inst in needle {
        let found = hay.get(pos..)?.iter().position(|h| h.event == inst.event)?;
        pos += found + 1;
    }
    Some(pos)
}

/// Span of the trace: latest end minus earliest start.
pub fn trace_time(trace: &Trace) -> Result<u64, EventError> {
    let start = trace.instances().map(|i| i.start).min();
    let end = trace.instances().map(|i| i.end).max();
    match (start, end) {
        (Some(s), Some(e)) => Ok(e.saturating_sub(s)),
        _ => Err(EventError::EmptyTrace),
    }
}

pub fn parallel_groups(trace: &Trace) -> Vec<(u64, BTreeSet<String>)> {
    trace
        .groups
        .iter()
        .map(|g| (g.start, g.instances.iter().map(|i| i.event.clone()).collect()))
        .collect()
}
