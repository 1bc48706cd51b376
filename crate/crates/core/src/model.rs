//! In-memory flowthing schemas.
//!
//! A [`Schema`] is the static side of a description: a tree of spheres whose
//! leaves are machines, the flow arcs between machine stages, trigger arcs,
//! the events defined over regions of the diagram and any declared traces.
//! Schemas are only obtained through [`Schema::build`], which rejects
//! structurally broken input, so every reference held by a schema resolves.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::event::{self, EventDef};
use crate::validate::{self, Rule, ValidationDiagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("`{0}` does not name any sphere, machine or stage")]
    NotFound(String),
    #[error("internal error: `{0}` names both a sphere and a machine")]
    Ambiguous(String),
    #[error("invalid path `{0}`")]
    InvalidPath(String),
    #[error("unknown stage kind `{0}`")]
    UnknownStage(String),
    #[error("stage `{stage}` declared twice in machine `{machine}`")]
    DuplicateStage { machine: String, stage: StageKind },
    #[error("machine `{0}` mixes a combined receive stage with arrive/accept")]
    ReceptionConflict(String),
    #[error("storage link on `{stage}` in machine `{machine}` is invalid: {reason}")]
    StorageLink {
        machine: String,
        stage: StageKind,
        reason: &'static str,
    },
    #[error("flow arc #{0} does not exist")]
    NoSuchFlow(usize),
}

/// The mutually exclusive stages of a flow machine.
///
/// Storage is deliberately absent: it is a machine flag that can be attached
/// to any stage (see [`Machine::storage_links`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageKind {
    Create,
    Release,
    Transfer,
    Receive,
    Arrive,
    Accept,
    Process,
}

impl StageKind {
    pub const ALL: [StageKind; 7] = [
        StageKind::Create,
        StageKind::Release,
        StageKind::Transfer,
        StageKind::Receive,
        StageKind::Arrive,
        StageKind::Accept,
        StageKind::Process,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Create => "create",
            StageKind::Release => "release",
            StageKind::Transfer => "transfer",
            StageKind::Receive => "receive",
            StageKind::Arrive => "arrive",
            StageKind::Accept => "accept",
            StageKind::Process => "process",
        }
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StageKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StageKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ModelError::UnknownStage(s.to_string()))
    }
}

/// Returns true for `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// A dotted identifier path such as `Station.Car.transfer`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(Vec<String>);

impl Path {
    pub fn new<I, S>(segments: I) -> Result<Path, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() || !segments.iter().all(|s| is_identifier(s)) {
            return Err(ModelError::InvalidPath(segments.join(".")));
        }
        Ok(Path(segments))
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }
}

impl FromStr for Path {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Path::new(s.split('.')).map_err(|_| ModelError::InvalidPath(s.to_string()))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("."))
    }
}

/// A machine: the stages one kind of thing flows through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    pub thing: String,
    /// Declared stages, in declaration order.
    pub stages: Vec<StageKind>,
    pub storage: bool,
    /// Stages that exchange things with the machine's storage.
    pub storage_links: Vec<StageKind>,
}

impl Machine {
    /// Builds a machine, rejecting repeated stages and mixed reception.
    pub fn new<I>(thing: impl Into<String>, stages: I) -> Result<Machine, ModelError>
    where
        I: IntoIterator<Item = StageKind>,
    {
        let machine = Machine {
            thing: thing.into(),
            stages: stages.into_iter().collect(),
            storage: false,
            storage_links: Vec::new(),
        };
        machine.check()?;
        Ok(machine)
    }

    /// Attaches storage, linked to the given (already declared) stages.
    pub fn with_storage<I>(mut self, links: I) -> Result<Machine, ModelError>
    where
        I: IntoIterator<Item = StageKind>,
    {
        self.storage = true;
        self.storage_links = links.into_iter().collect();
        self.check()?;
        Ok(self)
    }

    pub fn has_stage(&self, kind: StageKind) -> bool {
        self.stages.contains(&kind)
    }

    fn check(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::new();
        for &kind in &self.stages {
            if !seen.insert(kind) {
                return Err(ModelError::DuplicateStage {
                    machine: self.thing.clone(),
                    stage: kind,
                });
            }
        }
        if seen.contains(&StageKind::Receive)
            && (seen.contains(&StageKind::Arrive) || seen.contains(&StageKind::Accept))
        {
            return Err(ModelError::ReceptionConflict(self.thing.clone()));
        }
        let mut linked = HashSet::new();
        for &kind in &self.storage_links {
            let reason = if !self.storage {
                Some("machine has no storage")
            } else if !seen.contains(&kind) {
                Some("stage is not declared")
            } else if !linked.insert(kind) {
                Some("link declared twice")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(ModelError::StorageLink {
                    machine: self.thing.clone(),
                    stage: kind,
                    reason,
                });
            }
        }
        Ok(())
    }
}

/// A named environment holding machines and nested spheres.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sphere {
    pub name: String,
    pub subspheres: Vec<Sphere>,
    pub machines: Vec<Machine>,
}

impl Sphere {
    pub fn new(name: impl Into<String>) -> Sphere {
        Sphere {
            name: name.into(),
            subspheres: Vec::new(),
            machines: Vec::new(),
        }
    }

    pub fn with_machine(mut self, machine: Machine) -> Sphere {
        self.machines.push(machine);
        self
    }

    pub fn with_sphere(mut self, sphere: Sphere) -> Sphere {
        self.subspheres.push(sphere);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MachineRef {
    pub sphere: Vec<String>,
    pub machine: String,
}

impl MachineRef {
    pub fn stage(&self, stage: StageKind) -> StageRef {
        StageRef {
            sphere: self.sphere.clone(),
            machine: self.machine.clone(),
            stage,
        }
    }
}

impl fmt::Display for MachineRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sphere {
            write!(f, "{s}.")?;
        }
        f.write_str(&self.machine)
    }
}

/// Address of one stage: a stage kind is unique within its machine.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StageRef {
    pub sphere: Vec<String>,
    pub machine: String,
    pub stage: StageKind,
}

impl StageRef {
    pub fn machine_ref(&self) -> MachineRef {
        MachineRef {
            sphere: self.sphere.clone(),
            machine: self.machine.clone(),
        }
    }

    pub fn same_machine(&self, other: &StageRef) -> bool {
        self.sphere == other.sphere && self.machine == other.machine
    }
}

impl fmt::Display for StageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.sphere {
            write!(f, "{s}.")?;
        }
        write!(f, "{}.{}", self.machine, self.stage)
    }
}

/// Any addressable element of a schema.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ElementRef {
    Sphere(Vec<String>),
    Machine(MachineRef),
    Stage(StageRef),
    /// A flow arc, by declaration index.
    Flow(usize),
}

impl fmt::Display for ElementRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementRef::Sphere(path) => f.write_str(&path.join(".")),
            ElementRef::Machine(m) => m.fmt(f),
            ElementRef::Stage(s) => s.fmt(f),
            ElementRef::Flow(i) => write!(f, "flow#{i}"),
        }
    }
}

/// Member of a closed event region.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionItem {
    Stage(StageRef),
    Flow(usize),
}

impl From<RegionItem> for ElementRef {
    fn from(item: RegionItem) -> ElementRef {
        match item {
            RegionItem::Stage(s) => ElementRef::Stage(s),
            RegionItem::Flow(i) => ElementRef::Flow(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowArc {
    pub source: StageRef,
    pub target: StageRef,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerSource {
    Stage(StageRef),
    /// Flow arc by declaration index.
    Flow(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerArc {
    pub source: TriggerSource,
    pub target: StageRef,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowDecl {
    pub source: Path,
    pub target: Path,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TriggerSourceDecl {
    Stage(Path),
    /// The flow arc declared between these two stages.
    Flow(Path, Path),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerDecl {
    pub source: TriggerSourceDecl,
    pub target: Path,
}

/// How an event's region is given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventSource {
    Region(Vec<Path>),
    Compose(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDecl {
    pub name: String,
    pub label: Option<String>,
    pub source: EventSource,
    /// Only meaningful for region events; composed events take the max of
    /// their parts.
    pub duration: Option<u64>,
    pub properties: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeclaredTrace {
    pub name: String,
    pub events: Vec<String>,
}

/// Unresolved schema contents, as written by a user or produced by the parser.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaParts {
    pub spheres: Vec<Sphere>,
    pub flows: Vec<FlowDecl>,
    pub triggers: Vec<TriggerDecl>,
    pub events: Vec<EventDecl>,
    pub traces: Vec<DeclaredTrace>,
}

/// A constructed, immutable schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    spheres: Vec<Sphere>,
    flows: Vec<FlowArc>,
    triggers: Vec<TriggerArc>,
    events: Vec<EventDef>,
    traces: Vec<DeclaredTrace>,
    stages: Vec<StageRef>,
    fingerprint: u64,
}

impl Default for Schema {
    fn default() -> Self {
        Schema::empty()
    }
}

impl Schema {
    pub fn empty() -> Schema {
        let mut schema = Schema {
            spheres: Vec::new(),
            flows: Vec::new(),
            triggers: Vec::new(),
            events: Vec::new(),
            traces: Vec::new(),
            stages: Vec::new(),
            fingerprint: 0,
        };
        schema.fingerprint = schema.compute_fingerprint();
        schema
    }

    /// Resolves and checks `parts`. On failure every structural problem found
    /// is reported; warnings are left to [`validate::validate`].
    pub fn build(parts: SchemaParts) -> Result<Schema, Vec<ValidationDiagnostic>> {
        let SchemaParts {
            spheres,
            flows,
            triggers,
            events,
            traces,
        } = parts;

        let diags = validate::check_spheres(&spheres);
        if !diags.is_empty() {
            return Err(diags);
        }

        let mut schema = Schema {
            spheres,
            ..Schema::empty()
        };
        schema.stages = collect_stages(&schema.spheres);

        let mut diags = Vec::new();
        for (index, decl) in flows.iter().enumerate() {
            let subject = format!("{} -> {}", decl.source, decl.target);
            let source = schema.resolve_stage(&decl.source);
            let target = schema.resolve_stage(&decl.target);
            match (source, target) {
                (Ok(source), Ok(target)) if source == target => diags.push(
                    ValidationDiagnostic::error(Rule::Flow, subject, "flow arc loops on one stage"),
                ),
                (Ok(source), Ok(target)) => schema.flows.push(FlowArc {
                    source,
                    target,
                    index,
                }),
                (source, target) => {
                    for err in [source.err(), target.err()].into_iter().flatten() {
                        diags.push(ValidationDiagnostic::error(
                            Rule::Flow,
                            subject.clone(),
                            format!("flow endpoint: {err}"),
                        ));
                    }
                }
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }

        for (index, decl) in triggers.iter().enumerate() {
            let subject = trigger_subject(decl);
            let source = match &decl.source {
                TriggerSourceDecl::Stage(path) => schema
                    .resolve_stage(path)
                    .map(TriggerSource::Stage)
                    .map_err(|e| e.to_string()),
                TriggerSourceDecl::Flow(from, to) => {
                    match (schema.resolve_stage(from), schema.resolve_stage(to)) {
                        (Ok(from), Ok(to)) => schema
                            .flows
                            .iter()
                            .find(|arc| arc.source == from && arc.target == to)
                            .map(|arc| TriggerSource::Flow(arc.index))
                            .ok_or_else(|| format!("no flow arc declared from `{from}` to `{to}`")),
                        (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                    }
                }
            };
            let target = schema.resolve_stage(&decl.target).map_err(|e| e.to_string());
            match (source, target) {
                (Ok(source), Ok(target)) => schema.triggers.push(TriggerArc {
                    source,
                    target,
                    index,
                }),
                (source, target) => {
                    for err in [source.err(), target.err()].into_iter().flatten() {
                        diags.push(ValidationDiagnostic::error(
                            Rule::Trig,
                            subject.clone(),
                            format!("trigger endpoint: {err}"),
                        ));
                    }
                }
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }

        schema.fingerprint = schema.compute_fingerprint();

        match event::define_all(&schema, &events) {
            Ok(defs) => schema.events = defs,
            Err(mut errs) => diags.append(&mut errs),
        }

        let mut trace_names = HashSet::new();
        for trace in &traces {
            if !trace_names.insert(trace.name.as_str()) {
                diags.push(ValidationDiagnostic::error(
                    Rule::Trace,
                    trace.name.clone(),
                    format!("trace `{}` declared twice", trace.name),
                ));
            }
            if trace.events.is_empty() {
                diags.push(ValidationDiagnostic::error(
                    Rule::Trace,
                    trace.name.clone(),
                    "declared trace lists no events",
                ));
            }
            for name in &trace.events {
                if !events.iter().any(|e| &e.name == name) {
                    diags.push(ValidationDiagnostic::error(
                        Rule::Trace,
                        trace.name.clone(),
                        format!("trace refers to undefined event `{name}`"),
                    ));
                }
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }
        schema.traces = traces;
        Ok(schema)
    }

    pub fn spheres(&self) -> &[Sphere] {
        &self.spheres
    }

    pub fn flows(&self) -> &[FlowArc] {
        &self.flows
    }

    pub fn triggers(&self) -> &[TriggerArc] {
        &self.triggers
    }

    pub fn events(&self) -> &[EventDef] {
        &self.events
    }

    pub fn event(&self, name: &str) -> Option<&EventDef> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn declared_traces(&self) -> &[DeclaredTrace] {
        &self.traces
    }

    /// Every stage of the schema in declaration order (depth first; a
    /// sphere's machines before its subspheres).
    pub fn stages(&self) -> &[StageRef] {
        &self.stages
    }

    /// Identifies the static diagram (spheres, flows and triggers). Events
    /// defined against different diagrams cannot be compared.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn is_empty(&self) -> bool {
        self.spheres.is_empty()
            && self.flows.is_empty()
            && self.triggers.is_empty()
            && self.events.is_empty()
            && self.traces.is_empty()
    }

    pub fn machine(&self, at: &MachineRef) -> Option<&Machine> {
        self.sphere(&at.sphere)?
            .machines
            .iter()
            .find(|m| m.thing == at.machine)
    }

    pub fn sphere(&self, path: &[String]) -> Option<&Sphere> {
        let (first, rest) = path.split_first()?;
        let mut sphere = self.spheres.iter().find(|s| &s.name == first)?;
        for name in rest {
            sphere = sphere.subspheres.iter().find(|s| &s.name == name)?;
        }
        Some(sphere)
    }

    pub fn has_stage(&self, at: &StageRef) -> bool {
        self.machine(&at.machine_ref())
            .is_some_and(|m| m.has_stage(at.stage))
    }

    pub fn resolve(&self, path: &Path) -> Result<ElementRef, ModelError> {
        resolve(self, path)
    }

    fn resolve_stage(&self, path: &Path) -> Result<StageRef, ModelError> {
        match resolve(self, path)? {
            ElementRef::Stage(s) => Ok(s),
            _ => Err(ModelError::NotFound(format!("{path} (not a stage)"))),
        }
    }

    fn compute_fingerprint(&self) -> u64 {
        // FNV-1a over a canonical rendering of the static diagram.
        let mut text = String::new();
        for s in &self.stages {
            text.push_str(&s.to_string());
            text.push('\n');
        }
        for sphere in &self.spheres {
            fingerprint_storage(sphere, &mut text);
        }
        for arc in &self.flows {
            text.push_str(&format!("{}->{}\n", arc.source, arc.target));
        }
        for t in &self.triggers {
            match &t.source {
                TriggerSource::Stage(s) => text.push_str(&format!("{s}~>{}\n", t.target)),
                TriggerSource::Flow(i) => text.push_str(&format!("#{i}~>{}\n", t.target)),
            }
        }
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in text.bytes() {
            hash ^= u64::from(byte);
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        hash
    }
}

fn fingerprint_storage(sphere: &Sphere, out: &mut String) {
    for m in &sphere.machines {
        if m.storage {
            out.push_str(&format!("{}.{}:storage", sphere.name, m.thing));
            for l in &m.storage_links {
                out.push_str(&format!(",{l}"));
            }
            out.push('\n');
        }
    }
    for sub in &sphere.subspheres {
        fingerprint_storage(sub, out);
    }
}

pub(crate) fn trigger_subject(decl: &TriggerDecl) -> String {
    match &decl.source {
        TriggerSourceDecl::Stage(p) => format!("{p} ~> {}", decl.target),
        TriggerSourceDecl::Flow(a, b) => format!("{a} -> {b} ~> {}", decl.target),
    }
}

fn collect_stages(spheres: &[Sphere]) -> Vec<StageRef> {
    fn walk(sphere: &Sphere, path: &mut Vec<String>, out: &mut Vec<StageRef>) {
        path.push(sphere.name.clone());
        for m in &sphere.machines {
            for &stage in &m.stages {
                out.push(StageRef {
                    sphere: path.clone(),
                    machine: m.thing.clone(),
                    stage,
                });
            }
        }
        for sub in &sphere.subspheres {
            walk(sub, path, out);
        }
        path.pop();
    }
    let mut out = Vec::new();
    let mut path = Vec::new();
    for s in spheres {
        walk(s, &mut path, &mut out);
    }
    out
}

/// Resolves a dotted path: spheres are matched as deep as possible, then a
/// machine of the innermost sphere, then a stage of that machine.
pub fn resolve(schema: &Schema, path: &Path) -> Result<ElementRef, ModelError> {
    let segs = path.segments();
    let not_found = || ModelError::NotFound(path.to_string());

    let mut level: &[Sphere] = &schema.spheres;
    let mut current: Option<&Sphere> = None;
    let mut consumed = 0;
    while consumed < segs.len() {
        let name = &segs[consumed];
        let Some(next) = level.iter().find(|s| &s.name == name) else {
            break;
        };
        if current.is_some_and(|c| c.machines.iter().any(|m| &m.thing == name)) {
            return Err(ModelError::Ambiguous(segs[..=consumed].join(".")));
        }
        current = Some(next);
        level = &next.subspheres;
        consumed += 1;
    }

    let sphere = current.ok_or_else(not_found)?;
    let sphere_path = segs[..consumed].to_vec();
    let rest = &segs[consumed..];
    match rest {
        [] => Ok(ElementRef::Sphere(sphere_path)),
        [machine] | [machine, _] => {
            let m = sphere
                .machines
                .iter()
                .find(|m| &m.thing == machine)
                .ok_or_else(not_found)?;
            let mref = MachineRef {
                sphere: sphere_path,
                machine: machine.clone(),
            };
            match rest {
                [_, stage] => {
                    let kind: StageKind = stage.parse().map_err(|_| not_found())?;
                    if !m.has_stage(kind) {
                        return Err(not_found());
                    }
                    Ok(ElementRef::Stage(mref.stage(kind)))
                }
                _ => Ok(ElementRef::Machine(mref)),
            }
        }
        _ => Err(not_found()),
    }
}

/// Flow arcs leaving `at`, in declaration order.
pub fn outgoing<'a>(schema: &'a Schema, at: &StageRef) -> Result<Vec<&'a FlowArc>, ModelError> {
    if !schema.has_stage(at) {
        return Err(ModelError::NotFound(at.to_string()));
    }
    let mut arcs: Vec<&FlowArc> = schema.flows.iter().filter(|a| &a.source == at).collect();
    arcs.sort_by_key(|a| a.index);
    Ok(arcs)
}

/// Expands `refs` to the stages they cover plus every flow arc whose two
/// endpoints lie in that stage set. A flow arc in `refs` brings its
/// endpoints along.
pub fn region_closure<'a, I>(schema: &Schema, refs: I) -> Result<BTreeSet<RegionItem>, ModelError>
where
    I: IntoIterator<Item = &'a ElementRef>,
{
    let mut stages: BTreeSet<StageRef> = BTreeSet::new();
    let mut flows: BTreeSet<usize> = BTreeSet::new();
    for r in refs {
        match r {
            ElementRef::Stage(s) => {
                if !schema.has_stage(s) {
                    return Err(ModelError::NotFound(s.to_string()));
                }
                stages.insert(s.clone());
            }
            ElementRef::Machine(m) => {
                let machine = schema
                    .machine(m)
                    .ok_or_else(|| ModelError::NotFound(m.to_string()))?;
                stages.extend(machine.stages.iter().map(|&k| m.stage(k)));
            }
            ElementRef::Sphere(path) => {
                if schema.sphere(path).is_none() {
                    return Err(ModelError::NotFound(path.join(".")));
                }
                stages.extend(
                    schema
                        .stages
                        .iter()
                        .filter(|s| s.sphere.starts_with(path))
                        .cloned(),
                );
            }
            ElementRef::Flow(i) => {
                let arc = schema.flows.get(*i).ok_or(ModelError::NoSuchFlow(*i))?;
                stages.insert(arc.source.clone());
                stages.insert(arc.target.clone());
                flows.insert(*i);
            }
        }
    }
    for arc in &schema.flows {
        if stages.contains(&arc.source) && stages.contains(&arc.target) {
            flows.insert(arc.index);
        }
    }
    Ok(stages
        .into_iter()
        .map(RegionItem::Stage)
        .chain(flows.into_iter().map(RegionItem::Flow))
        .collect())
}

/// Maps each stage to the flow arcs entering it.
pub(crate) fn incoming_index(schema: &Schema) -> HashMap<&StageRef, Vec<&FlowArc>> {
    let mut map: HashMap<&StageRef, Vec<&FlowArc>> = HashMap::new();
    for arc in &schema.flows {
        map.entry(&arc.target).or_default().push(arc);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Path {
        s.parse().unwrap()
    }

    fn station() -> Schema {
        use StageKind::*;
        let parts = SchemaParts {
            spheres: vec![Sphere::new("Station")
                .with_machine(Machine::new("Car", [Transfer, Receive, Process]).unwrap())
                .with_sphere(
                    Sphere::new("Robot1").with_machine(Machine::new("Car", [Receive, Process]).unwrap()),
                )],
            flows: vec![
                FlowDecl {
                    source: p("Station.Car.transfer"),
                    target: p("Station.Car.receive"),
                },
                FlowDecl {
                    source: p("Station.Car.receive"),
                    target: p("Station.Car.process"),
                },
                FlowDecl {
                    source: p("Station.Car.transfer"),
                    target: p("Station.Robot1.Car.receive"),
                },
            ],
            ..SchemaParts::default()
        };
        Schema::build(parts).unwrap()
    }

    #[test]
    fn stage_kinds_are_seven() {
        let set: HashSet<_> = StageKind::ALL.iter().map(|k| k.as_str()).collect();
        assert_eq!(set.len(), 7);
        assert!("storage".parse::<StageKind>().is_err());
    }

    #[test]
    fn resolves_stage_machine_and_sphere() {
        let s = station();
        assert_eq!(
            s.resolve(&p("Station.Car.transfer")).unwrap(),
            ElementRef::Stage(StageRef {
                sphere: vec!["Station".into()],
                machine: "Car".into(),
                stage: StageKind::Transfer,
            })
        );
        assert_eq!(
            s.resolve(&p("Station")).unwrap(),
            ElementRef::Sphere(vec!["Station".into()])
        );
        assert!(matches!(
            s.resolve(&p("Station.Robot1.Car")).unwrap(),
            ElementRef::Machine(_)
        ));
        assert_eq!(
            s.resolve(&p("Station.Bus")),
            Err(ModelError::NotFound("Station.Bus".into()))
        );
        assert!(s.resolve(&p("Station.Car.create")).is_err());
        assert!(s.resolve(&p("Station.Car.transfer.extra")).is_err());
        assert!(s.resolve(&p("Nowhere")).is_err());
    }

    #[test]
    fn outgoing_keeps_file_order() {
        let s = station();
        let at = StageRef {
            sphere: vec!["Station".into()],
            machine: "Car".into(),
            stage: StageKind::Transfer,
        };
        let arcs = outgoing(&s, &at).unwrap();
        assert_eq!(arcs.len(), 2);
        assert_eq!(arcs[0].target.stage, StageKind::Receive);
        assert_eq!(arcs[1].target.sphere, vec!["Station", "Robot1"]);
        let process = at.machine_ref().stage(StageKind::Process);
        assert!(outgoing(&s, &process).unwrap().is_empty());
        let missing = at.machine_ref().stage(StageKind::Create);
        assert!(outgoing(&s, &missing).is_err());
    }

    #[test]
    fn closure_of_machine_includes_internal_arcs_only() {
        let s = station();
        let car = MachineRef {
            sphere: vec!["Station".into()],
            machine: "Car".into(),
        };
        let region = region_closure(&s, &[ElementRef::Machine(car.clone())]).unwrap();
        let expected: BTreeSet<RegionItem> = [
            RegionItem::Stage(car.stage(StageKind::Transfer)),
            RegionItem::Stage(car.stage(StageKind::Receive)),
            RegionItem::Stage(car.stage(StageKind::Process)),
            RegionItem::Flow(0),
            RegionItem::Flow(1),
        ]
        .into_iter()
        .collect();
        assert_eq!(region, expected);
        assert!(region_closure(&s, &[]).unwrap().is_empty());
        let lone = ElementRef::Stage(car.stage(StageKind::Process));
        assert_eq!(region_closure(&s, [&lone]).unwrap().len(), 1);
    }

    #[test]
    fn sphere_closure_is_recursive() {
        let s = station();
        let region = region_closure(&s, &[ElementRef::Sphere(vec!["Station".into()])]).unwrap();
        assert_eq!(region.len(), 5 + 3);
    }

    #[test]
    fn machine_constructor_rejects_bad_stages() {
        use StageKind::*;
        assert!(matches!(
            Machine::new("M", [Process, Process]),
            Err(ModelError::DuplicateStage { .. })
        ));
        assert!(matches!(
            Machine::new("M", [Receive, Arrive]),
            Err(ModelError::ReceptionConflict(_))
        ));
        let stored = Machine::new("M", [Create, Process])
            .unwrap()
            .with_storage([Process])
            .unwrap();
        assert!(stored.storage);
        assert!(Machine::new("M", [Create])
            .unwrap()
            .with_storage([Process])
            .is_err());
    }

    #[test]
    fn build_rejects_dangling_arcs() {
        let parts = SchemaParts {
            spheres: vec![Sphere::new("A")],
            flows: vec![FlowDecl {
                source: p("A.M.create"),
                target: p("A.M.release"),
            }],
            ..SchemaParts::default()
        };
        let errs = Schema::build(parts).unwrap_err();
        assert!(errs.iter().all(|d| d.rule == Rule::Flow));
    }

    #[test]
    fn fingerprint_tracks_static_structure() {
        let a = station();
        let b = station();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), Schema::empty().fingerprint());
    }
}
