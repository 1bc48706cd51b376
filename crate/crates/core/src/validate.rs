//! Static semantic checks.
//!
//! Structural rules (stage exclusivity, reception, naming, resolvable
//! references) are enforced when a schema is built; [`validate`] re-checks
//! them and adds the flow-shape rules and the advisory warnings.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use crate::model::{
    is_identifier, FlowArc, Machine, ModelError, Schema, Sphere, StageKind, StageRef, TriggerSource,
};
use crate::model::{EventSource, RegionItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// The fixed rule set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    /// Each stage kind at most once per machine.
    Excl,
    /// Combined reception excludes split arrive/accept.
    Recep,
    /// Intra-machine flows follow the stage adjacency table.
    Flow,
    /// Cross-machine flows run between transfer/inbound stages.
    XBound,
    Trig,
    Region,
    Trace,
    Sphere,
}

impl Rule {
    pub const ALL: [Rule; 8] = [
        Rule::Excl,
        Rule::Recep,
        Rule::Flow,
        Rule::XBound,
        Rule::Trig,
        Rule::Region,
        Rule::Trace,
        Rule::Sphere,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Rule::Excl => "V-EXCL",
            Rule::Recep => "V-RECEP",
            Rule::Flow => "V-FLOW",
            Rule::XBound => "V-XBOUND",
            Rule::Trig => "V-TRIG",
            Rule::Region => "V-REGION",
            Rule::Trace => "V-TRACE",
            Rule::Sphere => "V-SPHERE",
        }
    }

    pub fn from_code(code: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.code() == code)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for Rule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationDiagnostic {
    pub severity: Severity,
    pub rule: Rule,
    pub message: String,
    /// Path of the offending element.
    pub subject: String,
}

impl ValidationDiagnostic {
    pub fn error(rule: Rule, subject: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationDiagnostic {
            severity: Severity::Error,
            rule,
            message: message.into(),
            subject: subject.into(),
        }
    }

    pub fn warning(rule: Rule, subject: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationDiagnostic {
            severity: Severity::Warning,
            rule,
            message: message.into(),
            subject: subject.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for ValidationDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{}] {}: {}",
            self.severity, self.rule, self.subject, self.message
        )
    }
}

/// Runs every rule over `schema`. The result is empty iff the schema passes.
pub fn validate(schema: &Schema) -> Vec<ValidationDiagnostic> {
    let mut out = check_spheres(schema.spheres());
    for arc in schema.flows() {
        out.extend(check_flow_arc(arc, schema));
    }
    for trigger in schema.triggers() {
        let subject = match &trigger.source {
            TriggerSource::Stage(src) => format!("{src} ~> {}", trigger.target),
            TriggerSource::Flow(i) => {
                let arc = &schema.flows()[*i];
                format!("{} -> {} ~> {}", arc.source, arc.target, trigger.target)
            }
        };
        if !schema.has_stage(&trigger.target) {
            out.push(ValidationDiagnostic::error(
                Rule::Trig,
                subject,
                "trigger target does not resolve",
            ));
            continue;
        }
        if !matches!(
            trigger.target.stage,
            StageKind::Create | StageKind::Receive | StageKind::Arrive
        ) {
            out.push(ValidationDiagnostic::warning(
                Rule::Trig,
                subject,
                format!(
                    "trigger targets a {} stage; triggers usually start flows at create, receive or arrive",
                    trigger.target.stage
                ),
            ));
        }
    }
    for event in schema.events() {
        out.extend(check_region(schema, &event.name, &event.region, &event.source));
    }
    let defined: HashSet<&str> = schema.events().iter().map(|e| e.name.as_str()).collect();
    for trace in schema.declared_traces() {
        for name in &trace.events {
            if !defined.contains(name.as_str()) {
                out.push(ValidationDiagnostic::error(
                    Rule::Trace,
                    trace.name.clone(),
                    format!("trace refers to undefined event `{name}`"),
                ));
            }
        }
    }
    out
}

/// Intra-machine adjacency: which stage may flow directly into which.
pub fn intra_machine_allowed(from: StageKind, to: StageKind) -> bool {
    use StageKind::*;
    matches!(
        (from, to),
        (Arrive, Accept)
            | (Accept | Receive | Create, Process | Release)
            | (Process, Release)
            | (Release, Transfer)
            | (Transfer, Receive | Arrive)
    )
}

/// Cross-machine arcs leave through transfer and enter at transfer or an
/// inbound stage.
pub fn cross_machine_allowed(from: StageKind, to: StageKind) -> bool {
    use StageKind::*;
    from == Transfer && matches!(to, Transfer | Receive | Arrive)
}

/// Applies V-FLOW / V-XBOUND to a single arc.
pub fn check_flow_arc(arc: &FlowArc, schema: &Schema) -> Option<ValidationDiagnostic> {
    let subject = format!("{} -> {}", arc.source, arc.target);
    for end in [&arc.source, &arc.target] {
        if !schema.has_stage(end) {
            return Some(ValidationDiagnostic::error(
                Rule::Flow,
                subject,
                format!("endpoint `{end}` does not resolve"),
            ));
        }
    }
    let (from, to) = (arc.source.stage, arc.target.stage);
    if arc.source == arc.target {
        return Some(ValidationDiagnostic::error(
            Rule::Flow,
            subject,
            "flow arc loops on one stage",
        ));
    }
    if arc.source.same_machine(&arc.target) {
        if !intra_machine_allowed(from, to) {
            let hint = if to == StageKind::Create {
                "; creation is never downstream of another stage, use a trigger"
            } else {
                ""
            };
            return Some(ValidationDiagnostic::error(
                Rule::Flow,
                subject,
                format!("{from} cannot flow into {to} within a machine{hint}"),
            ));
        }
    } else if !cross_machine_allowed(from, to) {
        return Some(ValidationDiagnostic::error(
            Rule::XBound,
            subject,
            format!(
                "flows between machines must run transfer -> transfer/receive/arrive, found {from} -> {to}; use a trigger"
            ),
        ));
    }
    None
}

/// Structural checks on the sphere tree: naming (V-SPHERE), stage
/// exclusivity and storage links (V-EXCL) and reception (V-RECEP).
pub fn check_spheres(spheres: &[Sphere]) -> Vec<ValidationDiagnostic> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    check_sibling_names(&[], spheres, &[], &mut out);
    for sphere in spheres {
        walk_sphere(sphere, &mut path, &mut out);
    }
    out
}

fn walk_sphere(sphere: &Sphere, path: &mut Vec<String>, out: &mut Vec<ValidationDiagnostic>) {
    path.push(sphere.name.clone());
    check_sibling_names(path, &sphere.subspheres, &sphere.machines, out);
    for machine in &sphere.machines {
        check_machine(path, machine, out);
    }
    for sub in &sphere.subspheres {
        walk_sphere(sub, path, out);
    }
    path.pop();
}

fn check_sibling_names(
    parent: &[String],
    spheres: &[Sphere],
    machines: &[Machine],
    out: &mut Vec<ValidationDiagnostic>,
) {
    let subject = |name: &str| {
        let mut s = parent.join(".");
        if !s.is_empty() {
            s.push('.');
        }
        s.push_str(name);
        s
    };
    let mut seen: HashMap<&str, &'static str> = HashMap::new();
    let named = spheres
        .iter()
        .map(|s| (s.name.as_str(), "sphere"))
        .chain(machines.iter().map(|m| (m.thing.as_str(), "machine")));
    for (name, kind) in named {
        if !is_identifier(name) {
            out.push(ValidationDiagnostic::error(
                Rule::Sphere,
                subject(name),
                format!("`{name}` is not a valid {kind} name"),
            ));
            continue;
        }
        if let Some(prev) = seen.insert(name, kind) {
            let message = if prev == kind {
                format!("{kind} `{name}` declared twice at this level")
            } else {
                format!("`{name}` names both a sphere and a machine at this level")
            };
            out.push(ValidationDiagnostic::error(Rule::Sphere, subject(name), message));
        }
    }
}

fn check_machine(sphere: &[String], machine: &Machine, out: &mut Vec<ValidationDiagnostic>) {
    let mpath = format!("{}.{}", sphere.join("."), machine.thing);
    let stage_subject = |k: StageKind| format!("{mpath}.{k}");
    let mut seen = HashSet::new();
    for &kind in &machine.stages {
        if !seen.insert(kind) {
            out.push(ValidationDiagnostic::error(
                Rule::Excl,
                stage_subject(kind),
                format!("stage `{kind}` appears more than once; stages are mutually exclusive"),
            ));
        }
    }
    if seen.contains(&StageKind::Receive) {
        // Report at whichever conflicting stage was declared last.
        let conflict = machine
            .stages
            .iter()
            .rev()
            .find(|k| matches!(k, StageKind::Receive | StageKind::Arrive | StageKind::Accept))
            .copied();
        if seen.contains(&StageKind::Arrive) || seen.contains(&StageKind::Accept) {
            out.push(ValidationDiagnostic::error(
                Rule::Recep,
                stage_subject(conflict.unwrap_or(StageKind::Receive)),
                "combined `receive` cannot be declared together with `arrive`/`accept`",
            ));
        }
    }
    let mut linked = HashSet::new();
    for &kind in &machine.storage_links {
        let problem = if !machine.storage {
            Some("storage link on a machine without storage")
        } else if !seen.contains(&kind) {
            Some("storage link to an undeclared stage")
        } else if !linked.insert(kind) {
            Some("storage link declared twice")
        } else {
            None
        };
        if let Some(problem) = problem {
            out.push(ValidationDiagnostic::error(Rule::Excl, stage_subject(kind), problem));
        }
    }
}

/// V-REGION for one event.
pub(crate) fn check_region(
    schema: &Schema,
    name: &str,
    region: &BTreeSet<RegionItem>,
    source: &EventSource,
) -> Vec<ValidationDiagnostic> {
    let mut out = Vec::new();
    let stages: Vec<&StageRef> = region
        .iter()
        .filter_map(|item| match item {
            RegionItem::Stage(s) => Some(s),
            RegionItem::Flow(_) => None,
        })
        .collect();
    if stages.is_empty() {
        out.push(ValidationDiagnostic::error(Rule::Region, name, "event region is empty"));
        return out;
    }
    for s in &stages {
        if !schema.has_stage(s) {
            out.push(ValidationDiagnostic::error(
                Rule::Region,
                name,
                ModelError::NotFound(s.to_string()).to_string(),
            ));
        }
    }
    if !out.is_empty() {
        return out;
    }
    let components = region_components(schema, &stages);
    if components > 1 {
        let what = match source {
            EventSource::Compose(_) => "combined event",
            EventSource::Region(_) => "event",
        };
        out.push(ValidationDiagnostic::warning(
            Rule::Region,
            name,
            format!("{what} region splits into {components} parts not linked by flows or triggers"),
        ));
    }
    out
}

/// Number of weakly connected components among `stages`, using flows and
/// triggers whose endpoints both lie in the set.
fn region_components(schema: &Schema, stages: &[&StageRef]) -> usize {
    let index: HashMap<&StageRef, usize> = stages.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut parent: Vec<usize> = (0..stages.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut union = |a: &StageRef, b: &StageRef| {
        if let (Some(&a), Some(&b)) = (index.get(a), index.get(b)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra] = rb;
        }
    };
    for arc in schema.flows() {
        union(&arc.source, &arc.target);
    }
    for t in schema.triggers() {
        match &t.source {
            TriggerSource::Stage(s) => union(s, &t.target),
            TriggerSource::Flow(i) => {
                let arc = &schema.flows()[*i];
                union(&arc.source, &t.target);
                union(&arc.target, &t.target);
            }
        }
    }
    (0..stages.len())
        .filter(|&i| find(&mut parent, i) == i)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FlowDecl, SchemaParts};

    fn arc(a: &str, b: &str) -> FlowDecl {
        FlowDecl {
            source: a.parse().unwrap(),
            target: b.parse().unwrap(),
        }
    }

    #[test]
    fn adjacency_table() {
        use StageKind::*;
        assert!(intra_machine_allowed(Create, Release));
        assert!(intra_machine_allowed(Arrive, Accept));
        assert!(intra_machine_allowed(Transfer, Receive));
        assert!(!intra_machine_allowed(Process, Create));
        assert!(!intra_machine_allowed(Receive, Transfer));
        assert!(cross_machine_allowed(Transfer, Receive));
        assert!(!cross_machine_allowed(Release, Receive));
    }

    #[test]
    fn flow_and_xbound_rules() {
        use StageKind::*;
        let parts = SchemaParts {
            spheres: vec![
                Sphere::new("Station")
                    .with_machine(Machine::new("Car", [Create, Release, Transfer, Process]).unwrap())
                    .with_sphere(
                        Sphere::new("Robot1")
                            .with_machine(Machine::new("Car", [Receive, Process]).unwrap()),
                    ),
            ],
            flows: vec![
                arc("Station.Car.create", "Station.Car.release"),
                arc("Station.Car.process", "Station.Car.create"),
                arc("Station.Car.transfer", "Station.Robot1.Car.receive"),
                arc("Station.Car.process", "Station.Robot1.Car.receive"),
            ],
            ..SchemaParts::default()
        };
        let schema = Schema::build(parts).unwrap();
        let results: Vec<_> = schema
            .flows()
            .iter()
            .map(|a| check_flow_arc(a, &schema).map(|d| d.rule))
            .collect();
        assert_eq!(results, vec![None, Some(Rule::Flow), None, Some(Rule::XBound)]);
        let diags = validate(&schema);
        assert_eq!(diags.len(), 2);
        assert_eq!(validate(&schema), diags);
    }

    #[test]
    fn sphere_naming() {
        use StageKind::*;
        let spheres = vec![
            Sphere::new("A")
                .with_machine(Machine::new("M", [Create]).unwrap())
                .with_sphere(Sphere::new("M")),
            Sphere::new("A"),
        ];
        let diags = check_spheres(&spheres);
        assert_eq!(diags.len(), 2);
        assert!(diags.iter().all(|d| d.rule == Rule::Sphere));
    }

    #[test]
    fn exclusivity_checked_on_raw_machines() {
        use StageKind::*;
        let raw = Machine {
            thing: "M".into(),
            stages: vec![Process, Process, Receive, Arrive],
            storage: false,
            storage_links: vec![Process],
        };
        let diags = check_spheres(&[Sphere::new("S").with_machine(raw)]);
        let rules: Vec<Rule> = diags.iter().map(|d| d.rule).collect();
        assert_eq!(rules, vec![Rule::Excl, Rule::Recep, Rule::Excl]);
        let stored = Machine::new("M", [Create, Process])
            .unwrap()
            .with_storage([Process])
            .unwrap();
        assert!(check_spheres(&[Sphere::new("S").with_machine(stored)]).is_empty());
    }
}
