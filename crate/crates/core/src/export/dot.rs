use std::collections::BTreeMap;
use std::fmt::{self, Write};

use super::ExportError;
use crate::event::EventDef;
use crate::model::{Machine, MachineRef, RegionItem, Schema, Sphere, StageRef, TriggerSource};

/// A Graphviz document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DotDocument {
    pub text: String,
}

impl DotDocument {
    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl fmt::Display for DotDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

const PALETTE: [&str; 8] = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
];

/// Renders spheres and machines as nested clusters and stages as nodes.
/// Flow arcs are solid, trigger arcs dashed, storage links dotted with a box
/// head. Each overlay event fills its region and gets a legend entry.
pub fn to_dot(schema: &Schema, overlay: &[&str]) -> Result<DotDocument, ExportError> {
    let events: Vec<&EventDef> = overlay
        .iter()
        .map(|name| schema.event(name).ok_or_else(|| ExportError::UnknownEvent(name.to_string())))
        .collect::<Result<_, _>>()?;

    let mut fills: BTreeMap<&StageRef, Vec<&str>> = BTreeMap::new();
    let mut flow_colour: BTreeMap<usize, &str> = BTreeMap::new();
    for (i, def) in events.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        for item in &def.region {
            match item {
                RegionItem::Stage(s) => {
                    let list = fills.entry(s).or_default();
                    if !list.contains(&colour) {
                        list.push(colour);
                    }
                }
                RegionItem::Flow(f) => {
                    flow_colour.entry(*f).or_insert(colour);
                }
            }
        }
    }

    let mut out = String::from("digraph schema {\n");
    out.push_str("  compound=true;\n  node [shape=ellipse, fontsize=10];\n");
    let mut path = Vec::new();
    for sphere in schema.spheres() {
        write_sphere(&mut out, sphere, &mut path, &fills, 1);
    }
    for arc in schema.flows() {
        let _ = write!(out, "  {} -> {}", stage_id(&arc.source), stage_id(&arc.target));
        match flow_colour.get(&arc.index) {
            Some(c) => {
                let _ = writeln!(out, " [color=\"{c}\", penwidth=2];");
            }
            None => out.push_str(";\n"),
        }
    }
    for t in schema.triggers() {
        let source = match &t.source {
            TriggerSource::Stage(s) => s,
            TriggerSource::Flow(i) => &schema.flows()[*i].source,
        };
        let _ = writeln!(out, "  {} -> {} [style=dashed];", stage_id(source), stage_id(&t.target));
    }
    if !events.is_empty() {
        out.push_str("  subgraph cluster_legend {\n    label=\"events\";\n");
        for (i, def) in events.iter().enumerate() {
            let _ = writeln!(
                out,
                "    \"legend_{i}\" [label={}, shape=box, style=filled, fillcolor=\"{}\"];",
                quote(&def.name),
                PALETTE[i % PALETTE.len()]
            );
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    Ok(DotDocument { text: out })
}

fn write_sphere(
    out: &mut String,
    sphere: &Sphere,
    path: &mut Vec<String>,
    fills: &BTreeMap<&StageRef, Vec<&str>>,
    depth: usize,
) {
    path.push(sphere.name.clone());
    let pad = "  ".repeat(depth);
    let _ = writeln!(out, "{pad}subgraph {} {{", cluster_id(path));
    let _ = writeln!(out, "{pad}  label={};", quote(&sphere.name));
    for m in &sphere.machines {
        let at = MachineRef {
            sphere: path.clone(),
            machine: m.thing.clone(),
        };
        write_machine(out, m, &at, fills, depth + 1);
    }
    for sub in &sphere.subspheres {
        write_sphere(out, sub, path, fills, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
    path.pop();
}

fn write_machine(
    out: &mut String,
    m: &Machine,
    at: &MachineRef,
    fills: &BTreeMap<&StageRef, Vec<&str>>,
    depth: usize,
) {
    let pad = "  ".repeat(depth);
    let mut segs = at.sphere.clone();
    segs.push(at.machine.clone());
    let _ = writeln!(out, "{pad}subgraph {} {{", cluster_id(&segs));
    let _ = writeln!(out, "{pad}  label={};", quote(&m.thing));
    for &kind in &m.stages {
        let stage = at.stage(kind);
        let _ = write!(out, "{pad}  {} [label=\"{kind}\"", stage_id(&stage));
        match fills.get(&stage).map(Vec::as_slice) {
            Some([one]) => {
                let _ = write!(out, ", style=filled, fillcolor=\"{one}\"");
            }
            Some(many) if !many.is_empty() => {
                let _ = write!(out, ", style=wedged, fillcolor=\"{}\"", many.join(":"));
            }
            _ => {}
        }
        out.push_str("];\n");
    }
    if m.storage {
        let store = storage_id(at);
        let _ = writeln!(out, "{pad}  {store} [label=\"storage\", shape=cylinder];");
        for &kind in &m.storage_links {
            let _ = writeln!(
                out,
                "{pad}  {} -> {store} [style=dotted, arrowhead=box];",
                stage_id(&at.stage(kind))
            );
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

fn node_id(segments: &[String]) -> String {
    segments.join("_").to_lowercase()
}

fn stage_id(s: &StageRef) -> String {
    let mut segs = s.sphere.clone();
    segs.push(s.machine.clone());
    segs.push(s.stage.as_str().to_string());
    format!("\"{}\"", node_id(&segs))
}

fn storage_id(m: &MachineRef) -> String {
    let mut segs = m.sphere.clone();
    segs.push(m.machine.clone());
    segs.push("storage".into());
    format!("\"{}\"", node_id(&segs))
}

fn cluster_id(segments: &[String]) -> String {
    format!("\"cluster_{}\"", node_id(segments))
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
