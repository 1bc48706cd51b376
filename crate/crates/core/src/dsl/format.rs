use std::fmt::Write;

use crate::model::{EventSource, Machine, Schema, Sphere, TriggerSource};

/// Canonical text for `schema`: LF line endings, two-space indentation,
/// one arc per line. Comments are not part of the model and are not kept.
/// The empty schema formats to the empty string.
pub fn format_schema(schema: &Schema) -> String {
    let mut sections: Vec<String> = Vec::new();

    if !schema.spheres().is_empty() {
        let blocks: Vec<String> = schema
            .spheres()
            .iter()
            .map(|s| {
                let mut out = String::new();
                write_sphere(&mut out, s, 0);
                out
            })
            .collect();
        sections.push(blocks.join("\n"));
    }

    if !schema.flows().is_empty() {
        let mut out = String::new();
        for arc in schema.flows() {
            let _ = writeln!(out, "flow {} -> {}", arc.source, arc.target);
        }
        sections.push(out);
    }

    if !schema.triggers().is_empty() {
        let mut out = String::new();
        for t in schema.triggers() {
            match &t.source {
                TriggerSource::Stage(s) => {
                    let _ = writeln!(out, "trigger {s} ~> {}", t.target);
                }
                TriggerSource::Flow(i) => {
                    let arc = &schema.flows()[*i];
                    let _ = writeln!(out, "trigger {} -> {} ~> {}", arc.source, arc.target, t.target);
                }
            }
        }
        sections.push(out);
    }

    if !schema.events().is_empty() {
        let blocks: Vec<String> = schema
            .events()
            .iter()
            .map(|e| {
                let mut out = format!("event {}", e.name);
                if let Some(label) = &e.label {
                    let _ = write!(out, " {}", quote(label));
                }
                out.push_str(" {\n");
                match &e.source {
                    EventSource::Region(paths) => {
                        let list: Vec<String> = paths.iter().map(ToString::to_string).collect();
                        let _ = writeln!(out, "  region: {}", list.join(", "));
                        if e.duration != 1 {
                            let _ = writeln!(out, "  duration {}", e.duration);
                        }
                        if !e.properties.is_empty() {
                            let list: Vec<&str> = e.properties.iter().map(String::as_str).collect();
                            let _ = writeln!(out, "  properties: {}", list.join(", "));
                        }
                    }
                    EventSource::Compose(parts) => {
                        let _ = writeln!(out, "  compose: {}", parts.join(", "));
                    }
                }
                out.push_str("}\n");
                out
            })
            .collect();
        sections.push(blocks.join("\n"));
    }

    if !schema.declared_traces().is_empty() {
        let mut out = String::new();
        for t in schema.declared_traces() {
            let _ = writeln!(out, "trace {}: {}", t.name, t.events.join(", "));
        }
        sections.push(out);
    }

    sections.join("\n")
}

fn write_sphere(out: &mut String, sphere: &Sphere, depth: usize) {
    let pad = "  ".repeat(depth);
    if sphere.machines.is_empty() && sphere.subspheres.is_empty() {
        let _ = writeln!(out, "{pad}sphere {} {{}}", sphere.name);
        return;
    }
    let _ = writeln!(out, "{pad}sphere {} {{", sphere.name);
    for m in &sphere.machines {
        write_machine(out, m, depth + 1);
    }
    for sub in &sphere.subspheres {
        write_sphere(out, sub, depth + 1);
    }
    let _ = writeln!(out, "{pad}}}");
}

fn write_machine(out: &mut String, m: &Machine, depth: usize) {
    let pad = "  ".repeat(depth);
    if m.stages.is_empty() && !m.storage {
        let _ = writeln!(out, "{pad}machine {} {{}}", m.thing);
        return;
    }
    let _ = writeln!(out, "{pad}machine {} {{", m.thing);
    if !m.stages.is_empty() {
        let list: Vec<&str> = m.stages.iter().map(|k| k.as_str()).collect();
        let _ = writeln!(out, "{pad}  stages: {}", list.join(", "));
    }
    if m.storage {
        if m.storage_links.is_empty() {
            let _ = writeln!(out, "{pad}  storage");
        } else {
            let list: Vec<&str> = m.storage_links.iter().map(|k| k.as_str()).collect();
            let _ = writeln!(out, "{pad}  storage: {}", list.join(", "));
        }
    }
    let _ = writeln!(out, "{pad}}}");
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
