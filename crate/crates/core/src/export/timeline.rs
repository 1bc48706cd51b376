use std::fmt::Write;

use crate::event::Trace;
use crate::sim::SimResult;

pub fn timeline(result: &SimResult) -> String {
    timeline_of(&result.trace)
}

/// One line per instance: start, end, group marker, name, then idle
/// stretches if any. Members of a parallel group share the marker `gN`.
pub fn timeline_of(trace: &Trace) -> String {
    let mut out = String::new();
    for (group, g) in trace.groups().iter().enumerate() {
        for i in &g.instances {
            let marker = format!("g{group}");
            let _ = write!(out, "{:>6} {:>6}  {marker:<5} {}", i.start, i.end, i.event);
            if !i.gaps.is_empty() {
                let gaps: Vec<String> = i.gaps.iter().map(|(a, b)| format!("{a}..{b}")).collect();
                let _ = write!(out, "  idle {}", gaps.join(", "));
            }
            out.push('\n');
        }
    }
    out
}
