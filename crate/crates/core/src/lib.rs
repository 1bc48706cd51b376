//! Flowthing machine schemas.
//!
//! A schema nests spheres and machines; things flow through the stages of a
//! machine along flow arcs, and trigger arcs activate one flow from another.
//! Events name regions of a schema and occur in time as traces.
//!
//! - [`dsl`] reads and writes the text formats.
//! - [`validate`] checks the static rules.
//! - [`event`] holds the event and trace algebra.
//! - [`sim`] runs a schema tick by tick.
//! - [`export`] renders DOT, trace documents and timelines.

pub mod dsl;
pub mod event;
pub mod export;
pub mod model;
pub mod sim;
pub mod validate;

pub use dsl::{format_schema, parse_scenario, parse_schema, Scenario};
pub use event::{EventDef, EventInstance, Trace};
pub use model::{Path, Schema, StageKind, StageRef};
pub use sim::{simulate, SimResult};
pub use validate::{validate, Rule, ValidationDiagnostic};
