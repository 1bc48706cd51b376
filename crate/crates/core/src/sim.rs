//! Deterministic tick-based execution of a schema under a scenario.
//!
//! Each tick `T` runs these phases in order:
//!
//! 1. if a time-machine slice is due at `T`, one instance of every target
//!    event is recorded for `[T, T + duration)` and a token is created at
//!    each entry stage of the event's region (stages with no flow arriving
//!    from inside the region);
//! 2. tokens are created for the injections scheduled at `T`, then for the
//!    trigger firings due at `T`;
//! 3. every token that existed before `T` follows the first outgoing flow
//!    arc of its stage, by declaration order. Without one it goes into the
//!    machine's storage when that stage is linked to storage, and quiesces
//!    otherwise;
//! 4. every trigger arc whose source stage was occupied (or whose source arc
//!    was traversed) at `T` schedules a token at its target for `T + 1`.
//!
//! Region events get one instance per token that passes through their
//! region, from the first to the last tick of occupancy; instances of the
//! same event that overlap or touch are merged, and idle ticks inside an
//! instance are its gaps. Time-machine targets are driven by slices only,
//! and composed events are never recorded directly: their parts are.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::dsl::Scenario;
use crate::event::{EventDef, EventInstance, Trace};
use crate::model::{
    incoming_index, outgoing, EventSource, MachineRef, RegionItem, Schema, StageRef, TriggerSource,
};
use crate::validate::{self, ValidationDiagnostic};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("schema has {} validation error(s)", .0.len())]
    ValidationFailed(Vec<ValidationDiagnostic>),
    #[error("scenario refers to `{0}`, which is not {1}")]
    UnresolvedScenarioRef(String, &'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    Stage(StageRef),
    Storage(MachineRef),
    Quiesced,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Stage(s) => s.fmt(f),
            Location::Storage(m) => write!(f, "{m}.storage"),
            Location::Quiesced => f.write_str("quiesced"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Assigned in creation order, from 0.
    pub id: u64,
    pub thing: String,
    pub at: Location,
    pub created_at: u64,
}

/// One row of the activity log: where a token was during a tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub tick: u64,
    pub token: u64,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingFiring {
    pub due: u64,
    pub trigger: usize,
    pub target: StageRef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimState {
    /// The next tick to execute.
    pub clock: u64,
    /// Tokens still moving, ordered by id.
    pub tokens: Vec<Token>,
    pub pending: Vec<PendingFiring>,
    pub slices_emitted: u64,
    pub log: Vec<LogEntry>,
    pub slice_instances: Vec<EventInstance>,
    next_token: u64,
}

impl SimState {
    pub fn new() -> SimState {
        SimState::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Quiescence,
    MaxTicks,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Quiescence => "quiescence",
            Termination::MaxTicks => "max_ticks",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimResult {
    pub trace: Trace,
    pub log: Vec<LogEntry>,
    pub terminated: Termination,
    /// Clock value when the run stopped.
    pub ticks: u64,
}

/// Slice ticks of a time machine: `0, period, 2 * period, ...`.
pub fn time_machine_slices(period: u64, slice_count: u64) -> Vec<u64> {
    (0..slice_count).map(|k| k * period).collect()
}

/// Scenario resolved against a schema.
struct Plan<'s> {
    injections: Vec<(u64, StageRef)>,
    targets: Vec<(&'s EventDef, Vec<StageRef>)>,
    period: u64,
    slice_count: u64,
    max_ticks: u64,
}

fn plan<'s>(schema: &'s Schema, scenario: &Scenario) -> Result<Plan<'s>, SimError> {
    let mut injections = Vec::new();
    for inj in &scenario.injections {
        match schema.resolve(&inj.path) {
            Ok(crate::model::ElementRef::Stage(s)) => injections.push((inj.tick, s)),
            _ => {
                return Err(SimError::UnresolvedScenarioRef(
                    inj.path.to_string(),
                    "a stage of the schema",
                ))
            }
        }
    }
    let incoming = incoming_index(schema);
    let mut targets = Vec::new();
    let (mut period, mut slice_count) = (1, 0);
    if let Some(tm) = &scenario.time_machine {
        period = tm.period;
        slice_count = tm.slice_count;
        for name in &tm.targets {
            let def = schema.event(name).ok_or_else(|| {
                SimError::UnresolvedScenarioRef(name.clone(), "an event of the schema")
            })?;
            let stages: BTreeSet<&StageRef> = region_stages(def).collect();
            let entries = schema
                .stages()
                .iter()
                .filter(|s| stages.contains(s))
                .filter(|s| {
                    !incoming
                        .get(s)
                        .is_some_and(|arcs| arcs.iter().any(|a| stages.contains(&a.source)))
                })
                .cloned()
                .collect::<Vec<_>>();
            let entries = if entries.is_empty() {
                // A region that is one closed loop: enter at its first stage.
                schema
                    .stages()
                    .iter()
                    .find(|s| stages.contains(s))
                    .cloned()
                    .into_iter()
                    .collect()
            } else {
                entries
            };
            targets.push((def, entries));
        }
    }
    Ok(Plan {
        injections,
        targets,
        period,
        slice_count,
        max_ticks: scenario.max_ticks,
    })
}

fn region_stages(def: &EventDef) -> impl Iterator<Item = &StageRef> {
    def.region.iter().filter_map(|item| match item {
        RegionItem::Stage(s) => Some(s),
        RegionItem::Flow(_) => None,
    })
}

impl Plan<'_> {
    fn quiescent(&self, state: &SimState) -> bool {
        state.tokens.is_empty()
            && state.pending.is_empty()
            && state.slices_emitted >= self.slice_count
            && !self.injections.iter().any(|(t, _)| *t >= state.clock)
    }
}

/// Runs `scenario` on `schema` until nothing is left to do or the tick bound
/// is reached.
pub fn simulate(schema: &Schema, scenario: &Scenario) -> Result<SimResult, SimError> {
    let errors: Vec<ValidationDiagnostic> = validate::validate(schema)
        .into_iter()
        .filter(ValidationDiagnostic::is_error)
        .collect();
    if !errors.is_empty() {
        return Err(SimError::ValidationFailed(errors));
    }
    let plan = plan(schema, scenario)?;
    let mut state = SimState::new();
    let terminated = loop {
        if plan.quiescent(&state) {
            break Termination::Quiescence;
        }
        if state.clock >= plan.max_ticks {
            break Termination::MaxTicks;
        }
        advance(schema, &plan, &mut state);
    };
    Ok(finish(schema, &plan, state, terminated))
}

/// Executes exactly one tick.
pub fn step(schema: &Schema, state: SimState, scenario: &Scenario) -> Result<SimState, SimError> {
    let plan = plan(schema, scenario)?;
    let mut state = state;
    advance(schema, &plan, &mut state);
    Ok(state)
}

/// Turns a state into a result, as [`simulate`] does when it stops.
pub fn conclude(schema: &Schema, state: SimState, scenario: &Scenario) -> Result<SimResult, SimError> {
    let plan = plan(schema, scenario)?;
    let terminated = if plan.quiescent(&state) {
        Termination::Quiescence
    } else {
        Termination::MaxTicks
    };
    Ok(finish(schema, &plan, state, terminated))
}

fn advance(schema: &Schema, plan: &Plan<'_>, state: &mut SimState) {
    let tick = state.clock;

    let create = |state: &mut SimState, at: &StageRef| {
        let id = state.next_token;
        state.next_token += 1;
        state.tokens.push(Token {
            id,
            thing: at.machine.clone(),
            at: Location::Stage(at.clone()),
            created_at: tick,
        });
    };

    // Time machine.
    if state.slices_emitted < plan.slice_count && tick == state.slices_emitted * plan.period {
        for (def, entries) in &plan.targets {
            let end = (tick + def.duration).min(plan.max_ticks);
            state.slice_instances.push(EventInstance {
                event: def.name.clone(),
                start: tick,
                end,
                gaps: Vec::new(),
            });
            for at in entries {
                create(state, at);
            }
        }
        state.slices_emitted += 1;
    }

    // Injections, then trigger firings.
    for (_, at) in plan.injections.iter().filter(|(t, _)| *t == tick) {
        create(state, at);
    }
    let (due, later): (Vec<_>, Vec<_>) = std::mem::take(&mut state.pending)
        .into_iter()
        .partition(|p| p.due <= tick);
    state.pending = later;
    for firing in &due {
        create(state, &firing.target);
    }

    // Movement of tokens that were already there.
    let mut traversed: HashSet<usize> = HashSet::new();
    let mut departed: Vec<LogEntry> = Vec::new();
    let mut staying = Vec::with_capacity(state.tokens.len());
    for mut token in std::mem::take(&mut state.tokens) {
        if token.created_at == tick {
            staying.push(token);
            continue;
        }
        let Location::Stage(at) = &token.at else {
            continue;
        };
        let arcs = outgoing(schema, at).unwrap_or_default();
        if let Some(arc) = arcs.first() {
            traversed.insert(arc.index);
            token.at = Location::Stage(arc.target.clone());
            staying.push(token);
            continue;
        }
        let stored = schema
            .machine(&at.machine_ref())
            .is_some_and(|m| m.storage && m.storage_links.contains(&at.stage));
        let location = if stored {
            Location::Storage(at.machine_ref())
        } else {
            Location::Quiesced
        };
        departed.push(LogEntry {
            tick,
            token: token.id,
            location,
        });
    }
    state.tokens = staying;

    let mut entries: Vec<LogEntry> = state
        .tokens
        .iter()
        .map(|t| LogEntry {
            tick,
            token: t.id,
            location: t.at.clone(),
        })
        .chain(departed)
        .collect();
    entries.sort_by_key(|e| e.token);

    // Triggers.
    let occupied: HashSet<&StageRef> = entries
        .iter()
        .filter_map(|e| match &e.location {
            Location::Stage(s) => Some(s),
            _ => None,
        })
        .collect();
    for trigger in schema.triggers() {
        let active = match &trigger.source {
            TriggerSource::Stage(s) => occupied.contains(s),
            TriggerSource::Flow(i) => traversed.contains(i),
        };
        if active {
            state.pending.push(PendingFiring {
                due: tick + 1,
                trigger: trigger.index,
                target: trigger.target.clone(),
            });
        }
    }

    state.log.extend(entries);
    state.clock = tick + 1;
}

fn finish(schema: &Schema, plan: &Plan<'_>, state: SimState, terminated: Termination) -> SimResult {
    let slice_driven: HashSet<&str> = plan.targets.iter().map(|(d, _)| d.name.as_str()).collect();
    let mut instances = state.slice_instances.clone();

    for def in schema.events() {
        if slice_driven.contains(def.name.as_str()) || matches!(def.source, EventSource::Compose(_)) {
            continue;
        }
        let stages: HashSet<&StageRef> = region_stages(def).collect();
        let mut per_token: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        for entry in &state.log {
            if let Location::Stage(s) = &entry.location {
                if stages.contains(s) {
                    per_token.entry(entry.token).or_default().insert(entry.tick);
                }
            }
        }
        let mut spans: Vec<BTreeSet<u64>> = per_token.into_values().collect();
        spans.sort_by_key(|ticks| ticks.first().copied());
        let mut merged: Vec<BTreeSet<u64>> = Vec::new();
        for ticks in spans {
            match merged.last_mut() {
                // Overlapping or touching: `last + 1 >= start`.
                Some(cur) if cur.last().map_or(false, |&l| l + 1 >= *ticks.first().unwrap()) => {
                    cur.extend(ticks);
                }
                _ => merged.push(ticks),
            }
        }
        instances.extend(
            merged
                .iter()
                .filter_map(|ticks| EventInstance::from_ticks(def.name.clone(), ticks)),
        );
    }

    SimResult {
        trace: Trace::from_instances(instances),
        log: state.log,
        terminated,
        ticks: state.clock,
    }
}
