use std::fs;
use std::io::{self, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use flowthing::dsl::{self, ParseDiagnostic, Scenario};
use flowthing::event::{self, EventDef};
use flowthing::export::{self, TraceDocument};
use flowthing::sim::{self, SimError, Termination};
use flowthing::validate::{validate, ValidationDiagnostic};
use flowthing::Schema;

/// Flowthing machine schemas: check, format, render, simulate and query.
#[derive(Debug, Parser)]
#[command(name = "fm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a schema file against the static rules.
    Validate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = DiagFormat::Text)]
        format: DiagFormat,
    },
    /// Rewrite a schema file in canonical form.
    Fmt {
        file: PathBuf,
        /// Only report whether the file is canonical.
        #[arg(long)]
        check: bool,
    },
    /// Write a schema as a DOT diagram.
    Render {
        file: PathBuf,
        /// Highlight the region of this event; repeatable.
        #[arg(long = "event", value_name = "NAME")]
        events: Vec<String>,
        #[arg(short = 'o', value_name = "OUT")]
        out: Option<PathBuf>,
    },
    /// Run a scenario against a schema.
    Simulate(SimulateArgs),
    /// Event and trace queries.
    #[command(subcommand)]
    Trace(TraceCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiagFormat {
    Text,
    Doc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimFormat {
    Doc,
    Timeline,
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group(ArgGroup::new("input").required(true).args(["scenario", "inline"])))]
struct SimulateArgs {
    file: PathBuf,
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
    /// Scenario text given directly.
    #[arg(long, value_name = "TEXT")]
    inline: Option<String>,
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    max_ticks: Option<u64>,
    #[arg(long, value_enum, default_value_t = SimFormat::Doc)]
    format: SimFormat,
}

#[derive(Debug, Subcommand)]
enum TraceCommand {
    /// Whether the region of OUTER includes the region of INNER.
    Contains {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        outer: String,
        #[arg(long)]
        inner: String,
    },
    /// Whether ANTECEDENT implies CONSEQUENT (region containment).
    Implies {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        antecedent: String,
        #[arg(long)]
        consequent: String,
    },
    /// Whether the CANDIDATE trace embeds in the OF trace.
    Subtrace {
        #[arg(long, value_name = "TRACE")]
        of: PathBuf,
        #[arg(long, value_name = "TRACE")]
        candidate: PathBuf,
    },
    /// Span of a trace in ticks.
    Time {
        #[arg(long, value_name = "TRACE")]
        trace: PathBuf,
    },
}

/// Why a command did not succeed, mapped onto the exit code.
enum Failure {
    /// Errors in otherwise readable input: exit 1.
    Rejected,
    /// Unreadable input, syntax errors or bad arguments: exit 2.
    Usage,
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate { file, format } => cmd_validate(&file, format),
        Command::Fmt { file, check } => cmd_fmt(&file, check),
        Command::Render { file, events, out } => cmd_render(&file, &events, out.as_deref()),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Trace(q) => cmd_trace(q),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected) => ExitCode::from(1),
        Err(Failure::Usage) => ExitCode::from(2),
    }
}

fn read(path: &FsPath) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        Failure::Usage
    })
}

fn write_stdout(text: &str) -> Outcome {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| {
        eprintln!("error: cannot write output: {e}");
        Failure::Usage
    })
}

/// Failure for a parse: rule violations alone reject the file, anything
/// syntactic is a usage error.
fn parse_failure(diags: &[ParseDiagnostic]) -> Failure {
    if diags.iter().all(ParseDiagnostic::is_rule_violation) {
        Failure::Rejected
    } else {
        Failure::Usage
    }
}

fn load_schema(path: &FsPath) -> Result<Schema, Failure> {
    let text = read(path)?;
    dsl::parse_schema_file(&path.display().to_string(), &text).map_err(|diags| {
        for d in &diags {
            eprintln!("{d}");
        }
        parse_failure(&diags)
    })
}

/// Loads a schema and refuses it if it has validation errors.
fn load_valid_schema(path: &FsPath) -> Result<Schema, Failure> {
    let schema = load_schema(path)?;
    let diags = validate(&schema);
    for d in &diags {
        eprintln!("{}: {d}", path.display());
    }
    if diags.iter().any(ValidationDiagnostic::is_error) {
        return Err(Failure::Rejected);
    }
    Ok(schema)
}

fn stem(path: &FsPath) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct DiagnosticsDocument {
    file: String,
    errors: usize,
    warnings: usize,
    diagnostics: Vec<DiagnosticRecord>,
}

#[derive(Serialize)]
struct DiagnosticRecord {
    severity: String,
    rule: String,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    subject: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
}

impl From<&ParseDiagnostic> for DiagnosticRecord {
    fn from(d: &ParseDiagnostic) -> Self {
        DiagnosticRecord {
            severity: d.severity.to_string(),
            rule: d.code.clone(),
            message: d.message.clone(),
            subject: None,
            line: Some(d.span.line),
            column: Some(d.span.column),
        }
    }
}

impl From<&ValidationDiagnostic> for DiagnosticRecord {
    fn from(d: &ValidationDiagnostic) -> Self {
        DiagnosticRecord {
            severity: d.severity.to_string(),
            rule: d.rule.code().to_string(),
            message: d.message.clone(),
            subject: Some(d.subject.clone()),
            line: None,
            column: None,
        }
    }
}

fn cmd_validate(file: &FsPath, format: DiagFormat) -> Outcome {
    let text = read(file)?;
    let name = file.display().to_string();
    let (records, lines, failure) = match dsl::parse_schema_file(&name, &text) {
        Err(diags) => (
            diags.iter().map(DiagnosticRecord::from).collect::<Vec<_>>(),
            diags.iter().map(ToString::to_string).collect::<Vec<_>>(),
            Some(parse_failure(&diags)),
        ),
        Ok(schema) => {
            let diags = validate(&schema);
            let failure = diags.iter().any(ValidationDiagnostic::is_error).then_some(Failure::Rejected);
            (
                diags.iter().map(DiagnosticRecord::from).collect(),
                diags.iter().map(|d| format!("{name}: {d}")).collect(),
                failure,
            )
        }
    };
    match format {
        DiagFormat::Text => {
            for line in &lines {
                eprintln!("{line}");
            }
        }
        DiagFormat::Doc => {
            let doc = DiagnosticsDocument {
                file: name,
                errors: records.iter().filter(|r| r.severity == "error").count(),
                warnings: records.iter().filter(|r| r.severity == "warning").count(),
                diagnostics: records,
            };
            let mut json = serde_json::to_string_pretty(&doc).expect("plain data serialises");
            json.push('\n');
            write_stdout(&json)?;
        }
    }
    failure.map_or(Ok(()), Err)
}

fn cmd_fmt(file: &FsPath, check: bool) -> Outcome {
    let text = read(file)?;
    let schema = dsl::parse_schema_file(&file.display().to_string(), &text).map_err(|diags| {
        for d in &diags {
            eprintln!("{d}");
        }
        Failure::Usage
    })?;
    let canonical = dsl::format_schema(&schema);
    if check {
        if canonical == text {
            return Ok(());
        }
        eprintln!("{} is not in canonical form", file.display());
        return Err(Failure::Rejected);
    }
    if canonical != text {
        fs::write(file, canonical).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", file.display());
            Failure::Usage
        })?;
    }
    Ok(())
}

fn cmd_render(file: &FsPath, events: &[String], out: Option<&FsPath>) -> Outcome {
    let schema = load_valid_schema(file)?;
    let names: Vec<&str> = events.iter().map(String::as_str).collect();
    let dot = export::to_dot(&schema, &names).map_err(|e| {
        eprintln!("error: {e}");
        Failure::Rejected
    })?;
    match out {
        Some(path) => fs::write(path, dot.as_str()).map_err(|e| {
            eprintln!("error: cannot write {}: {e}", path.display());
            Failure::Usage
        }),
        None => write_stdout(dot.as_str()),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Outcome {
    let schema = load_valid_schema(&args.file)?;
    let (scenario_name, parsed) = match (&args.scenario, &args.inline) {
        (Some(path), _) => {
            let text = read(path)?;
            (stem(path), dsl::parse_scenario_file(&path.display().to_string(), &text))
        }
        (None, Some(text)) => ("inline".to_string(), dsl::parse_scenario_file("<inline>", text)),
        (None, None) => unreachable!("clap requires one scenario source"),
    };
    let mut scenario: Scenario = parsed.map_err(|diags| {
        for d in &diags {
            eprintln!("{d}");
        }
        Failure::Usage
    })?;
    if let Some(n) = args.max_ticks {
        scenario = scenario.with_max_ticks(n).map_err(|e| {
            eprintln!("error: {e}");
            Failure::Usage
        })?;
    }
    let result = sim::simulate(&schema, &scenario).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            SimError::ValidationFailed(_) => Failure::Rejected,
            SimError::UnresolvedScenarioRef(..) => Failure::Usage,
        }
    })?;
    if result.terminated == Termination::MaxTicks {
        eprintln!(
            "warning: stopped at max_ticks {} with activity remaining",
            scenario.max_ticks
        );
    }
    let text = match args.format {
        SimFormat::Doc => export::trace_to_document(&result, &stem(&args.file), &scenario_name).to_json(),
        SimFormat::Timeline => export::timeline(&result),
    };
    write_stdout(&text)
}

fn cmd_trace(query: TraceCommand) -> Outcome {
    match query {
        TraceCommand::Contains { schema, outer, inner } => {
            let schema = load_valid_schema(&schema)?;
            let (a, b) = (lookup(&schema, &outer)?, lookup(&schema, &inner)?);
            answer(event::contains(a, b))
        }
        TraceCommand::Implies {
            schema,
            antecedent,
            consequent,
        } => {
            let schema = load_valid_schema(&schema)?;
            let (a, b) = (lookup(&schema, &antecedent)?, lookup(&schema, &consequent)?);
            answer(event::implies(a, b))
        }
        TraceCommand::Subtrace { of, candidate } => {
            let reference = load_trace(&of)?;
            let candidate = load_trace(&candidate)?;
            write_stdout(&format!("{}\n", event::subtrace(&candidate, &reference)))
        }
        TraceCommand::Time { trace } => {
            let trace = load_trace(&trace)?;
            match event::trace_time(&trace) {
                Ok(t) => write_stdout(&format!("{t}\n")),
                Err(e) => {
                    eprintln!("error: {e}");
                    Err(Failure::Rejected)
                }
            }
        }
    }
}

fn lookup<'s>(schema: &'s Schema, name: &str) -> Result<&'s EventDef, Failure> {
    schema.event(name).ok_or_else(|| {
        eprintln!("error: no event named `{name}` in the schema");
        Failure::Usage
    })
}

fn answer(result: Result<bool, event::EventError>) -> Outcome {
    match result {
        Ok(b) => write_stdout(&format!("{b}\n")),
        Err(e) => {
            eprintln!("error: {e}");
            Err(Failure::Rejected)
        }
    }
}

fn load_trace(path: &FsPath) -> Result<event::Trace, Failure> {
    let text = read(path)?;
    TraceDocument::from_json(&text)
        .and_then(|doc| doc.to_trace())
        .map_err(|e| {
            eprintln!("error: {}: {e}", path.display());
            Failure::Usage
        })
}
