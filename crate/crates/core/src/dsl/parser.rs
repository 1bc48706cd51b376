use std::collections::{BTreeSet, HashMap};

use super::lexer::{lex, Tok, Token};
use super::{sort_diagnostics, ParseDiagnostic, SourceSpan};
use crate::model::{
    trigger_subject, DeclaredTrace, EventDecl, EventSource, FlowDecl, Machine, Path, Schema,
    SchemaParts, Sphere, StageKind, TriggerDecl, TriggerSourceDecl,
};
use crate::validate::ValidationDiagnostic;

/// Sphere nesting the parser accepts before giving up on a file.
const MAX_NESTING: usize = 256;

const TOP_LEVEL: [&str; 5] = ["sphere", "flow", "trigger", "event", "trace"];

/// Parses a schema from `text`, reporting spans against `<input>`.
pub fn parse_schema(text: &str) -> Result<Schema, Vec<ParseDiagnostic>> {
    parse_schema_file("<input>", text)
}

pub fn parse_schema_file(file: &str, text: &str) -> Result<Schema, Vec<ParseDiagnostic>> {
    let (parts, spans) = parse_parts(file, text)?;
    Schema::build(parts).map_err(|diags| {
        let mut out: Vec<ParseDiagnostic> = diags
            .into_iter()
            .map(|d| located(file, &spans, d))
            .collect();
        sort_diagnostics(&mut out);
        out
    })
}

/// Reads the unresolved schema contents without building the schema.
pub fn parse_schema_parts(text: &str) -> Result<SchemaParts, Vec<ParseDiagnostic>> {
    parse_parts("<input>", text).map(|(parts, _)| parts)
}

type SpanIndex = HashMap<String, Vec<SourceSpan>>;

fn located(file: &str, spans: &SpanIndex, d: ValidationDiagnostic) -> ParseDiagnostic {
    // Repeated subjects point at their latest declaration: that is where a
    // duplicate shows up.
    let span = spans
        .get(&d.subject)
        .and_then(|v| v.last())
        .cloned()
        .unwrap_or_else(|| SourceSpan::start_of(file));
    ParseDiagnostic {
        severity: d.severity,
        code: d.rule.code().to_string(),
        message: format!("{}: {}", d.subject, d.message),
        span,
    }
}

fn parse_parts(file: &str, text: &str) -> Result<(SchemaParts, SpanIndex), Vec<ParseDiagnostic>> {
    let (tokens, lex_diags) = lex(file, text);
    let mut p = Parser {
        toks: &tokens,
        pos: 0,
        file,
        diags: lex_diags,
        spans: HashMap::new(),
    };
    let parts = p.schema();
    if p.diags.is_empty() {
        Ok((parts, p.spans))
    } else {
        let mut diags = p.diags;
        sort_diagnostics(&mut diags);
        Err(diags)
    }
}

/// Marker: the error has been recorded, the caller should resynchronise.
struct Failed;

type PResult<T> = Result<T, Failed>;

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    file: &'a str,
    diags: Vec<ParseDiagnostic>,
    spans: SpanIndex,
}

impl<'a> Parser<'a> {
    fn schema(&mut self) -> SchemaParts {
        let mut parts = SchemaParts::default();
        while let Some(tok) = self.peek() {
            let result = match tok {
                Tok::Semi => {
                    self.pos += 1;
                    Ok(())
                }
                Tok::Ident(kw) if kw == "sphere" => {
                    self.sphere(&[], 1).map(|s| parts.spheres.push(s))
                }
                Tok::Ident(kw) if kw == "flow" => self.flow(&mut parts.flows),
                Tok::Ident(kw) if kw == "trigger" => {
                    self.trigger().map(|t| parts.triggers.push(t))
                }
                Tok::Ident(kw) if kw == "event" => self.event().map(|e| parts.events.push(e)),
                Tok::Ident(kw) if kw == "trace" => self.trace().map(|t| parts.traces.push(t)),
                _ => Err(self.unexpected("`sphere`, `flow`, `trigger`, `event` or `trace`")),
            };
            if result.is_err() {
                self.recover();
            }
        }
        parts
    }

    fn sphere(&mut self, parent: &[String], depth: usize) -> PResult<Sphere> {
        let kw = self.bump().expect("peeked").span.clone();
        if depth > MAX_NESTING {
            self.diags.push(ParseDiagnostic::error(
                "P-NESTING",
                format!("spheres nested deeper than {MAX_NESTING} levels"),
                kw,
            ));
            return Err(Failed);
        }
        let (name, name_span) = self.ident("sphere name")?;
        let mut path = parent.to_vec();
        path.push(name.clone());
        self.record(path.join("."), name_span);
        self.expect(Tok::LBrace, "`{`")?;
        let mut sphere = Sphere::new(name);
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    return Ok(sphere);
                }
                Some(Tok::Semi) => self.pos += 1,
                Some(Tok::Ident(kw)) if kw == "sphere" => {
                    let sub = self.sphere(&path, depth + 1)?;
                    sphere.subspheres.push(sub);
                }
                Some(Tok::Ident(kw)) if kw == "machine" => {
                    let m = self.machine(&path)?;
                    sphere.machines.push(m);
                }
                _ => return Err(self.unexpected("`sphere`, `machine` or `}`")),
            }
        }
    }

    fn machine(&mut self, sphere: &[String]) -> PResult<Machine> {
        self.bump();
        let (thing, span) = self.ident("machine name")?;
        let mpath = format!("{}.{}", sphere.join("."), thing);
        self.record(mpath.clone(), span);
        self.expect(Tok::LBrace, "`{`")?;
        let mut machine = Machine {
            thing,
            stages: Vec::new(),
            storage: false,
            storage_links: Vec::new(),
        };
        let mut saw_stages = false;
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.pos += 1;
                    return Ok(machine);
                }
                Some(Tok::Semi) => self.pos += 1,
                Some(Tok::Ident(kw)) if kw == "stages" => {
                    let span = self.bump().expect("peeked").span.clone();
                    if saw_stages {
                        self.diags.push(ParseDiagnostic::error(
                            "P-SYNTAX",
                            "`stages:` given twice in one machine",
                            span,
                        ));
                        return Err(Failed);
                    }
                    saw_stages = true;
                    self.expect(Tok::Colon, "`:`")?;
                    machine.stages = self.stage_list(&mpath)?;
                }
                Some(Tok::Ident(kw)) if kw == "storage" => {
                    let span = self.bump().expect("peeked").span.clone();
                    if machine.storage {
                        self.diags.push(ParseDiagnostic::error(
                            "P-SYNTAX",
                            "`storage` given twice in one machine",
                            span,
                        ));
                        return Err(Failed);
                    }
                    machine.storage = true;
                    if self.peek() == Some(&Tok::Colon) {
                        self.pos += 1;
                        machine.storage_links = self.stage_list(&mpath)?;
                    }
                }
                _ => return Err(self.unexpected("`stages:`, `storage` or `}`")),
            }
        }
    }

    fn stage_list(&mut self, mpath: &str) -> PResult<Vec<StageKind>> {
        let mut out = Vec::new();
        loop {
            let (name, span) = self.ident("stage name")?;
            match name.parse::<StageKind>() {
                Ok(kind) => {
                    self.record(format!("{mpath}.{kind}"), span);
                    out.push(kind);
                }
                Err(_) => {
                    let hint = if name == "storage" {
                        "; storage is declared with `storage`, it is not a stage"
                    } else {
                        ""
                    };
                    self.diags.push(ParseDiagnostic::error(
                        "P-STAGE",
                        format!(
                            "unknown stage `{name}` (expected create, release, transfer, receive, arrive, accept or process){hint}"
                        ),
                        span,
                    ));
                    return Err(Failed);
                }
            }
            if self.peek() != Some(&Tok::Comma) {
                return Ok(out);
            }
            self.pos += 1;
        }
    }

    fn flow(&mut self, flows: &mut Vec<FlowDecl>) -> PResult<()> {
        self.bump();
        let (mut source, mut source_span) = self.path()?;
        self.expect(Tok::Arrow, "`->`")?;
        loop {
            let (target, target_span) = self.path()?;
            let span = join(&source_span, &target_span);
            self.record(format!("{source} -> {target}"), span);
            flows.push(FlowDecl {
                source,
                target: target.clone(),
            });
            if self.peek() != Some(&Tok::Arrow) {
                return Ok(());
            }
            self.pos += 1;
            source = target;
            source_span = target_span;
        }
    }

    fn trigger(&mut self) -> PResult<TriggerDecl> {
        let kw = self.bump().expect("peeked").span.clone();
        let (first, _) = self.path()?;
        let source = if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let (second, _) = self.path()?;
            TriggerSourceDecl::Flow(first, second)
        } else {
            TriggerSourceDecl::Stage(first)
        };
        self.expect(Tok::Trigger, "`~>`")?;
        let (target, end) = self.path()?;
        let decl = TriggerDecl { source, target };
        self.record(trigger_subject(&decl), join(&kw, &end));
        Ok(decl)
    }

    fn event(&mut self) -> PResult<EventDecl> {
        self.bump();
        let (name, span) = self.ident("event name")?;
        self.record(name.clone(), span.clone());
        let label = match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Some(s)
            }
            _ => None,
        };
        self.expect(Tok::LBrace, "`{`")?;
        let mut region: Option<Vec<Path>> = None;
        let mut compose: Option<Vec<String>> = None;
        let mut duration = None;
        let mut properties: Option<BTreeSet<String>> = None;
        loop {
            let Some(tok) = self.peek() else {
                return Err(self.unexpected("`}`"));
            };
            let key = match tok {
                Tok::RBrace => {
                    self.pos += 1;
                    break;
                }
                Tok::Semi => {
                    self.pos += 1;
                    continue;
                }
                Tok::Ident(k) if ["region", "compose", "duration", "properties"].contains(&k.as_str()) => {
                    k.clone()
                }
                _ => return Err(self.unexpected("`region:`, `compose:`, `duration`, `properties:` or `}`")),
            };
            let key_span = self.bump().expect("peeked").span.clone();
            let repeated = match key.as_str() {
                "region" => region.is_some(),
                "compose" => compose.is_some(),
                "duration" => duration.is_some(),
                _ => properties.is_some(),
            };
            if repeated {
                self.diags.push(ParseDiagnostic::error(
                    "P-SYNTAX",
                    format!("`{key}` given twice in event `{name}`"),
                    key_span,
                ));
                return Err(Failed);
            }
            match key.as_str() {
                "region" => {
                    self.expect(Tok::Colon, "`:`")?;
                    region = Some(self.path_list()?);
                }
                "compose" => {
                    self.expect(Tok::Colon, "`:`")?;
                    compose = Some(self.ident_list("event name")?);
                }
                "properties" => {
                    self.expect(Tok::Colon, "`:`")?;
                    properties = Some(self.ident_list("property name")?.into_iter().collect());
                }
                _ => {
                    if self.peek() == Some(&Tok::Colon) {
                        self.pos += 1;
                    }
                    let (n, span) = self.number("duration")?;
                    if n == 0 {
                        self.diags.push(ParseDiagnostic::error(
                            "P-VALUE",
                            "duration must be at least 1 tick",
                            span,
                        ));
                        return Err(Failed);
                    }
                    duration = Some(n);
                }
            }
        }
        let source = match (region, compose) {
            (Some(_), Some(_)) => {
                self.diags.push(ParseDiagnostic::error(
                    "P-SYNTAX",
                    format!("event `{name}` gives both `region:` and `compose:`"),
                    span,
                ));
                return Err(Failed);
            }
            (_, Some(parts)) => EventSource::Compose(parts),
            (region, None) => EventSource::Region(region.unwrap_or_default()),
        };
        Ok(EventDecl {
            name,
            label,
            source,
            duration,
            properties: properties.unwrap_or_default(),
        })
    }

    fn trace(&mut self) -> PResult<DeclaredTrace> {
        self.bump();
        let (name, span) = self.ident("trace name")?;
        self.record(name.clone(), span);
        self.expect(Tok::Colon, "`:`")?;
        let events = self.ident_list("event name")?;
        Ok(DeclaredTrace { name, events })
    }

    fn path_list(&mut self) -> PResult<Vec<Path>> {
        let mut out = vec![self.path()?.0];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.path()?.0);
        }
        Ok(out)
    }

    fn ident_list(&mut self, what: &str) -> PResult<Vec<String>> {
        let mut out = vec![self.ident(what)?.0];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            out.push(self.ident(what)?.0);
        }
        Ok(out)
    }

    fn path(&mut self) -> PResult<(Path, SourceSpan)> {
        let (first, start) = self.ident("path")?;
        let mut segs = vec![first];
        let mut end = start.clone();
        while self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
            let (seg, span) = self.ident("path segment")?;
            segs.push(seg);
            end = span;
        }
        let path = Path::new(segs).expect("identifiers from the lexer");
        Ok((path, join(&start, &end)))
    }

    fn ident(&mut self, what: &str) -> PResult<(String, SourceSpan)> {
        match self.toks.get(self.pos) {
            Some(Token {
                tok: Tok::Ident(s),
                span,
            }) => {
                self.pos += 1;
                Ok((s.clone(), span.clone()))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn number(&mut self, what: &str) -> PResult<(u64, SourceSpan)> {
        match self.toks.get(self.pos) {
            Some(Token {
                tok: Tok::Number(n),
                span,
            }) => {
                self.pos += 1;
                Ok((*n, span.clone()))
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&mut self, expected: &str) -> Failed {
        let (found, span) = match self.toks.get(self.pos) {
            Some(t) => (t.tok.describe(), t.span.clone()),
            None => {
                let span = self
                    .toks
                    .last()
                    .map(|t| SourceSpan {
                        column: t.span.column + t.span.length,
                        length: 0,
                        ..t.span.clone()
                    })
                    .unwrap_or_else(|| SourceSpan::start_of(self.file));
                ("end of input".to_string(), span)
            }
        };
        self.diags.push(ParseDiagnostic::error(
            "P-SYNTAX",
            format!("expected {expected}, found {found}"),
            span,
        ));
        Failed
    }

    /// Skips ahead to the next top-level keyword outside any braces opened
    /// since the error.
    fn recover(&mut self) {
        let mut depth = 0usize;
        // Always make progress past the offending token.
        if let Some(t) = self.bump() {
            if t.tok == Tok::LBrace {
                depth += 1;
            }
        }
        while let Some(tok) = self.peek() {
            match tok {
                Tok::LBrace => depth += 1,
                Tok::RBrace => depth = depth.saturating_sub(1),
                Tok::Ident(kw) if depth == 0 && TOP_LEVEL.contains(&kw.as_str()) => return,
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn record(&mut self, subject: String, span: SourceSpan) {
        self.spans.entry(subject).or_default().push(span);
    }
}

fn join(start: &SourceSpan, end: &SourceSpan) -> SourceSpan {
    let length = if start.line == end.line && end.column >= start.column {
        end.column + end.length - start.column
    } else {
        start.length
    };
    SourceSpan {
        length,
        ..start.clone()
    }
}
