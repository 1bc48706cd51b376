use thiserror::Error;

use super::lexer::{lex, Tok, Token};
use super::{sort_diagnostics, ParseDiagnostic, SourceSpan};
use crate::model::Path;

/// A token placed at a stage at a given tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Injection {
    pub path: Path,
    pub tick: u64,
}

/// Emits `slice_count` slices, one every `period` ticks from tick 0; each
/// slice creates one instance of every target event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeMachine {
    pub period: u64,
    pub slice_count: u64,
    pub targets: Vec<String>,
}

/// Simulation inputs. Paths stay unresolved until simulation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub injections: Vec<Injection>,
    pub time_machine: Option<TimeMachine>,
    pub max_ticks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("max_ticks must be at least 1")]
    ZeroMaxTicks,
    #[error("injection at `{path}` is scheduled at tick {tick}, which is not below max_ticks {max_ticks}")]
    InjectionOutOfRange { path: String, tick: u64, max_ticks: u64 },
    #[error("time machine period and slice count must be at least 1")]
    InvalidTimeMachine,
    #[error("time machine needs {needed} ticks ({count} slices every {period}) but max_ticks is {max_ticks}")]
    TimeMachineTooLong {
        needed: u64,
        count: u64,
        period: u64,
        max_ticks: u64,
    },
    #[error("time machine names no target events")]
    NoTargets,
}

impl Scenario {
    pub fn new(
        injections: Vec<Injection>,
        time_machine: Option<TimeMachine>,
        max_ticks: u64,
    ) -> Result<Scenario, ScenarioError> {
        let scenario = Scenario {
            injections,
            time_machine,
            max_ticks,
        };
        scenario.check()?;
        Ok(scenario)
    }

    /// Same scenario with another tick bound; the invariants are re-checked.
    pub fn with_max_ticks(mut self, max_ticks: u64) -> Result<Scenario, ScenarioError> {
        self.max_ticks = max_ticks;
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), ScenarioError> {
        if self.max_ticks == 0 {
            return Err(ScenarioError::ZeroMaxTicks);
        }
        if let Some(bad) = self.injections.iter().find(|i| i.tick >= self.max_ticks) {
            return Err(ScenarioError::InjectionOutOfRange {
                path: bad.path.to_string(),
                tick: bad.tick,
                max_ticks: self.max_ticks,
            });
        }
        if let Some(tm) = &self.time_machine {
            if tm.period == 0 || tm.slice_count == 0 {
                return Err(ScenarioError::InvalidTimeMachine);
            }
            if tm.targets.is_empty() {
                return Err(ScenarioError::NoTargets);
            }
            let needed = tm.slice_count.checked_mul(tm.period);
            if needed.map_or(true, |n| n > self.max_ticks) {
                return Err(ScenarioError::TimeMachineTooLong {
                    needed: needed.unwrap_or(u64::MAX),
                    count: tm.slice_count,
                    period: tm.period,
                    max_ticks: self.max_ticks,
                });
            }
        }
        Ok(())
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, Vec<ParseDiagnostic>> {
    parse_scenario_file("<input>", text)
}

/// Statements: `inject PATH @ TICK`, `time_machine period N count N -> EVENT, ...`
/// and `max_ticks N`, separated by whitespace or `;`.
pub fn parse_scenario_file(file: &str, text: &str) -> Result<Scenario, Vec<ParseDiagnostic>> {
    let (tokens, mut diags) = lex(file, text);
    let mut p = Cursor {
        toks: &tokens,
        pos: 0,
        file,
        diags: Vec::new(),
    };
    let mut injections = Vec::new();
    let mut time_machine: Option<(TimeMachine, SourceSpan)> = None;
    let mut max_ticks: Option<(u64, SourceSpan)> = None;

    let toks: &[Token] = &tokens;
    while let Some(t) = toks.get(p.pos) {
        let span = t.span.clone();
        let ok = match &t.tok {
            Tok::Semi => {
                p.pos += 1;
                true
            }
            Tok::Ident(kw) if kw == "inject" => {
                p.pos += 1;
                p.injection().map(|i| injections.push((i, span))).is_some()
            }
            Tok::Ident(kw) if kw == "time_machine" => {
                p.pos += 1;
                match p.time_machine() {
                    Some(tm) if time_machine.is_some() => {
                        let _ = tm;
                        p.error("P-SYNTAX", "time_machine given twice", span);
                        false
                    }
                    Some(tm) => {
                        time_machine = Some((tm, span));
                        true
                    }
                    None => false,
                }
            }
            Tok::Ident(kw) if kw == "max_ticks" => {
                p.pos += 1;
                match p.number("tick bound") {
                    Some(_) if max_ticks.is_some() => {
                        p.error("P-SYNTAX", "max_ticks given twice", span);
                        false
                    }
                    Some(n) => {
                        max_ticks = Some((n, span));
                        true
                    }
                    None => false,
                }
            }
            _ => {
                p.unexpected("`inject`, `time_machine` or `max_ticks`");
                false
            }
        };
        if !ok {
            // Resume at the next statement keyword.
            p.pos += 1;
            while let Some(t) = toks.get(p.pos) {
                if matches!(&t.tok, Tok::Ident(k) if ["inject", "time_machine", "max_ticks"].contains(&k.as_str()))
                {
                    break;
                }
                p.pos += 1;
            }
        }
    }

    diags.append(&mut p.diags);
    let Some((max_ticks, max_span)) = max_ticks else {
        if diags.is_empty() {
            diags.push(ParseDiagnostic::error(
                "P-SCENARIO",
                "scenario does not set max_ticks",
                SourceSpan::start_of(file),
            ));
        }
        sort_diagnostics(&mut diags);
        return Err(diags);
    };
    if !diags.is_empty() {
        sort_diagnostics(&mut diags);
        return Err(diags);
    }

    let scenario = Scenario {
        injections: injections.iter().map(|(i, _)| i.clone()).collect(),
        time_machine: time_machine.as_ref().map(|(tm, _)| tm.clone()),
        max_ticks,
    };
    match scenario.check() {
        Ok(()) => Ok(scenario),
        Err(err) => {
            let span = match &err {
                ScenarioError::InjectionOutOfRange { tick, path, .. } => injections
                    .iter()
                    .find(|(i, _)| i.tick == *tick && &i.path.to_string() == path)
                    .map(|(_, s)| s.clone())
                    .unwrap_or(max_span),
                ScenarioError::ZeroMaxTicks => max_span,
                _ => time_machine.map(|(_, s)| s).unwrap_or(max_span),
            };
            Err(vec![ParseDiagnostic::error("P-SCENARIO", err.to_string(), span)])
        }
    }
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    file: &'a str,
    diags: Vec<ParseDiagnostic>,
}

impl Cursor<'_> {
    fn injection(&mut self) -> Option<Injection> {
        let path = self.path()?;
        self.expect(&Tok::At, "`@`")?;
        let tick = self.number("tick")?;
        Some(Injection { path, tick })
    }

    fn time_machine(&mut self) -> Option<TimeMachine> {
        self.keyword("period")?;
        let period = self.number("period")?;
        self.keyword("count")?;
        let slice_count = self.number("slice count")?;
        self.expect(&Tok::Arrow, "`->`")?;
        let mut targets = vec![self.ident("event name")?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            targets.push(self.ident("event name")?);
        }
        Some(TimeMachine {
            period,
            slice_count,
            targets,
        })
    }

    fn path(&mut self) -> Option<Path> {
        let mut segs = vec![self.ident("path")?];
        while self.peek() == Some(&Tok::Dot) {
            self.pos += 1;
            segs.push(self.ident("path segment")?);
        }
        Some(Path::new(segs).expect("identifiers from the lexer"))
    }

    fn keyword(&mut self, kw: &str) -> Option<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Some(())
            }
            _ => {
                self.unexpected(&format!("`{kw}`"));
                None
            }
        }
    }

    fn ident(&mut self, what: &str) -> Option<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Some(s)
            }
            _ => {
                self.unexpected(what);
                None
            }
        }
    }

    fn number(&mut self, what: &str) -> Option<u64> {
        match self.peek() {
            Some(Tok::Number(n)) => {
                let n = *n;
                self.pos += 1;
                Some(n)
            }
            _ => {
                self.unexpected(what);
                None
            }
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Option<()> {
        if self.peek() == Some(tok) {
            self.pos += 1;
            Some(())
        } else {
            self.unexpected(what);
            None
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn unexpected(&mut self, expected: &str) {
        let (found, span) = match self.toks.get(self.pos) {
            Some(t) => (t.tok.describe(), t.span.clone()),
            None => ("end of input".to_string(), SourceSpan::start_of(self.file)),
        };
        self.error("P-SYNTAX", &format!("expected {expected}, found {found}"), span);
    }

    fn error(&mut self, code: &str, message: &str, span: SourceSpan) {
        self.diags.push(ParseDiagnostic::error(code, message, span));
    }
}
