//! Acceptance suite: one check per criterion, one PASS/FAIL line each.
//! Runs as its own binary so the summary is always printed.

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path as FsPath, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowthing::dsl::{format_schema, parse_scenario, parse_scenario_file, parse_schema, parse_schema_file};
use flowthing::event::{compose, contains, define_event, implies, parallel_groups, subtrace, trace_time, EventInstance, Trace};
use flowthing::model::Path;
use flowthing::sim::{simulate, Location, SimResult};
use flowthing::validate::{validate, Rule};
use flowthing::{Scenario, Schema, StageKind};

const SCHEMAS: [&str; 6] = ["needle", "hydepark", "phoebe", "spheres", "professor", "lewis"];
const RUNS: [(&str, &str); 8] = [
    ("needle", "needle"),
    ("hydepark", "hydepark"),
    ("phoebe", "phoebe"),
    ("spheres", "robots"),
    ("spheres", "ball"),
    ("professor", "nodelay"),
    ("professor", "withdelay"),
    ("lewis", "lewis"),
];

type Check = fn() -> Result<String, String>;

fn corpus(rel: &str) -> PathBuf {
    FsPath::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(rel)
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(corpus(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn schema(name: &str) -> Schema {
    let file = format!("{name}.fm");
    parse_schema_file(&file, &read(&file)).unwrap_or_else(|d| panic!("{file}: {d:?}"))
}

fn scenario(name: &str) -> Scenario {
    let file = format!("{name}.fms");
    parse_scenario_file(&file, &read(&file)).unwrap_or_else(|d| panic!("{file}: {d:?}"))
}

fn run(s: &str, c: &str) -> SimResult {
    simulate(&schema(s), &scenario(c)).unwrap_or_else(|e| panic!("{s}/{c}: {e}"))
}

fn fm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fm"))
        .args(args)
        .current_dir(corpus(""))
        .output()
        .expect("fm runs")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn corpus_completeness() -> Result<String, String> {
    let mut slowest = Duration::ZERO;
    for name in SCHEMAS {
        let file = format!("{name}.fm");
        let started = Instant::now();
        let out = fm(&["validate", &file, "--format", "doc"]);
        let took = started.elapsed();
        slowest = slowest.max(took);
        let doc: serde_json::Value =
            serde_json::from_slice(&out.stdout).map_err(|e| format!("{file}: {e}"))?;
        ensure(out.status.code() == Some(0) && doc["errors"] == 0, || {
            format!("{file}: exit {:?}, {} errors", out.status.code(), doc["errors"])
        })?;
        ensure(took < Duration::from_secs(1), || format!("{file}: took {took:?}"))?;
    }
    Ok(format!("6 files, 0 errors, slowest validate {} ms", slowest.as_millis()))
}

fn containment_claims() -> Result<String, String> {
    let s = schema("lewis");
    let ev = |n: &str| s.event(n).ok_or_else(|| format!("no event {n}"));
    let walking = ev("Walking")?;
    let slowly = ev("WalkingSlowly")?;
    ensure(contains(slowly, walking).map_err(|e| e.to_string())?, || {
        "contains(WalkingSlowly, Walking) is false".into()
    })?;
    ensure(!contains(walking, slowly).map_err(|e| e.to_string())?, || {
        "contains(Walking, WalkingSlowly) is true".into()
    })?;
    let combos = [
        ("WalkingSlowly", ["V2", "V3"]),
        ("WalkingNonslowly", ["V2", "V4"]),
        ("NonwalkingSlowly", ["V1", "V3"]),
        ("NonwalkingNonslowly", ["V1", "V4"]),
    ];
    for (name, parts) in combos {
        let defs = parts.iter().map(|p| ev(p)).collect::<Result<Vec<_>, _>>()?;
        let combined = compose(&s, name, &defs).map_err(|e| e.to_string())?;
        ensure(combined.region == ev(name)?.region, || format!("{name} differs from its composition"))?;
        for part in &defs {
            ensure(implies(&combined, part).map_err(|e| e.to_string())?, || {
                format!("{name} does not imply {}", part.name)
            })?;
        }
    }
    Ok("WalkingSlowly contains Walking, not conversely; 4 compositions imply their parts".into())
}

fn subtrace_claim() -> Result<String, String> {
    let nodelay = run("professor", "nodelay");
    let withdelay = run("professor", "withdelay");
    ensure(subtrace(&nodelay.trace, &withdelay.trace), || "no-delay trace does not embed".into())?;
    let v1 = withdelay.trace.instances().filter(|i| i.event == "V1").count();
    ensure(v1 == 2, || format!("V1 occurs {v1} times in the delay trace"))?;
    let (a, b) = (
        trace_time(&nodelay.trace).map_err(|e| e.to_string())?,
        trace_time(&withdelay.trace).map_err(|e| e.to_string())?,
    );
    ensure(b > a, || format!("trace time {b} (delay) not above {a}"))?;
    Ok(format!("embeds; V1 twice; trace time {a} -> {b}"))
}

fn simultaneity() -> Result<String, String> {
    let cogrouped = |r: &SimResult, a: &str, b: &str| {
        parallel_groups(&r.trace)
            .into_iter()
            .find(|(_, names)| names.contains(a) && names.contains(b))
            .map(|(t, _)| t)
    };
    let robots = run("spheres", "robots");
    let t1 = cogrouped(&robots, "Robot1Receive", "Robot2Receive")
        .ok_or("robot receipts are not in one group")?;
    let ball = run("spheres", "ball");
    let t2 = cogrouped(&ball, "Event2", "Event3").ok_or("heating and rotating are not in one group")?;
    Ok(format!("robots grouped at tick {t1}, heating and rotating at tick {t2}"))
}

fn time_machine_series() -> Result<String, String> {
    let r = run("needle", "needle");
    let starts: Vec<u64> = r.trace.instances().map(|i| i.start).collect();
    ensure(starts == [0, 1, 2] && r.trace.len() == 3, || format!("instances start at {starts:?}"))?;
    let needle_creates: Vec<(u64, u64)> = r
        .log
        .iter()
        .filter(|e| {
            matches!(&e.location, Location::Stage(s) if s.machine == "Needle" && s.stage == StageKind::Create)
        })
        .map(|e| (e.tick, e.token))
        .collect();
    let ticks: Vec<u64> = needle_creates.iter().map(|(t, _)| *t).collect();
    ensure(ticks == [0, 1, 2], || format!("Needle create occupancies at {ticks:?}"))?;
    let mut tokens: Vec<u64> = needle_creates.iter().map(|(_, id)| *id).collect();
    tokens.dedup();
    ensure(tokens.len() == 3, || "a Needle token was reused across slices".into())?;
    Ok("3 instances at 0, 1, 2; 3 fresh Needle create occupancies".into())
}

/// Every trace with at most `max_len` instances over `names` names: groups
/// of one or more names, names within a group in ascending order.
fn all_traces(max_len: usize, names: u8) -> Vec<Vec<Vec<u8>>> {
    fn multisets(size: usize, min: u8, names: u8, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for n in min..names {
            cur.push(n);
            multisets(size, n, names, cur, out);
            cur.pop();
        }
    }
    fn extend(left: usize, names: u8, cur: &mut Vec<Vec<u8>>, out: &mut Vec<Vec<Vec<u8>>>) {
        out.push(cur.clone());
        for size in 1..=left {
            let mut groups = Vec::new();
            multisets(size, 0, names, &mut Vec::new(), &mut groups);
            for g in groups {
                cur.push(g);
                extend(left - size, names, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(max_len, names, &mut Vec::new(), &mut out);
    out
}

/// Searches every order-preserving placement of the candidate's flattened
/// instances into the reference's, keeping co-grouped candidates co-grouped.
fn embeds_brute_force(cand: &[(u8, usize)], refr: &[(u8, usize)]) -> bool {
    fn place(cand: &[(u8, usize)], refr: &[(u8, usize)], i: usize, prev: Option<usize>) -> bool {
        if i == cand.len() {
            return true;
        }
        let from = prev.map_or(0, |p| p + 1);
        (from..refr.len()).any(|p| {
            refr[p].0 == cand[i].0
                && match prev {
                    Some(q) if cand[i - 1].1 == cand[i].1 => refr[q].1 == refr[p].1,
                    _ => true,
                }
                && place(cand, refr, i + 1, Some(p))
        })
    }
    place(cand, refr, 0, None)
}

fn oracle_equivalence() -> Result<String, String> {
    const NAMES: [&str; 4] = ["a", "b", "c", "d"];
    let shapes = all_traces(5, 4);
    let flat: Vec<Vec<(u8, usize)>> = shapes
        .iter()
        .map(|gs| gs.iter().enumerate().flat_map(|(g, names)| names.iter().map(move |&n| (n, g))).collect())
        .collect();
    let traces: Vec<Trace> = shapes
        .iter()
        .map(|gs| {
            Trace::from_instances(gs.iter().enumerate().flat_map(|(t, names)| {
                names
                    .iter()
                    .map(move |&n| EventInstance::new(NAMES[n as usize], t as u64, t as u64 + 1, vec![]).unwrap())
            }))
        })
        .collect();
    let mut pairs = 0u64;
    let mut holds = 0u64;
    for (i, cand) in traces.iter().enumerate() {
        for (j, refr) in traces.iter().enumerate() {
            let expected = embeds_brute_force(&flat[i], &flat[j]);
            if subtrace(cand, refr) != expected {
                return Err(format!("subtrace disagrees with the oracle on {:?} in {:?}", shapes[i], shapes[j]));
            }
            pairs += 1;
            holds += expected as u64;
        }
    }

    let kinds = [StageKind::Create, StageKind::Release, StageKind::Transfer, StageKind::Receive, StageKind::Process];
    let universe = parse_schema(
        "sphere U {
           machine A { stages: create, release, transfer, receive, process }
           machine B { stages: create, release, transfer, receive, process }
         }",
    )
    .map_err(|d| format!("{d:?}"))?;
    let path = |bit: u32| -> Path {
        let m = if bit < 5 { "A" } else { "B" };
        format!("U.{m}.{}", kinds[bit as usize % 5]).parse().unwrap()
    };
    let def = |name: &str, mask: u32| {
        let refs: Vec<Path> = (0..10).filter(|b| mask & (1 << b) != 0).map(path).collect();
        define_event(&universe, name, &refs, None).unwrap()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut subsets = 0;
    for _ in 0..1000 {
        let (a, b): (u32, u32) = (rng.gen_range(1..1024), rng.gen_range(1..1024));
        // Bias half the pairs towards nested masks so both answers occur.
        let b = if rng.gen_bool(0.5) { a & b } else { b };
        let b = if b == 0 { a } else { b };
        let expected = b & !a == 0;
        let got = contains(&def("A", a), &def("B", b)).map_err(|e| e.to_string())?;
        if got != expected {
            return Err(format!("contains disagrees with the subset oracle on masks {a:#b} and {b:#b}"));
        }
        subsets += expected as u32;
    }
    Ok(format!(
        "subtrace: {} traces, {pairs} pairs ({holds} embeddings) agree; contains: 1000 pairs ({subsets} nested) agree",
        traces.len()
    ))
}

fn cli_invocations() -> Vec<Vec<String>> {
    let mut calls: Vec<Vec<&str>> = Vec::new();
    let files: Vec<String> = SCHEMAS.iter().map(|s| format!("{s}.fm")).collect();
    let mut owned: Vec<Vec<String>> = Vec::new();
    for f in &files {
        owned.push(vec!["validate".into(), f.clone()]);
        owned.push(vec!["validate".into(), f.clone(), "--format".into(), "doc".into()]);
        owned.push(vec!["fmt".into(), "--check".into(), f.clone()]);
        owned.push(vec!["render".into(), f.clone()]);
        let mut overlay = vec!["render".to_string(), f.clone()];
        for e in schema(f.trim_end_matches(".fm")).events() {
            overlay.push("--event".into());
            overlay.push(e.name.clone());
        }
        owned.push(overlay);
    }
    for (s, c) in RUNS {
        for format in ["doc", "timeline"] {
            owned.push(
                ["simulate", &format!("{s}.fm"), "--scenario", &format!("{c}.fms"), "--format", format]
                    .iter()
                    .map(|x| x.to_string())
                    .collect(),
            );
        }
    }
    calls.push(vec!["trace", "subtrace", "--of", "golden/withdelay.trace", "--candidate", "golden/nodelay.trace"]);
    calls.push(vec!["trace", "subtrace", "--of", "golden/nodelay.trace", "--candidate", "golden/withdelay.trace"]);
    for t in ["golden/single.trace", "golden/nodelay.trace", "golden/withdelay.trace"] {
        calls.push(vec!["trace", "time", "--trace", t]);
    }
    calls.push(vec!["trace", "contains", "--schema", "lewis.fm", "--outer", "WalkingSlowly", "--inner", "Walking"]);
    calls.push(vec!["trace", "implies", "--schema", "lewis.fm", "--antecedent", "Walking", "--consequent", "WalkingSlowly"]);
    owned.extend(calls.into_iter().map(|c| c.into_iter().map(String::from).collect()));
    owned
}

fn determinism_and_round_trip() -> Result<String, String> {
    let calls = cli_invocations();
    for call in &calls {
        let args: Vec<&str> = call.iter().map(String::as_str).collect();
        let (a, b) = (fm(&args), fm(&args));
        ensure(a.status.code() == Some(0), || format!("`fm {}` exited {:?}", args.join(" "), a.status.code()))?;
        ensure(a.status == b.status && a.stdout == b.stdout && a.stderr == b.stderr, || {
            format!("`fm {}` differs between runs", args.join(" "))
        })?;
    }
    for name in SCHEMAS {
        let parsed = schema(name);
        let text = format_schema(&parsed);
        let reparsed = parse_schema(&text).map_err(|d| format!("{name}: {d:?}"))?;
        ensure(reparsed == parsed, || format!("{name}: parse . format . parse differs from parse"))?;
        ensure(format_schema(&reparsed) == text, || format!("{name}: fmt is not idempotent"))?;
    }
    let words = [
        "sphere", "machine", "stages:", "storage", "flow", "trigger", "event", "region:", "duration",
        "trace", "compose:", "properties:", "{", "}", "->", "~>", ",", ":", ";", "@", "create", "A.B.c",
        "inject", "max_ticks", "time_machine", "period", "count", "7", "-3", "\"x", "\"y\"", "#",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let inputs: Vec<String> = (0..10_000)
        .map(|i| {
            if i % 2 == 0 {
                let len = rng.gen_range(0..256);
                let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
                String::from_utf8_lossy(&bytes).into_owned()
            } else {
                let len = rng.gen_range(0..64);
                (0..len)
                    .map(|_| words[rng.gen_range(0..words.len())])
                    .collect::<Vec<_>>()
                    .join(if rng.gen_bool(0.5) { " " } else { "" })
            }
        })
        .collect();
    let previous = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let crashed = inputs.iter().position(|text| {
        panic::catch_unwind(|| {
            let _ = parse_schema(text);
            let _ = parse_scenario(text);
        })
        .is_err()
    });
    panic::set_hook(previous);
    if let Some(i) = crashed {
        return Err(format!("parser panicked on fuzz input {i}: {:?}", inputs[i]));
    }
    Ok(format!(
        "{} CLI invocations byte-identical twice; round trip on 6 files; 10000 fuzz inputs without a crash",
        calls.len()
    ))
}

fn validator_coverage() -> Result<String, String> {
    for rule in Rule::ALL {
        let stem = rule.code().to_lowercase();
        let fail = format!("fixtures/{stem}-fail.fm");
        let pass = format!("fixtures/{stem}-pass.fm");
        let out = fm(&["validate", &fail, "--format", "doc"]);
        let doc: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| format!("{fail}: {e}"))?;
        let codes: Vec<&str> = doc["diagnostics"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|d| d["severity"] == "error")
            .filter_map(|d| d["rule"].as_str())
            .collect();
        ensure(out.status.code() == Some(1) && codes.contains(&rule.code()), || {
            format!("{fail}: exit {:?}, errors {codes:?}", out.status.code())
        })?;
        let again = fm(&["validate", &fail, "--format", "doc"]);
        ensure(again.stdout == out.stdout, || format!("{fail}: diagnostics differ between runs"))?;
        let out = fm(&["validate", &pass]);
        ensure(out.status.code() == Some(0), || format!("{pass}: exit {:?}", out.status.code()))?;
        if let Ok(s) = parse_schema(&read(&pass)) {
            ensure(validate(&s) == validate(&s), || format!("{pass}: unstable diagnostics"))?;
        }
    }
    Ok(format!("{} rules, each with a failing and a passing fixture", Rule::ALL.len()))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Check); 8] = [
        (1, "corpus completeness", corpus_completeness),
        (2, "containment claims", containment_claims),
        (3, "sub-trace claim", subtrace_claim),
        (4, "simultaneity", simultaneity),
        (5, "time-machine series", time_machine_series),
        (6, "oracle equivalence", oracle_equivalence),
        (7, "determinism and round-trip", determinism_and_round_trip),
        (8, "validator rule coverage", validator_coverage),
    ];
    let mut failed = 0;
    for (n, name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.2}s] {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{secs:.2}s] {why}");
            }
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
