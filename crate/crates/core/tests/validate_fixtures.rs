mod common;

use flowthing::model::{FlowArc, Machine, ModelError, StageRef};
use flowthing::validate::{check_flow_arc, validate, Rule};
use flowthing::{parse_schema, StageKind};

use common::{read, schema, SCHEMAS};

/// Rule codes reported for a file, whether at parse time or by the validator.
fn error_codes(text: &str) -> Vec<String> {
    match parse_schema(text) {
        Err(diags) => diags.iter().map(|d| d.code.clone()).collect(),
        Ok(s) => validate(&s)
            .iter()
            .filter(|d| d.is_error())
            .map(|d| d.rule.code().to_string())
            .collect(),
    }
}

#[test]
fn every_rule_has_a_failing_and_a_passing_fixture() {
    for rule in Rule::ALL {
        let stem = rule.code().to_lowercase();
        let fail = error_codes(&read(&format!("fixtures/{stem}-fail.fm")));
        assert!(fail.contains(&rule.code().to_string()), "{stem}-fail: {fail:?}");
        let pass = error_codes(&read(&format!("fixtures/{stem}-pass.fm")));
        assert!(pass.is_empty(), "{stem}-pass: {pass:?}");
    }
}

#[test]
fn corpus_has_no_errors() {
    for name in SCHEMAS {
        let diags = validate(&schema(name));
        assert!(diags.iter().all(|d| !d.is_error()), "{name}: {diags:?}");
    }
}

#[test]
fn diagnostics_are_stable() {
    for name in SCHEMAS {
        let s = schema(name);
        assert_eq!(validate(&s), validate(&s));
    }
}

#[test]
fn duplicate_stages_are_rejected_by_the_constructor() {
    assert!(matches!(
        Machine::new("M", [StageKind::Process, StageKind::Process]),
        Err(ModelError::DuplicateStage { .. })
    ));
}

fn stage(sphere: &[&str], machine: &str, kind: StageKind) -> StageRef {
    StageRef {
        sphere: sphere.iter().map(|s| s.to_string()).collect(),
        machine: machine.into(),
        stage: kind,
    }
}

#[test]
fn single_arc_checks() {
    let s = parse_schema(
        "sphere A { machine M { stages: create, release, process } }
         sphere Station { machine Car { stages: transfer } sphere Robot1 { machine Car { stages: receive } } }",
    )
    .unwrap();
    let arc = |source, target| FlowArc { source, target, index: 0 };
    assert!(check_flow_arc(
        &arc(stage(&["A"], "M", StageKind::Create), stage(&["A"], "M", StageKind::Release)),
        &s
    )
    .is_none());
    let d = check_flow_arc(
        &arc(stage(&["A"], "M", StageKind::Process), stage(&["A"], "M", StageKind::Create)),
        &s,
    )
    .unwrap();
    assert_eq!(d.rule, Rule::Flow);
    assert!(check_flow_arc(
        &arc(
            stage(&["Station"], "Car", StageKind::Transfer),
            stage(&["Station", "Robot1"], "Car", StageKind::Receive)
        ),
        &s
    )
    .is_none());
}

#[test]
fn trigger_into_process_is_only_a_warning() {
    let s = parse_schema(
        "sphere A { machine M { stages: create, process } machine N { stages: receive, process } }
         flow A.M.create -> A.M.process
         flow A.N.receive -> A.N.process
         trigger A.M.create ~> A.N.process",
    )
    .unwrap();
    let diags = validate(&s);
    assert_eq!(diags.len(), 1);
    assert_eq!(diags[0].rule, Rule::Trig);
    assert!(!diags[0].is_error());
}
