#![allow(dead_code)]

use std::path::PathBuf;

use flowthing::dsl::{parse_scenario_file, parse_schema_file, Scenario};
use flowthing::Schema;

pub const SCHEMAS: [&str; 6] = ["needle", "hydepark", "phoebe", "spheres", "professor", "lewis"];

/// (schema, scenario) pairs shipped with the corpus.
pub const RUNS: [(&str, &str); 8] = [
    ("needle", "needle"),
    ("hydepark", "hydepark"),
    ("phoebe", "phoebe"),
    ("spheres", "robots"),
    ("spheres", "ball"),
    ("professor", "nodelay"),
    ("professor", "withdelay"),
    ("lewis", "lewis"),
];

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn read(rel: &str) -> String {
    let path = corpus_dir().join(rel);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn schema(name: &str) -> Schema {
    let file = format!("{name}.fm");
    parse_schema_file(&file, &read(&file)).unwrap_or_else(|d| panic!("{file}: {d:?}"))
}

pub fn scenario(name: &str) -> Scenario {
    let file = format!("{name}.fms");
    parse_scenario_file(&file, &read(&file)).unwrap_or_else(|d| panic!("{file}: {d:?}"))
}
