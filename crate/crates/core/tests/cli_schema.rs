use std::process::Command;

use fracform::cli::{dispatch, Output, SCHEMA_VERSION};
use serde_json::Value;

const SCHEMA: &str = include_str!("../../../schema/fracform-output.schema.json");

const SYM: &str = "[[[0.75,0],[0.25,0]],[[0.25,0],[0.75,0]]]";
const F1: &str = r#"{"n":3,"signature":[{"order":0.5,"multiplicity":1}],"terms":[{"indices":[1],"coefficient":2}]}"#;
const F2: &str = r#"{"n":3,"signature":[{"order":0.5,"multiplicity":1}],"terms":[{"indices":[2],"coefficient":-1.5}]}"#;
const P1: &str = r#"{"n":2,"signature":[{"order":0.3,"multiplicity":1}],"terms":[{"indices":[1],"coefficient":"x1*x2"},{"indices":[2],"coefficient":1}]}"#;

fn run(args: &[&str]) -> Output {
    dispatch(std::iter::once("fracform").chain(args.iter().copied()))
}

fn validate(doc: &Value) {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(doc).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{errors:#?}\n{doc:#}");
}

fn json_of(args: &[&str], code: i32) -> Value {
    let out = run(args);
    assert_eq!(out.code, code, "{args:?}: {}{}", out.stdout, out.stderr);
    let doc: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(doc["schema_version"], SCHEMA_VERSION);
    validate(&doc);
    doc
}

#[test]
fn every_subcommand_validates() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["differint", "--expr", "x1", "--order", "0.5", "--at", "1", "--at", "2", "--json"],
        vec!["matrix-differint", "--expr", "x1^2+1", "--matrix", SYM, "--at", "1.2", "--json"],
        vec!["jacobian", "--chart", "polar", "--order", "0.5", "--at", "1.5,0.785", "--lower-y", "1,0.5", "--json"],
        vec!["jacobian", "--chart", "polar", "--matrix", SYM, "--at", "1.5,0.785", "--lower-y", "1,0.5", "--json"],
        vec!["metric", "--chart", "shear", "--order", "-0.5", "--at", "1,1", "--json"],
        vec!["wedge", "--a", F1, "--b", F2, "--json"],
        vec!["hodge", "--form", F1, "--json"],
        vec!["inner", "--a", F1, "--b", F2, "--json"],
        vec!["poincare", "--form", P1, "--order", "0.5", "--at", "0.7,1.2", "--json"],
        vec!["poincare", "--expr", "x1*x2", "--n", "2", "--matrix", "[[[0.5,0],[0,0]],[[0,0],[1.5,0]]]", "--at", "1,1", "--json"],
        vec!["covariant", "--chart", "polar", "--field", "0;1", "--order", "1", "--direction", "2", "--at", "1.5,0.785", "--decompose", "--json"],
        vec!["covariant", "--chart", "polar", "--field", "x1;x1*x2", "--matrix", SYM, "--direction", "1", "--at", "1.5,0.785", "--lower-y", "1,0.5", "--json"],
        vec!["identities", "--filter", "eq7,eq66", "--json"],
        vec!["polar-example", "--r", "2", "--theta", "1.0471975512", "--json"],
    ];
    for args in &cases {
        json_of(args, 0);
    }
}

#[test]
fn differint_example_value() {
    let doc = json_of(&["differint", "--expr", "x1", "--order", "0.5", "--lower", "0", "--at", "1", "--json"], 0);
    let v = doc["results"][0]["value"].as_f64().unwrap();
    assert!((v - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-6);
}

#[test]
fn polar_example_reports_comparison() {
    let doc = json_of(&["polar-example", "--r", "2", "--theta", "1.0471975512", "--json"], 0);
    assert!(doc["transform"]["residual"].as_f64().unwrap() <= 1e-9);
    let refs: Vec<f64> = doc["comparison"].as_array().unwrap().iter().map(|c| c["reference"].as_f64().unwrap()).collect();
    assert!((refs[0] - 0.821367).abs() < 1e-6 && (refs[1] + 1.924501).abs() < 1e-6);
}

#[test]
fn computation_errors_are_documents_too() {
    let doc = json_of(
        &["poincare", "--expr", "x1", "--n", "2", "--matrix", "[[[1,0],[1,0]],[[0,0],[1,0]]]", "--at", "1,1", "--json"],
        1,
    );
    assert_eq!(doc["error"]["kind"], "non_diagonalizable_order");
}

#[test]
fn identities_json_is_deterministic() {
    let a = run(&["identities", "--filter", "eq16,eq24,eq30", "--json"]);
    let b = run(&["identities", "--filter", "eq16,eq24,eq30", "--json"]);
    assert_eq!(a, b);
}

#[test]
fn identities_json_to_a_file() {
    let path = std::env::temp_dir().join(format!("fracform-suite-{}.json", std::process::id()));
    let out = run(&["identities", "--filter", "eq7", "--json", path.to_str().unwrap()]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("eq7"));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    validate(&doc);
    assert_eq!(doc["cases"].as_array().unwrap().len(), 3);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_fracform");
    let ok = Command::new(bin).args(["identities", "--filter", "eq7", "--profile", "fast"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let usage = Command::new(bin).args(["hodge", "--form", F1, "--nope"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let err = String::from_utf8(usage.stderr).unwrap();
    assert!(err.contains("--nope") && err.contains("usage: fracform hodge"), "{err}");
    let compute = Command::new(bin)
        .args(["matrix-differint", "--expr", "x1", "--matrix", "[[[0,0]]]", "--at", "1"])
        .output()
        .unwrap();
    assert_eq!(compute.status.code(), Some(1));
}

#[test]
fn seed_override_from_the_environment() {
    let bin = env!("CARGO_BIN_EXE_fracform");
    let out = Command::new(bin)
        .args(["identities", "--filter", "eq24", "--json"])
        .env("FRACFORM_SEED", "7")
        .output()
        .unwrap();
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["seed"], 7);
    let out = Command::new(bin)
        .args(["identities", "--filter", "eq24", "--seed", "9", "--json"])
        .env("FRACFORM_SEED", "7")
        .output()
        .unwrap();
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["seed"], 9);
}

#[test]
fn points_file_with_header() {
    let path = std::env::temp_dir().join(format!("fracform-points-{}.csv", std::process::id()));
    std::fs::write(&path, "x1\n0.5\n1\n2\n").unwrap();
    let doc = json_of(&["differint", "--expr", "x1^2", "--order", "-0.5", "--points", path.to_str().unwrap(), "--json"], 0);
    std::fs::remove_file(&path).ok();
    assert_eq!(doc["results"].as_array().unwrap().len(), 3);
}
