use devdiag_core::model::{parse_model, parse_model_str, validate_model, ModelError};
use devdiag_core::scenario::run_scenario;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/two_level.json");

fn fixture_value() -> Value {
    serde_json::from_str(&std::fs::read_to_string(FIXTURE).unwrap()).unwrap()
}

/// Reference sites in the fixture; replacing any one leaves a dangling id.
const SITES: &[&str] = &[
    "/classificators/0/root",
    "/classificators/0/refinements/0/child",
    "/series/0/parameter",
    "/composition_requests/0/diagrams/1",
    "/composition_requests/0/prescriptions/0/state",
    "/scenarios/0/assignment/unitA",
    "/scenarios/0/hierarchy/subsystems/1/parent",
    "/scenarios/0/time_diagram/1/symbol",
    "/scenarios/0/after_effect/isolated_arcs/0/arc",
    "/scenarios/0/score_table",
    "/hypothesis_diagrams/0/labeled_arcs/0/to",
];

#[test]
fn fixture_parses_and_validates() {
    let m = parse_model(std::path::Path::new(FIXTURE)).unwrap();
    let v = validate_model(&m, 2000, 7);
    assert!(v.pass(), "{:#?}", v.findings);
    assert_eq!(m.scenarios.len(), 2);
    assert_eq!(m.requests.len(), 5);
}

#[test]
fn document_round_trips() {
    let m = parse_model_str(&std::fs::read_to_string(FIXTURE).unwrap()).unwrap();
    let again = parse_model_str(&m.to_json()).unwrap();
    assert_eq!(again.document, m.document);
    assert_eq!(again.to_json(), m.to_json());
    let a = &m.scenarios["baseline"].scenario;
    let b = &again.scenarios["baseline"].scenario;
    assert_eq!(run_scenario(a, 8).unwrap(), run_scenario(b, 8).unwrap());
}

/// Sites whose checks do not depend on one another.
const INDEPENDENT: &[&str] = &[
    "/classificators/0/root",
    "/series/0/parameter",
    "/composition_requests/0/diagrams/1",
    "/scenarios/0/score_table",
    "/scenarios/1/time_diagram/0/target",
    "/hypothesis_diagrams/0/labeled_arcs/0/to",
];

fn mutate(sites: &[&str]) -> (Vec<String>, devdiag_core::model::ModelErrors) {
    let mut doc = fixture_value();
    let mut ghosts = Vec::new();
    for (i, site) in sites.iter().enumerate() {
        let ghost = format!("ghost{i}");
        *doc.pointer_mut(site).unwrap_or_else(|| panic!("{site}")) = Value::String(ghost.clone());
        ghosts.push(ghost);
    }
    let errors = parse_model_str(&doc.to_string()).expect_err("mutated model must not resolve");
    (ghosts, errors)
}

fn reported(errors: &devdiag_core::model::ModelErrors, ghost: &str) -> bool {
    errors.0.iter().any(|e| match e {
        ModelError::UnresolvedReference { reference, .. } => reference.contains(ghost),
        _ => false,
    })
}

#[test]
fn each_dangling_reference_is_reported() {
    for site in SITES.iter().chain(INDEPENDENT) {
        let (ghosts, errors) = mutate(&[site]);
        assert!(reported(&errors, &ghosts[0]), "{site}: {errors}");
    }
}

#[test]
fn independent_mutations_are_all_reported() {
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + (seed as usize % INDEPENDENT.len());
        let chosen: Vec<&str> = INDEPENDENT.choose_multiple(&mut rng, k).copied().collect();
        let (ghosts, errors) = mutate(&chosen);
        assert!(errors.unresolved() >= k, "seed {seed}: {errors}");
        for g in &ghosts {
            assert!(reported(&errors, g), "seed {seed}: '{g}' not reported in {errors}");
        }
    }
}

#[test]
fn syntax_errors_carry_positions() {
    let text = std::fs::read_to_string(FIXTURE).unwrap();
    let broken = text.replacen("\"scales\"", "\"scales\" ::", 1);
    let errors = parse_model_str(&broken).unwrap_err();
    assert!(matches!(errors.0[0], ModelError::ParseError { line, .. } if line > 1));

    let mut doc = fixture_value();
    doc["format_version"] = Value::from(99);
    let errors = parse_model_str(&doc.to_string()).unwrap_err();
    assert!(matches!(errors.0[0], ModelError::UnknownVersion(_)));

    let mut doc = fixture_value();
    doc["surprise"] = Value::from(1);
    assert!(parse_model_str(&doc.to_string()).is_err());
}
