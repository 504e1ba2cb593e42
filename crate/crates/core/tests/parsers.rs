//! Parser entry points on the checked-in fuzz corpus and on malformed input.

use std::path::PathBuf;

use detdec::envs::InstanceDescriptor;
use detdec::runner::RunConfig;
use detdec::{DetDecPomdp, Error, JointPolicy};

fn corpus(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files.into_iter().map(|p| (p.clone(), std::fs::read_to_string(&p).unwrap())).collect()
}

#[test]
fn policy_corpus_round_trips_or_names_the_field() {
    let mut accepted = 0;
    for (path, text) in corpus("policy_json") {
        match JointPolicy::from_json(&text) {
            Ok(p) => {
                assert_eq!(JointPolicy::from_json(&p.to_json()).unwrap(), p, "{}", path.display());
                accepted += 1;
            }
            Err(Error::Parse { field, .. }) => assert!(field.starts_with("agents"), "{}: {field}", path.display()),
            Err(e) => panic!("{}: unexpected {e}", path.display()),
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn descriptor_corpus_builds() {
    for (path, text) in corpus("instance_descriptor") {
        let d = InstanceDescriptor::from_json(&text).unwrap();
        let m = d.build().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!m.initial_belief().is_empty());
        assert_eq!(InstanceDescriptor::from_json(&d.to_json()).unwrap(), d);
    }
}

#[test]
fn config_corpus_round_trips() {
    for (path, text) in corpus("run_config") {
        let c = RunConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }
}

#[test]
fn oversized_descriptors_are_rejected_before_allocation() {
    let text = r#"{"family":"mactp","n":1000000000,"agents":1,"seed":0,"discount":0.95,
        "edges":[],"stochastic":[],"goals":[1],"starts":[1]}"#;
    assert!(InstanceDescriptor::from_json(text).unwrap().build().is_err());
    let text = r#"{"family":"collecting","h":100000,"w":100000,"agents":1,"boxes":1,"seed":0,"discount":0.95,
        "obstacles":[],"goals":[[0,0]],"start_cells":[[0,1]],"initial_support":[]}"#;
    assert!(InstanceDescriptor::from_json(text).unwrap().build().is_err());
}

#[test]
fn truncated_and_garbage_inputs_are_errors() {
    for text in ["", "{", "[]", "null", r#"{"agents":[{"initial":0}]}"#, r#"{"agents":[{"initial":0,"nodes":[]}]}"#] {
        assert!(JointPolicy::from_json(text).is_err(), "{text}");
        assert!(InstanceDescriptor::from_json(text).is_err(), "{text}");
    }
    assert!(RunConfig::from_json(r#"{"idpp":{"max_rounds":0}}"#).is_err());
    assert!(RunConfig::from_json(r#"{"eval":{"episodes":0}}"#).is_err());
}
