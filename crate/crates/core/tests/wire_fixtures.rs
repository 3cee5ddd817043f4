//! Shared fixtures under `fixtures/`. The browser island checks itself
//! against the same files.

use std::fs;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde_json::Value;

use poolea_core::analyze::parse_log;
use poolea_core::{run_island, wire, Chromosome, EaParams, NoopTransport, TrapSpec};

fn fixture(path: &str) -> String {
    let full = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(path);
    fs::read_to_string(&full).unwrap_or_else(|e| panic!("{}: {e}", full.display()))
}

fn json(path: &str) -> Value {
    serde_json::from_str(&fixture(path)).unwrap()
}

fn exchanges() -> Vec<Value> {
    json("wire/exchanges.json")["exchanges"]
        .as_array()
        .unwrap()
        .clone()
}

#[test]
fn accepted_put_bodies_roundtrip_byte_identically() {
    let spec = TrapSpec::new(4, 10).unwrap();
    for ex in exchanges() {
        if ex["request"]["method"] != "PUT" || ex["response"]["status"] != 200 {
            continue;
        }
        let body = ex["request"]["body"].as_str().unwrap();
        let c = wire::decode_chromosome_body(body.as_bytes(), spec.chromosome_len()).unwrap();
        assert_eq!(wire::encode_chromosome_body(&c), body, "{}", ex["name"]);
    }
}

#[test]
fn rejected_put_bodies_fail_to_decode() {
    for ex in exchanges() {
        if ex["request"]["method"] != "PUT" || ex["response"]["status"] != 400 {
            continue;
        }
        let body = ex["request"]["body"].as_str().unwrap();
        assert!(
            wire::decode_chromosome_body(body.as_bytes(), 40).is_err(),
            "{}",
            ex["name"]
        );
    }
}

#[test]
fn response_bodies_match_encoders() {
    for ex in exchanges() {
        let Some(body) = ex["response"]["body"].as_str() else {
            continue;
        };
        match ex["response"]["status"].as_u64().unwrap() {
            200 if ex["request"]["method"] == "GET" => {
                let c = wire::decode_chromosome(body.as_bytes()).unwrap();
                assert_eq!(wire::encode_chromosome_body(&c), body);
            }
            200 => {
                let size = wire::decode_size_body(body.as_bytes()).unwrap();
                assert_eq!(wire::encode_size_body(size), body);
            }
            204 => assert_eq!(body, ""),
            other => panic!("unexpected fixture status {other}"),
        }
    }
}

#[test]
fn log_encodings_match() {
    let array = fixture("wire/log.json");
    let ndjson = fixture("wire/log.ndjson");
    let from_array = parse_log(array.as_bytes()).unwrap();
    let from_lines = parse_log(ndjson.as_bytes()).unwrap();
    assert_eq!(from_array.skipped, 0);
    assert_eq!(from_array.events, from_lines.events);
    assert_eq!(wire::encode_log(&from_array.events), array);
    let lines: String = from_lines
        .events
        .iter()
        .map(|e| wire::encode_log_line(e) + "\n")
        .collect();
    assert_eq!(lines, ndjson);
}

#[test]
fn rng_streams_match_reference() {
    let doc = json("rng/xoshiro256pp.json");
    for stream in doc["streams"].as_array().unwrap() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(stream["seed"].as_u64().unwrap());
        for want in stream["nextU64"].as_array().unwrap() {
            let want: u64 = want.as_str().unwrap().parse().unwrap();
            assert_eq!(rng.next_u64(), want);
        }
    }
}

#[test]
fn recorded_traces_replay() {
    for seed in [1, 7] {
        let doc = json(&format!("traces/noop-10x4-seed-{seed}.json"));
        let spec: TrapSpec = serde_json::from_value(doc["spec"].clone()).unwrap();
        let params: EaParams = serde_json::from_value(doc["params"].clone()).unwrap();
        let want: Vec<(u64, f64)> =
            serde_json::from_value(doc["bestFitnessTrace"].clone()).unwrap();
        let report = run_island(
            &params,
            &spec,
            &mut NoopTransport,
            doc["seed"].as_u64().unwrap(),
        );
        assert!(report.solved);
        assert_eq!(report.generations, doc["generations"].as_u64().unwrap());
        assert_eq!(report.best_fitness_trace, want);
        assert_eq!(want.last().unwrap().1, spec.optimum());
    }
}

#[test]
fn fixture_chromosomes_are_well_formed() {
    for ex in exchanges() {
        if let Some(body) = ex["response"]["body"]
            .as_str()
            .filter(|b| b.contains("chromosome"))
        {
            let c = wire::decode_chromosome(body.as_bytes()).unwrap();
            assert_eq!(c.len(), 40);
            assert_eq!(Chromosome::parse(&c.to_string()).unwrap(), c);
        }
    }
}
