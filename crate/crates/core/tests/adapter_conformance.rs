//! The ideal model behind the line protocol behaves exactly like the
//! in-process model.

use pardec_core::adapter::{
    conformance_check, random_requests, validate_reply, AdapterModel, IdealServer, PosteriorRequest, Violation,
};
use pardec_core::decoding::decode;
use pardec_core::{IdealModel, SamplerConfig, Strategy, StrategyConfig, TaskInstance, TaskKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_N: usize = 6;

fn instances() -> Vec<TaskInstance> {
    let mut out = Vec::new();
    for kind in TaskKind::ALL {
        for n in 2..=MAX_N {
            out.push(TaskInstance::canonical(kind, n, kind.needs_index().then_some(n / 2)).unwrap());
        }
    }
    out
}

fn configs() -> Vec<StrategyConfig> {
    [
        Strategy::RandomTopK { k: 2 },
        Strategy::ConfidenceTopK { k: 1 },
        Strategy::MarginTopK { k: 2 },
        Strategy::EntropyTopK { k: 3 },
        Strategy::ConfidenceThreshold { gamma: 0.6 },
        Strategy::FactorBased { f: 1.5 },
    ]
    .into_iter()
    .map(|s| StrategyConfig::any_order(s).unwrap())
    .collect()
}

#[test]
fn seeded_traces_are_bit_identical_across_backends() {
    let server = IdealServer::canonical(MAX_N);
    let instances = instances();
    let configs = configs();
    let mut adapter = AdapterModel::new(|line: &str| server.handle_line(line));
    // The last 20 runs sample pairs of a shuffle in parallel, which often
    // reaches an inconsistent state.
    let shuffle = TaskInstance::canonical(TaskKind::Shuffle, 5, None).unwrap();
    let pairs = StrategyConfig::any_order(Strategy::RandomTopK { k: 2 }).unwrap();
    let mut dead_ends = 0;
    for seed in 0..100u64 {
        let (inst, config) = if seed < 80 {
            (&instances[seed as usize % instances.len()], &configs[seed as usize % configs.len()])
        } else {
            (&shuffle, &pairs)
        };
        let sampler = SamplerConfig::new(if seed % 3 == 0 { 0.0 } else { 1.0 }, seed).unwrap();
        let local = decode(&mut IdealModel, inst, config, &sampler).unwrap();
        let remote = decode(&mut adapter, inst, config, &sampler).unwrap();
        assert_eq!(serde_json::to_string(&local).unwrap(), serde_json::to_string(&remote).unwrap(), "seed {seed}");
        dead_ends += usize::from(local.dead_end);
    }
    assert!(dead_ends > 0);
}

#[test]
fn fuzzed_requests_conform() {
    let server = IdealServer::canonical(MAX_N);
    let requests = random_requests(&instances(), 1_000, 77);
    assert_eq!(requests.len(), 1_000);
    let mut transport = |line: &str| server.handle_line(line);
    let report = conformance_check(&mut transport, &requests).unwrap();
    assert!(report.violations.is_empty(), "{:?}", &report.violations[..report.violations.len().min(3)]);
    assert_eq!(report.responses, 1_000);
    assert_eq!(report.ids_echoed, 1_000);
    assert!(report.passed());
}

#[test]
fn mangled_lines_get_error_objects() {
    let server = IdealServer::canonical(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let good = serde_json::to_string(&random_requests(&instances(), 1, 0)[0]).unwrap();
    for _ in 0..500 {
        let mut bytes = good.clone().into_bytes();
        let cut = rng.gen_range(0..bytes.len());
        bytes.truncate(cut);
        let line = String::from_utf8_lossy(&bytes);
        let reply: serde_json::Value = serde_json::from_str(&server.handle_line(&line)).unwrap();
        assert!(reply.get("error").is_some(), "{line}");
    }
}

#[test]
fn validation_catches_broken_servers() {
    let server = IdealServer::canonical(4);
    let request: PosteriorRequest = random_requests(&instances(), 1, 3).remove(0);
    let good = server.handle_line(&serde_json::to_string(&request).unwrap());
    assert!(validate_reply(&request, &good).is_ok());

    let wrong_id = good.replacen(&format!("\"request_id\":{}", request.request_id), "\"request_id\":999", 1);
    assert!(matches!(validate_reply(&request, &wrong_id).unwrap_err()[0], Violation::IdMismatch { .. }));

    let mut value: serde_json::Value = serde_json::from_str(&good).unwrap();
    let rows = value["rows"].as_object_mut().unwrap();
    let first = rows.keys().next().unwrap().clone();
    rows.remove(&first);
    let missing = serde_json::to_string(&value).unwrap();
    assert!(validate_reply(&request, &missing).unwrap_err().iter().any(|v| matches!(v, Violation::Coverage { .. })));

    assert!(matches!(validate_reply(&request, "not json").unwrap_err()[0], Violation::Malformed { .. }));
}
