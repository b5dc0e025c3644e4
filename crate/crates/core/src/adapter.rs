//! Line-delimited JSON bridge to out-of-process models.
//!
//! Each request carries the full decoding state, so the protocol is
//! stateless. One request is in flight per connection at a time.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::decoding::run_rng;
use crate::ideal::{posterior_marginals, PosteriorRow, PosteriorTable, SequenceState, Slot};
use crate::model::{ModelError, PosteriorModel};
use crate::tasks::{sample_output, Item, TaskInstance, TaskKind};

/// Allowed deviation of a row's total mass from 1.
pub const ROW_MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CandidateScope {
    /// Distributions over the task's item vocabulary.
    #[default]
    #[serde(rename = "items")]
    Items,
    /// Reserved for real-model text decoding.
    #[serde(rename = "full-vocab")]
    FullVocab,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRequest {
    pub request_id: u64,
    pub instance_id: String,
    pub prompt: String,
    /// Revealed tokens by label; `null` marks a masked position.
    pub state: SequenceState,
    #[serde(default)]
    pub candidate_scope: CandidateScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResponse {
    pub request_id: u64,
    /// Masked position → `[token, probability]` pairs.
    pub rows: BTreeMap<usize, Vec<(Item, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    pub request_id: Option<u64>,
    /// Machine-readable cause; `"inconsistent_state"` when the revealed
    /// tokens admit no valid output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

pub const INCONSISTENT_STATE: &str = "inconsistent_state";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Reply {
    Error(ErrorResponse),
    Posterior(PosteriorResponse),
}

impl Reply {
    /// An object with an `error` key is an error reply. (Untagged derive
    /// cannot read the integer-keyed row map, hence the manual dispatch.)
    pub fn parse(line: &str) -> Result<Reply, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(line)?;
        if value.get("error").is_some() {
            serde_json::from_value(value).map(Reply::Error)
        } else {
            serde_json::from_value(value).map(Reply::Posterior)
        }
    }
}

impl PosteriorResponse {
    pub fn from_table(request_id: u64, table: &PosteriorTable) -> Self {
        let rows = table.rows().iter().map(|r| (r.position, r.probs.clone())).collect();
        PosteriorResponse { request_id, rows }
    }

    pub fn into_table(self) -> PosteriorTable {
        PosteriorTable::new(self.rows.into_iter().map(|(p, probs)| PosteriorRow::new(p, probs)).collect())
    }
}

/// Sends one line and returns the reply line, without the trailing newline.
pub trait Transport {
    fn round_trip(&mut self, line: &str) -> Result<String, ModelError>;
}

impl<F: FnMut(&str) -> String> Transport for F {
    fn round_trip(&mut self, line: &str) -> Result<String, ModelError> {
        Ok(self(line))
    }
}

/// A child process speaking the protocol on its stdin/stdout.
pub struct StdioTransport {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl StdioTransport {
    pub fn spawn(mut command: Command) -> Result<Self, ModelError> {
        let mut child = command.stdin(Stdio::piped()).stdout(Stdio::piped()).spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(StdioTransport { child, stdin, stdout })
    }
}

impl Transport for StdioTransport {
    fn round_trip(&mut self, line: &str) -> Result<String, ModelError> {
        writeln!(self.stdin, "{line}")?;
        self.stdin.flush()?;
        let mut reply = String::new();
        if self.stdout.read_line(&mut reply)? == 0 {
            return Err(ModelError::Backend("adapter closed its output".into()));
        }
        Ok(reply.trim_end_matches(['\r', '\n']).to_string())
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A protocol problem found in one exchange.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Malformed { request_id: u64, detail: String },
    ErrorReply { request_id: u64, error: String, code: Option<String> },
    IdMismatch { expected: u64, got: Option<u64> },
    Coverage { request_id: u64, missing: Vec<usize>, extra: Vec<usize> },
    Normalization { request_id: u64, position: usize, mass: f64 },
    NegativeProbability { request_id: u64, position: usize },
}

/// Parses `reply` and checks it against `request`.
pub fn validate_reply(request: &PosteriorRequest, reply: &str) -> Result<PosteriorResponse, Vec<Violation>> {
    let id = request.request_id;
    let parsed = Reply::parse(reply)
        .map_err(|e| vec![Violation::Malformed { request_id: id, detail: e.to_string() }])?;
    let response = match parsed {
        Reply::Error(err) => {
            return Err(vec![if err.request_id == Some(id) {
                Violation::ErrorReply { request_id: id, error: err.error, code: err.code }
            } else {
                Violation::IdMismatch { expected: id, got: err.request_id }
            }])
        }
        Reply::Posterior(r) => r,
    };
    let mut violations = Vec::new();
    if response.request_id != id {
        violations.push(Violation::IdMismatch { expected: id, got: Some(response.request_id) });
    }
    let masked = request.state.masked_positions();
    let missing: Vec<usize> = masked.iter().copied().filter(|p| !response.rows.contains_key(p)).collect();
    let extra: Vec<usize> = response.rows.keys().copied().filter(|p| masked.binary_search(p).is_err()).collect();
    if !missing.is_empty() || !extra.is_empty() {
        violations.push(Violation::Coverage { request_id: id, missing, extra });
    }
    for (&position, probs) in &response.rows {
        if probs.iter().any(|(_, p)| !(*p >= 0.0)) {
            violations.push(Violation::NegativeProbability { request_id: id, position });
        }
        let mass: f64 = probs.iter().map(|(_, p)| p).sum();
        if !((mass - 1.0).abs() <= ROW_MASS_TOLERANCE) {
            violations.push(Violation::Normalization { request_id: id, position, mass });
        }
    }
    if violations.is_empty() {
        Ok(response)
    } else {
        Err(violations)
    }
}

/// A [`PosteriorModel`] answered by a remote adapter.
pub struct AdapterModel<T> {
    transport: T,
    scope: CandidateScope,
    next_id: u64,
}

impl<T: Transport> AdapterModel<T> {
    pub fn new(transport: T) -> Self {
        AdapterModel { transport, scope: CandidateScope::Items, next_id: 0 }
    }

    pub fn with_scope(mut self, scope: CandidateScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn into_transport(self) -> T {
        self.transport
    }
}

impl<T: Transport> PosteriorModel for AdapterModel<T> {
    fn posterior(&mut self, instance: &TaskInstance, state: &SequenceState) -> Result<PosteriorTable, ModelError> {
        let request = PosteriorRequest {
            request_id: self.next_id,
            instance_id: instance.id.clone(),
            prompt: instance.prompt(),
            state: state.clone(),
            candidate_scope: self.scope,
        };
        self.next_id += 1;
        let line = serde_json::to_string(&request).map_err(|e| ModelError::Protocol(e.to_string()))?;
        let reply = self.transport.round_trip(&line)?;
        match validate_reply(&request, &reply) {
            Ok(response) => Ok(response.into_table()),
            Err(violations) => match violations.as_slice() {
                [Violation::ErrorReply { error, code, .. }] if code.as_deref() == Some(INCONSISTENT_STATE) => {
                    Err(ModelError::Inconsistent(error.clone()))
                }
                [Violation::ErrorReply { error, .. }] => Err(ModelError::Backend(error.clone())),
                _ => Err(ModelError::Protocol(format!("{violations:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub requests: usize,
    pub responses: usize,
    /// Distinct request ids echoed back correctly.
    pub ids_echoed: usize,
    pub violations: Vec<Violation>,
    pub latency_mean_us: f64,
    pub latency_max_us: u128,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.ids_echoed == self.requests
    }
}

/// Sends every request in order and collects violations and latency.
pub fn conformance_check<T: Transport>(
    transport: &mut T,
    requests: &[PosteriorRequest],
) -> Result<ConformanceReport, ModelError> {
    let mut violations = Vec::new();
    let mut echoed = std::collections::HashSet::new();
    let mut total_us = 0u128;
    let mut max_us = 0u128;
    let mut responses = 0;
    for request in requests {
        let line = serde_json::to_string(request).map_err(|e| ModelError::Protocol(e.to_string()))?;
        let start = Instant::now();
        let reply = transport.round_trip(&line)?;
        let us = start.elapsed().as_micros();
        total_us += us;
        max_us = max_us.max(us);
        responses += 1;
        match validate_reply(request, &reply) {
            Ok(r) => {
                echoed.insert(r.request_id);
            }
            Err(v) => violations.extend(v),
        }
    }
    Ok(ConformanceReport {
        requests: requests.len(),
        responses,
        ids_echoed: echoed.len(),
        violations,
        latency_mean_us: if requests.is_empty() { 0.0 } else { total_us as f64 / requests.len() as f64 },
        latency_max_us: max_us,
    })
}

/// `count` requests over consistent partial states: each takes a valid
/// output of a random instance and masks a random nonempty subset.
pub fn random_requests(instances: &[TaskInstance], count: usize, seed: u64) -> Vec<PosteriorRequest> {
    (0..count)
        .filter_map(|i| {
            let mut rng = run_rng(seed, i as u64);
            let inst = instances.choose(&mut rng)?;
            let output = sample_output(&inst.task, &inst.input, &mut rng).ok()?;
            let masked = rng.gen_range(1..=output.len().max(1));
            let mut positions: Vec<usize> = (0..output.len()).collect();
            positions.shuffle(&mut rng);
            let mut slots: Vec<Slot> = output.iter().map(|&t| Slot::Token(t)).collect();
            for &p in positions.iter().take(masked) {
                slots[p] = Slot::Masked;
            }
            Some(PosteriorRequest {
                request_id: i as u64,
                instance_id: inst.id.clone(),
                prompt: inst.prompt(),
                state: SequenceState::new(slots),
                candidate_scope: CandidateScope::Items,
            })
        })
        .collect()
}

/// The ideal model behind the protocol, for testing adapters and as a
/// drop-in server. Instances are looked up by id.
#[derive(Debug, Clone, Default)]
pub struct IdealServer {
    instances: HashMap<String, TaskInstance>,
}

impl IdealServer {
    pub fn new(instances: impl IntoIterator<Item = TaskInstance>) -> Self {
        IdealServer { instances: instances.into_iter().map(|i| (i.id.clone(), i)).collect() }
    }

    /// Every canonical instance with `1 <= n <= max_n` (all indices for the
    /// index-parameterized tasks).
    pub fn canonical(max_n: usize) -> Self {
        let mut all = Vec::new();
        for kind in TaskKind::ALL {
            for n in 1..=max_n {
                let indices: Vec<Option<usize>> = match kind {
                    TaskKind::InsertIndex => (0..=n).map(Some).collect(),
                    k if k.needs_index() => (0..n).map(Some).collect(),
                    _ => vec![None],
                };
                all.extend(indices.into_iter().filter_map(|i| TaskInstance::canonical(kind, n, i).ok()));
            }
        }
        IdealServer::new(all)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    fn answer(&self, request: &PosteriorRequest) -> Result<PosteriorResponse, (String, Option<String>)> {
        let inst = self
            .instances
            .get(&request.instance_id)
            .ok_or_else(|| (format!("unknown instance {:?}", request.instance_id), None))?;
        if request.state.len() != inst.output_len() {
            let msg = format!("state has {} positions, expected {}", request.state.len(), inst.output_len());
            return Err((msg, None));
        }
        let table = posterior_marginals(&inst.task, &inst.input, &request.state).map_err(|e| {
            let code = matches!(e, ModelError::Inconsistent(_)).then(|| INCONSISTENT_STATE.to_string());
            (e.to_string(), code)
        })?;
        Ok(PosteriorResponse::from_table(request.request_id, &table))
    }

    /// Answers one request line. Never fails: problems become error objects.
    pub fn handle_line(&self, line: &str) -> String {
        let reply = match serde_json::from_str::<PosteriorRequest>(line) {
            Ok(request) => match self.answer(&request) {
                Ok(r) => Reply::Posterior(r),
                Err((error, code)) => Reply::Error(ErrorResponse { error, request_id: Some(request.request_id), code }),
            },
            Err(e) => {
                // Echo the id when the line is JSON with a usable request_id.
                let request_id = serde_json::from_str::<serde_json::Value>(line)
                    .ok()
                    .and_then(|v| v.get("request_id").and_then(serde_json::Value::as_u64));
                Reply::Error(ErrorResponse { error: format!("malformed request: {e}"), request_id, code: None })
            }
        };
        serde_json::to_string(&reply).expect("replies serialize")
    }

    /// Serves until EOF; returns the number of requests answered.
    pub fn serve<R: BufRead, W: Write>(&self, input: R, mut output: W) -> std::io::Result<usize> {
        let mut served = 0;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(output, "{}", self.handle_line(&line))?;
            output.flush()?;
            served += 1;
        }
        Ok(served)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::{decode, SamplerConfig, Strategy, StrategyConfig};
    use crate::ideal::IdealModel;

    fn copy_request() -> PosteriorRequest {
        PosteriorRequest {
            request_id: 7,
            instance_id: "copy-n3".into(),
            prompt: String::new(),
            state: SequenceState::all_masked(3),
            candidate_scope: CandidateScope::Items,
        }
    }

    #[test]
    fn request_wire_format() {
        let mut req = copy_request();
        req.state.reveal(1, Item(1));
        let json = serde_json::to_string(&req).unwrap();
        assert_eq!(
            json,
            r#"{"request_id":7,"instance_id":"copy-n3","prompt":"","state":[null,"B",null],"candidate_scope":"items"}"#
        );
        assert_eq!(serde_json::from_str::<PosteriorRequest>(&json).unwrap(), req);
    }

    #[test]
    fn copy_all_masked_gives_point_masses() {
        let server = IdealServer::canonical(4);
        let req = copy_request();
        let reply = server.handle_line(&serde_json::to_string(&req).unwrap());
        assert_eq!(reply, r#"{"request_id":7,"rows":{"0":[["A",1.0]],"1":[["B",1.0]],"2":[["C",1.0]]}}"#);
        assert!(validate_reply(&req, &reply).is_ok());
    }

    #[test]
    fn malformed_lines_get_error_objects() {
        let server = IdealServer::canonical(2);
        assert!(server.handle_line("{not json").contains(r#""request_id":null"#));
        let reply = server.handle_line(r#"{"request_id":3,"state":[]}"#);
        assert!(reply.contains(r#""request_id":3"#) && reply.contains("error"));
        let mut req = copy_request();
        req.instance_id = "nope".into();
        let reply = server.handle_line(&serde_json::to_string(&req).unwrap());
        assert!(reply.contains("unknown instance"));
    }

    #[test]
    fn violations_are_flagged() {
        let req = copy_request();
        let short = r#"{"request_id":7,"rows":{"0":[["A",0.9]],"1":[["B",1.0]],"2":[["C",1.0]]}}"#;
        assert!(matches!(validate_reply(&req, short).unwrap_err()[..], [Violation::Normalization { position: 0, .. }]));
        let missing = r#"{"request_id":7,"rows":{"0":[["A",1.0]],"2":[["C",1.0]]}}"#;
        assert!(matches!(&validate_reply(&req, missing).unwrap_err()[..], [Violation::Coverage { missing, .. }] if missing == &vec![1]));
        let wrong_id = r#"{"request_id":8,"rows":{"0":[["A",1.0]],"1":[["B",1.0]],"2":[["C",1.0]]}}"#;
        assert!(matches!(validate_reply(&req, wrong_id).unwrap_err()[..], [Violation::IdMismatch { expected: 7, .. }]));
        assert!(matches!(validate_reply(&req, "garbage").unwrap_err()[..], [Violation::Malformed { .. }]));
    }

    #[test]
    fn adapter_matches_in_process() {
        let server = IdealServer::canonical(5);
        let inst = TaskInstance::canonical(TaskKind::Shuffle, 5, None).unwrap();
        let config = StrategyConfig::any_order(Strategy::ConfidenceTopK { k: 2 }).unwrap();
        for seed in 0..10 {
            let sampler = SamplerConfig::ancestral(seed);
            let local = decode(&mut IdealModel, &inst, &config, &sampler).unwrap();
            let mut remote = AdapterModel::new(|line: &str| server.handle_line(line));
            assert_eq!(decode(&mut remote, &inst, &config, &sampler).unwrap(), local);
        }
    }
}
