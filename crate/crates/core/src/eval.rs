//! Scoring of model outputs, speed-quality aggregation and the task
//! characterization metrics.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{BenchInstance, CheckOutcome};
use crate::decoding::{decode_with_rng, run_rng, DecodeError, SamplerConfig, StrategyConfig};
use crate::ideal::IdealModel;
use crate::tasks::{Item, TaskInstance};

/// Version stamped into every record and report this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Accuracy values closer than this count as equal when comparing options.
const ACCURACY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records")]
    NoRecords,
    #[error("group {0:?} has no records")]
    EmptyGroup(String),
    #[error("record for {0:?} lacks total_steps or output_tokens")]
    MissingSteps(String),
    #[error("instance {0:?} has no gamma = 1.0 run to fall back on")]
    MissingFallback(String),
    #[error("instance {0:?} not found")]
    UnknownInstance(String),
    #[error("all scores are zero")]
    AllZeroScores,
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// One scored generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub instance_id: String,
    /// Grouping key for aggregation; defaults to the strategy's display form.
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_items: Option<Vec<Item>>,
    /// Generated length |Y|, the numerator of tokens per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
    /// `None` for unscored (external-metric) instances.
    pub score: Option<f64>,
    #[serde(default)]
    pub parse_failure: bool,
}

impl RunRecord {
    pub fn tokens_per_step(&self) -> Option<f64> {
        match (self.output_tokens, self.total_steps) {
            (Some(t), Some(s)) if s > 0 => Some(t as f64 / s as f64),
            _ => None,
        }
    }

    fn gamma(&self) -> Option<f64> {
        self.strategy.and_then(|s| s.strategy().gamma())
    }
}

/// A line of external model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub instance_id: String,
    pub output_text: String,
    #[serde(default)]
    pub total_steps: Option<usize>,
    #[serde(default)]
    pub output_tokens: Option<usize>,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub strategy: Option<StrategyConfig>,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub tokens_per_step: f64,
    pub accuracy: f64,
    pub label: String,
}

pub fn score_instance(instance: &BenchInstance, output: &str) -> CheckOutcome {
    instance.checker.check(output)
}

/// Scores each output against its instance, in input order.
pub fn score_outputs(instances: &[BenchInstance], outputs: &[ModelOutput]) -> Result<Vec<RunRecord>, EvalError> {
    let by_id: HashMap<&str, &BenchInstance> = instances.iter().map(|i| (i.id.as_str(), i)).collect();
    outputs
        .par_iter()
        .map(|out| {
            let inst = by_id.get(out.instance_id.as_str()).ok_or_else(|| EvalError::UnknownInstance(out.instance_id.clone()))?;
            if out.total_steps == Some(0) {
                return Err(EvalError::InvalidRecord(format!("{}: total_steps must be >= 1", out.instance_id)));
            }
            let outcome = score_instance(inst, &out.output_text);
            let label = match (&out.label, &out.strategy) {
                (Some(l), _) => l.clone(),
                (None, Some(s)) => s.to_string(),
                (None, None) => "default".to_string(),
            };
            Ok(RunRecord {
                schema_version: SCHEMA_VERSION,
                instance_id: out.instance_id.clone(),
                label,
                strategy: out.strategy,
                sampler: out.sampler,
                output_text: Some(out.output_text.clone()),
                output_items: None,
                output_tokens: out.output_tokens,
                total_steps: out.total_steps,
                score: outcome.score,
                parse_failure: outcome.parse_failure,
            })
        })
        .collect()
}

fn scored(records: &[RunRecord]) -> impl Iterator<Item = &RunRecord> {
    records.iter().filter(|r| r.score.is_some())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub label: String,
    pub records: usize,
    pub accuracy: f64,
    pub parse_failures: usize,
}

/// Mean score per label over scored records; needs no step counts.
pub fn accuracy_by_label(records: &[RunRecord]) -> Vec<AccuracySummary> {
    let mut groups: BTreeMap<&str, (usize, f64, usize)> = BTreeMap::new();
    for r in scored(records) {
        let g = groups.entry(&r.label).or_default();
        g.0 += 1;
        g.1 += r.score.unwrap_or(0.0);
        g.2 += usize::from(r.parse_failure);
    }
    groups
        .into_iter()
        .map(|(label, (n, total, failures))| AccuracySummary {
            label: label.to_string(),
            records: n,
            accuracy: total / n as f64,
            parse_failures: failures,
        })
        .collect()
}

fn point(label: &str, records: &[&RunRecord]) -> Result<TradeoffPoint, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyGroup(label.to_string()));
    }
    let mut tps = 0.0;
    let mut acc = 0.0;
    for r in records {
        tps += r.tokens_per_step().ok_or_else(|| EvalError::MissingSteps(r.instance_id.clone()))?;
        acc += r.score.unwrap_or(0.0);
    }
    let n = records.len() as f64;
    Ok(TradeoffPoint { tokens_per_step: tps / n, accuracy: acc / n, label: label.to_string() })
}

/// One point per label: mean accuracy and mean per-record tokens per step.
/// Points are ordered by label.
pub fn aggregate_tradeoff(records: &[RunRecord]) -> Result<Vec<TradeoffPoint>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut groups: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in scored(records) {
        groups.entry(&r.label).or_default().push(r);
    }
    if groups.is_empty() {
        return Err(EvalError::EmptyGroup("scored records".into()));
    }
    groups.into_iter().map(|(label, rs)| point(label, &rs)).collect()
}

/// Per instance, the best-scoring run (fewest steps among ties) across a
/// confidence-threshold grid. Every instance must include a gamma = 1.0 run.
pub fn oracle_tradeoff(records: &[RunRecord]) -> Result<TradeoffPoint, EvalError> {
    let mut by_instance: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in scored(records) {
        by_instance.entry(&r.instance_id).or_default().push(r);
    }
    if by_instance.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut picks = Vec::with_capacity(by_instance.len());
    for (id, runs) in by_instance {
        if !runs.iter().any(|r| r.gamma() == Some(1.0)) {
            return Err(EvalError::MissingFallback(id.to_string()));
        }
        let mut best: Option<&RunRecord> = None;
        for r in runs {
            let steps = r.total_steps.ok_or_else(|| EvalError::MissingSteps(r.instance_id.clone()))?;
            let better = match best {
                None => true,
                Some(b) => {
                    let (rs, bs) = (r.score.unwrap_or(0.0), b.score.unwrap_or(0.0));
                    rs > bs + ACCURACY_TOLERANCE
                        || ((rs - bs).abs() <= ACCURACY_TOLERANCE && steps < b.total_steps.unwrap_or(usize::MAX))
                }
            };
            if better {
                best = Some(r);
            }
        }
        picks.push(best.expect("nonempty"));
    }
    point("oracle", &picks)
}

/// `Σ k·score_k / Σ score_k`.
pub fn parallelizability_center_of_mass(scores_by_k: &BTreeMap<usize, f64>) -> Result<f64, EvalError> {
    let total: f64 = scores_by_k.values().sum();
    if total <= 0.0 {
        return Err(EvalError::AllZeroScores);
    }
    Ok(scores_by_k.iter().map(|(&k, &s)| k as f64 * s).sum::<f64>() / total)
}

/// Least-squares slope of score against raw block length; positive means
/// larger blocks (less left-to-right constraint) score higher.
pub fn order_sensitivity_slope(scores_by_block_length: &BTreeMap<usize, f64>) -> Result<f64, EvalError> {
    let n = scores_by_block_length.len();
    if n < 2 {
        return Err(EvalError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mean_x = scores_by_block_length.keys().map(|&b| b as f64).sum::<f64>() / nf;
    let mean_y = scores_by_block_length.values().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&b, &s) in scores_by_block_length {
        let dx = b as f64 - mean_x;
        sxy += dx * (s - mean_y);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// Ideal-model runs of every config on every instance. Run `r` of instance
/// `i` uses stream `i * runs + r` for all configs, and its record id is
/// `"{id}#{r}"` so each run is its own sample for the oracle.
pub fn ideal_sweep(
    instances: &[TaskInstance],
    configs: &[StrategyConfig],
    sampler: &SamplerConfig,
    runs: u64,
) -> Result<Vec<RunRecord>, EvalError> {
    let jobs: Vec<(usize, u64, usize)> = (0..instances.len())
        .flat_map(|i| (0..runs).flat_map(move |r| (0..configs.len()).map(move |c| (i, r, c))))
        .collect();
    jobs.into_par_iter()
        .map(|(i, r, c)| {
            let inst = &instances[i];
            let config = &configs[c];
            let mut rng = run_rng(sampler.seed(), i as u64 * runs + r);
            let trace = decode_with_rng(&mut IdealModel, inst, config, sampler, &mut rng)?;
            let ok = trace.is_valid_for(inst);
            let revealed = inst.output_len() - trace.final_state.masked_positions().len();
            Ok(RunRecord {
                schema_version: SCHEMA_VERSION,
                instance_id: format!("{}#{r}", inst.id),
                label: config.to_string(),
                strategy: Some(*config),
                sampler: Some(*sampler),
                output_text: None,
                output_items: trace.final_sequence(),
                output_tokens: Some(revealed),
                total_steps: Some(trace.total_steps),
                score: Some(if ok { 1.0 } else { 0.0 }),
                parse_failure: false,
            })
        })
        .collect()
}

/// The confidence-threshold grid `0.5, 0.6, ..., 1.0`.
pub fn default_gamma_grid() -> Vec<f64> {
    (5..=10).map(|g| g as f64 / 10.0).collect()
}
