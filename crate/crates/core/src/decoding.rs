//! The parallel decoding loop and the unmasking strategies.
//!
//! Each step issues exactly one posterior query, picks a set of masked
//! positions with the configured strategy, and samples every picked
//! position independently from its marginal. Revealed tokens only become
//! visible to the model at the next step.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ideal::{PosteriorRow, PosteriorTable, SequenceState};
use crate::model::{ModelError, PosteriorModel};
use crate::tasks::{is_valid_output, Item, TaskInstance};

/// Scores closer than this are treated as ties.
const SCORE_RESOLUTION: f64 = 1e12;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("empty distribution for position {0}")]
    EmptyRow(usize),
    #[error("model returned no candidate rows for the active positions")]
    NoCandidates,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Unmasking rule; each variant carries exactly its own parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Strategy {
    RandomTopK { k: usize },
    ConfidenceTopK { k: usize },
    MarginTopK { k: usize },
    EntropyTopK { k: usize },
    LeftToRightTopK { k: usize },
    ConfidenceThreshold { gamma: f64 },
    FactorBased { f: f64 },
}

impl Strategy {
    pub fn k(&self) -> Option<usize> {
        match *self {
            Strategy::RandomTopK { k }
            | Strategy::ConfidenceTopK { k }
            | Strategy::MarginTopK { k }
            | Strategy::EntropyTopK { k }
            | Strategy::LeftToRightTopK { k } => Some(k),
            _ => None,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Strategy::ConfidenceThreshold { gamma } => Some(gamma),
            _ => None,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Strategy::RandomTopK { .. } => "random_top_k",
            Strategy::ConfidenceTopK { .. } => "confidence_top_k",
            Strategy::MarginTopK { .. } => "margin_top_k",
            Strategy::EntropyTopK { .. } => "entropy_top_k",
            Strategy::LeftToRightTopK { .. } => "left_to_right_top_k",
            Strategy::ConfidenceThreshold { .. } => "confidence_threshold",
            Strategy::FactorBased { .. } => "factor_based",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStrategyConfig")]
pub struct StrategyConfig {
    #[serde(flatten)]
    strategy: Strategy,
    /// Semi-autoregressive block length; `None` means full any-order decoding.
    #[serde(skip_serializing_if = "Option::is_none")]
    block_length: Option<usize>,
}

#[derive(Deserialize)]
struct RawStrategyConfig {
    #[serde(flatten)]
    strategy: Strategy,
    #[serde(default)]
    block_length: Option<usize>,
}

impl TryFrom<RawStrategyConfig> for StrategyConfig {
    type Error = DecodeError;

    fn try_from(raw: RawStrategyConfig) -> Result<Self, Self::Error> {
        StrategyConfig::new(raw.strategy, raw.block_length)
    }
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, block_length: Option<usize>) -> Result<Self, DecodeError> {
        if let Some(k) = strategy.k() {
            if k == 0 {
                return Err(DecodeError::Config("k must be positive".into()));
            }
        }
        match strategy {
            Strategy::ConfidenceThreshold { gamma } if !(gamma > 0.0 && gamma <= 1.0) => {
                return Err(DecodeError::Config(format!("gamma {gamma} outside (0, 1]")));
            }
            Strategy::FactorBased { f } if !(f > 0.0 && f.is_finite()) => {
                return Err(DecodeError::Config(format!("factor {f} must be positive")));
            }
            _ => {}
        }
        if block_length == Some(0) {
            return Err(DecodeError::Config("block length must be positive".into()));
        }
        Ok(StrategyConfig { strategy, block_length })
    }

    pub fn any_order(strategy: Strategy) -> Result<Self, DecodeError> {
        StrategyConfig::new(strategy, None)
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn block_length(&self) -> Option<usize> {
        self.block_length
    }
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.strategy {
            Strategy::ConfidenceThreshold { gamma } => write!(f, "confidence_threshold(gamma={gamma})")?,
            Strategy::FactorBased { f: factor } => write!(f, "factor_based(f={factor})")?,
            s => write!(f, "{}(k={})", s.family_name(), s.k().expect("top-k family"))?,
        }
        if let Some(b) = self.block_length {
            write!(f, "/block={b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSamplerConfig")]
pub struct SamplerConfig {
    temperature: f64,
    seed: u64,
}

#[derive(Deserialize)]
struct RawSamplerConfig {
    temperature: f64,
    seed: u64,
}

impl TryFrom<RawSamplerConfig> for SamplerConfig {
    type Error = DecodeError;

    fn try_from(raw: RawSamplerConfig) -> Result<Self, Self::Error> {
        SamplerConfig::new(raw.temperature, raw.seed)
    }
}

impl SamplerConfig {
    pub fn new(temperature: f64, seed: u64) -> Result<Self, DecodeError> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(DecodeError::Config(format!("temperature {temperature} must be >= 0")));
        }
        Ok(SamplerConfig { temperature, seed })
    }

    pub fn greedy(seed: u64) -> Self {
        SamplerConfig { temperature: 0.0, seed }
    }

    pub fn ancestral(seed: u64) -> Self {
        SamplerConfig { temperature: 1.0, seed }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SamplerConfig { seed, ..*self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Independent stream `index` under a master seed.
pub fn run_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeStep {
    pub positions: Vec<usize>,
    pub items: Vec<Item>,
    /// Confidence of each unmasked position when it was selected.
    pub confidences: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub steps: Vec<DecodeStep>,
    /// Complete unless `dead_end` is set.
    pub final_state: SequenceState,
    /// Parallel sampling revealed tokens that no valid output contains
    /// (e.g. the same item twice in a shuffle); decoding stopped there.
    pub dead_end: bool,
    pub total_steps: usize,
    /// Revealed tokens divided by steps taken.
    pub tokens_per_step: f64,
}

impl DecodeTrace {
    pub fn unmask_order(&self) -> Vec<Vec<usize>> {
        self.steps.iter().map(|s| s.positions.clone()).collect()
    }

    /// The generated sequence, if decoding finished.
    pub fn final_sequence(&self) -> Option<Vec<Item>> {
        self.final_state.tokens()
    }

    pub fn is_valid_for(&self, instance: &TaskInstance) -> bool {
        self.final_sequence().is_some_and(|out| is_valid_output(&instance.task, &instance.input, &out))
    }
}

fn quantize(score: f64) -> f64 {
    (score * SCORE_RESOLUTION).round()
}

/// Rows ordered by descending score; ties in uniformly random order.
fn ranked<'a, R: Rng + ?Sized>(
    rows: &'a [PosteriorRow],
    score: impl Fn(&PosteriorRow) -> f64,
    rng: &mut R,
) -> Vec<&'a PosteriorRow> {
    let mut order: Vec<&PosteriorRow> = rows.iter().collect();
    order.shuffle(rng);
    order.sort_by(|a, b| quantize(score(b)).total_cmp(&quantize(score(a))));
    order
}

/// Positions to unmask this step, ascending.
pub fn select_unmask<R: Rng + ?Sized>(
    config: &StrategyConfig,
    posterior: &PosteriorTable,
    rng: &mut R,
) -> Vec<usize> {
    let rows = posterior.rows();
    if rows.is_empty() {
        return Vec::new();
    }
    let mut chosen: Vec<usize> = match config.strategy {
        Strategy::RandomTopK { k } => {
            rows.choose_multiple(rng, k.min(rows.len())).map(|r| r.position).collect()
        }
        Strategy::LeftToRightTopK { k } => rows.iter().take(k).map(|r| r.position).collect(),
        Strategy::ConfidenceTopK { k } => {
            ranked(rows, PosteriorRow::confidence, rng).into_iter().take(k).map(|r| r.position).collect()
        }
        Strategy::MarginTopK { k } => {
            ranked(rows, PosteriorRow::margin, rng).into_iter().take(k).map(|r| r.position).collect()
        }
        Strategy::EntropyTopK { k } => {
            ranked(rows, |r| -r.entropy(), rng).into_iter().take(k).map(|r| r.position).collect()
        }
        Strategy::ConfidenceThreshold { gamma } => {
            let above: Vec<usize> =
                rows.iter().filter(|r| r.confidence() > gamma).map(|r| r.position).collect();
            if above.is_empty() {
                vec![ranked(rows, PosteriorRow::confidence, rng)[0].position]
            } else {
                above
            }
        }
        Strategy::FactorBased { f } => {
            let order = ranked(rows, PosteriorRow::confidence, rng);
            let count = (1..=order.len())
                .filter(|&m| (m as f64 + 1.0) * (1.0 - order[m - 1].confidence()) < f)
                .max()
                .unwrap_or(1);
            order.into_iter().take(count).map(|r| r.position).collect()
        }
    };
    chosen.sort_unstable();
    chosen
}

/// Greedy argmax at temperature 0 (uniform tie-breaks), otherwise a draw
/// proportional to `p^(1/temperature)`.
pub fn sample_token<R: Rng + ?Sized>(
    row: &PosteriorRow,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<Item, DecodeError> {
    if row.probs.is_empty() {
        return Err(DecodeError::EmptyRow(row.position));
    }
    if sampler.temperature == 0.0 {
        let top = row.confidence();
        let ties: Vec<Item> = row
            .probs
            .iter()
            .filter(|(_, p)| quantize(*p) == quantize(top))
            .map(|(i, _)| *i)
            .collect();
        return Ok(*ties.choose(rng).expect("nonempty row"));
    }
    let inv = 1.0 / sampler.temperature;
    let max_log = row.probs.iter().map(|(_, p)| p.ln()).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = row.probs.iter().map(|(_, p)| ((p.ln() - max_log) * inv).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for ((item, _), w) in row.probs.iter().zip(&weights) {
        if u < *w {
            return Ok(*item);
        }
        u -= w;
    }
    Ok(row.probs.last().expect("nonempty row").0)
}

/// Runs one decode with a fresh generator seeded from `sampler`.
pub fn decode<M: PosteriorModel + ?Sized>(
    model: &mut M,
    instance: &TaskInstance,
    config: &StrategyConfig,
    sampler: &SamplerConfig,
) -> Result<DecodeTrace, DecodeError> {
    let mut rng = sampler.rng();
    decode_with_rng(model, instance, config, sampler, &mut rng)
}

/// Like [`decode`] but draws from a caller-owned generator.
pub fn decode_with_rng<M: PosteriorModel + ?Sized, R: Rng + ?Sized>(
    model: &mut M,
    instance: &TaskInstance,
    config: &StrategyConfig,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<DecodeTrace, DecodeError> {
    let len = instance.output_len();
    let mut state = SequenceState::all_masked(len);
    let mut steps = Vec::new();
    let mut dead_end = false;
    while !state.is_complete() {
        let posterior = match model.posterior(instance, &state) {
            Ok(p) => p,
            Err(ModelError::Inconsistent(_)) if !steps.is_empty() => {
                dead_end = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let candidates = match config.block_length {
            Some(block) => {
                let first = state.masked_positions()[0];
                let start = first / block * block;
                posterior.restrict(start..start + block)
            }
            None => posterior,
        };
        let positions = select_unmask(config, &candidates, rng);
        if positions.is_empty() {
            return Err(DecodeError::NoCandidates);
        }
        let mut items = Vec::with_capacity(positions.len());
        let mut confidences = Vec::with_capacity(positions.len());
        for &p in &positions {
            let row = candidates.row(p).ok_or(DecodeError::NoCandidates)?;
            if state.slots()[p] != crate::ideal::Slot::Masked {
                return Err(ModelError::Protocol(format!("row for already revealed position {p}")).into());
            }
            items.push(sample_token(row, sampler, rng)?);
            confidences.push(row.confidence());
        }
        for (&p, &item) in positions.iter().zip(&items) {
            state.reveal(p, item);
        }
        steps.push(DecodeStep { positions, items, confidences });
    }
    let total_steps = steps.len();
    let revealed = len - state.masked_positions().len();
    Ok(DecodeTrace {
        steps,
        final_state: state,
        dead_end,
        total_steps,
        tokens_per_step: if total_steps == 0 { 0.0 } else { revealed as f64 / total_steps as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ideal::IdealModel;
    use crate::tasks::TaskKind;

    fn table(confidences: &[f64]) -> PosteriorTable {
        PosteriorTable::new(
            confidences
                .iter()
                .enumerate()
                .map(|(p, c)| {
                    let mut probs = vec![(Item(0), *c)];
                    if *c < 1.0 {
                        probs.push((Item(1), 1.0 - c));
                    }
                    PosteriorRow::new(p, probs)
                })
                .collect(),
        )
    }

    fn cfg(strategy: Strategy) -> StrategyConfig {
        StrategyConfig::any_order(strategy).unwrap()
    }

    #[test]
    fn threshold_falls_back_to_single_argmax() {
        let mut rng = run_rng(1, 0);
        let picked = select_unmask(&cfg(Strategy::ConfidenceThreshold { gamma: 0.6 }), &table(&[0.5, 0.5]), &mut rng);
        assert_eq!(picked.len(), 1);
        let picked = select_unmask(&cfg(Strategy::ConfidenceThreshold { gamma: 0.6 }), &table(&[0.7, 0.5, 0.9]), &mut rng);
        assert_eq!(picked, vec![0, 2]);
    }

    #[test]
    fn factor_rule() {
        let mut rng = run_rng(2, 0);
        let picked = select_unmask(&cfg(Strategy::FactorBased { f: 1.0 }), &table(&[0.40, 0.99, 0.98]), &mut rng);
        assert_eq!(picked, vec![1, 2]);
        // (1+1)(1-0.5) = 1 is not < 1, yet one position is still chosen
        let picked = select_unmask(&cfg(Strategy::FactorBased { f: 1.0 }), &table(&[0.5, 0.5]), &mut rng);
        assert_eq!(picked.len(), 1);
    }

    #[test]
    fn top_k_families() {
        let mut rng = run_rng(3, 0);
        let t = table(&[0.6, 0.9, 0.55, 0.8]);
        assert_eq!(select_unmask(&cfg(Strategy::ConfidenceTopK { k: 2 }), &t, &mut rng), vec![1, 3]);
        assert_eq!(select_unmask(&cfg(Strategy::MarginTopK { k: 1 }), &t, &mut rng), vec![1]);
        assert_eq!(select_unmask(&cfg(Strategy::EntropyTopK { k: 2 }), &t, &mut rng), vec![1, 3]);
        assert_eq!(select_unmask(&cfg(Strategy::LeftToRightTopK { k: 3 }), &t, &mut rng), vec![0, 1, 2]);
        assert_eq!(select_unmask(&cfg(Strategy::RandomTopK { k: 9 }), &t, &mut rng), vec![0, 1, 2, 3]);
    }

    #[test]
    fn greedy_sampling() {
        let mut rng = run_rng(4, 0);
        let row = PosteriorRow::new(0, vec![(Item(0), 0.7), (Item(1), 0.3)]);
        for _ in 0..20 {
            assert_eq!(sample_token(&row, &SamplerConfig::greedy(0), &mut rng).unwrap(), Item(0));
        }
        let empty = PosteriorRow::new(3, vec![]);
        assert!(matches!(sample_token(&empty, &SamplerConfig::greedy(0), &mut rng), Err(DecodeError::EmptyRow(3))));
    }

    #[test]
    fn config_validation() {
        assert!(StrategyConfig::new(Strategy::RandomTopK { k: 0 }, None).is_err());
        assert!(StrategyConfig::new(Strategy::ConfidenceThreshold { gamma: 0.0 }, None).is_err());
        assert!(StrategyConfig::new(Strategy::ConfidenceThreshold { gamma: 1.0 }, None).is_ok());
        assert!(StrategyConfig::new(Strategy::FactorBased { f: -1.0 }, None).is_err());
        assert!(StrategyConfig::new(Strategy::RandomTopK { k: 1 }, Some(0)).is_err());
        assert!(SamplerConfig::new(-0.5, 0).is_err());
        let json = r#"{"family":"confidence_threshold","gamma":0.9,"block_length":4}"#;
        let parsed: StrategyConfig = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.block_length(), Some(4));
        assert_eq!(serde_json::to_string(&parsed).unwrap(), json);
        assert!(serde_json::from_str::<StrategyConfig>(r#"{"family":"random_top_k","k":0}"#).is_err());
        assert_eq!(parsed.to_string(), "confidence_threshold(gamma=0.9)/block=4");
    }

    #[test]
    fn copy_step_counts() {
        let inst = TaskInstance::canonical(TaskKind::Copy, 3, None).unwrap();
        let cases = [
            (Strategy::RandomTopK { k: 2 }, 2),
            (Strategy::LeftToRightTopK { k: 1 }, 3),
            (Strategy::ConfidenceTopK { k: 3 }, 1),
            (Strategy::ConfidenceThreshold { gamma: 0.9 }, 1),
            (Strategy::ConfidenceThreshold { gamma: 1.0 }, 3),
            (Strategy::FactorBased { f: 1.0 }, 1),
        ];
        for (strategy, steps) in cases {
            let trace = decode(&mut IdealModel, &inst, &cfg(strategy), &SamplerConfig::greedy(5)).unwrap();
            assert_eq!(trace.final_sequence(), Some(inst.input.clone()));
            assert_eq!(trace.total_steps, steps, "{strategy:?}");
        }
    }

    #[test]
    fn semi_ar_stays_in_block() {
        let inst = TaskInstance::canonical(TaskKind::Shuffle, 6, None).unwrap();
        let config = StrategyConfig::new(Strategy::RandomTopK { k: 2 }, Some(3)).unwrap();
        let trace = decode(&mut IdealModel, &inst, &config, &SamplerConfig::ancestral(11)).unwrap();
        let mut finished_first_block = false;
        for step in &trace.steps {
            let in_first = step.positions.iter().all(|p| *p < 3);
            let in_second = step.positions.iter().all(|p| *p >= 3);
            assert!(in_first || in_second);
            if in_second {
                finished_first_block = true;
            } else {
                assert!(!finished_first_block);
            }
        }
    }

    #[test]
    fn replace_random_high_threshold_succeeds() {
        let inst = TaskInstance::canonical(TaskKind::ReplaceRandom, 4, None).unwrap();
        let config = cfg(Strategy::ConfidenceThreshold { gamma: 0.9 });
        for seed in 0..50 {
            let trace = decode(&mut IdealModel, &inst, &config, &SamplerConfig::greedy(seed)).unwrap();
            assert!(trace.is_valid_for(&inst));
            assert_eq!(trace.total_steps, 4);
        }
    }
}
