//! Closed-form accuracy predictions for the ideal model and a Monte Carlo
//! estimator that measures the same quantities by simulation.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::decoding::{decode_with_rng, run_rng, DecodeError, SamplerConfig, StrategyConfig};
use crate::ideal::IdealModel;
use crate::tasks::{TaskInstance, TaskKind};

/// Closed forms switch to log-space products above this length.
const LOG_SPACE_ABOVE: usize = 20;

#[derive(Debug, Error)]
pub enum AccuracyError {
    #[error("k = {k} does not divide n = {n}")]
    NotDivisor { n: usize, k: usize },
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("no closed form for {0}")]
    Unsupported(TaskKind),
    #[error("gamma = {gamma} is outside the closed-form regime for {kind}")]
    OutsideClosedForm { kind: TaskKind, gamma: f64 },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyEstimate {
    pub mean: f64,
    /// Zero for closed forms.
    pub trials: u64,
    /// Normal-approximation 95% half width; zero for closed forms.
    pub half_width_95: f64,
}

impl AccuracyEstimate {
    pub fn exact(mean: f64) -> Self {
        AccuracyEstimate { mean, trials: 0, half_width_95: 0.0 }
    }

    pub fn from_counts(successes: u64, trials: u64) -> Self {
        let mean = successes as f64 / trials as f64;
        AccuracyEstimate { mean, trials, half_width_95: 1.96 * (mean * (1.0 - mean) / trials as f64).sqrt() }
    }

    /// Binomial standard error at a reference accuracy `p` over `trials`.
    pub fn sigma_at(p: f64, trials: u64) -> f64 {
        (p * (1.0 - p) / trials as f64).sqrt()
    }
}

/// Probability that `k` independent uniform draws from `m` items are all distinct.
fn distinct_draws(m: usize, k: usize, log_space: bool) -> f64 {
    let mf = m as f64;
    if log_space {
        (0..k).map(|j| ((mf - j as f64) / mf).ln()).sum::<f64>().exp()
    } else {
        (0..k).map(|j| (mf - j as f64) / mf).product()
    }
}

/// `Shuffle` accuracy with `k` tokens per step: `Π_i P(m_i, k) / m_i^k`.
pub fn shuffle_topk_accuracy(n: usize, k: usize) -> Result<AccuracyEstimate, AccuracyError> {
    if n == 0 || k == 0 {
        return Err(AccuracyError::Invalid("n and k must be positive".into()));
    }
    if !n.is_multiple_of(k) {
        return Err(AccuracyError::NotDivisor { n, k });
    }
    let log_space = n > LOG_SPACE_ABOVE;
    let acc = (0..n / k).map(|i| distinct_draws(n - i * k, k, log_space)).product();
    Ok(AccuracyEstimate::exact(acc))
}

/// Greedy top-k on `ReplaceRandom`: everything is kept until the last step,
/// which succeeds only when exactly two positions remain (tie broken evenly).
pub fn replace_random_greedy_topk_accuracy(n: usize, k: usize) -> Result<AccuracyEstimate, AccuracyError> {
    if n < 2 || k == 0 {
        return Err(AccuracyError::Invalid(format!("need n >= 2 and k >= 1, got n = {n}, k = {k}")));
    }
    if !n.is_multiple_of(k) {
        return Err(AccuracyError::NotDivisor { n, k });
    }
    Ok(AccuracyEstimate::exact(match k {
        1 => 1.0,
        2 => 0.5,
        _ => 0.0,
    }))
}

/// One-step temperature sampling on `ReplaceRandom`: `((n-1)/n)^(n-1)`.
pub fn replace_random_temperature_onestep_accuracy(n: usize) -> Result<AccuracyEstimate, AccuracyError> {
    if n < 2 {
        return Err(AccuracyError::Invalid(format!("need n >= 2, got {n}")));
    }
    let nf = n as f64;
    let acc = if n > LOG_SPACE_ABOVE {
        ((nf - 1.0) * ((nf - 1.0) / nf).ln()).exp()
    } else {
        ((nf - 1.0) / nf).powi(n as i32 - 1)
    };
    Ok(AccuracyEstimate::exact(acc))
}

/// Large-`n` limit of [`replace_random_temperature_onestep_accuracy`].
pub fn replace_random_temperature_onestep_limit() -> f64 {
    (-1.0f64).exp()
}

/// Greedy confidence-threshold accuracy.
pub fn threshold_accuracy(kind: TaskKind, n: usize, gamma: f64) -> Result<AccuracyEstimate, AccuracyError> {
    if n == 0 || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(AccuracyError::Invalid(format!("n = {n}, gamma = {gamma}")));
    }
    match kind {
        TaskKind::Shuffle if n == 1 || gamma > 0.5 => Ok(AccuracyEstimate::exact(1.0)),
        TaskKind::Shuffle => Err(AccuracyError::OutsideClosedForm { kind, gamma }),
        TaskKind::ReplaceRandom => {
            let keep = (n as f64 - 1.0) / n as f64;
            Ok(AccuracyEstimate::exact(if gamma >= keep { 1.0 } else { 0.0 }))
        }
        other => Err(AccuracyError::Unsupported(other)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub accuracy: AccuracyEstimate,
    pub tokens_per_step_mean: f64,
}

/// Fraction of ideal-model decodes producing a valid output. Trial `i`
/// draws from stream `i` of the sampler seed, so results do not depend on
/// scheduling.
pub fn monte_carlo_accuracy(
    instance: &TaskInstance,
    config: &StrategyConfig,
    sampler: &SamplerConfig,
    trials: u64,
) -> Result<SimulationSummary, AccuracyError> {
    if trials == 0 {
        return Err(AccuracyError::Invalid("trials must be >= 1".into()));
    }
    let outcomes: Vec<(bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = run_rng(sampler.seed(), i);
            let trace = decode_with_rng(&mut IdealModel, instance, config, sampler, &mut rng)?;
            let ok = trace.is_valid_for(instance);
            Ok((ok, trace.tokens_per_step))
        })
        .collect::<Result<_, DecodeError>>()?;
    let successes = outcomes.iter().filter(|(ok, _)| *ok).count() as u64;
    let tokens: f64 = outcomes.iter().map(|(_, t)| t).sum();
    Ok(SimulationSummary {
        accuracy: AccuracyEstimate::from_counts(successes, trials),
        tokens_per_step_mean: tokens / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::Strategy;

    fn double_factorial(n: u64) -> f64 {
        (1..=n).rev().step_by(2).map(|v| v as f64).product()
    }

    #[test]
    fn shuffle_special_cases() {
        assert!((shuffle_topk_accuracy(3, 3).unwrap().mean - 6.0 / 27.0).abs() < 1e-15);
        assert!((shuffle_topk_accuracy(4, 2).unwrap().mean - 0.375).abs() < 1e-15);
        for n in 1..12 {
            assert_eq!(shuffle_topk_accuracy(n, 1).unwrap().mean, 1.0);
        }
        for n in (2..=16).step_by(2) {
            let expected = double_factorial(n as u64 - 1) / double_factorial(n as u64);
            assert!((shuffle_topk_accuracy(n, 2).unwrap().mean - expected).abs() < 1e-12);
        }
        for n in 1..=10u64 {
            let expected: f64 = (1..=n).map(|v| v as f64).product::<f64>() / (n as f64).powi(n as i32);
            assert!((shuffle_topk_accuracy(n as usize, n as usize).unwrap().mean - expected).abs() < 1e-12);
        }
        assert!(matches!(shuffle_topk_accuracy(5, 2), Err(AccuracyError::NotDivisor { .. })));
    }

    #[test]
    fn log_space_matches_direct() {
        for (m, k) in [(24, 6), (30, 2), (40, 40)] {
            let a = distinct_draws(m, k, true);
            let b = distinct_draws(m, k, false);
            assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "{m} {k}");
        }
    }

    #[test]
    fn replace_random_closed_forms() {
        assert_eq!(replace_random_greedy_topk_accuracy(4, 2).unwrap().mean, 0.5);
        assert_eq!(replace_random_greedy_topk_accuracy(6, 3).unwrap().mean, 0.0);
        assert_eq!(replace_random_greedy_topk_accuracy(4, 1).unwrap().mean, 1.0);
        assert!(replace_random_greedy_topk_accuracy(5, 2).is_err());
        assert_eq!(replace_random_temperature_onestep_accuracy(4).unwrap().mean, 0.421875);
        assert_eq!(replace_random_temperature_onestep_accuracy(2).unwrap().mean, 0.5);
        assert!((replace_random_temperature_onestep_limit() - 0.3679).abs() < 1e-4);
        let big = replace_random_temperature_onestep_accuracy(100_000).unwrap().mean;
        assert!((big - replace_random_temperature_onestep_limit()).abs() < 1e-5);
    }

    #[test]
    fn threshold_closed_forms() {
        assert_eq!(threshold_accuracy(TaskKind::Shuffle, 10, 0.6).unwrap().mean, 1.0);
        assert_eq!(threshold_accuracy(TaskKind::ReplaceRandom, 10, 0.8).unwrap().mean, 0.0);
        assert_eq!(threshold_accuracy(TaskKind::ReplaceRandom, 10, 0.95).unwrap().mean, 1.0);
        assert_eq!(threshold_accuracy(TaskKind::ReplaceRandom, 10, 0.9).unwrap().mean, 1.0);
        assert!(threshold_accuracy(TaskKind::Shuffle, 4, 0.4).is_err());
        assert!(threshold_accuracy(TaskKind::Copy, 4, 0.4).is_err());
    }

    #[test]
    fn copy_is_always_solved() {
        let inst = TaskInstance::canonical(TaskKind::Copy, 5, None).unwrap();
        let config = StrategyConfig::any_order(Strategy::RandomTopK { k: 5 }).unwrap();
        let summary = monte_carlo_accuracy(&inst, &config, &SamplerConfig::ancestral(3), 200).unwrap();
        assert_eq!(summary.accuracy.mean, 1.0);
        assert_eq!(summary.tokens_per_step_mean, 5.0);
        assert!(monte_carlo_accuracy(&inst, &config, &SamplerConfig::ancestral(3), 0).is_err());
    }

    #[test]
    fn confidence_topk_greedy_one_step_fails() {
        let inst = TaskInstance::canonical(TaskKind::ReplaceRandom, 4, None).unwrap();
        let config = StrategyConfig::any_order(Strategy::ConfidenceTopK { k: 4 }).unwrap();
        let summary = monte_carlo_accuracy(&inst, &config, &SamplerConfig::greedy(9), 2_000).unwrap();
        assert_eq!(summary.accuracy.mean, 0.0);
        assert_eq!(summary.accuracy.half_width_95, 0.0);
    }
}
