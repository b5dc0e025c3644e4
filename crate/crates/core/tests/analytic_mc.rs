//! Closed-form accuracies against ideal-model Monte Carlo.

use pardec_core::analytic::{
    monte_carlo_accuracy, replace_random_greedy_topk_accuracy, replace_random_temperature_onestep_accuracy,
    shuffle_topk_accuracy, threshold_accuracy, AccuracyEstimate,
};
use pardec_core::{SamplerConfig, Strategy, StrategyConfig, TaskInstance, TaskKind};

const TRIALS: u64 = 100_000;

fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|k| n.is_multiple_of(*k)).collect()
}

fn within_4_sigma(mc: f64, closed: f64, trials: u64) -> bool {
    let sigma = AccuracyEstimate::sigma_at(closed, trials);
    if sigma == 0.0 {
        mc == closed
    } else {
        (mc - closed).abs() <= 4.0 * sigma
    }
}

fn simulate(kind: TaskKind, n: usize, strategy: Strategy, sampler: SamplerConfig, trials: u64) -> (f64, f64) {
    let instance = TaskInstance::canonical(kind, n, None).unwrap();
    let config = StrategyConfig::any_order(strategy).unwrap();
    let s = monte_carlo_accuracy(&instance, &config, &sampler, trials).unwrap();
    (s.accuracy.mean, s.tokens_per_step_mean)
}

#[test]
fn shuffle_random_topk() {
    for n in [2, 3, 4, 6] {
        for k in divisors(n) {
            let closed = shuffle_topk_accuracy(n, k).unwrap().mean;
            let (mc, tps) = simulate(TaskKind::Shuffle, n, Strategy::RandomTopK { k }, SamplerConfig::ancestral(n as u64), TRIALS);
            assert!(within_4_sigma(mc, closed, TRIALS), "n={n} k={k}: {mc} vs {closed}");
            // Each successful run reveals `k` per step; dead ends stop early.
            assert!(tps <= k as f64 + 1e-12);
        }
    }
}

/// Greedy Shuffle is covered by the same expression through uniform ties.
#[test]
fn shuffle_greedy_confidence_topk() {
    for (n, k) in [(4, 2), (6, 3), (3, 3)] {
        let closed = shuffle_topk_accuracy(n, k).unwrap().mean;
        let (mc, _) = simulate(TaskKind::Shuffle, n, Strategy::ConfidenceTopK { k }, SamplerConfig::greedy(7), TRIALS);
        assert!(within_4_sigma(mc, closed, TRIALS), "n={n} k={k}: {mc} vs {closed}");
    }
}

#[test]
fn replace_random_greedy_and_one_step() {
    for n in [2, 3, 4, 6] {
        for k in divisors(n) {
            let closed = replace_random_greedy_topk_accuracy(n, k).unwrap().mean;
            let (mc, _) =
                simulate(TaskKind::ReplaceRandom, n, Strategy::ConfidenceTopK { k }, SamplerConfig::greedy(1), TRIALS);
            assert!(within_4_sigma(mc, closed, TRIALS), "greedy n={n} k={k}: {mc} vs {closed}");
        }
    }
    for n in [2, 3, 4, 6, 8] {
        let closed = replace_random_temperature_onestep_accuracy(n).unwrap().mean;
        let (mc, tps) =
            simulate(TaskKind::ReplaceRandom, n, Strategy::RandomTopK { k: n }, SamplerConfig::ancestral(2), TRIALS);
        assert!(within_4_sigma(mc, closed, TRIALS), "tau=1 n={n}: {mc} vs {closed}");
        assert_eq!(tps, n as f64);
    }
}

#[test]
fn shuffle_accuracy_is_nonincreasing_in_k() {
    for n in 1..=24 {
        let accs: Vec<f64> = divisors(n).into_iter().map(|k| shuffle_topk_accuracy(n, k).unwrap().mean).collect();
        for w in accs.windows(2) {
            assert!(w[0] >= w[1], "n={n}: {accs:?}");
        }
    }
    // Log-space evaluation stays finite and positive far past factorial overflow.
    let big = shuffle_topk_accuracy(200, 200).unwrap().mean;
    assert!(big > 0.0 && big < 1e-80);
}

#[test]
fn threshold_trends_cross() {
    for n in 3..=12 {
        let crossing = (1..100).map(|i| i as f64 / 100.0).any(|gamma| {
            let s = threshold_accuracy(TaskKind::Shuffle, n, gamma);
            let r = threshold_accuracy(TaskKind::ReplaceRandom, n, gamma).unwrap().mean;
            matches!(s, Ok(e) if (e.mean - r).abs() == 1.0)
        });
        assert!(crossing, "n={n}");
    }
}

#[test]
fn threshold_closed_forms_match_simulation() {
    for n in 2..=7 {
        let (mc, tps) = simulate(
            TaskKind::Shuffle,
            n,
            Strategy::ConfidenceThreshold { gamma: 0.6 },
            SamplerConfig::greedy(4),
            2_000,
        );
        assert_eq!(mc, threshold_accuracy(TaskKind::Shuffle, n, 0.6).unwrap().mean);
        assert_eq!(tps, 1.0);
    }
    for (gamma, tps_expected) in [(0.8, 10.0), (0.95, 1.0)] {
        let (mc, tps) = simulate(
            TaskKind::ReplaceRandom,
            10,
            Strategy::ConfidenceThreshold { gamma },
            SamplerConfig::greedy(5),
            2_000,
        );
        assert_eq!(mc, threshold_accuracy(TaskKind::ReplaceRandom, 10, gamma).unwrap().mean);
        assert_eq!(tps, tps_expected);
    }
}
