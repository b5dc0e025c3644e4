//! Ideal-model posteriors against enumeration and the chain rule.

use itertools::Itertools;
use pardec_core::ideal::{consistency_check, posterior_by_enumeration, posterior_marginals, SequenceState, Slot};
use pardec_core::tasks::{enumerate_valid_outputs, sample_output, Item, TaskInstance, TaskKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(kind: TaskKind, n: usize, index: usize) -> TaskInstance {
    let index = match kind {
        TaskKind::InsertIndex => Some(index % (n + 1)),
        k if k.needs_index() => Some(index % n),
        _ => None,
    };
    TaskInstance::canonical(kind, n, index).unwrap()
}

/// A valid output with a random subset of positions masked.
fn reachable_state(inst: &TaskInstance, rng: &mut ChaCha8Rng) -> SequenceState {
    let y = sample_output(&inst.task, &inst.input, rng).unwrap();
    let mut slots: Vec<Slot> = y.into_iter().map(Slot::Token).collect();
    for slot in slots.iter_mut() {
        if rng.gen_bool(0.5) {
            *slot = Slot::Masked;
        }
    }
    SequenceState::new(slots)
}

#[test]
fn fast_paths_equal_enumeration_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for kind in TaskKind::ALL {
        for n in 2..=5 {
            for trial in 0..1_000 {
                let inst = instance(kind, n, trial);
                let state = reachable_state(&inst, &mut rng);
                let fast = posterior_marginals(&inst.task, &inst.input, &state).unwrap();
                let slow = posterior_by_enumeration(&inst.task, &inst.input, &state).unwrap();
                assert_eq!(fast.len(), state.masked_positions().len());
                for (a, b) in fast.rows().iter().zip(slow.rows()) {
                    assert_eq!(a.position, b.position);
                    assert!((a.mass() - 1.0).abs() < 1e-9);
                    let items: Vec<Item> = a.probs.iter().chain(&b.probs).map(|(i, _)| *i).unique().collect();
                    for item in items {
                        assert!(
                            (a.probability(item) - b.probability(item)).abs() < 1e-9,
                            "{kind} n={n} state {state} pos {}",
                            a.position
                        );
                    }
                }
            }
        }
    }
}

/// Revealing positions one at a time in any order, multiplying the
/// conditional of each revealed token, recovers the joint probability.
#[test]
fn chain_rule_over_every_order() {
    for kind in TaskKind::ALL {
        for n in 2..=4 {
            let inst = instance(kind, n, 1);
            let joint = enumerate_valid_outputs(&inst.task, &inst.input).unwrap();
            let len = joint.seq_len();
            for (y, p) in joint.outcomes() {
                for order in (0..len).permutations(len) {
                    let mut state = SequenceState::all_masked(len);
                    let mut product = 1.0;
                    for &pos in &order {
                        let table = posterior_marginals(&inst.task, &inst.input, &state).unwrap();
                        product *= table.row(pos).unwrap().probability(y[pos]);
                        state.reveal(pos, y[pos]);
                    }
                    assert!((product - p).abs() < 1e-9, "{kind} n={n} y={y:?} order={order:?}");
                }
            }
        }
    }
}

#[test]
fn posterior_examples() {
    let (a, b, c, f) = (Item(0), Item(1), Item(2), Item(3));
    let shuffle = instance(TaskKind::Shuffle, 3, 0);
    let state = SequenceState::new(vec![Slot::Token(b), Slot::Masked, Slot::Masked]);
    let t = posterior_marginals(&shuffle.task, &shuffle.input, &state).unwrap();
    for row in t.rows() {
        assert_eq!(row.probability(a), 0.5);
        assert_eq!(row.probability(c), 0.5);
    }
    let rr = instance(TaskKind::ReplaceRandom, 3, 0);
    let t = posterior_marginals(&rr.task, &rr.input, &SequenceState::all_masked(3)).unwrap();
    for (row, original) in t.rows().iter().zip([a, b, c]) {
        assert!((row.probability(original) - 2.0 / 3.0).abs() < 1e-12);
        assert!((row.probability(f) - 1.0 / 3.0).abs() < 1e-12);
    }
    let copy = instance(TaskKind::Copy, 2, 0);
    let t = posterior_marginals(&copy.task, &copy.input, &SequenceState::all_masked(2)).unwrap();
    assert_eq!(t.row(0).unwrap().probs, vec![(a, 1.0)]);
    assert_eq!(t.row(1).unwrap().probs, vec![(b, 1.0)]);
}

#[test]
fn consistency_examples() {
    let (b, f) = (Item(1), Item(3));
    let shuffle = instance(TaskKind::Shuffle, 3, 0);
    let dup = SequenceState::new(vec![Slot::Token(b), Slot::Token(b), Slot::Masked]);
    assert!(!consistency_check(&shuffle.task, &shuffle.input, &dup));
    assert!(posterior_marginals(&shuffle.task, &shuffle.input, &dup).is_err());
    let rr = instance(TaskKind::ReplaceRandom, 3, 0);
    let two = SequenceState::new(vec![Slot::Token(f), Slot::Token(f), Slot::Masked]);
    assert!(!consistency_check(&rr.task, &rr.input, &two));
    for kind in TaskKind::ALL {
        let inst = instance(kind, 4, 2);
        assert!(consistency_check(&inst.task, &inst.input, &SequenceState::all_masked(inst.output_len())));
    }
}

#[test]
fn large_n_fast_paths_stay_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [TaskKind::Shuffle, TaskKind::ReplaceRandom, TaskKind::Reverse, TaskKind::InsertIndex] {
        let inst = instance(kind, 40, 7);
        let mut state = reachable_state(&inst, &mut rng);
        let masked = state.masked_positions();
        let table = posterior_marginals(&inst.task, &inst.input, &state).unwrap();
        assert_eq!(table.len(), masked.len());
        assert!(table.rows().iter().all(|r| (r.mass() - 1.0).abs() < 1e-9));
        // Reveal one more token from its marginal; the state stays consistent.
        if let Some(row) = table.rows().choose(&mut rng) {
            state.reveal(row.position, row.probs[0].0);
            assert!(consistency_check(&inst.task, &inst.input, &state));
        }
    }
}
