//! Exact posterior oracle: the zero-noise "ideal model".
//!
//! Given a partially revealed output, returns the exact marginal of every
//! masked position under `P(Y | X, revealed)`. Closed-form fast paths cover
//! `Shuffle`, `ReplaceRandom` and the deterministic tasks; everything else
//! falls back to filtering the enumerated support.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, PosteriorModel};
use crate::tasks::{enumerate_valid_outputs, Item, TaskInstance, TaskKind, TaskSpec};

/// One output position: still masked, or finalized to an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<Item>", into = "Option<Item>")]
pub enum Slot {
    Masked,
    Token(Item),
}

impl From<Option<Item>> for Slot {
    fn from(value: Option<Item>) -> Self {
        value.map_or(Slot::Masked, Slot::Token)
    }
}

impl From<Slot> for Option<Item> {
    fn from(slot: Slot) -> Self {
        match slot {
            Slot::Masked => None,
            Slot::Token(item) => Some(item),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SequenceState {
    slots: Vec<Slot>,
}

impl SequenceState {
    pub fn new(slots: Vec<Slot>) -> Self {
        SequenceState { slots }
    }

    pub fn all_masked(len: usize) -> Self {
        SequenceState { slots: vec![Slot::Masked; len] }
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn reveal(&mut self, position: usize, item: Item) {
        self.slots[position] = Slot::Token(item);
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.slots.len()).filter(|&p| self.slots[p] == Slot::Masked).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.slots.iter().all(|s| *s != Slot::Masked)
    }

    /// The finished sequence, if nothing is masked.
    pub fn tokens(&self) -> Option<Vec<Item>> {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Token(i) => Some(*i),
                Slot::Masked => None,
            })
            .collect()
    }

    fn revealed(&self) -> impl Iterator<Item = (usize, Item)> + '_ {
        self.slots.iter().enumerate().filter_map(|(p, s)| match s {
            Slot::Token(i) => Some((p, *i)),
            Slot::Masked => None,
        })
    }

    fn matches(&self, seq: &[Item]) -> bool {
        seq.len() == self.slots.len() && self.revealed().all(|(p, i)| seq[p] == i)
    }
}

impl fmt::Display for SequenceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .slots
            .iter()
            .map(|s| match s {
                Slot::Masked => "_".to_string(),
                Slot::Token(i) => i.label(),
            })
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

/// Marginal distribution of one masked position; items ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub position: usize,
    pub probs: Vec<(Item, f64)>,
}

impl PosteriorRow {
    pub fn new(position: usize, mut probs: Vec<(Item, f64)>) -> Self {
        probs.retain(|(_, p)| *p > 0.0);
        probs.sort_by_key(|(i, _)| *i);
        PosteriorRow { position, probs }
    }

    /// Max marginal probability.
    pub fn confidence(&self) -> f64 {
        self.probs.iter().map(|(_, p)| *p).fold(0.0, f64::max)
    }

    /// Difference between the two largest probabilities.
    pub fn margin(&self) -> f64 {
        let mut ps: Vec<f64> = self.probs.iter().map(|(_, p)| *p).collect();
        ps.sort_by(|a, b| b.total_cmp(a));
        ps.first().copied().unwrap_or(0.0) - ps.get(1).copied().unwrap_or(0.0)
    }

    pub fn entropy(&self) -> f64 {
        self.probs.iter().filter(|(_, p)| *p > 0.0).map(|(_, p)| -p * p.log2()).sum()
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().map(|(_, p)| p).sum()
    }

    pub fn probability(&self, item: Item) -> f64 {
        self.probs.iter().find(|(i, _)| *i == item).map_or(0.0, |(_, p)| *p)
    }
}

/// Rows for masked positions, ascending by position.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PosteriorTable {
    rows: Vec<PosteriorRow>,
}

impl PosteriorTable {
    pub fn new(mut rows: Vec<PosteriorRow>) -> Self {
        rows.sort_by_key(|r| r.position);
        PosteriorTable { rows }
    }

    pub fn rows(&self) -> &[PosteriorRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, position: usize) -> Option<&PosteriorRow> {
        self.rows.iter().find(|r| r.position == position)
    }

    /// Keeps only rows whose position is in `range`.
    pub fn restrict(&self, range: std::ops::Range<usize>) -> PosteriorTable {
        PosteriorTable {
            rows: self.rows.iter().filter(|r| range.contains(&r.position)).cloned().collect(),
        }
    }
}

fn inconsistent(instance_task: &TaskSpec, state: &SequenceState) -> ModelError {
    ModelError::Inconsistent(format!("{} state {state}", instance_task.kind()))
}

/// Exact `P(y_j | X, revealed)` for every masked position `j`.
pub fn posterior_marginals(
    task: &TaskSpec,
    input: &[Item],
    state: &SequenceState,
) -> Result<PosteriorTable, ModelError> {
    task.validate_input(input)?;
    if state.len() != task.output_len() {
        return Err(ModelError::Inconsistent(format!(
            "state length {} but task output length {}",
            state.len(),
            task.output_len()
        )));
    }
    match task.kind() {
        TaskKind::Shuffle => shuffle_posterior(task, input, state),
        TaskKind::ReplaceRandom => replace_random_posterior(task, input, state),
        kind if !kind.is_random() => {
            let joint = enumerate_valid_outputs(task, input)?;
            let target = &joint.outcomes()[0].0;
            if !state.matches(target) {
                return Err(inconsistent(task, state));
            }
            Ok(PosteriorTable::new(
                state.masked_positions().into_iter().map(|p| PosteriorRow::new(p, vec![(target[p], 1.0)])).collect(),
            ))
        }
        _ => posterior_by_enumeration(task, input, state),
    }
}

fn shuffle_posterior(task: &TaskSpec, input: &[Item], state: &SequenceState) -> Result<PosteriorTable, ModelError> {
    let mut unused: Vec<Item> = input.to_vec();
    for (_, item) in state.revealed() {
        match unused.iter().position(|u| *u == item) {
            Some(idx) => {
                unused.swap_remove(idx);
            }
            None => return Err(inconsistent(task, state)),
        }
    }
    unused.sort();
    let p = 1.0 / unused.len().max(1) as f64;
    let row: Vec<(Item, f64)> = unused.iter().map(|i| (*i, p)).collect();
    Ok(PosteriorTable::new(
        state.masked_positions().into_iter().map(|pos| PosteriorRow::new(pos, row.clone())).collect(),
    ))
}

fn replace_random_posterior(
    task: &TaskSpec,
    input: &[Item],
    state: &SequenceState,
) -> Result<PosteriorTable, ModelError> {
    let new_item = task.new_item().expect("validated");
    let mut replaced = 0;
    for (p, item) in state.revealed() {
        if item == new_item {
            replaced += 1;
        } else if item != input[p] {
            return Err(inconsistent(task, state));
        }
    }
    let masked = state.masked_positions();
    let m = masked.len();
    let rows = match replaced {
        0 if m == 0 => return Err(inconsistent(task, state)),
        0 => {
            let keep = (m - 1) as f64 / m as f64;
            let swap = 1.0 / m as f64;
            masked.into_iter().map(|p| PosteriorRow::new(p, vec![(input[p], keep), (new_item, swap)])).collect()
        }
        1 => masked.into_iter().map(|p| PosteriorRow::new(p, vec![(input[p], 1.0)])).collect(),
        _ => return Err(inconsistent(task, state)),
    };
    Ok(PosteriorTable::new(rows))
}

/// Marginals by filtering the enumerated support; the reference path.
pub fn posterior_by_enumeration(
    task: &TaskSpec,
    input: &[Item],
    state: &SequenceState,
) -> Result<PosteriorTable, ModelError> {
    let joint = enumerate_valid_outputs(task, input)?;
    let masked = state.masked_positions();
    let mut mass = 0.0;
    let mut counts: Vec<BTreeMap<Item, f64>> = vec![BTreeMap::new(); masked.len()];
    for (seq, p) in joint.outcomes() {
        if !state.matches(seq) {
            continue;
        }
        mass += p;
        for (row, &pos) in counts.iter_mut().zip(&masked) {
            *row.entry(seq[pos]).or_default() += p;
        }
    }
    if mass <= 0.0 {
        return Err(inconsistent(task, state));
    }
    Ok(PosteriorTable::new(
        masked
            .into_iter()
            .zip(counts)
            .map(|(pos, row)| PosteriorRow::new(pos, row.into_iter().map(|(i, p)| (i, p / mass)).collect()))
            .collect(),
    ))
}

/// True iff at least one valid completion of `state` exists.
pub fn consistency_check(task: &TaskSpec, input: &[Item], state: &SequenceState) -> bool {
    if task.validate_input(input).is_err() || state.len() != task.output_len() {
        return false;
    }
    match task.kind() {
        TaskKind::Shuffle => {
            let pool: HashSet<Item> = input.iter().copied().collect();
            let mut seen = HashSet::new();
            state.revealed().all(|(_, i)| pool.contains(&i) && seen.insert(i))
        }
        TaskKind::ReplaceRandom => {
            let new_item = task.new_item().expect("validated");
            let mut replaced = 0;
            for (p, item) in state.revealed() {
                if item == new_item {
                    replaced += 1;
                } else if item != input[p] {
                    return false;
                }
            }
            replaced == 1 || (replaced == 0 && !state.is_complete())
        }
        _ => match enumerate_valid_outputs(task, input) {
            Ok(joint) => joint.outcomes().iter().any(|(seq, _)| state.matches(seq)),
            Err(_) => false,
        },
    }
}

/// The in-process ideal model behind the [`PosteriorModel`] interface.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdealModel;

impl PosteriorModel for IdealModel {
    fn posterior(&mut self, instance: &TaskInstance, state: &SequenceState) -> Result<PosteriorTable, ModelError> {
        posterior_marginals(&instance.task, &instance.input, state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: Item = Item(0);
    const B: Item = Item(1);
    const C: Item = Item(2);

    fn instance(kind: TaskKind, n: usize) -> TaskInstance {
        TaskInstance::canonical(kind, n, kind.needs_index().then_some(0)).unwrap()
    }

    #[test]
    fn shuffle_after_one_reveal() {
        let inst = instance(TaskKind::Shuffle, 3);
        let state = SequenceState::new(vec![Slot::Token(B), Slot::Masked, Slot::Masked]);
        let table = posterior_marginals(&inst.task, &inst.input, &state).unwrap();
        assert_eq!(table.len(), 2);
        for row in table.rows() {
            assert_eq!(row.probs, vec![(A, 0.5), (C, 0.5)]);
        }
    }

    #[test]
    fn replace_random_first_step() {
        let inst = instance(TaskKind::ReplaceRandom, 3);
        let f = inst.task.new_item().unwrap();
        let table = posterior_marginals(&inst.task, &inst.input, &SequenceState::all_masked(3)).unwrap();
        for row in table.rows() {
            assert!((row.probability(inst.input[row.position]) - 2.0 / 3.0).abs() < 1e-15);
            assert!((row.probability(f) - 1.0 / 3.0).abs() < 1e-15);
            assert!((row.confidence() - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn copy_point_masses() {
        let inst = instance(TaskKind::Copy, 2);
        let table = posterior_marginals(&inst.task, &inst.input, &SequenceState::all_masked(2)).unwrap();
        assert_eq!(table.rows()[0].probs, vec![(A, 1.0)]);
        assert_eq!(table.rows()[1].probs, vec![(B, 1.0)]);
    }

    #[test]
    fn consistency_examples() {
        let shuffle = instance(TaskKind::Shuffle, 3);
        let dup = SequenceState::new(vec![Slot::Token(B), Slot::Token(B), Slot::Masked]);
        assert!(!consistency_check(&shuffle.task, &shuffle.input, &dup));
        assert!(posterior_marginals(&shuffle.task, &shuffle.input, &dup).is_err());

        let rr = instance(TaskKind::ReplaceRandom, 3);
        let f = rr.task.new_item().unwrap();
        let two = SequenceState::new(vec![Slot::Token(f), Slot::Token(f), Slot::Masked]);
        assert!(!consistency_check(&rr.task, &rr.input, &two));
        assert!(matches!(
            posterior_marginals(&rr.task, &rr.input, &two),
            Err(ModelError::Inconsistent(_))
        ));

        for kind in TaskKind::ALL {
            let inst = instance(kind, 4);
            assert!(consistency_check(&inst.task, &inst.input, &SequenceState::all_masked(inst.output_len())));
        }
    }

    #[test]
    fn replace_random_complete_without_replacement_is_inconsistent() {
        let rr = instance(TaskKind::ReplaceRandom, 2);
        let state = SequenceState::new(vec![Slot::Token(A), Slot::Token(B)]);
        assert!(!consistency_check(&rr.task, &rr.input, &state));
    }

    #[test]
    fn scores() {
        let row = PosteriorRow::new(0, vec![(A, 0.5), (B, 0.3), (C, 0.2)]);
        assert_eq!(row.confidence(), 0.5);
        assert!((row.margin() - 0.2).abs() < 1e-15);
        let single = PosteriorRow::new(0, vec![(A, 1.0), (B, 0.0)]);
        assert_eq!(single.probs.len(), 1);
        assert_eq!(single.margin(), 1.0);
        assert_eq!(single.entropy(), 0.0);
    }

    #[test]
    fn slot_serde_uses_null_for_mask() {
        let state = SequenceState::new(vec![Slot::Token(B), Slot::Masked]);
        let json = serde_json::to_string(&state).unwrap();
        assert_eq!(json, r#"["B",null]"#);
        assert_eq!(serde_json::from_str::<SequenceState>(&json).unwrap(), state);
    }
}
