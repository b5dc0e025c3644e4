//! Synthetic list-operation tasks as exact conditional distributions.
//!
//! Every task maps an input list of distinct items to a finite set of valid
//! output lists. Random tasks (`Shuffle`, `ReplaceRandom`, `InsertRandom`,
//! `RemoveRandom`) are uniform over their valid outputs; all others are
//! deterministic. One token is one list item.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest `n` for which `Shuffle` supports are enumerated (9! outcomes).
pub const MAX_SHUFFLE_ENUMERATION: usize = 9;

/// Tolerance on the total probability mass of a [`JointDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("input has length {actual}, task expects {expected}")]
    InputLength { expected: usize, actual: usize },
    #[error("input contains duplicate item {0}")]
    DuplicateItem(Item),
    #[error("item {0} is not in the task vocabulary")]
    UnknownItem(Item),
    #[error("new item {0} already appears in the input")]
    NewItemInInput(Item),
    #[error("index {index} out of range for {kind} with n = {n}")]
    IndexOutOfRange { kind: TaskKind, index: usize, n: usize },
    #[error("{0}")]
    InvalidSpec(String),
    #[error("support of {kind} with n = {n} is too large to enumerate")]
    TooLarge { kind: TaskKind, n: usize },
    #[error("invalid joint distribution: {0}")]
    InvalidJoint(String),
}

/// An opaque list item. The numeric order defines `Sort`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Item(pub u32);

impl Item {
    /// Spreadsheet-style label: `A`..`Z`, `AA`, `AB`, ...
    pub fn label(self) -> String {
        let mut n = self.0 as u64 + 1;
        let mut out = Vec::new();
        while n > 0 {
            let rem = ((n - 1) % 26) as u8;
            out.push(b'A' + rem);
            n = (n - 1) / 26;
        }
        out.reverse();
        String::from_utf8(out).expect("ascii label")
    }

    pub fn from_label(label: &str) -> Option<Item> {
        if label.is_empty() || !label.bytes().all(|b| b.is_ascii_uppercase()) {
            return None;
        }
        let mut n: u64 = 0;
        for b in label.bytes() {
            n = n.checked_mul(26)?.checked_add((b - b'A') as u64 + 1)?;
        }
        u32::try_from(n - 1).ok().map(Item)
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for Item {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Item {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Item::from_label(&s).ok_or_else(|| serde::de::Error::custom(format!("bad item label {s:?}")))
    }
}

/// Formats a sequence as `[A, B, C]`.
pub fn format_items(items: &[Item]) -> String {
    format!("[{}]", items.iter().map(|i| i.label()).join(", "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Copy,
    Reverse,
    Sort,
    Shuffle,
    ReplaceIndex,
    ReplaceRandom,
    InsertIndex,
    InsertRandom,
    RemoveIndex,
    RemoveRandom,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::Copy,
        TaskKind::Sort,
        TaskKind::Reverse,
        TaskKind::Shuffle,
        TaskKind::ReplaceIndex,
        TaskKind::ReplaceRandom,
        TaskKind::InsertIndex,
        TaskKind::InsertRandom,
        TaskKind::RemoveIndex,
        TaskKind::RemoveRandom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Copy => "copy",
            TaskKind::Reverse => "reverse",
            TaskKind::Sort => "sort",
            TaskKind::Shuffle => "shuffle",
            TaskKind::ReplaceIndex => "replace_index",
            TaskKind::ReplaceRandom => "replace_random",
            TaskKind::InsertIndex => "insert_index",
            TaskKind::InsertRandom => "insert_random",
            TaskKind::RemoveIndex => "remove_index",
            TaskKind::RemoveRandom => "remove_random",
        }
    }

    pub fn needs_index(self) -> bool {
        matches!(self, TaskKind::ReplaceIndex | TaskKind::InsertIndex | TaskKind::RemoveIndex)
    }

    pub fn needs_new_item(self) -> bool {
        matches!(
            self,
            TaskKind::ReplaceIndex
                | TaskKind::ReplaceRandom
                | TaskKind::InsertIndex
                | TaskKind::InsertRandom
        )
    }

    /// Whether the task has more than one valid output for a given input.
    pub fn is_random(self) -> bool {
        matches!(
            self,
            TaskKind::Shuffle
                | TaskKind::ReplaceRandom
                | TaskKind::InsertRandom
                | TaskKind::RemoveRandom
        )
    }

    pub fn output_len(self, n: usize) -> usize {
        match self {
            TaskKind::InsertIndex | TaskKind::InsertRandom => n + 1,
            TaskKind::RemoveIndex | TaskKind::RemoveRandom => n - 1,
            _ => n,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| TaskError::InvalidSpec(format!("unknown task kind {s:?}")))
    }
}

/// A task kind together with its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTaskSpec")]
pub struct TaskSpec {
    kind: TaskKind,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    new_item: Option<Item>,
    vocabulary: Vec<Item>,
}

#[derive(Deserialize)]
struct RawTaskSpec {
    kind: TaskKind,
    n: usize,
    #[serde(default)]
    index: Option<usize>,
    #[serde(default)]
    new_item: Option<Item>,
    vocabulary: Vec<Item>,
}

impl TryFrom<RawTaskSpec> for TaskSpec {
    type Error = TaskError;

    fn try_from(raw: RawTaskSpec) -> Result<Self, Self::Error> {
        TaskSpec::new(raw.kind, raw.n, raw.index, raw.new_item, raw.vocabulary)
    }
}

impl TaskSpec {
    pub fn new(
        kind: TaskKind,
        n: usize,
        index: Option<usize>,
        new_item: Option<Item>,
        vocabulary: Vec<Item>,
    ) -> Result<Self, TaskError> {
        if n == 0 {
            return Err(TaskError::InvalidSpec("n must be positive".into()));
        }
        if matches!(kind, TaskKind::RemoveIndex | TaskKind::RemoveRandom) && n < 2 {
            return Err(TaskError::InvalidSpec(format!("{kind} needs n >= 2")));
        }
        if kind.needs_index() != index.is_some() {
            return Err(TaskError::InvalidSpec(format!(
                "{kind} {} an index",
                if kind.needs_index() { "requires" } else { "does not take" }
            )));
        }
        if kind.needs_new_item() != new_item.is_some() {
            return Err(TaskError::InvalidSpec(format!(
                "{kind} {} a new item",
                if kind.needs_new_item() { "requires" } else { "does not take" }
            )));
        }
        if let Some(index) = index {
            let limit = if kind == TaskKind::InsertIndex { n } else { n - 1 };
            if index > limit {
                return Err(TaskError::IndexOutOfRange { kind, index, n });
            }
        }
        if vocabulary.len() < n {
            return Err(TaskError::InvalidSpec(format!(
                "vocabulary has {} items, need at least {n}",
                vocabulary.len()
            )));
        }
        let mut seen = HashSet::new();
        for item in &vocabulary {
            if !seen.insert(*item) {
                return Err(TaskError::InvalidSpec(format!("vocabulary repeats {item}")));
            }
        }
        if let Some(item) = new_item {
            if !seen.contains(&item) {
                return Err(TaskError::UnknownItem(item));
            }
        }
        Ok(TaskSpec { kind, n, index, new_item, vocabulary })
    }

    /// Vocabulary `A..` of `n + 1` items; the new item (when needed) is the
    /// last one, so `Replace*` on `[A, B, C, D, E]` inserts `F`.
    pub fn canonical(kind: TaskKind, n: usize, index: Option<usize>) -> Result<Self, TaskError> {
        let vocabulary: Vec<Item> = (0..=n as u32).map(Item).collect();
        let new_item = kind.needs_new_item().then_some(Item(n as u32));
        TaskSpec::new(kind, n, index, new_item, vocabulary)
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn index(&self) -> Option<usize> {
        self.index
    }

    pub fn new_item(&self) -> Option<Item> {
        self.new_item
    }

    pub fn vocabulary(&self) -> &[Item] {
        &self.vocabulary
    }

    pub fn output_len(&self) -> usize {
        self.kind.output_len(self.n)
    }

    /// First `n` vocabulary items other than the new item.
    pub fn canonical_input(&self) -> Vec<Item> {
        self.vocabulary
            .iter()
            .copied()
            .filter(|i| Some(*i) != self.new_item)
            .take(self.n)
            .collect()
    }

    pub fn validate_input(&self, input: &[Item]) -> Result<(), TaskError> {
        if input.len() != self.n {
            return Err(TaskError::InputLength { expected: self.n, actual: input.len() });
        }
        let vocab: HashSet<Item> = self.vocabulary.iter().copied().collect();
        let mut seen = HashSet::new();
        for item in input {
            if !vocab.contains(item) {
                return Err(TaskError::UnknownItem(*item));
            }
            if !seen.insert(*item) {
                return Err(TaskError::DuplicateItem(*item));
            }
        }
        if let Some(new_item) = self.new_item {
            if seen.contains(&new_item) {
                return Err(TaskError::NewItemInInput(new_item));
            }
        }
        Ok(())
    }

    /// The unique output of a deterministic task.
    fn deterministic_output(&self, input: &[Item]) -> Option<Vec<Item>> {
        let mut out = input.to_vec();
        match self.kind {
            TaskKind::Copy => {}
            TaskKind::Reverse => out.reverse(),
            TaskKind::Sort => out.sort(),
            TaskKind::ReplaceIndex => out[self.index?] = self.new_item?,
            TaskKind::InsertIndex => out.insert(self.index?, self.new_item?),
            TaskKind::RemoveIndex => {
                out.remove(self.index?);
            }
            _ => return None,
        }
        Some(out)
    }
}

/// A task specification bound to a concrete input list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub task: TaskSpec,
    pub input: Vec<Item>,
}

impl TaskInstance {
    pub fn new(id: impl Into<String>, task: TaskSpec, input: Vec<Item>) -> Result<Self, TaskError> {
        task.validate_input(&input)?;
        Ok(TaskInstance { id: id.into(), task, input })
    }

    /// Canonical instance: input `[A, B, ...]` and new item right after it.
    pub fn canonical(kind: TaskKind, n: usize, index: Option<usize>) -> Result<Self, TaskError> {
        let task = TaskSpec::canonical(kind, n, index)?;
        let input = task.canonical_input();
        let id = match index {
            Some(i) => format!("{kind}-n{n}-i{i}"),
            None => format!("{kind}-n{n}"),
        };
        TaskInstance::new(id, task, input)
    }

    pub fn output_len(&self) -> usize {
        self.task.output_len()
    }

    /// Plain-text statement of the list operation.
    pub fn prompt(&self) -> String {
        let mut out = format!("{} {}", self.task.kind, format_items(&self.input));
        if let Some(i) = self.task.index {
            out.push_str(&format!(" index={i}"));
        }
        if let Some(item) = self.task.new_item {
            out.push_str(&format!(" new={item}"));
        }
        out
    }
}

/// An explicit finite distribution over output sequences for one input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistribution {
    input: Vec<Item>,
    outcomes: Vec<(Vec<Item>, f64)>,
}

impl JointDistribution {
    /// Validates: nonempty, positive probabilities summing to one,
    /// distinct outcomes of a common length.
    pub fn new(input: Vec<Item>, outcomes: Vec<(Vec<Item>, f64)>) -> Result<Self, TaskError> {
        let Some((first, _)) = outcomes.first() else {
            return Err(TaskError::InvalidJoint("empty support".into()));
        };
        let len = first.len();
        let mut seen = HashSet::new();
        let mut mass = 0.0;
        for (seq, p) in &outcomes {
            if seq.len() != len {
                return Err(TaskError::InvalidJoint("outcomes differ in length".into()));
            }
            if !(*p > 0.0 && *p <= 1.0 + MASS_TOLERANCE) {
                return Err(TaskError::InvalidJoint(format!("probability {p} outside (0, 1]")));
            }
            if !seen.insert(seq.clone()) {
                return Err(TaskError::InvalidJoint(format!(
                    "duplicate outcome {}",
                    format_items(seq)
                )));
            }
            mass += p;
        }
        if (mass - 1.0).abs() > MASS_TOLERANCE {
            return Err(TaskError::InvalidJoint(format!("probabilities sum to {mass}")));
        }
        Ok(JointDistribution { input, outcomes })
    }

    fn uniform(input: Vec<Item>, support: Vec<Vec<Item>>) -> Self {
        let p = 1.0 / support.len() as f64;
        JointDistribution { input, outcomes: support.into_iter().map(|s| (s, p)).collect() }
    }

    pub fn input(&self) -> &[Item] {
        &self.input
    }

    pub fn outcomes(&self) -> &[(Vec<Item>, f64)] {
        &self.outcomes
    }

    pub fn seq_len(&self) -> usize {
        self.outcomes[0].0.len()
    }

    pub fn support_size(&self) -> usize {
        self.outcomes.len()
    }

    pub fn probability_of(&self, seq: &[Item]) -> f64 {
        self.outcomes.iter().find(|(s, _)| s.as_slice() == seq).map_or(0.0, |(_, p)| *p)
    }

    pub fn total_mass(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }
}

/// Full support of `P(Y | X)` with the uniform randomization of random tasks.
pub fn enumerate_valid_outputs(task: &TaskSpec, input: &[Item]) -> Result<JointDistribution, TaskError> {
    task.validate_input(input)?;
    let n = task.n;
    if let Some(out) = task.deterministic_output(input) {
        return Ok(JointDistribution::uniform(input.to_vec(), vec![out]));
    }
    let support: Vec<Vec<Item>> = match task.kind {
        TaskKind::Shuffle => {
            if n > MAX_SHUFFLE_ENUMERATION {
                return Err(TaskError::TooLarge { kind: task.kind, n });
            }
            input.iter().copied().permutations(n).collect()
        }
        TaskKind::ReplaceRandom => {
            let new_item = task.new_item.expect("validated");
            (0..n)
                .map(|p| {
                    let mut out = input.to_vec();
                    out[p] = new_item;
                    out
                })
                .collect()
        }
        TaskKind::InsertRandom => {
            let new_item = task.new_item.expect("validated");
            (0..=n)
                .map(|p| {
                    let mut out = input.to_vec();
                    out.insert(p, new_item);
                    out
                })
                .collect()
        }
        TaskKind::RemoveRandom => (0..n)
            .map(|p| {
                let mut out = input.to_vec();
                out.remove(p);
                out
            })
            .collect(),
        _ => unreachable!("deterministic kinds handled above"),
    };
    Ok(JointDistribution::uniform(input.to_vec(), support))
}

/// Membership in the support of [`enumerate_valid_outputs`], without enumerating.
pub fn is_valid_output(task: &TaskSpec, input: &[Item], output: &[Item]) -> bool {
    if task.validate_input(input).is_err() || output.len() != task.output_len() {
        return false;
    }
    if let Some(expected) = task.deterministic_output(input) {
        return expected == output;
    }
    match task.kind {
        TaskKind::Shuffle => {
            let mut a = input.to_vec();
            let mut b = output.to_vec();
            a.sort();
            b.sort();
            a == b
        }
        TaskKind::ReplaceRandom => {
            let new_item = task.new_item.expect("validated");
            let diffs: Vec<usize> = (0..input.len()).filter(|&p| input[p] != output[p]).collect();
            diffs.len() == 1 && output[diffs[0]] == new_item
        }
        TaskKind::InsertRandom => {
            let new_item = task.new_item.expect("validated");
            match output.iter().position(|i| *i == new_item) {
                Some(p) => {
                    let mut rest = output.to_vec();
                    rest.remove(p);
                    rest == input
                }
                None => false,
            }
        }
        TaskKind::RemoveRandom => {
            // first mismatch is the removed slot
            let p = (0..output.len()).find(|&p| input[p] != output[p]).unwrap_or(output.len());
            input[..p] == output[..p] && input[p + 1..] == output[p..]
        }
        _ => false,
    }
}

/// Draws one output from `P(Y | X)`.
pub fn sample_output<R: Rng + ?Sized>(
    task: &TaskSpec,
    input: &[Item],
    rng: &mut R,
) -> Result<Vec<Item>, TaskError> {
    task.validate_input(input)?;
    if let Some(out) = task.deterministic_output(input) {
        return Ok(out);
    }
    let n = task.n;
    let mut out = input.to_vec();
    match task.kind {
        TaskKind::Shuffle => out.shuffle(rng),
        TaskKind::ReplaceRandom => out[rng.gen_range(0..n)] = task.new_item.expect("validated"),
        TaskKind::InsertRandom => out.insert(rng.gen_range(0..=n), task.new_item.expect("validated")),
        TaskKind::RemoveRandom => {
            out.remove(rng.gen_range(0..n));
        }
        _ => unreachable!("deterministic kinds handled above"),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const A: Item = Item(0);
    const B: Item = Item(1);
    const C: Item = Item(2);
    const F: Item = Item(5);

    fn spec(kind: TaskKind, n: usize, index: Option<usize>) -> TaskSpec {
        let vocab = (0..6).map(Item).collect();
        let new_item = kind.needs_new_item().then_some(F);
        TaskSpec::new(kind, n, index, new_item, vocab).unwrap()
    }

    #[test]
    fn labels_round_trip() {
        for i in [0u32, 1, 25, 26, 27, 701, 702, 12345] {
            assert_eq!(Item::from_label(&Item(i).label()), Some(Item(i)));
        }
        assert_eq!(Item(0).label(), "A");
        assert_eq!(Item(26).label(), "AA");
        assert_eq!(Item::from_label("a"), None);
    }

    #[test]
    fn copy_is_point_mass() {
        let joint = enumerate_valid_outputs(&spec(TaskKind::Copy, 3, None), &[A, B, C]).unwrap();
        assert_eq!(joint.outcomes(), &[(vec![A, B, C], 1.0)]);
    }

    #[test]
    fn replace_random_support() {
        let joint =
            enumerate_valid_outputs(&spec(TaskKind::ReplaceRandom, 3, None), &[A, B, C]).unwrap();
        let expected = [vec![F, B, C], vec![A, F, C], vec![A, B, F]];
        assert_eq!(joint.support_size(), 3);
        for seq in &expected {
            assert!((joint.probability_of(seq) - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shuffle_two() {
        let joint = enumerate_valid_outputs(&spec(TaskKind::Shuffle, 2, None), &[A, B]).unwrap();
        assert_eq!(joint.probability_of(&[A, B]), 0.5);
        assert_eq!(joint.probability_of(&[B, A]), 0.5);
    }

    #[test]
    fn input_errors() {
        let s = spec(TaskKind::Copy, 3, None);
        assert!(matches!(
            enumerate_valid_outputs(&s, &[A, B]),
            Err(TaskError::InputLength { expected: 3, actual: 2 })
        ));
        assert!(matches!(enumerate_valid_outputs(&s, &[A, B, B]), Err(TaskError::DuplicateItem(_))));
        let r = spec(TaskKind::ReplaceRandom, 3, None);
        assert!(matches!(enumerate_valid_outputs(&r, &[A, B, F]), Err(TaskError::NewItemInInput(_))));
        let vocab: Vec<Item> = (0..6).map(Item).collect();
        assert!(matches!(
            TaskSpec::new(TaskKind::RemoveIndex, 3, Some(3), None, vocab.clone()),
            Err(TaskError::IndexOutOfRange { .. })
        ));
        assert!(TaskSpec::new(TaskKind::InsertIndex, 3, Some(3), Some(F), vocab.clone()).is_ok());
        assert!(TaskSpec::new(TaskKind::Copy, 3, Some(0), None, vocab.clone()).is_err());
        assert!(TaskSpec::new(TaskKind::ReplaceRandom, 3, None, None, vocab).is_err());
        assert!(TaskSpec::canonical(TaskKind::Shuffle, 12, None)
            .and_then(|t| enumerate_valid_outputs(&t, &t.canonical_input()))
            .is_err());
    }

    #[test]
    fn validity_examples() {
        assert!(is_valid_output(&spec(TaskKind::Shuffle, 3, None), &[A, B, C], &[C, A, B]));
        assert!(!is_valid_output(&spec(TaskKind::ReplaceRandom, 3, None), &[A, B, C], &[F, F, C]));
        assert!(is_valid_output(&spec(TaskKind::Reverse, 3, None), &[A, B, C], &[C, B, A]));
        assert!(!is_valid_output(&spec(TaskKind::Reverse, 3, None), &[A, B, C], &[C, B]));
    }

    #[test]
    fn deterministic_tasks_sample_their_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(sample_output(&spec(TaskKind::Copy, 2, None), &[A, B], &mut rng).unwrap(), vec![A, B]);
        for _ in 0..50 {
            let out = sample_output(&spec(TaskKind::RemoveRandom, 3, None), &[A, B, C], &mut rng).unwrap();
            assert!([vec![B, C], vec![A, C], vec![A, B]].contains(&out));
        }
    }

    #[test]
    fn task_kind_parses_kebab_and_snake() {
        assert_eq!("replace-random".parse::<TaskKind>().unwrap(), TaskKind::ReplaceRandom);
        assert_eq!("Insert_Index".parse::<TaskKind>().unwrap(), TaskKind::InsertIndex);
        assert!("rotate".parse::<TaskKind>().is_err());
    }

    #[test]
    fn spec_deserialization_validates() {
        let ok = r#"{"kind":"replace_index","n":2,"index":1,"new_item":"C","vocabulary":["A","B","C"]}"#;
        assert!(serde_json::from_str::<TaskSpec>(ok).is_ok());
        let bad = r#"{"kind":"replace_index","n":2,"new_item":"C","vocabulary":["A","B","C"]}"#;
        assert!(serde_json::from_str::<TaskSpec>(bad).is_err());
    }
}
