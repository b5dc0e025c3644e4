//! Entropies, conditional total correlation and the T-step partition bounds.
//!
//! All quantities are in bits. Conditioning on the input `X` is implicit: a
//! [`JointDistribution`] is already `P(Y | X)` for one fixed `X`. A KL value
//! in nats equals the bit value times `ln 2`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::tasks::{Item, JointDistribution, TaskKind};

/// Negative values above this are numerical noise and clamp to zero.
pub const NEGATIVE_NOISE: f64 = -1e-9;

/// Largest output length accepted by [`optimal_lower_bound`].
pub const MAX_EXHAUSTIVE_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("negative probability {0}")]
    NegativeProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("empty distribution")]
    Empty,
    #[error("information value {0} is negative beyond numerical noise")]
    NegativeInformation(f64),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("sequence length {0} exceeds the exhaustive search limit of {MAX_EXHAUSTIVE_LEN}")]
    TooLarge(usize),
    #[error("step count {steps} must be in 1..={len}")]
    InvalidSteps { steps: usize, len: usize },
    #[error("no closed form for {0}")]
    Unsupported(TaskKind),
    #[error("step sizes sum to {sum}, expected {n}")]
    StepSizes { sum: usize, n: usize },
}

/// A nonnegative information quantity in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Bits(f64);

impl Bits {
    pub const ZERO: Bits = Bits(0.0);

    pub fn new(value: f64) -> Result<Bits, InfoError> {
        if value.is_nan() || value < NEGATIVE_NOISE {
            Err(InfoError::NegativeInformation(value))
        } else {
            Ok(Bits(value.max(0.0)))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_nats(self) -> f64 {
        self.0 * std::f64::consts::LN_2
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} bits", self.0)
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.0)
    }
}

fn plogp_sum<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs.into_iter().filter(|p| *p > 0.0).map(|p| -p * p.log2()).sum()
}

/// Shannon entropy `-Σ p log2 p` of a probability vector.
pub fn entropy(probs: &[f64]) -> Result<Bits, InfoError> {
    if probs.is_empty() {
        return Err(InfoError::Empty);
    }
    if let Some(p) = probs.iter().find(|p| **p < 0.0 || p.is_nan()) {
        return Err(InfoError::NegativeProbability(*p));
    }
    let mass: f64 = probs.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(InfoError::NotNormalized(mass));
    }
    Bits::new(plogp_sum(probs.iter().copied()))
}

fn project(seq: &[Item], positions: &[usize]) -> Vec<Item> {
    positions.iter().map(|&p| seq[p]).collect()
}

/// Joint entropy of the given positions under a weighted list of sequences.
fn projected_entropy<'a, I>(outcomes: I, positions: &[usize]) -> f64
where
    I: IntoIterator<Item = (&'a [Item], f64)>,
{
    let mut mass: BTreeMap<Vec<Item>, f64> = BTreeMap::new();
    for (seq, p) in outcomes {
        *mass.entry(project(seq, positions)).or_default() += p;
    }
    plogp_sum(mass.into_values())
}

/// Total correlation of a normalized weighted list of sequences.
fn correlation_of(outcomes: &[(&[Item], f64)], positions: &[usize]) -> f64 {
    let marginals: f64 = positions
        .iter()
        .map(|&p| projected_entropy(outcomes.iter().copied(), &[p]))
        .sum();
    marginals - projected_entropy(outcomes.iter().copied(), positions)
}

/// `C(Y|X) = Σ_i H(y_i|X) - H(Y|X)`.
pub fn total_correlation(joint: &JointDistribution) -> Result<Bits, InfoError> {
    let outcomes: Vec<(&[Item], f64)> =
        joint.outcomes().iter().map(|(s, p)| (s.as_slice(), *p)).collect();
    let positions: Vec<usize> = (0..joint.seq_len()).collect();
    Bits::new(correlation_of(&outcomes, &positions))
}

/// Closed-form `C(Y|X)` for the tasks that have one.
pub fn closed_form_c(kind: TaskKind, n: usize) -> Result<Bits, InfoError> {
    if n == 0 {
        return Err(InfoError::InvalidSteps { steps: 0, len: 0 });
    }
    let nf = n as f64;
    match kind {
        TaskKind::Copy | TaskKind::ReplaceIndex => Ok(Bits::ZERO),
        TaskKind::ReplaceRandom if n == 1 => Ok(Bits::ZERO),
        TaskKind::ReplaceRandom => Bits::new((nf - 1.0) * (nf.log2() - (nf - 1.0).log2())),
        TaskKind::Shuffle => Bits::new(nf * nf.log2() - log2_factorial(n)),
        other => Err(InfoError::Unsupported(other)),
    }
}

/// Large-`n` behaviour of [`closed_form_c`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Limit {
    Finite(Bits),
    Divergent,
}

pub fn closed_form_limit(kind: TaskKind) -> Result<Limit, InfoError> {
    match kind {
        TaskKind::Copy | TaskKind::ReplaceIndex => Ok(Limit::Finite(Bits::ZERO)),
        TaskKind::ReplaceRandom => Ok(Limit::Finite(Bits(std::f64::consts::LOG2_E))),
        TaskKind::Shuffle => Ok(Limit::Divergent),
        other => Err(InfoError::Unsupported(other)),
    }
}

pub fn log2_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).log2()).sum()
}

/// Ordered disjoint position sets covering `0..len`; block 0 is decoded first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, len: usize) -> Result<Partition, InfoError> {
        let mut seen = vec![false; len];
        for block in &blocks {
            if block.is_empty() {
                return Err(InfoError::InvalidPartition("empty block".into()));
            }
            for &p in block {
                if p >= len {
                    return Err(InfoError::InvalidPartition(format!("position {p} >= {len}")));
                }
                if std::mem::replace(&mut seen[p], true) {
                    return Err(InfoError::InvalidPartition(format!("position {p} repeated")));
                }
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(InfoError::InvalidPartition(format!("position {p} not covered")));
        }
        let blocks = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        Ok(Partition { blocks })
    }

    pub fn one_by_one(len: usize) -> Partition {
        Partition { blocks: (0..len).map(|p| vec![p]).collect() }
    }

    pub fn single(len: usize) -> Partition {
        Partition { blocks: vec![(0..len).collect()] }
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn steps(&self) -> usize {
        self.blocks.len()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// `L_T = Σ_i E_{S<i}[C(S_i | X, S<i)]`, computed by grouping the joint on
/// every realization of the already-decoded positions.
pub fn partition_lower_bound(joint: &JointDistribution, partition: &Partition) -> Result<Bits, InfoError> {
    if partition.len() != joint.seq_len() {
        return Err(InfoError::InvalidPartition(format!(
            "partition covers {} positions, joint has {}",
            partition.len(),
            joint.seq_len()
        )));
    }
    let mut decoded: Vec<usize> = Vec::new();
    let mut total = 0.0;
    for block in partition.blocks() {
        let mut groups: BTreeMap<Vec<Item>, (f64, Vec<(&[Item], f64)>)> = BTreeMap::new();
        for (seq, p) in joint.outcomes() {
            let entry = groups.entry(project(seq, &decoded)).or_default();
            entry.0 += p;
            entry.1.push((seq.as_slice(), *p));
        }
        for (mass, members) in groups.into_values() {
            let conditional: Vec<(&[Item], f64)> =
                members.into_iter().map(|(s, p)| (s, p / mass)).collect();
            total += mass * correlation_of(&conditional, block);
        }
        decoded.extend_from_slice(block);
    }
    Bits::new(total)
}

/// `L*_T`: the minimum of [`partition_lower_bound`] over every ordered
/// partition into `steps` blocks, together with a minimizer.
///
/// Uses `E_u[C(S | U=u)] = Σ_{j∈S} (H(U∪{j}) - H(U)) - (H(U∪S) - H(U))`, so
/// each block cost depends only on the decoded set `U` and the block `S`;
/// a subset dynamic program then covers all ordered partitions exactly.
pub fn optimal_lower_bound(joint: &JointDistribution, steps: usize) -> Result<(Bits, Partition), InfoError> {
    let len = joint.seq_len();
    if len > MAX_EXHAUSTIVE_LEN {
        return Err(InfoError::TooLarge(len));
    }
    if steps == 0 || steps > len {
        return Err(InfoError::InvalidSteps { steps, len });
    }
    let full = (1usize << len) - 1;
    let entropies: Vec<f64> = (0..=full)
        .map(|mask| {
            let positions = mask_positions(mask, len);
            projected_entropy(joint.outcomes().iter().map(|(s, p)| (s.as_slice(), *p)), &positions)
        })
        .collect();
    let cost = |decoded: usize, block: usize| -> f64 {
        let base = entropies[decoded];
        let marginals: f64 = mask_positions(block, len)
            .into_iter()
            .map(|p| entropies[decoded | (1 << p)] - base)
            .sum();
        marginals - (entropies[decoded | block] - base)
    };

    // best[t][mask]: minimal bound over t-block chains whose union is mask
    let mut best = vec![vec![f64::INFINITY; full + 1]; steps + 1];
    let mut back = vec![vec![0usize; full + 1]; steps + 1];
    best[0][0] = 0.0;
    for t in 0..steps {
        for decoded in 0..=full {
            let here = best[t][decoded];
            if !here.is_finite() {
                continue;
            }
            let free = full & !decoded;
            let mut block = free;
            while block > 0 {
                let value = here + cost(decoded, block);
                let next = decoded | block;
                if value < best[t + 1][next] {
                    best[t + 1][next] = value;
                    back[t + 1][next] = block;
                }
                block = (block - 1) & free;
            }
        }
    }
    let mut blocks = Vec::with_capacity(steps);
    let mut mask = full;
    for t in (1..=steps).rev() {
        let block = back[t][mask];
        blocks.push(mask_positions(block, len));
        mask &= !block;
    }
    blocks.reverse();
    Ok((Bits::new(best[steps][full])?, Partition::new(blocks, len)?))
}

fn mask_positions(mask: usize, len: usize) -> Vec<usize> {
    (0..len).filter(|p| mask & (1 << p) != 0).collect()
}

/// `Σ_t |S_t| log2(k_t) - log2(n!)` with `k_t` the count still masked before step `t`.
pub fn shuffle_lt_closed_form(n: usize, step_sizes: &[usize]) -> Result<Bits, InfoError> {
    let sum: usize = step_sizes.iter().sum();
    if sum != n || step_sizes.contains(&0) {
        return Err(InfoError::StepSizes { sum, n });
    }
    let mut remaining = n;
    let mut total = 0.0;
    for &size in step_sizes {
        total += size as f64 * (remaining as f64).log2();
        remaining -= size;
    }
    Bits::new(total - log2_factorial(n))
}
