//! Procedural generation of benchmark instances and their answer checkers.
//!
//! Three categories: waiting-line list operations over person names,
//! 4x4 puzzles (Latin square and Sudoku), and text writing (words-to-sentence
//! plus user-supplied summarization and paraphrasing inputs). Every instance
//! carries a self-contained [`Checker`] so scoring needs nothing else.

mod puzzles;
mod text;
mod waiting_line;

use std::io::{BufRead, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoding::run_rng;
use crate::tasks::{TaskError, TaskKind};

pub use puzzles::{
    count_latin_squares, count_sudoku_solutions, gen_latin_square, gen_sudoku, parse_latin_square,
    parse_sudoku_answer, PuzzleGrid,
};
pub use text::{gen_text_from_inputs, gen_w2s, gen_w2s_batch, word_sets, Difficulty, TextTask};
pub use waiting_line::{
    extract_first_list, format_name_list, gen_waiting_line, name_pool, Person, WaitingLineTask,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("n = {n} is outside the supported range {min}..={max}")]
    BadLength { n: usize, min: usize, max: usize },
    #[error("word-set file for {difficulty} has {available} sets, {requested} requested")]
    Exhausted { difficulty: Difficulty, available: usize, requested: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    WaitingLine,
    Puzzle,
    TextWriting,
}

impl Category {
    pub fn uses_one_shot(self) -> bool {
        matches!(self, Category::WaitingLine | Category::Puzzle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShot {
    pub prompt: String,
    pub answer: String,
}

/// Self-contained description of how to score an answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Checker {
    /// Exact match against the valid-output set of a list task over names.
    ExactSet {
        task: TaskKind,
        input: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_person: Option<String>,
        /// Rejects an unchanged list (the shuffle prompt asks for a change).
        #[serde(default)]
        exclude_identity: bool,
    },
    LatinSquare { size: usize, symbols: Vec<String> },
    /// Puzzle rows separated by spaces, `0` for blanks.
    Sudoku { puzzle: String },
    WordInclusion { words: Vec<String> },
    /// External metrics only (grammar, ROUGE, BERTScore); recorded raw.
    Unscored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    /// `None` for unscored instances.
    pub score: Option<f64>,
    pub parse_failure: bool,
}

impl CheckOutcome {
    fn pass(ok: bool) -> Self {
        CheckOutcome { score: Some(if ok { 1.0 } else { 0.0 }), parse_failure: false }
    }

    fn unparseable() -> Self {
        CheckOutcome { score: Some(0.0), parse_failure: true }
    }
}

impl Checker {
    pub fn check(&self, output: &str) -> CheckOutcome {
        match self {
            Checker::ExactSet { task, input, index, new_person, exclude_identity } => {
                match extract_first_list(output) {
                    None => CheckOutcome::unparseable(),
                    Some(answer) => CheckOutcome::pass(waiting_line::list_answer_is_valid(
                        *task,
                        input,
                        *index,
                        new_person.as_deref(),
                        *exclude_identity,
                        &answer,
                    )),
                }
            }
            Checker::LatinSquare { size, symbols } => match parse_latin_square(output, *size) {
                None => CheckOutcome::unparseable(),
                Some(rows) => CheckOutcome::pass(puzzles::is_latin_square(&rows, symbols)),
            },
            Checker::Sudoku { puzzle } => {
                let Some(givens) = PuzzleGrid::parse_digits(puzzle, 4) else {
                    return CheckOutcome::unparseable();
                };
                match parse_sudoku_answer(output) {
                    None => CheckOutcome::unparseable(),
                    Some(grid) => CheckOutcome::pass(grid.is_sudoku_solution_of(&givens)),
                }
            }
            Checker::WordInclusion { words } => CheckOutcome::pass(text::includes_all(output, words)),
            Checker::Unscored => CheckOutcome { score: None, parse_failure: false },
        }
    }
}

/// Task parameters; only the fields relevant to the category are present.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_person: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchInstance {
    pub id: String,
    pub category: Category,
    pub task_kind: String,
    pub prompt: String,
    pub one_shot: Option<OneShot>,
    pub checker: Checker,
    pub metadata: Metadata,
}

impl BenchInstance {
    /// One-shot example (if any) followed by the test prompt.
    pub fn full_prompt(&self) -> String {
        match &self.one_shot {
            Some(shot) => format!("{}\n{}\n\n{}", shot.prompt, shot.answer, self.prompt),
            None => self.prompt.clone(),
        }
    }

    pub fn reference_answer(&self) -> Option<&str> {
        self.metadata.reference_answer.as_deref()
    }
}

/// Default instance count per task.
pub const DEFAULT_COUNT: usize = 100;

/// Seed of instance `index` in a batch generated from `master`.
pub fn instance_seed(master: u64, index: u64) -> u64 {
    run_rng(master, index).next_u64()
}

/// Which generator a batch should use.
#[derive(Debug, Clone, PartialEq)]
pub enum GenRequest {
    WaitingLine { task: TaskKind, n: usize },
    LatinSquare { size: usize },
    Sudoku,
    WordsToSentence { difficulty: Difficulty },
}

/// `count` instances from independent per-index seeds, with stable ids.
pub fn generate_batch(request: &GenRequest, count: usize, seed: u64) -> Result<Vec<BenchInstance>, BenchError> {
    if let GenRequest::WordsToSentence { difficulty } = request {
        return gen_w2s_batch(*difficulty, count, seed);
    }
    (0..count)
        .map(|i| {
            let s = instance_seed(seed, i as u64);
            let mut inst = match request {
                GenRequest::WaitingLine { task, n } => gen_waiting_line(*task, *n, s)?,
                GenRequest::LatinSquare { size } => gen_latin_square(*size, s)?,
                GenRequest::Sudoku => gen_sudoku(s),
                GenRequest::WordsToSentence { .. } => unreachable!(),
            };
            inst.id = format!("{}-{i:04}", batch_prefix(&inst));
            Ok(inst)
        })
        .collect()
}

fn batch_prefix(inst: &BenchInstance) -> String {
    let cat = match inst.category {
        Category::WaitingLine => "waiting_line",
        Category::Puzzle => "puzzle",
        Category::TextWriting => "text_writing",
    };
    match inst.metadata.n {
        Some(n) if inst.category == Category::WaitingLine => format!("{cat}/{}/n{n}", inst.task_kind),
        _ => format!("{cat}/{}", inst.task_kind),
    }
}

/// One JSON object per line; returns the number of lines written.
pub fn export_jsonl<W: Write>(instances: &[BenchInstance], mut out: W) -> Result<usize, BenchError> {
    for inst in instances {
        serde_json::to_writer(&mut out, inst).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(instances.len())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<BenchInstance>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| BenchError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}
