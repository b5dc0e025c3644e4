//! Text writing: words-to-sentence generation and wrappers for external
//! summarization / paraphrasing inputs.

use std::fmt;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchError, BenchInstance, Category, Checker, Metadata};

const EASY: &str = include_str!("../../data/w2s_easy.txt");
const MEDIUM: &str = include_str!("../../data/w2s_medium.txt");
const HARD: &str = include_str!("../../data/w2s_hard.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Difficulty {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| BenchError::Invalid(format!("unknown difficulty {s:?}")))
    }
}

fn parse_sets(raw: &str) -> Vec<Vec<String>> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|w| w.trim().to_string()).collect())
        .collect()
}

/// Curated four-word sets for a difficulty level.
pub fn word_sets(difficulty: Difficulty) -> &'static [Vec<String>] {
    static SETS: OnceLock<[Vec<Vec<String>>; 3]> = OnceLock::new();
    let sets = SETS.get_or_init(|| [parse_sets(EASY), parse_sets(MEDIUM), parse_sets(HARD)]);
    &sets[difficulty as usize]
}

fn w2s_prompt(words: &[String]) -> String {
    let list = match words {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    };
    format!("Construct a single, coherent sentence using the words {list}.")
}

fn w2s_instance(difficulty: Difficulty, words: &[String], seed: u64) -> BenchInstance {
    BenchInstance {
        id: format!("text_writing/w2s_{difficulty}/s{seed}"),
        category: Category::TextWriting,
        task_kind: format!("w2s_{difficulty}"),
        prompt: w2s_prompt(words),
        one_shot: None,
        checker: Checker::WordInclusion { words: words.to_vec() },
        metadata: Metadata {
            difficulty: Some(difficulty),
            words: Some(words.to_vec()),
            seed: Some(seed),
            ..Metadata::default()
        },
    }
}

pub fn gen_w2s(difficulty: Difficulty, seed: u64) -> Result<BenchInstance, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = word_sets(difficulty)
        .choose(&mut rng)
        .ok_or(BenchError::Exhausted { difficulty, available: 0, requested: 1 })?;
    Ok(w2s_instance(difficulty, words, seed))
}

/// `count` distinct word sets, drawn without replacement.
pub fn gen_w2s_batch(difficulty: Difficulty, count: usize, seed: u64) -> Result<Vec<BenchInstance>, BenchError> {
    let sets = word_sets(difficulty);
    if count > sets.len() {
        return Err(BenchError::Exhausted { difficulty, available: sets.len(), requested: count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sets
        .choose_multiple(&mut rng, count)
        .enumerate()
        .map(|(i, words)| {
            let mut inst = w2s_instance(difficulty, words, seed);
            inst.id = format!("text_writing/{}-{i:04}", inst.task_kind);
            inst
        })
        .collect())
}

fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'' && c != '-')
        .map(|t| t.trim_matches(|c| c == '\'' || c == '-'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Every word appears as a whole word (case-insensitive). Multi-word
/// entries must appear as a contiguous run.
pub fn includes_all(output: &str, words: &[String]) -> bool {
    let tokens = word_tokens(output);
    words.iter().all(|w| {
        let needle = word_tokens(w);
        !needle.is_empty() && tokens.windows(needle.len()).any(|win| win == needle.as_slice())
    })
}

/// Open-ended tasks whose inputs come from external datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextTask {
    Summarization,
    Paraphrasing,
}

impl TextTask {
    pub fn as_str(self) -> &'static str {
        match self {
            TextTask::Summarization => "summarization",
            TextTask::Paraphrasing => "paraphrasing",
        }
    }

    fn prompt(self, text: &str) -> String {
        match self {
            TextTask::Summarization => {
                format!("Summarize the following conversation. Only output the final result.\n\n{text}\n\nSummary:")
            }
            TextTask::Paraphrasing => {
                format!("Paraphrase the following sentence. Only output the final result.\n\nSentence: {text}\n\nParaphrase:")
            }
        }
    }
}

/// Wraps user-supplied source texts in prompts. Outputs are recorded raw
/// for external metrics.
pub fn gen_text_from_inputs(task: TextTask, texts: &[String]) -> Vec<BenchInstance> {
    texts
        .iter()
        .enumerate()
        .map(|(i, text)| BenchInstance {
            id: format!("text_writing/{}-{i:04}", task.as_str()),
            category: Category::TextWriting,
            task_kind: task.as_str().to_string(),
            prompt: task.prompt(text),
            one_shot: None,
            checker: Checker::Unscored,
            metadata: Metadata { source_text: Some(text.clone()), ..Metadata::default() },
        })
        .collect()
}
