//! Waiting Line: list operations rendered as customer-queue prompts.

use std::sync::OnceLock;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BenchError, BenchInstance, Category, Checker, Metadata, OneShot};
use crate::tasks::{sample_output, Item, TaskKind, TaskSpec};

const FIRST_NAMES: &str = include_str!("../../data/first_names.txt");
const LAST_NAMES: &str = include_str!("../../data/last_names.txt");

const OPENING: &str = "You are managing a waiting line at a customer service desk.";

/// Task kinds available as Waiting Line tasks (all ten list operations).
pub type WaitingLineTask = TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Person {
    pub first: String,
    pub last: String,
}

impl Person {
    pub fn full_name(&self) -> String {
        format!("{} {}", self.first, self.last)
    }

    /// Sort key: last name, then first name.
    fn key(&self) -> (&str, &str) {
        (&self.last, &self.first)
    }

    fn from_full_name(name: &str) -> Person {
        match name.rsplit_once(' ') {
            Some((first, last)) => Person { first: first.to_string(), last: last.to_string() },
            None => Person { first: String::new(), last: name.to_string() },
        }
    }
}

pub struct NamePool {
    pub first: Vec<&'static str>,
    pub last: Vec<&'static str>,
}

pub fn name_pool() -> &'static NamePool {
    static POOL: OnceLock<NamePool> = OnceLock::new();
    POOL.get_or_init(|| NamePool {
        first: FIRST_NAMES.lines().map(str::trim).filter(|l| !l.is_empty()).collect(),
        last: LAST_NAMES.lines().map(str::trim).filter(|l| !l.is_empty()).collect(),
    })
}

/// `["Billy Ramos", "Alan Wells"]`
pub fn format_name_list<S: AsRef<str>>(names: &[S]) -> String {
    let quoted: Vec<String> = names.iter().map(|n| format!("\"{}\"", n.as_ref())).collect();
    format!("[{}]", quoted.join(", "))
}

fn canonical_name(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn closing_quote(open: char) -> Option<char> {
    match open {
        '"' => Some('"'),
        '\'' => Some('\''),
        '\u{201c}' => Some('\u{201d}'),
        '\u{2018}' => Some('\u{2019}'),
        _ => None,
    }
}

fn parse_list_at(chars: &[char]) -> Option<Vec<String>> {
    let mut i = 1;
    let skip_ws = |i: &mut usize| {
        while *i < chars.len() && chars[*i].is_whitespace() {
            *i += 1;
        }
    };
    let mut out = Vec::new();
    skip_ws(&mut i);
    if chars.get(i) == Some(&']') {
        return Some(out);
    }
    loop {
        skip_ws(&mut i);
        let close = closing_quote(*chars.get(i)?)?;
        i += 1;
        let start = i;
        while *chars.get(i)? != close {
            i += 1;
        }
        out.push(canonical_name(&chars[start..i].iter().collect::<String>()));
        i += 1;
        skip_ws(&mut i);
        match chars.get(i)? {
            ',' => i += 1,
            ']' => return Some(out),
            _ => return None,
        }
    }
}

/// First well-formed bracketed list of quoted strings in `text`, names
/// whitespace-normalized.
pub fn extract_first_list(text: &str) -> Option<Vec<String>> {
    let chars: Vec<char> = text.chars().collect();
    (0..chars.len()).filter(|&i| chars[i] == '[').find_map(|i| parse_list_at(&chars[i..]))
}

fn template(kind: TaskKind, context: &str, index: Option<usize>, word: Option<&str>) -> String {
    let index = index.map(|i| i.to_string()).unwrap_or_default();
    let word = word.unwrap_or_default();
    let lines: Vec<String> = match kind {
        TaskKind::Copy => vec![
            "You need to record the following people in the order they arrived:".into(),
            context.into(),
            "Please copy the list exactly and provide only the final list.".into(),
        ],
        TaskKind::Reverse => vec![
            "The previous staff member put the waiting line in the wrong order.".into(),
            "Please reverse the order of the following people in the waiting line to correct it:".into(),
            context.into(),
            "Please reverse the order of the list and provide only the final list.".into(),
        ],
        TaskKind::Sort => vec![
            "The following people should be organized alphabetically by last name for efficient processing:".into(),
            context.into(),
            "Please sort the list in alphabetical order and provide only the final list.".into(),
        ],
        TaskKind::InsertIndex => vec![
            format!("A new person \"{word}\" is inserted into the line at position {index}:"),
            context.into(),
            "Please put the new person at the specified position and provide only the final list.".into(),
        ],
        TaskKind::InsertRandom => vec![
            format!("A new person \"{word}\" is inserted into the line at a random position:"),
            context.into(),
            "Please put the new person in the random position and provide only the final list.".into(),
        ],
        TaskKind::RemoveIndex => vec![
            format!("The person at position {index} has left the waiting line:"),
            context.into(),
            "Please remove the person at the specified position and provide only the final list.".into(),
        ],
        TaskKind::RemoveRandom => vec![
            "One person has left the waiting line:".into(),
            context.into(),
            "Please remove a random person and provide only the final list.".into(),
        ],
        TaskKind::ReplaceIndex => vec![
            format!("The person at position {index} must be replaced with \"{word}\":"),
            context.into(),
            format!("Please replace the person at the specified position with \"{word}\" and provide only the final list."),
        ],
        TaskKind::ReplaceRandom => vec![
            format!("One person in the waiting line must be replaced with \"{word}\":"),
            context.into(),
            format!("Please replace one random person with \"{word}\" and provide only the final list."),
        ],
        TaskKind::Shuffle => vec![
            "The waiting line should be randomly shuffled to ensure fair service distribution:".into(),
            context.into(),
            "Please randomly shuffle the list and provide only the final list.".into(),
            "Ensure the sequence is different from the original.".into(),
        ],
    };
    std::iter::once(OPENING.to_string()).chain(lines).collect::<Vec<_>>().join("\n")
}

/// Maps names to items so that item order is (last, first) order.
struct NameCodec {
    people: Vec<Person>,
}

impl NameCodec {
    fn new(names: impl IntoIterator<Item = String>) -> NameCodec {
        let mut people: Vec<Person> = names.into_iter().map(|n| Person::from_full_name(&n)).collect();
        people.sort_by(|a, b| a.key().cmp(&b.key()));
        people.dedup();
        NameCodec { people }
    }

    fn encode(&self, name: &str) -> Option<Item> {
        let person = Person::from_full_name(&canonical_name(name));
        self.people.iter().position(|p| *p == person).map(|i| Item(i as u32))
    }

    fn decode(&self, item: Item) -> String {
        self.people[item.0 as usize].full_name()
    }

    fn vocabulary(&self) -> Vec<Item> {
        (0..self.people.len() as u32).map(Item).collect()
    }
}

fn list_task(
    kind: TaskKind,
    input: &[String],
    index: Option<usize>,
    new_person: Option<&str>,
) -> Option<(NameCodec, TaskSpec, Vec<Item>)> {
    let codec = NameCodec::new(input.iter().cloned().chain(new_person.map(str::to_string)));
    let encoded: Option<Vec<Item>> = input.iter().map(|n| codec.encode(n)).collect();
    let new_item = match new_person {
        Some(p) => Some(codec.encode(p)?),
        None => None,
    };
    let spec = TaskSpec::new(kind, input.len(), index, new_item, codec.vocabulary()).ok()?;
    Some((codec, spec, encoded?))
}

pub(super) fn list_answer_is_valid(
    kind: TaskKind,
    input: &[String],
    index: Option<usize>,
    new_person: Option<&str>,
    exclude_identity: bool,
    answer: &[String],
) -> bool {
    let Some((codec, spec, encoded_input)) = list_task(kind, input, index, new_person) else {
        return false;
    };
    let Some(encoded_answer) = answer.iter().map(|n| codec.encode(n)).collect::<Option<Vec<Item>>>() else {
        return false;
    };
    if exclude_identity && encoded_answer == encoded_input {
        return false;
    }
    crate::tasks::is_valid_output(&spec, &encoded_input, &encoded_answer)
}

struct Drawn {
    prompt: String,
    answer: String,
    names: Vec<String>,
    index: Option<usize>,
    new_person: Option<String>,
}

fn draw<R: Rng>(kind: TaskKind, n: usize, rng: &mut R) -> Result<Drawn, BenchError> {
    let pool = name_pool();
    let people_needed = n + usize::from(kind.needs_new_item());
    let lasts = index::sample(rng, pool.last.len(), people_needed);
    let mut people: Vec<String> = lasts
        .iter()
        .map(|l| format!("{} {}", pool.first.choose(rng).expect("nonempty pool"), pool.last[l]))
        .collect();
    let new_person = kind.needs_new_item().then(|| people.pop().expect("drawn"));
    let index = match kind {
        TaskKind::InsertIndex => Some(rng.gen_range(0..=n)),
        k if k.needs_index() => Some(rng.gen_range(0..n)),
        _ => None,
    };
    let (codec, spec, encoded) =
        list_task(kind, &people, index, new_person.as_deref()).expect("generated names are distinct");
    let mut output = sample_output(&spec, &encoded, rng)?;
    if kind == TaskKind::Shuffle {
        while output == encoded {
            output = sample_output(&spec, &encoded, rng)?;
        }
    }
    let answer_names: Vec<String> = output.iter().map(|i| codec.decode(*i)).collect();
    Ok(Drawn {
        prompt: template(kind, &format_name_list(&people), index, new_person.as_deref()),
        answer: format_name_list(&answer_names),
        names: people,
        index,
        new_person,
    })
}

pub fn gen_waiting_line(kind: TaskKind, n: usize, seed: u64) -> Result<BenchInstance, BenchError> {
    let pool = name_pool();
    let max = pool.last.len() - 1;
    if !(2..=max).contains(&n) {
        return Err(BenchError::BadLength { n, min: 2, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test = draw(kind, n, &mut rng)?;
    let shot = draw(kind, n, &mut rng)?;
    Ok(BenchInstance {
        id: format!("waiting_line/{kind}/n{n}/s{seed}"),
        category: Category::WaitingLine,
        task_kind: kind.as_str().to_string(),
        prompt: test.prompt,
        one_shot: Some(OneShot { prompt: shot.prompt, answer: shot.answer }),
        checker: Checker::ExactSet {
            task: kind,
            input: test.names.clone(),
            index: test.index,
            new_person: test.new_person.clone(),
            exclude_identity: kind == TaskKind::Shuffle,
        },
        metadata: Metadata {
            n: Some(n),
            index: test.index,
            names: Some(test.names),
            new_person: test.new_person,
            reference_answer: Some(test.answer),
            seed: Some(seed),
            ..Metadata::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_prompt_text() {
        let inst = gen_waiting_line(TaskKind::Copy, 3, 5).unwrap();
        assert!(inst.prompt.starts_with(OPENING));
        assert!(inst.prompt.contains("Please copy the list exactly and provide only the final list."));
        let names = inst.metadata.names.as_ref().unwrap();
        assert!(inst.prompt.contains(&format_name_list(names)));
    }

    #[test]
    fn shuffle_prompt_has_difference_clause() {
        let inst = gen_waiting_line(TaskKind::Shuffle, 3, 5).unwrap();
        assert!(inst.prompt.ends_with("Ensure the sequence is different from the original."));
    }

    #[test]
    fn reference_answers_pass() {
        for kind in TaskKind::ALL {
            for seed in 0..20 {
                let inst = gen_waiting_line(kind, 4, seed).unwrap();
                let out = inst.checker.check(inst.reference_answer().unwrap());
                assert_eq!(out.score, Some(1.0), "{kind} seed {seed}");
                let shot = inst.one_shot.as_ref().unwrap();
                assert!(shot.prompt.starts_with(OPENING));
            }
        }
    }

    #[test]
    fn list_extraction() {
        assert_eq!(
            extract_first_list("Sure! Here it is: [\"Ann  Lee\", 'Bo Kim'] done"),
            Some(vec!["Ann Lee".to_string(), "Bo Kim".to_string()])
        );
        assert_eq!(extract_first_list("[broken [\"A B\"]"), Some(vec!["A B".to_string()]));
        assert_eq!(extract_first_list("[]"), Some(vec![]));
        assert_eq!(extract_first_list("no list"), None);
        assert_eq!(extract_first_list("[\"unterminated"), None);
        assert_eq!(
            extract_first_list("[\u{201c}Ann Lee\u{201d}]"),
            Some(vec!["Ann Lee".to_string()])
        );
    }

    #[test]
    fn sort_uses_last_names() {
        let input = vec!["David Lewis".to_string(), "Patrick Tran".to_string(), "Sean Diaz".to_string()];
        let sorted = vec!["Sean Diaz".to_string(), "David Lewis".to_string(), "Patrick Tran".to_string()];
        assert!(list_answer_is_valid(TaskKind::Sort, &input, None, None, false, &sorted));
        assert!(!list_answer_is_valid(TaskKind::Sort, &input, None, None, false, &input));
    }

    #[test]
    fn length_bounds() {
        assert!(matches!(gen_waiting_line(TaskKind::Copy, 1, 0), Err(BenchError::BadLength { .. })));
        assert!(gen_waiting_line(TaskKind::Copy, 500, 0).is_err());
        let max = name_pool().last.len() - 1;
        assert!(gen_waiting_line(TaskKind::InsertRandom, max, 0).is_ok());
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(gen_waiting_line(TaskKind::InsertRandom, 5, 77).unwrap(), gen_waiting_line(TaskKind::InsertRandom, 5, 77).unwrap());
    }
}
