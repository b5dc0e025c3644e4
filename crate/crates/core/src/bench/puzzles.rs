//! 4x4 puzzles: Latin squares over arbitrary symbols and Sudoku.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BenchError, BenchInstance, Category, Checker, Metadata, OneShot};

const SUDOKU_SIZE: usize = 4;
const SUDOKU_BOX: usize = 2;
const MIN_GIVENS: usize = 6;
const MAX_GIVENS: usize = 10;
const MAX_LATIN_SIZE: usize = 8;
const SYMBOL_POOL: &str = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

/// Square grid of digits with `0` marking a blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PuzzleGrid {
    size: usize,
    cells: Vec<u8>,
}

impl PuzzleGrid {
    pub fn new(size: usize, cells: Vec<u8>) -> Option<PuzzleGrid> {
        (cells.len() == size * size && cells.iter().all(|&c| c as usize <= size)).then_some(PuzzleGrid { size, cells })
    }

    /// Parses `0042 2031 4023 3214` (any whitespace between rows) or 16
    /// contiguous digits.
    pub fn parse_digits(text: &str, size: usize) -> Option<PuzzleGrid> {
        let digits: String = text.split_whitespace().collect();
        let cells: Option<Vec<u8>> = digits.chars().map(|c| c.to_digit(10).map(|d| d as u8)).collect();
        PuzzleGrid::new(size, cells?)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.size + col]
    }

    pub fn givens(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(|&c| c != 0)
    }

    fn can_place(&self, idx: usize, value: u8) -> bool {
        let (r, c) = (idx / self.size, idx % self.size);
        let (br, bc) = (r / SUDOKU_BOX * SUDOKU_BOX, c / SUDOKU_BOX * SUDOKU_BOX);
        (0..self.size).all(|j| self.get(r, j) != value && self.get(j, c) != value)
            && (0..SUDOKU_BOX).all(|dr| (0..SUDOKU_BOX).all(|dc| self.get(br + dr, bc + dc) != value))
    }

    /// Complete, obeys the row/column/box rules, and agrees with every given.
    pub fn is_sudoku_solution_of(&self, givens: &PuzzleGrid) -> bool {
        if self.size != SUDOKU_SIZE || givens.size != SUDOKU_SIZE || !self.is_complete() {
            return false;
        }
        let agrees = self.cells.iter().zip(&givens.cells).all(|(&a, &g)| g == 0 || a == g);
        agrees
            && (0..self.cells.len()).all(|i| {
                let mut probe = self.clone();
                let v = probe.cells[i];
                probe.cells[i] = 0;
                probe.can_place(i, v)
            })
    }
}

impl fmt::Display for PuzzleGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .cells
            .chunks(self.size)
            .map(|r| r.iter().map(|d| char::from(b'0' + d)).collect())
            .collect();
        f.write_str(&rows.join(" "))
    }
}

fn solve(grid: &mut PuzzleGrid, limit: usize, found: &mut usize, order: &[u8]) -> bool {
    let Some(idx) = grid.cells.iter().position(|&c| c == 0) else {
        *found += 1;
        return *found >= limit;
    };
    for &v in order {
        if grid.can_place(idx, v) {
            grid.cells[idx] = v;
            if solve(grid, limit, found, order) {
                return true;
            }
            grid.cells[idx] = 0;
        }
    }
    false
}

/// Number of completions of a 4x4 Sudoku, stopping early at `limit`.
pub fn count_sudoku_solutions(puzzle: &PuzzleGrid, limit: usize) -> usize {
    if puzzle.size != SUDOKU_SIZE {
        return 0;
    }
    let mut grid = puzzle.clone();
    // Givens that already conflict have no completion.
    for i in 0..grid.cells.len() {
        let v = grid.cells[i];
        if v != 0 {
            grid.cells[i] = 0;
            if !grid.can_place(i, v) {
                return 0;
            }
            grid.cells[i] = v;
        }
    }
    let mut found = 0;
    let order: Vec<u8> = (1..=SUDOKU_SIZE as u8).collect();
    solve(&mut grid, limit.max(1), &mut found, &order);
    found
}

fn random_full_sudoku<R: Rng>(rng: &mut R) -> PuzzleGrid {
    let mut grid = PuzzleGrid { size: SUDOKU_SIZE, cells: vec![0; SUDOKU_SIZE * SUDOKU_SIZE] };
    let mut order: Vec<u8> = (1..=SUDOKU_SIZE as u8).collect();
    order.shuffle(rng);
    let mut found = 0;
    solve(&mut grid, 1, &mut found, &order);
    // Permuting rows within bands and columns within stacks adds variety
    // beyond the digit relabelling.
    let mut rows: Vec<usize> = Vec::new();
    let mut bands = [0, 1];
    bands.shuffle(rng);
    for b in bands {
        let mut within = [0, 1];
        within.shuffle(rng);
        rows.extend(within.iter().map(|w| b * SUDOKU_BOX + w));
    }
    let mut cols: Vec<usize> = Vec::new();
    let mut stacks = [0, 1];
    stacks.shuffle(rng);
    for s in stacks {
        let mut within = [0, 1];
        within.shuffle(rng);
        cols.extend(within.iter().map(|w| s * SUDOKU_BOX + w));
    }
    let cells = rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).map(|(r, c)| grid.get(r, c)).collect();
    PuzzleGrid { size: SUDOKU_SIZE, cells }
}

/// Removes cells from a full grid while the solution stays unique, down to
/// a target drawn from `MIN_GIVENS..=MAX_GIVENS`.
fn carve<R: Rng>(solution: &PuzzleGrid, rng: &mut R) -> PuzzleGrid {
    let target = rng.gen_range(MIN_GIVENS..=MAX_GIVENS);
    let mut order: Vec<usize> = (0..solution.cells.len()).collect();
    order.shuffle(rng);
    let mut puzzle = solution.clone();
    for idx in order {
        if puzzle.givens() <= target {
            break;
        }
        let v = puzzle.cells[idx];
        puzzle.cells[idx] = 0;
        if count_sudoku_solutions(&puzzle, 2) != 1 {
            puzzle.cells[idx] = v;
        }
    }
    puzzle
}

fn sudoku_prompt(puzzle: &PuzzleGrid) -> String {
    format!(
        "Fill the positions where the values are 0 in a 4x4 grid with digits 1-4 so that each column, each row, \
         and each of the four 2x2 subgrids that compose the grid contains all of the digits from 1 to 4.\n\n\
         Input:\n{puzzle}\nOutput:"
    )
}

/// A 4x4 Sudoku with a unique solution and 6-10 givens.
pub fn gen_sudoku(seed: u64) -> BenchInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let solution = random_full_sudoku(&mut rng);
    let puzzle = carve(&solution, &mut rng);
    let shot_solution = random_full_sudoku(&mut rng);
    let shot_puzzle = carve(&shot_solution, &mut rng);
    BenchInstance {
        id: format!("puzzle/sudoku/s{seed}"),
        category: Category::Puzzle,
        task_kind: "sudoku".into(),
        prompt: sudoku_prompt(&puzzle),
        one_shot: Some(OneShot { prompt: sudoku_prompt(&shot_puzzle), answer: shot_solution.to_string() }),
        checker: Checker::Sudoku { puzzle: puzzle.to_string() },
        metadata: Metadata {
            grid: Some(puzzle.to_string()),
            reference_answer: Some(solution.to_string()),
            seed: Some(seed),
            ..Metadata::default()
        },
    }
}

/// Four consecutive 4-digit rows anywhere in the output, or a 16-digit run.
pub fn parse_sudoku_answer(output: &str) -> Option<PuzzleGrid> {
    let tokens: Vec<&str> = output
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';' || c == '|')
        .filter(|t| !t.is_empty())
        .collect();
    let is_row = |t: &&str| t.len() == SUDOKU_SIZE && t.chars().all(|c| c.is_ascii_digit());
    for w in tokens.windows(SUDOKU_SIZE) {
        if w.iter().all(is_row) {
            return PuzzleGrid::parse_digits(&w.join(" "), SUDOKU_SIZE);
        }
    }
    tokens
        .iter()
        .find(|t| t.len() == SUDOKU_SIZE * SUDOKU_SIZE && t.chars().all(|c| c.is_ascii_digit()))
        .and_then(|t| PuzzleGrid::parse_digits(t, SUDOKU_SIZE))
}

fn latin_fill<R: Rng>(grid: &mut Vec<Option<usize>>, size: usize, rng: &mut R) -> bool {
    let Some(idx) = grid.iter().position(Option::is_none) else {
        return true;
    };
    let (r, c) = (idx / size, idx % size);
    let mut values: Vec<usize> = (0..size).collect();
    values.shuffle(rng);
    for v in values {
        let clash = (0..size).any(|j| grid[r * size + j] == Some(v) || grid[j * size + c] == Some(v));
        if !clash {
            grid[idx] = Some(v);
            if latin_fill(grid, size, rng) {
                return true;
            }
            grid[idx] = None;
        }
    }
    false
}

fn count_latin_from(grid: &mut Vec<Option<usize>>, size: usize) -> u64 {
    let Some(idx) = grid.iter().position(Option::is_none) else {
        return 1;
    };
    let (r, c) = (idx / size, idx % size);
    let mut total = 0;
    for v in 0..size {
        if !(0..size).any(|j| grid[r * size + j] == Some(v) || grid[j * size + c] == Some(v)) {
            grid[idx] = Some(v);
            total += count_latin_from(grid, size);
            grid[idx] = None;
        }
    }
    total
}

/// Number of Latin squares of the given order, by exhaustive search.
pub fn count_latin_squares(size: usize) -> u64 {
    count_latin_from(&mut vec![None; size * size], size)
}

pub(super) fn is_latin_square(rows: &[Vec<String>], symbols: &[String]) -> bool {
    let size = symbols.len();
    if rows.len() != size || rows.iter().any(|r| r.len() != size) {
        return false;
    }
    let is_perm = |cells: Vec<&String>| {
        let mut a: Vec<&String> = cells;
        a.sort();
        let mut b: Vec<&String> = symbols.iter().collect();
        b.sort();
        a == b
    };
    (0..size).all(|i| is_perm(rows[i].iter().collect()) && is_perm(rows.iter().map(|r| &r[i]).collect()))
}

/// First `size` consecutive CSV rows with `size` cells each. Rows may be
/// separated by newlines or by whitespace.
pub fn parse_latin_square(output: &str, size: usize) -> Option<Vec<Vec<String>>> {
    let split_row = |line: &str| -> Vec<String> {
        line.split(',').map(|c| c.trim().trim_matches(|ch| ch == '"' || ch == '\'').to_string()).collect()
    };
    let find = |lines: Vec<&str>| -> Option<Vec<Vec<String>>> {
        let rows: Vec<Option<Vec<String>>> = lines
            .iter()
            .map(|l| {
                let cells = split_row(l);
                (cells.len() == size && cells.iter().all(|c| !c.is_empty())).then_some(cells)
            })
            .collect();
        rows.windows(size).find(|w| w.iter().all(Option::is_some)).map(|w| w.iter().flatten().cloned().collect())
    };
    if size == 0 {
        return None;
    }
    find(output.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
        .or_else(|| find(output.split_whitespace().collect()))
}

fn latin_prompt(size: usize, symbols: &[String]) -> String {
    format!("Generate a Latin square of size {size} with the symbols [{}]. Only output the final result as CSV.", symbols.join(", "))
}

fn draw_latin<R: Rng>(size: usize, rng: &mut R) -> (Vec<String>, String) {
    let pool: Vec<char> = SYMBOL_POOL.chars().collect();
    let symbols: Vec<String> = pool.choose_multiple(rng, size).map(|c| c.to_string()).collect();
    let mut grid = vec![None; size * size];
    latin_fill(&mut grid, size, rng);
    let answer = grid
        .chunks(size)
        .map(|row| row.iter().map(|v| symbols[v.expect("filled")].as_str()).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n");
    (symbols, answer)
}

pub fn gen_latin_square(size: usize, seed: u64) -> Result<BenchInstance, BenchError> {
    if !(2..=MAX_LATIN_SIZE).contains(&size) {
        return Err(BenchError::BadLength { n: size, min: 2, max: MAX_LATIN_SIZE });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (symbols, answer) = draw_latin(size, &mut rng);
    let (shot_symbols, shot_answer) = draw_latin(size, &mut rng);
    Ok(BenchInstance {
        id: format!("puzzle/latin_square/s{seed}"),
        category: Category::Puzzle,
        task_kind: "latin_square".into(),
        prompt: latin_prompt(size, &symbols),
        one_shot: Some(OneShot { prompt: latin_prompt(size, &shot_symbols), answer: shot_answer }),
        checker: Checker::LatinSquare { size, symbols: symbols.clone() },
        metadata: Metadata {
            n: Some(size),
            symbols: Some(symbols),
            reference_answer: Some(answer),
            seed: Some(seed),
            ..Metadata::default()
        },
    })
}
