//! Sudoku: grids, a constraint-propagation solver, dataset generation and
//! the 81-node network model.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Targets, Topology};
use crate::nn::{Bound, Embedding, Mlp, MlpSpec, ParamSet};
use crate::rng::{self, Rng};
use crate::rrn::{NodeFunction, Rrn, RrnConfig, StepOutputs};
use crate::tape::{Tape, Var};

pub const CELLS: usize = 81;

const fn build_units() -> [[u8; 9]; 27] {
    let mut units = [[0u8; 9]; 27];
    let mut i = 0;
    while i < 9 {
        let mut j = 0;
        while j < 9 {
            units[i][j] = (i * 9 + j) as u8;
            units[9 + i][j] = (j * 9 + i) as u8;
            let (br, bc) = ((i / 3) * 3, (i % 3) * 3);
            units[18 + i][j] = ((br + j / 3) * 9 + bc + j % 3) as u8;
            j += 1;
        }
        i += 1;
    }
    units
}

const fn build_peers() -> [[u8; 20]; 81] {
    let mut peers = [[0u8; 20]; 81];
    let mut c = 0;
    while c < 81 {
        let (r, col) = (c / 9, c % 9);
        let mut n = 0;
        let mut o = 0;
        while o < 81 {
            let (orow, ocol) = (o / 9, o % 9);
            let same_box = orow / 3 == r / 3 && ocol / 3 == col / 3;
            if o != c && (orow == r || ocol == col || same_box) {
                peers[c][n] = o as u8;
                n += 1;
            }
            o += 1;
        }
        c += 1;
    }
    peers
}

/// Rows 0..9, columns 9..18, boxes 18..27.
pub const UNITS: [[u8; 9]; 27] = build_units();
const PEERS: [[u8; 20]; 81] = build_peers();

/// The 20 cells sharing a row, column or box with `cell`, ascending.
pub fn peers(cell: usize) -> Result<[usize; 20]> {
    if cell >= CELLS {
        return Err(Error::bounds("sudoku cell", cell, CELLS));
    }
    Ok(PEERS[cell].map(usize::from))
}

/// Row, column and box unit indices of a cell.
pub fn units_of(cell: usize) -> [usize; 3] {
    [cell / 9, 9 + cell % 9, 18 + (cell / 27) * 3 + (cell % 9) / 3]
}

/// An 81-cell grid with 0 for blanks.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Puzzle {
    cells: [u8; CELLS],
}

/// A completely filled grid.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Solution {
    cells: [u8; CELLS],
}

fn parse_grid(text: &str, allow_blank: bool) -> Result<[u8; CELLS]> {
    let text = text.trim();
    let chars: Vec<char> = text.chars().collect();
    if chars.len() != CELLS {
        return Err(Error::Parse {
            location: String::from("grid"),
            message: format!("expected 81 cells, found {}", chars.len()),
        });
    }
    let mut cells = [0u8; CELLS];
    for (i, ch) in chars.into_iter().enumerate() {
        cells[i] = match ch {
            '1'..='9' => ch as u8 - b'0',
            '0' | '.' if allow_blank => 0,
            _ => {
                return Err(Error::Parse {
                    location: format!("cell {i}"),
                    message: format!("unexpected character {ch:?}"),
                })
            }
        };
    }
    Ok(cells)
}

fn write_grid(cells: &[u8; CELLS], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for &c in cells {
        write!(f, "{c}")?;
    }
    Ok(())
}

impl Puzzle {
    pub fn new(cells: [u8; CELLS]) -> Result<Self> {
        if let Some(i) = cells.iter().position(|&c| c > 9) {
            return Err(Error::bounds("sudoku digit", usize::from(cells[i]), 10));
        }
        Ok(Puzzle { cells })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(Puzzle {
            cells: parse_grid(text, true)?,
        })
    }

    pub fn cells(&self) -> &[u8; CELLS] {
        &self.cells
    }

    pub fn givens(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// No unit holds the same nonzero digit twice.
    pub fn is_consistent(&self) -> bool {
        UNITS.iter().all(|unit| {
            let mut seen = 0u16;
            unit.iter().all(|&c| {
                let d = self.cells[usize::from(c)];
                if d == 0 {
                    return true;
                }
                let bit = 1 << d;
                let fresh = seen & bit == 0;
                seen |= bit;
                fresh
            })
        })
    }

    /// Applies `map[d - 1]` to every nonzero digit.
    pub fn relabel(&self, map: &[u8; 9]) -> Puzzle {
        Puzzle {
            cells: self.cells.map(|d| if d == 0 { 0 } else { map[usize::from(d) - 1] }),
        }
    }
}

impl Solution {
    pub fn new(cells: [u8; CELLS]) -> Result<Self> {
        if let Some(i) = cells.iter().position(|&c| !(1..=9).contains(&c)) {
            return Err(Error::bounds("solution digit", usize::from(cells[i]), 10));
        }
        Ok(Solution { cells })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(Solution {
            cells: parse_grid(text, false)?,
        })
    }

    pub fn cells(&self) -> &[u8; CELLS] {
        &self.cells
    }

    pub fn as_puzzle(&self) -> Puzzle {
        Puzzle { cells: self.cells }
    }

    pub fn relabel(&self, map: &[u8; 9]) -> Solution {
        Solution {
            cells: self.cells.map(|d| map[usize::from(d) - 1]),
        }
    }
}

impl fmt::Display for Puzzle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_grid(&self.cells, f)
    }
}

impl fmt::Debug for Puzzle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Puzzle({self})")
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_grid(&self.cells, f)
    }
}

impl fmt::Debug for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Solution({self})")
    }
}

/// True iff `s` satisfies all 27 units and agrees with every given of `p`.
pub fn validate_solution(s: &Solution, p: &Puzzle) -> bool {
    let units_ok = UNITS.iter().all(|unit| {
        let mask = unit.iter().fold(0u16, |m, &c| m | 1 << s.cells[usize::from(c)]);
        mask == 0b11_1111_1110
    });
    units_ok && p.cells.iter().zip(&s.cells).all(|(&g, &d)| g == 0 || g == d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveOutcome {
    Solved(Solution),
    Unsolvable,
    /// Two distinct completions exist (only reported when uniqueness is
    /// checked).
    Ambiguous(Solution, Solution),
}

const ALL: u16 = 0b11_1111_1110;

#[derive(Clone, Copy)]
struct Candidates([u16; CELLS]);

impl Candidates {
    fn assign(&mut self, cell: usize, d: u8) -> bool {
        let others = self.0[cell] & !(1 << d);
        (1..=9u8).all(|o| others & (1 << o) == 0 || self.eliminate(cell, o))
    }

    fn eliminate(&mut self, cell: usize, d: u8) -> bool {
        let bit = 1u16 << d;
        if self.0[cell] & bit == 0 {
            return true;
        }
        self.0[cell] &= !bit;
        let left = self.0[cell];
        if left == 0 {
            return false;
        }
        if left.count_ones() == 1 {
            let only = left.trailing_zeros() as u8;
            if !PEERS[cell].iter().all(|&p| self.eliminate(usize::from(p), only)) {
                return false;
            }
        }
        for u in units_of(cell) {
            let mut places = UNITS[u].iter().map(|&c| usize::from(c)).filter(|&c| self.0[c] & bit != 0);
            match (places.next(), places.next()) {
                (None, _) => return false,
                (Some(only), None) => {
                    if self.0[only] != bit && !self.assign(only, d) {
                        return false;
                    }
                }
                _ => {}
            }
        }
        true
    }

    fn from_puzzle(p: &Puzzle) -> Option<Self> {
        if !p.is_consistent() {
            return None;
        }
        let mut c = Candidates([ALL; CELLS]);
        for (i, &d) in p.cells.iter().enumerate() {
            if d != 0 && !c.assign(i, d) {
                return None;
            }
        }
        Some(c)
    }

    fn to_solution(self) -> Solution {
        Solution {
            cells: self.0.map(|m| m.trailing_zeros() as u8),
        }
    }

    /// Depth-first search; `found` collects up to `limit` solutions.
    fn search(self, found: &mut Vec<Solution>, limit: usize) {
        let branch = (0..CELLS)
            .filter(|&i| self.0[i].count_ones() > 1)
            .min_by_key(|&i| (self.0[i].count_ones(), i));
        let Some(cell) = branch else {
            found.push(self.to_solution());
            return;
        };
        for d in 1..=9u8 {
            if self.0[cell] & (1 << d) == 0 {
                continue;
            }
            let mut next = self;
            if next.assign(cell, d) {
                next.search(found, limit);
                if found.len() >= limit {
                    return;
                }
            }
        }
    }
}

/// Solves by candidate propagation and depth-first search (fewest
/// candidates first, lowest index on ties, digits ascending).
pub fn solve(p: &Puzzle) -> SolveOutcome {
    solve_with(p, false)
}

pub fn solve_with(p: &Puzzle, check_unique: bool) -> SolveOutcome {
    let Some(root) = Candidates::from_puzzle(p) else {
        return SolveOutcome::Unsolvable;
    };
    let mut found = Vec::new();
    root.search(&mut found, if check_unique { 2 } else { 1 });
    match found.as_slice() {
        [] => SolveOutcome::Unsolvable,
        [s] => SolveOutcome::Solved(*s),
        [a, b, ..] => SolveOutcome::Ambiguous(*a, *b),
    }
}

/// Number of completions, counting at most `limit`.
pub fn count_solutions(p: &Puzzle, limit: usize) -> usize {
    let Some(root) = Candidates::from_puzzle(p) else {
        return 0;
    };
    let mut found = Vec::new();
    root.search(&mut found, limit.max(1));
    found.len()
}

/// Uniform random permutation of the digits 1..=9.
pub fn random_relabeling(rng: &mut Rng) -> [u8; 9] {
    let mut map = [1, 2, 3, 4, 5, 6, 7, 8, 9];
    map.shuffle(rng);
    map
}

/// Pools and per-n sample counts for dataset generation. Index order
/// everywhere is test, validation, train.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub pool_sizes: [usize; 3],
    pub k: [usize; 3],
    /// Extra givens range over `0..=max_extra`.
    pub max_extra: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn paper(seed: u64) -> Self {
        DatasetSpec {
            pool_sizes: [10_000, 1_000, 38_151],
            k: [1_000, 1_000, 10_000],
            max_extra: 17,
            seed,
        }
    }

    /// Same k for all three sets, pools split 20/10/70 from `seeds`.
    pub fn scaled(k: usize, seeds: usize, seed: u64) -> Self {
        let test = seeds / 5;
        let valid = seeds / 10;
        DatasetSpec {
            pool_sizes: [test, valid, seeds - test - valid],
            k: [k; 3],
            max_extra: 17,
            seed,
        }
    }

    pub fn total(&self) -> usize {
        self.k.iter().sum::<usize>() * (self.max_extra + 1)
    }
}

pub type Example = (Puzzle, Solution);

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SudokuSplits {
    pub test: Vec<Example>,
    pub valid: Vec<Example>,
    pub train: Vec<Example>,
}

/// One sample: `extra` random solution digits revealed, then every digit
/// relabeled by a fresh permutation.
pub fn augment(example: &Example, extra: usize, rng: &mut Rng) -> Example {
    let (p, s) = example;
    let mut cells = *p.cells();
    let mut blanks: Vec<usize> = (0..CELLS).filter(|&i| cells[i] == 0).collect();
    let (chosen, _) = blanks.partial_shuffle(rng, extra);
    for &i in chosen.iter() {
        cells[i] = s.cells[i];
    }
    let map = random_relabeling(rng);
    (Puzzle { cells }.relabel(&map), s.relabel(&map))
}

/// Splits `seeds` into pools by a seeded shuffle and samples `k` puzzles
/// per extra-given count from each pool, with replacement.
pub fn generate_dataset(spec: &DatasetSpec, seeds: &[Example]) -> Result<SudokuSplits> {
    let needed: usize = spec.pool_sizes.iter().sum();
    if needed > seeds.len() {
        return Err(Error::config(format!("dataset pools need {needed} seed puzzles, {} available", seeds.len())));
    }
    if spec.pool_sizes.iter().zip(&spec.k).any(|(&pool, &k)| pool == 0 && k > 0) {
        return Err(Error::config("empty seed pool"));
    }
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    order.shuffle(&mut rng::stream(spec.seed, 0));
    let mut start = 0;
    let mut sets: [Vec<Example>; 3] = Default::default();
    for (set, (&size, &k)) in spec.pool_sizes.iter().zip(&spec.k).enumerate() {
        let pool = &order[start..start + size];
        start += size;
        let mut r = rng::stream(spec.seed, 1 + set as u64);
        for extra in 0..=spec.max_extra {
            for _ in 0..k {
                let pick = pool[r.gen_range(0..pool.len())];
                let ex = &seeds[pick];
                if extra > CELLS - ex.0.givens() {
                    return Err(Error::config("too few blanks for the requested extra givens"));
                }
                sets[set].push(augment(ex, extra, &mut r));
            }
        }
    }
    let [test, valid, train] = sets;
    Ok(SudokuSplits { test, valid, train })
}

/// Histogram of givens counts.
pub fn givens_histogram(examples: &[Example]) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for (p, _) in examples {
        *h.entry(p.givens()).or_insert(0) += 1;
    }
    h
}

/// Directed peer edges, 1,620 in total, ascending by (source, target).
pub fn topology() -> Topology {
    let edges: Vec<(usize, usize)> = (0..CELLS)
        .flat_map(|c| PEERS[c].iter().map(move |&p| (c, usize::from(p))))
        .collect();
    Topology::new(CELLS, &edges, false).expect("peer edges are valid")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SudokuModelConfig {
    pub hidden: usize,
    pub embed: usize,
    pub steps: usize,
    pub relu_layers: usize,
    /// Multiply row and column embeddings by zero.
    pub drop_position: bool,
}

impl SudokuModelConfig {
    pub fn paper() -> Self {
        SudokuModelConfig {
            hidden: 96,
            embed: 16,
            steps: 32,
            relu_layers: 3,
            drop_position: false,
        }
    }

    pub fn rrn_config(&self) -> RrnConfig {
        let mut c = RrnConfig::new(self.hidden, self.steps, self.relu_layers, 9);
        c.node_function = NodeFunction::Lstm;
        c.readout_layers = vec![9];
        c.readout_dropout = vec![None];
        c
    }
}

#[derive(Clone, Debug)]
pub struct SudokuModel {
    config: SudokuModelConfig,
    digit: Embedding,
    row: Embedding,
    col: Embedding,
    encoder: Mlp,
    rrn: Rrn,
    topology: Topology,
}

impl SudokuModel {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, config: SudokuModelConfig) -> Result<Self> {
        let digit = Embedding::new(params, rng, "sudoku.embed.digit", 10, config.embed)?;
        let row = Embedding::new(params, rng, "sudoku.embed.row", 9, config.embed)?;
        let col = Embedding::new(params, rng, "sudoku.embed.col", 9, config.embed)?;
        let encoder = Mlp::new(
            params,
            rng,
            "sudoku.encoder",
            MlpSpec::uniform(3 * config.embed, config.hidden, config.relu_layers, config.hidden),
        )?;
        let rrn = Rrn::new(params, rng, "sudoku.rrn", config.rrn_config())?;
        Ok(SudokuModel {
            config,
            digit,
            row,
            col,
            encoder,
            rrn,
            topology: topology(),
        })
    }

    pub fn config(&self) -> &SudokuModelConfig {
        &self.config
    }

    pub fn rrn(&self) -> &Rrn {
        &self.rrn
    }

    pub fn batch_topology(&self, puzzles: usize) -> Topology {
        self.topology.repeat(puzzles)
    }

    /// Node features `x_j` for a batch, `81 * batch x hidden`.
    pub fn encode_features(&self, tape: &mut Tape, bound: &Bound, puzzles: &[Puzzle]) -> Result<Var> {
        let digits: Vec<usize> = puzzles.iter().flat_map(|p| p.cells.iter().map(|&d| usize::from(d))).collect();
        let rows: Vec<usize> = (0..puzzles.len() * CELLS).map(|i| (i % CELLS) / 9).collect();
        let cols: Vec<usize> = (0..puzzles.len() * CELLS).map(|i| i % 9).collect();
        let d = self.digit.lookup(tape, bound, &digits)?;
        let mut r = self.row.lookup(tape, bound, &rows)?;
        let mut c = self.col.lookup(tape, bound, &cols)?;
        if self.config.drop_position {
            r = tape.scale(r, 0.0);
            c = tape.scale(c, 0.0);
        }
        let joined = tape.concat(&[d, r, c])?;
        self.encoder.forward(tape, bound, joined)
    }

    /// Unrolled run over a batch; per-node targets are the solution digits
    /// (class `d - 1`).
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        puzzles: &[Puzzle],
        solutions: Option<&[Solution]>,
    ) -> Result<StepOutputs> {
        let targets = match solutions {
            Some(s) => {
                if s.len() != puzzles.len() {
                    return Err(Error::dim("solutions", puzzles.len(), s.len()));
                }
                Targets::PerNode(s.iter().flat_map(|s| s.cells.iter().map(|&d| usize::from(d) - 1)).collect())
            }
            None => Targets::None,
        };
        let topo = self.batch_topology(puzzles.len());
        let x = self.encode_features(tape, bound, puzzles)?;
        self.rrn.run_unrolled(tape, bound, &topo, x, None, &targets)
    }

    /// Per-step predicted grids for `steps` steps (index 0 is the readout
    /// before any message passing).
    pub fn predict_steps(&self, params: &ParamSet, puzzles: &[Puzzle], steps: usize) -> Result<Vec<Vec<Solution>>> {
        let mut out = Vec::with_capacity(steps + 1);
        self.infer(params, puzzles, steps, |_, tape, logits| {
            let preds = crate::rrn::predictions(tape, logits);
            out.push(
                preds
                    .chunks(CELLS)
                    .map(|c| Solution {
                        cells: core::array::from_fn(|i| c[i] as u8 + 1),
                    })
                    .collect(),
            );
            Ok(())
        })?;
        Ok(out)
    }

    /// Softmax tables per step, `steps + 1` entries of `81 * batch x 9`.
    pub fn dump_steps(&self, params: &ParamSet, puzzles: &[Puzzle], steps: usize) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(steps + 1);
        self.infer(params, puzzles, steps, |_, tape, logits| {
            out.push(crate::rrn::probabilities(tape, logits));
            Ok(())
        })?;
        Ok(out)
    }

    fn infer<F>(&self, params: &ParamSet, puzzles: &[Puzzle], steps: usize, mut f: F) -> Result<()>
    where
        F: FnMut(usize, &Tape, Var) -> Result<()>,
    {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = self.encode_features(&mut tape, &bound, puzzles)?;
        let topo = self.batch_topology(puzzles.len());
        self.rrn
            .infer(params, &topo, tape.value(x), None, steps, |t, tape, logits, _| f(t, tape, logits))
    }
}

/// Fraction of puzzles solved per (givens, step).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AccuracyTable {
    pub steps: usize,
    /// givens -> (puzzles, solved count per step 0..=steps)
    pub by_givens: BTreeMap<usize, (usize, Vec<usize>)>,
}

impl AccuracyTable {
    pub fn accuracy(&self, givens: usize, step: usize) -> Option<f64> {
        self.by_givens
            .get(&givens)
            .map(|(n, solved)| solved[step] as f64 / (*n).max(1) as f64)
    }

    pub fn overall(&self, step: usize) -> f64 {
        let (n, s) = self
            .by_givens
            .values()
            .fold((0, 0), |(n, s), (count, solved)| (n + count, s + solved[step]));
        s as f64 / n.max(1) as f64
    }
}

/// A puzzle counts as solved at a step iff all 81 argmax digits equal the
/// solution.
pub fn evaluate(
    model: &SudokuModel,
    params: &ParamSet,
    data: &[Example],
    steps: usize,
    batch: usize,
) -> Result<AccuracyTable> {
    let mut table = AccuracyTable {
        steps,
        by_givens: BTreeMap::new(),
    };
    for chunk in data.chunks(batch.max(1)) {
        let puzzles: Vec<Puzzle> = chunk.iter().map(|e| e.0).collect();
        let preds = model.predict_steps(params, &puzzles, steps)?;
        for (i, (p, s)) in chunk.iter().enumerate() {
            let entry = table
                .by_givens
                .entry(p.givens())
                .or_insert_with(|| (0, vec![0; steps + 1]));
            entry.0 += 1;
            for (t, step_preds) in preds.iter().enumerate() {
                if step_preds[i] == *s {
                    entry.1[t] += 1;
                }
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EASY: &str = "003020600900305001001806400008102900700000008006708200002609500800203009005010300";
    const EASY_SOLUTION: &str = "483921657967345821251876493548132976729564138136798245372689514814253769695417382";

    #[test]
    fn peers_of_origin() {
        let p = peers(0).unwrap();
        let mut expected: Vec<usize> = (1..9).chain([9, 18, 27, 36, 45, 54, 63, 72]).chain([10, 11, 19, 20]).collect();
        expected.sort_unstable();
        assert_eq!(p.to_vec(), expected);
        assert!(peers(81).is_err());
    }

    #[test]
    fn solves_easy_puzzle() {
        let p = Puzzle::parse(EASY).unwrap();
        let s = Solution::parse(EASY_SOLUTION).unwrap();
        assert_eq!(solve(&p), SolveOutcome::Solved(s));
        assert!(validate_solution(&s, &p));
        assert_eq!(solve(&s.as_puzzle()), SolveOutcome::Solved(s));
    }

    #[test]
    fn duplicate_in_row_is_unsolvable() {
        let mut cells = [0u8; 81];
        cells[0] = 5;
        cells[8] = 5;
        assert_eq!(solve(&Puzzle::new(cells).unwrap()), SolveOutcome::Unsolvable);
    }

    #[test]
    fn swapped_cells_fail_validation() {
        let s = Solution::parse(EASY_SOLUTION).unwrap();
        let mut cells = *s.cells();
        cells.swap(0, 1);
        let bad = Solution::new(cells).unwrap();
        assert!(!validate_solution(&bad, &Puzzle::new([0; 81]).unwrap()));
    }

    #[test]
    fn empty_grid_is_ambiguous() {
        let p = Puzzle::new([0; 81]).unwrap();
        assert!(matches!(solve_with(&p, true), SolveOutcome::Ambiguous(..)));
        assert_eq!(count_solutions(&Puzzle::parse(EASY).unwrap(), 5), 1);
    }

    #[test]
    fn topology_has_1620_edges() {
        let t = topology();
        assert_eq!(t.num_edges(), 1620);
        assert!((0..81).all(|c| t.in_degree(c) == 20));
    }
}
