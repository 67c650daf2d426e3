//! Sum-product loopy belief propagation on the Sudoku constraint graph.
//!
//! Two factorizations are available: one pairwise not-equal factor per
//! pair of peers (the default), or one exact all-different factor per
//! row, column and box.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::sudoku::{self, validate_solution, Puzzle, Solution, CELLS};

pub const STATES: usize = 9;
pub const FACTORS: usize = CELLS * 20 / 2;

/// A distribution over the nine digits.
pub type Msg = [f64; STATES];

const UNIFORM: Msg = [1.0 / STATES as f64; STATES];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Every message recomputed from the previous sweep's messages.
    Parallel,
    /// One uniformly drawn message at a time; 1,620 draws per sweep.
    Random,
}

/// Constraint factorization of the Sudoku rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factors {
    /// One not-equal factor per pair of peers (810 factors).
    Pairwise,
    /// One all-different factor per row, column and box (27 factors).
    Units,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpConfig {
    pub factors: Factors,
    pub schedule: Schedule,
    /// Weight of the old message in `(1 - d) * new + d * old`.
    pub damping: f64,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig {
            factors: Factors::Pairwise,
            schedule: Schedule::Parallel,
            damping: 0.0,
            max_sweeps: 1_000,
            tolerance: 1e-9,
        }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::config("damping must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Log of each incoming factor message, with exact zeros counted apart so
/// that excluding one message never subtracts infinities.
#[derive(Clone, Copy, Debug, Default)]
struct LogAccumulator {
    sum: Msg,
    zeros: [u32; STATES],
}

impl LogAccumulator {
    fn add(&mut self, log_msg: &Msg) {
        for d in 0..STATES {
            if log_msg[d] == f64::NEG_INFINITY {
                self.zeros[d] += 1;
            } else {
                self.sum[d] += log_msg[d];
            }
        }
    }

    fn remove(&mut self, log_msg: &Msg) {
        for d in 0..STATES {
            if log_msg[d] == f64::NEG_INFINITY {
                self.zeros[d] -= 1;
            } else {
                self.sum[d] -= log_msg[d];
            }
        }
    }

    /// Total with one message left out.
    fn without(&self, log_msg: &Msg) -> Msg {
        let mut out = [0.0; STATES];
        for d in 0..STATES {
            let (sum, zeros) = if log_msg[d] == f64::NEG_INFINITY {
                (self.sum[d], self.zeros[d] - 1)
            } else {
                (self.sum[d] - log_msg[d], self.zeros[d])
            };
            out[d] = if zeros > 0 { f64::NEG_INFINITY } else { sum };
        }
        out
    }

    fn total(&self) -> Msg {
        core::array::from_fn(|d| if self.zeros[d] > 0 { f64::NEG_INFINITY } else { self.sum[d] })
    }
}

fn log_msg(m: &Msg) -> Msg {
    m.map(|p| if p > 0.0 { math::ln(p) } else { f64::NEG_INFINITY })
}

/// Normalized `exp(log)`; `None` when every entry is zero.
fn normalize_log(log: &Msg) -> Option<Msg> {
    let max = log.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut out = log.map(|l| math::exp(l - max));
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= s);
    Some(out)
}

/// Pairwise factor graph over variables with 9 states. Messages are
/// indexed by directed edge `(a, b)`: `var_to_factor[e]` runs from `a`
/// into the factor `{a, b}` and `factor_to_var[e]` from that factor into
/// `b`.
#[derive(Clone, Debug)]
pub struct PairwiseFactorGraph {
    log_evidence: Vec<Msg>,
    src: Vec<usize>,
    dst: Vec<usize>,
    reverse: Vec<usize>,
    incoming: Vec<Vec<usize>>,
    var_to_factor: Vec<Msg>,
    factor_to_var: Vec<Msg>,
    log_factor_to_var: Vec<Msg>,
    contradiction: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpResult {
    pub marginals: Vec<Msg>,
    pub converged: bool,
    pub sweeps: usize,
    /// A variable had no state left with nonzero belief.
    pub contradiction: bool,
}

impl PairwiseFactorGraph {
    /// Generic constructor: `evidence[v]` is an unnormalized prior per
    /// variable, `pairs` the unordered not-equal constraints.
    pub fn new(evidence: &[Msg], pairs: &[(usize, usize)]) -> Result<Self> {
        let n = evidence.len();
        let mut src = Vec::with_capacity(2 * pairs.len());
        let mut dst = Vec::with_capacity(2 * pairs.len());
        let mut reverse = Vec::with_capacity(2 * pairs.len());
        let mut incoming = vec![Vec::new(); n];
        for (k, &(a, b)) in pairs.iter().enumerate() {
            if a >= n || b >= n || a == b {
                return Err(Error::bounds("factor endpoint", a.max(b), n));
            }
            src.extend([a, b]);
            dst.extend([b, a]);
            reverse.extend([2 * k + 1, 2 * k]);
            incoming[b].push(2 * k);
            incoming[a].push(2 * k + 1);
        }
        let mut log_evidence = Vec::with_capacity(n);
        for e in evidence {
            let s: f64 = e.iter().sum();
            if !(s > 0.0) || e.iter().any(|&p| p < 0.0) {
                return Err(Error::contract("evidence must be nonnegative with positive mass"));
            }
            log_evidence.push(log_msg(&e.map(|p| p / s)));
        }
        let m = src.len();
        Ok(PairwiseFactorGraph {
            log_evidence,
            src,
            dst,
            reverse,
            incoming,
            var_to_factor: vec![UNIFORM; m],
            factor_to_var: vec![UNIFORM; m],
            log_factor_to_var: vec![log_msg(&UNIFORM); m],
            contradiction: false,
        })
    }

    /// Delta evidence on givens, uniform on blanks, one factor per peer
    /// pair.
    pub fn from_puzzle(puzzle: &Puzzle) -> Self {
        let evidence: Vec<Msg> = puzzle
            .cells()
            .iter()
            .map(|&d| {
                if d == 0 {
                    UNIFORM
                } else {
                    let mut e = [0.0; STATES];
                    e[usize::from(d) - 1] = 1.0;
                    e
                }
            })
            .collect();
        let mut pairs = Vec::with_capacity(FACTORS);
        for c in 0..CELLS {
            for p in sudoku::peers(c).expect("cell in range") {
                if p > c {
                    pairs.push((c, p));
                }
            }
        }
        PairwiseFactorGraph::new(&evidence, &pairs).expect("sudoku factors are valid")
    }

    pub fn num_variables(&self) -> usize {
        self.log_evidence.len()
    }

    pub fn num_factors(&self) -> usize {
        self.src.len() / 2
    }

    pub fn evidence(&self, v: usize) -> Msg {
        normalize_log(&self.log_evidence[v]).unwrap_or(UNIFORM)
    }

    pub fn var_to_factor(&self) -> &[Msg] {
        &self.var_to_factor
    }

    pub fn factor_to_var(&self) -> &[Msg] {
        &self.factor_to_var
    }

    fn accumulators(&self) -> Vec<LogAccumulator> {
        let mut acc = vec![LogAccumulator::default(); self.num_variables()];
        for (v, a) in acc.iter_mut().enumerate() {
            for &e in &self.incoming[v] {
                a.add(&self.log_factor_to_var[e]);
            }
        }
        acc
    }

    /// Evidence times every incoming factor message except the one from
    /// the factor the message is headed to.
    fn compute_var_to_factor(&mut self, acc: &LogAccumulator, e: usize) -> Msg {
        let a = self.src[e];
        let mut log = acc.without(&self.log_factor_to_var[self.reverse[e]]);
        for d in 0..STATES {
            log[d] += self.log_evidence[a][d];
        }
        normalize_log(&log).unwrap_or_else(|| {
            self.contradiction = true;
            UNIFORM
        })
    }

    /// Not-equal factor: `out[d] ∝ S - b[d]`.
    fn compute_factor_to_var(&mut self, e: usize) -> Msg {
        let b = &self.var_to_factor[e];
        let s: f64 = b.iter().sum();
        let mut out = b.map(|p| (s - p).max(0.0));
        let z: f64 = out.iter().sum();
        if z > 0.0 {
            out.iter_mut().for_each(|p| *p /= z);
            out
        } else {
            self.contradiction = true;
            UNIFORM
        }
    }

    /// Damped write of a factor message; returns the largest change.
    fn set_factor_to_var(&mut self, e: usize, update: Msg, damping: f64) -> f64 {
        let old = self.factor_to_var[e];
        let new: Msg = core::array::from_fn(|d| (1.0 - damping) * update[d] + damping * old[d]);
        let change = (0..STATES).map(|d| (new[d] - old[d]).abs()).fold(0.0, f64::max);
        self.factor_to_var[e] = new;
        self.log_factor_to_var[e] = log_msg(&new);
        change
    }

    fn sweep_parallel(&mut self, damping: f64) -> f64 {
        let acc = self.accumulators();
        for e in 0..self.src.len() {
            self.var_to_factor[e] = self.compute_var_to_factor(&acc[self.src[e]], e);
        }
        let mut change: f64 = 0.0;
        for e in 0..self.src.len() {
            let update = self.compute_factor_to_var(e);
            change = change.max(self.set_factor_to_var(e, update, damping));
        }
        change
    }

    /// Largest change if every message were recomputed at once. A random
    /// sweep leaves some messages undrawn, so its own change can read zero
    /// while stale messages remain.
    fn residual(&self) -> f64 {
        self.clone().sweep_parallel(0.0)
    }

    fn sweep_random(&mut self, damping: f64, rng: &mut Rng) -> f64 {
        let mut acc = self.accumulators();
        let mut change: f64 = 0.0;
        for _ in 0..self.src.len() {
            let e = rng.gen_range(0..self.src.len());
            self.var_to_factor[e] = self.compute_var_to_factor(&acc[self.src[e]], e);
            let update = self.compute_factor_to_var(e);
            let b = self.dst[e];
            let old_log = self.log_factor_to_var[e];
            change = change.max(self.set_factor_to_var(e, update, damping));
            acc[b].remove(&old_log);
            acc[b].add(&self.log_factor_to_var[e]);
        }
        change
    }

    /// Current beliefs: evidence times all incoming factor messages.
    pub fn marginals(&self) -> (Vec<Msg>, bool) {
        let mut contradiction = false;
        let marginals = self
            .accumulators()
            .iter()
            .enumerate()
            .map(|(v, acc)| {
                let mut log = acc.total();
                for d in 0..STATES {
                    log[d] += self.log_evidence[v][d];
                }
                normalize_log(&log).unwrap_or_else(|| {
                    contradiction = true;
                    UNIFORM
                })
            })
            .collect();
        (marginals, contradiction)
    }

    /// Runs sweeps until the largest message change drops below the
    /// tolerance or the budget runs out.
    pub fn iterate(&mut self, config: &BpConfig, rng: &mut Rng) -> Result<BpResult> {
        config.validate()?;
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < config.max_sweeps {
            sweeps += 1;
            let change = match config.schedule {
                Schedule::Parallel => self.sweep_parallel(config.damping),
                Schedule::Random => self.sweep_random(config.damping, rng),
            };
            if change < config.tolerance && (config.schedule == Schedule::Parallel || self.residual() < config.tolerance) {
                converged = true;
                break;
            }
        }
        let (marginals, zero_belief) = self.marginals();
        Ok(BpResult {
            marginals,
            converged,
            sweeps,
            contradiction: self.contradiction || zero_belief,
        })
    }
}

/// Factor graph with one exact all-different factor per row, column and
/// box. Messages are indexed by `(unit, slot)`.
#[derive(Clone, Debug)]
pub struct UnitFactorGraph {
    evidence: Vec<Msg>,
    cell_to_unit: Vec<[Msg; 9]>,
    unit_to_cell: Vec<[Msg; 9]>,
    /// For each cell, its three `(unit, slot)` positions.
    slots: Vec<[(usize, usize); 3]>,
    contradiction: bool,
}

const MASKS: usize = 1 << STATES;

/// Sum-product messages of an all-different factor over nine cells: the
/// message to slot `k` at digit `d` sums, over every assignment of the
/// remaining digits to the other slots, the product of their beliefs.
pub fn all_different_messages(q: &[Msg; 9]) -> Option<[Msg; 9]> {
    // prefix[A]: slots 0..|A| take exactly the digits in A.
    // suffix[B]: slots 9-|B|..9 take exactly the digits in B.
    let mut prefix = [0.0f64; MASKS];
    let mut suffix = [0.0f64; MASKS];
    prefix[0] = 1.0;
    suffix[0] = 1.0;
    // Each subset size is rescaled to a unit maximum; the scale is shared
    // by every entry of an outgoing message and cancels on normalizing.
    for size in 1..=9 {
        let (mut pmax, mut smax) = (0.0f64, 0.0f64);
        for mask in (1..MASKS).filter(|m| m.count_ones() as usize == size) {
            let (mut p, mut s) = (0.0, 0.0);
            for d in 0..STATES {
                if mask & (1 << d) != 0 {
                    p += prefix[mask ^ (1 << d)] * q[size - 1][d];
                    s += suffix[mask ^ (1 << d)] * q[9 - size][d];
                }
            }
            prefix[mask] = p;
            suffix[mask] = s;
            pmax = pmax.max(p);
            smax = smax.max(s);
        }
        if !(pmax > 0.0 && smax > 0.0) {
            return None;
        }
        for mask in (1..MASKS).filter(|m| m.count_ones() as usize == size) {
            prefix[mask] /= pmax;
            suffix[mask] /= smax;
        }
    }
    let full = MASKS - 1;
    if !(prefix[full] > 0.0) {
        return None;
    }
    let mut out = [[0.0; STATES]; 9];
    for mask in 0..MASKS {
        let k = mask.count_ones() as usize;
        if k == 9 || prefix[mask] == 0.0 {
            continue;
        }
        for d in 0..STATES {
            if mask & (1 << d) == 0 {
                out[k][d] += prefix[mask] * suffix[full & !mask & !(1 << d)];
            }
        }
    }
    for msg in &mut out {
        let z: f64 = msg.iter().sum();
        if !(z > 0.0) {
            return None;
        }
        msg.iter_mut().for_each(|p| *p /= z);
    }
    Some(out)
}

fn normalize(mut m: Msg) -> Option<Msg> {
    let z: f64 = m.iter().sum();
    if !(z > 0.0) {
        return None;
    }
    m.iter_mut().for_each(|p| *p /= z);
    Some(m)
}

impl UnitFactorGraph {
    pub fn from_puzzle(puzzle: &Puzzle) -> Self {
        let evidence = puzzle
            .cells()
            .iter()
            .map(|&d| {
                if d == 0 {
                    UNIFORM
                } else {
                    let mut e = [0.0; STATES];
                    e[usize::from(d) - 1] = 1.0;
                    e
                }
            })
            .collect();
        let slots = (0..CELLS)
            .map(|cell| {
                sudoku::units_of(cell).map(|u| {
                    let k = sudoku::UNITS[u].iter().position(|&c| usize::from(c) == cell);
                    (u, k.expect("cell lies in its units"))
                })
            })
            .collect();
        UnitFactorGraph {
            evidence,
            cell_to_unit: vec![[UNIFORM; 9]; 27],
            unit_to_cell: vec![[UNIFORM; 9]; 27],
            slots,
            contradiction: false,
        }
    }

    pub fn num_factors(&self) -> usize {
        self.unit_to_cell.len()
    }

    fn belief(&self, cell: usize, skip_unit: Option<usize>) -> Option<Msg> {
        // Log domain: three small factors can underflow to zero together.
        let mut lb = self.evidence[cell].map(math::ln);
        for &(u, k) in &self.slots[cell] {
            if Some(u) != skip_unit {
                for d in 0..STATES {
                    lb[d] += math::ln(self.unit_to_cell[u][k][d]);
                }
            }
        }
        let top = lb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return None;
        }
        normalize(lb.map(|x| math::exp(x - top)))
    }

    fn refresh_inputs(&mut self, unit: usize) {
        for k in 0..9 {
            let cell = usize::from(sudoku::UNITS[unit][k]);
            self.cell_to_unit[unit][k] = self.belief(cell, Some(unit)).unwrap_or_else(|| {
                self.contradiction = true;
                UNIFORM
            });
        }
    }

    fn unit_messages(&mut self, unit: usize) -> [Msg; 9] {
        all_different_messages(&self.cell_to_unit[unit]).unwrap_or_else(|| {
            self.contradiction = true;
            [UNIFORM; 9]
        })
    }

    fn write(&mut self, unit: usize, slot: usize, update: Msg, damping: f64) -> f64 {
        let old = self.unit_to_cell[unit][slot];
        let new: Msg = core::array::from_fn(|d| (1.0 - damping) * update[d] + damping * old[d]);
        self.unit_to_cell[unit][slot] = new;
        (0..STATES).map(|d| (new[d] - old[d]).abs()).fold(0.0, f64::max)
    }

    fn sweep_parallel(&mut self, damping: f64) -> f64 {
        for u in 0..27 {
            self.refresh_inputs(u);
        }
        let mut change: f64 = 0.0;
        for u in 0..27 {
            for (k, m) in self.unit_messages(u).into_iter().enumerate() {
                change = change.max(self.write(u, k, m, damping));
            }
        }
        change
    }

    /// Largest change if every message were recomputed at once. A random
    /// sweep leaves some messages undrawn, so its own change can read zero
    /// while stale messages remain.
    fn residual(&self) -> f64 {
        self.clone().sweep_parallel(0.0)
    }

    fn sweep_random(&mut self, damping: f64, rng: &mut Rng) -> f64 {
        let mut change: f64 = 0.0;
        for _ in 0..27 * 9 {
            let u = rng.gen_range(0..27);
            let k = rng.gen_range(0..9);
            self.refresh_inputs(u);
            let m = self.unit_messages(u)[k];
            change = change.max(self.write(u, k, m, damping));
        }
        change
    }

    pub fn marginals(&self) -> (Vec<Msg>, bool) {
        let mut contradiction = false;
        let m = (0..CELLS)
            .map(|cell| {
                self.belief(cell, None).unwrap_or_else(|| {
                    contradiction = true;
                    UNIFORM
                })
            })
            .collect();
        (m, contradiction)
    }

    pub fn iterate(&mut self, config: &BpConfig, rng: &mut Rng) -> Result<BpResult> {
        config.validate()?;
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < config.max_sweeps {
            sweeps += 1;
            let change = match config.schedule {
                Schedule::Parallel => self.sweep_parallel(config.damping),
                Schedule::Random => self.sweep_random(config.damping, rng),
            };
            if change < config.tolerance && (config.schedule == Schedule::Parallel || self.residual() < config.tolerance) {
                converged = true;
                break;
            }
        }
        let (marginals, zero) = self.marginals();
        Ok(BpResult {
            marginals,
            converged,
            sweeps,
            contradiction: self.contradiction || zero,
        })
    }
}

/// Per-cell argmax (ties toward the lower digit) and whether the result
/// solves `puzzle`.
pub fn decode(marginals: &[Msg], puzzle: &Puzzle) -> (Solution, bool) {
    let cells: [u8; CELLS] = core::array::from_fn(|i| {
        marginals.get(i).map_or(1, |m| math::argmax(m) as u8 + 1)
    });
    let s = Solution::new(cells).expect("digits in 1..=9");
    let ok = validate_solution(&s, puzzle);
    (s, ok)
}

/// Build, iterate and decode one puzzle.
pub fn solve_puzzle(puzzle: &Puzzle, config: &BpConfig, rng: &mut Rng) -> Result<(BpResult, Solution, bool)> {
    let result = match config.factors {
        Factors::Pairwise => PairwiseFactorGraph::from_puzzle(puzzle).iterate(config, rng)?,
        Factors::Units => UnitFactorGraph::from_puzzle(puzzle).iterate(config, rng)?,
    };
    let (s, ok) = decode(&result.marginals, puzzle);
    Ok((result, s, ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn factor_count_and_evidence() {
        let mut cells = [0u8; CELLS];
        cells[4] = 7;
        let g = PairwiseFactorGraph::from_puzzle(&Puzzle::new(cells).unwrap());
        assert_eq!(g.num_factors(), 810);
        let mut delta = [0.0; 9];
        delta[6] = 1.0;
        assert_eq!(g.evidence(4), delta);
        assert!(g.evidence(0).iter().all(|&p| (p - 1.0 / 9.0).abs() < 1e-15));
    }

    #[test]
    fn uniform_marginals_decode_to_ones() {
        let (s, ok) = decode(&vec![UNIFORM; CELLS], &Puzzle::new([0; CELLS]).unwrap());
        assert!(s.cells().iter().all(|&d| d == 1));
        assert!(!ok);
    }

    #[test]
    fn damping_out_of_range_is_rejected() {
        let g = &mut PairwiseFactorGraph::from_puzzle(&Puzzle::new([0; CELLS]).unwrap());
        let cfg = BpConfig {
            damping: 1.0,
            ..BpConfig::default()
        };
        assert!(g.iterate(&cfg, &mut rng::seeded(0)).is_err());
    }
}
