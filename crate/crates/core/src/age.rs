//! Age arithmetic: every labeled tree on eight persons, instances made of
//! one absolute and seven relative age facts, and the fact-graph model.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Targets, Topology};
use crate::nn::{Bound, Mlp, MlpSpec, ParamSet};
use crate::rng::Rng;
use crate::rrn::{self, NodeFunction, ReadoutScope, Rrn, RrnConfig, StepOutputs};
use crate::tape::{Tape, Var};

pub const PERSONS: usize = 8;
pub const EDGES: usize = PERSONS - 1;
pub const PRUFER_LEN: usize = PERSONS - 2;
pub const AGES: usize = 100;
/// 8^6 labeled trees on 8 nodes.
pub const TREE_COUNT: usize = 262_144;
/// personA 8 + personB 8 + sign 3 + magnitude 100 + question 8.
pub const INPUT_WIDTH: usize = 2 * PERSONS + 3 + AGES + PERSONS;

/// Edges `(a, b)` with `a < b`, sorted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tree {
    pub edges: [(u8, u8); EDGES],
}

pub type Prufer = [u8; PRUFER_LEN];

/// The tree with the given Prüfer sequence.
pub fn prufer_decode(seq: &Prufer) -> Tree {
    let mut degree = [1u8; PERSONS];
    for &s in seq {
        degree[usize::from(s)] += 1;
    }
    let mut edges = [(0u8, 0u8); EDGES];
    for (k, &s) in seq.iter().enumerate() {
        let leaf = (0..PERSONS).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges[k] = (leaf as u8, s);
        degree[leaf] = 0;
        degree[usize::from(s)] -= 1;
    }
    let rest: Vec<usize> = (0..PERSONS).filter(|&v| degree[v] == 1).collect();
    edges[EDGES - 1] = (rest[0] as u8, rest[1] as u8);
    for e in &mut edges {
        if e.0 > e.1 {
            *e = (e.1, e.0);
        }
    }
    edges.sort_unstable();
    Tree { edges }
}

/// Prüfer sequence of a tree; errors unless the edges form a spanning
/// tree on the eight persons.
pub fn prufer_encode(tree: &Tree) -> Result<Prufer> {
    let mut adj = [0u8; PERSONS];
    let mut degree = [0u8; PERSONS];
    for &(a, b) in &tree.edges {
        let (a, b) = (usize::from(a), usize::from(b));
        if a >= PERSONS || b >= PERSONS || a == b {
            return Err(Error::contract("tree edge out of range or a self loop"));
        }
        adj[a] |= 1 << b;
        adj[b] |= 1 << a;
        degree[a] += 1;
        degree[b] += 1;
    }
    if !is_connected(&adj) {
        return Err(Error::contract("edges do not form a spanning tree"));
    }
    let mut seq = [0u8; PRUFER_LEN];
    for s in &mut seq {
        let leaf = (0..PERSONS).find(|&v| degree[v] == 1).expect("a leaf exists");
        let parent = adj[leaf].trailing_zeros() as usize;
        *s = parent as u8;
        adj[parent] &= !(1 << leaf);
        adj[leaf] = 0;
        degree[leaf] = 0;
        degree[parent] -= 1;
    }
    Ok(seq)
}

fn is_connected(adj: &[u8; PERSONS]) -> bool {
    let mut seen = 1u8;
    let mut frontier = 1u8;
    while frontier != 0 {
        let mut next = 0u8;
        for v in 0..PERSONS {
            if frontier & (1 << v) != 0 {
                next |= adj[v];
            }
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen == u8::MAX
}

/// The Prüfer sequence of the `index`-th tree, base-8 digits, most
/// significant first.
pub fn prufer_at(index: usize) -> Prufer {
    core::array::from_fn(|k| ((index >> (3 * (PRUFER_LEN - 1 - k))) & 7) as u8)
}

/// All 262,144 trees in Prüfer order.
pub fn enumerate_trees() -> Vec<Tree> {
    (0..TREE_COUNT).map(|i| prufer_decode(&prufer_at(i))).collect()
}

/// Tree indices shuffled by `rng` and split 90/10 into (train, test).
pub fn split_trees(rng: &mut Rng) -> (Vec<u32>, Vec<u32>) {
    let mut idx: Vec<u32> = (0..TREE_COUNT as u32).collect();
    idx.shuffle(rng);
    let test = idx.split_off(TREE_COUNT * 9 / 10);
    (idx, test)
}

/// `(a, b, sign, magnitude)`: with sign ±1, person `a` is `magnitude`
/// years older (+1) or younger (-1) than `b`. Sign 0 states `a`'s age.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fact {
    pub a: u8,
    pub b: u8,
    pub sign: i8,
    pub magnitude: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgeInstance {
    pub tree: Tree,
    pub ages: [u8; PERSONS],
    pub anchor: u8,
    /// Seven relative facts in tree-edge order, then the anchor fact.
    pub facts: [Fact; PERSONS],
    pub question: u8,
    pub answer: u8,
    pub hops: u8,
}

/// Breadth-first distances from `from` in `tree`.
pub fn tree_distances(tree: &Tree, from: usize) -> [u8; PERSONS] {
    let mut dist = [u8::MAX; PERSONS];
    dist[from] = 0;
    let mut queue = vec![from];
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        for &(a, b) in &tree.edges {
            let (a, b) = (usize::from(a), usize::from(b));
            let w = if a == v { b } else if b == v { a } else { continue };
            if dist[w] == u8::MAX {
                dist[w] = dist[v] + 1;
                queue.push(w);
            }
        }
    }
    dist
}

/// Uniform ages, resampled until no tree edge joins equal ages, a random
/// anchor and a random question person.
pub fn sample_instance(tree: &Tree, rng: &mut Rng) -> AgeInstance {
    let ages: [u8; PERSONS] = loop {
        let ages: [u8; PERSONS] = core::array::from_fn(|_| rng.gen_range(0..AGES as u8));
        if tree.edges.iter().all(|&(a, b)| ages[usize::from(a)] != ages[usize::from(b)]) {
            break ages;
        }
    };
    let anchor = rng.gen_range(0..PERSONS as u8);
    let question = rng.gen_range(0..PERSONS as u8);
    instance_from(tree, ages, anchor, question)
}

/// Instance with fixed ages, anchor and question.
pub fn instance_from(tree: &Tree, ages: [u8; PERSONS], anchor: u8, question: u8) -> AgeInstance {
    let mut facts = [Fact {
        a: anchor,
        b: anchor,
        sign: 0,
        magnitude: ages[usize::from(anchor)],
    }; PERSONS];
    for (f, &(a, b)) in facts.iter_mut().zip(&tree.edges) {
        let (x, y) = (ages[usize::from(a)], ages[usize::from(b)]);
        *f = Fact {
            a,
            b,
            sign: if x > y { 1 } else { -1 },
            magnitude: x.abs_diff(y),
        };
    }
    AgeInstance {
        tree: *tree,
        ages,
        anchor,
        facts,
        question,
        answer: ages[usize::from(question)],
        hops: tree_distances(tree, anchor.into())[usize::from(question)],
    }
}

/// One row of [`INPUT_WIDTH`] per fact.
pub fn encode_facts(inst: &AgeInstance) -> Vec<f64> {
    let mut out = vec![0.0; PERSONS * INPUT_WIDTH];
    for (row, f) in out.chunks_mut(INPUT_WIDTH).zip(&inst.facts) {
        row[usize::from(f.a)] = 1.0;
        row[PERSONS + usize::from(f.b)] = 1.0;
        row[2 * PERSONS + (f.sign + 1) as usize] = 1.0;
        row[2 * PERSONS + 3 + usize::from(f.magnitude)] = 1.0;
        row[2 * PERSONS + 3 + AGES + usize::from(inst.question)] = 1.0;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgeConfig {
    pub hidden: usize,
    pub steps: usize,
    pub relu_layers: usize,
    pub readout_keep: Option<f64>,
}

impl AgeConfig {
    /// 128-unit MLPs with three ReLU layers, LSTM node update, eight steps.
    pub fn paper() -> Self {
        AgeConfig {
            hidden: 128,
            steps: 8,
            relu_layers: 3,
            readout_keep: Some(0.5),
        }
    }

    pub fn encoder_spec(&self) -> MlpSpec {
        MlpSpec::uniform(INPUT_WIDTH, self.hidden, self.relu_layers, self.hidden)
    }

    /// Readout dropout on the last two hidden layers.
    pub fn rrn_config(&self) -> RrnConfig {
        let mut c = RrnConfig::new(self.hidden, self.steps, self.relu_layers, AGES);
        c.node_function = NodeFunction::Lstm;
        c.scope = ReadoutScope::PerGraph;
        if let Some(keep) = self.readout_keep {
            for i in self.relu_layers.saturating_sub(2)..self.relu_layers {
                c.readout_dropout[i] = Some(keep);
            }
        }
        c
    }
}

#[derive(Clone, Debug)]
pub struct AgeModel {
    config: AgeConfig,
    encoder: Mlp,
    rrn: Rrn,
    topology: Topology,
}

impl AgeModel {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, config: AgeConfig) -> Result<Self> {
        let encoder = Mlp::new(params, rng, &format!("{name}.encoder"), config.encoder_spec())?;
        let rrn = Rrn::new(params, rng, name, config.rrn_config())?;
        Ok(AgeModel {
            config,
            encoder,
            rrn,
            topology: Topology::fully_connected(PERSONS),
        })
    }

    pub fn config(&self) -> &AgeConfig {
        &self.config
    }

    pub fn rrn(&self) -> &Rrn {
        &self.rrn
    }

    fn features(&self, tape: &mut Tape, bound: &Bound, batch: &[AgeInstance]) -> Result<(Topology, Var)> {
        let raw: Vec<f64> = batch.iter().flat_map(encode_facts).collect();
        let raw = tape.constant(vec![batch.len() * PERSONS, INPUT_WIDTH], raw)?;
        Ok((self.topology.repeat(batch.len()), self.encoder.forward(tape, bound, raw)?))
    }

    /// Unrolled run with a 100-way loss after every step.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, batch: &[AgeInstance]) -> Result<StepOutputs> {
        let (topo, x) = self.features(tape, bound, batch)?;
        let targets = Targets::PerGraph(batch.iter().map(|i| usize::from(i.answer)).collect());
        self.rrn.run_unrolled(tape, bound, &topo, x, None, &targets)
    }

    /// Predicted ages per step, `steps + 1` rows.
    pub fn predict_steps(&self, params: &ParamSet, batch: &[AgeInstance], steps: usize) -> Result<Vec<Vec<usize>>> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let (topo, x) = self.features(&mut tape, &bound, batch)?;
        let mut out = Vec::with_capacity(steps + 1);
        self.rrn.infer(params, &topo, tape.value(x), None, steps, |_, t, logits, _| {
            out.push(rrn::predictions(t, logits));
            Ok(())
        })?;
        Ok(out)
    }
}

/// Correct and total counts indexed by `[step][hops]`.
pub fn accuracy_by_hops(batch: &[AgeInstance], per_step: &[Vec<usize>]) -> Vec<[(usize, usize); PERSONS]> {
    per_step
        .iter()
        .map(|preds| {
            let mut table = [(0, 0); PERSONS];
            for (inst, &p) in batch.iter().zip(preds) {
                let e = &mut table[usize::from(inst.hops)];
                e.1 += 1;
                e.0 += usize::from(p == usize::from(inst.answer));
            }
            table
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn star_and_path_sequences() {
        let star = prufer_decode(&[0; PRUFER_LEN]);
        assert!(star.edges.iter().all(|&(a, _)| a == 0));
        let path = prufer_decode(&[1, 2, 3, 4, 5, 6]);
        assert_eq!(path.edges, core::array::from_fn(|i| (i as u8, i as u8 + 1)));
        assert_eq!(tree_distances(&path, 0), core::array::from_fn(|i| i as u8));
    }

    #[test]
    fn encode_rejects_cycles() {
        let mut t = prufer_decode(&[1, 2, 3, 4, 5, 6]);
        t.edges[6] = (0, 2);
        assert!(prufer_encode(&t).is_err());
    }

    #[test]
    fn anchor_question_has_zero_hops() {
        let t = prufer_decode(&prufer_at(1234));
        let inst = instance_from(&t, [5, 10, 15, 20, 25, 30, 35, 40], 3, 3);
        assert_eq!((inst.hops, inst.answer), (0, 20));
        assert_eq!(inst.facts[7], Fact { a: 3, b: 3, sign: 0, magnitude: 20 });
    }

    #[test]
    fn encoded_rows_have_five_ones() {
        let t = prufer_decode(&prufer_at(77));
        let inst = sample_instance(&t, &mut rng::seeded(1));
        let rows = encode_facts(&inst);
        assert_eq!(rows.len(), PERSONS * 127);
        for r in rows.chunks(INPUT_WIDTH) {
            assert_eq!(r.iter().sum::<f64>(), 5.0);
        }
    }
}
