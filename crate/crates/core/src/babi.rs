//! bAbI: story parsing, vocabulary, and the fact-graph model with LSTM
//! sentence encoders and a random positional offset per question.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Targets, Topology};
use crate::nn::{Bound, LstmCell, Mlp, MlpSpec, ParamSet};
use crate::rng::Rng;
use crate::rrn::{self, NodeFunction, ReadoutScope, Rrn, RrnConfig, StepOutputs};
use crate::tape::{Tape, Var};

pub const MAX_FACTS: usize = 20;
pub const MAX_OFFSET: usize = 20;
pub const POSITION_WIDTH: usize = MAX_FACTS + MAX_OFFSET;
pub const PAPER_VOCAB: usize = 177;

/// Lowercased words with `.`, `?`, `,` and `!` split off as tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in sentence.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars() {
            if matches!(ch, '.' | '?' | ',' | '!') {
                if !cur.is_empty() {
                    out.push(core::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.extend(ch.to_lowercase());
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// A question with the facts preceding it, as text tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RawSample {
    pub task: u8,
    pub facts: Vec<Vec<String>>,
    pub question: Vec<String>,
    /// The answer field, lowercased, as one token (`"n,e"` stays whole).
    pub answer: String,
}

/// Parses one task file. Line ids restart at 1 with each story; question
/// lines carry `question \t answer \t supporting ids`. Only the last
/// [`MAX_FACTS`] facts are kept per question.
pub fn parse_babi(text: &str, task: u8, source: &str) -> Result<Vec<RawSample>> {
    let mut out = Vec::new();
    let mut story: Vec<Vec<String>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::parse(format!("{source}:{}", n + 1), msg);
        let (id, rest) = line.split_once(' ').ok_or_else(|| bad("missing line id"))?;
        let id: usize = id.parse().map_err(|_| bad("line id is not a number"))?;
        if id == 1 {
            story.clear();
        }
        if rest.contains('\t') {
            let mut fields = rest.split('\t');
            let question = tokenize(fields.next().unwrap_or(""));
            let answer = fields.next().map(str::trim).filter(|a| !a.is_empty()).ok_or_else(|| bad("question without answer"))?;
            if question.is_empty() {
                return Err(bad("empty question"));
            }
            let start = story.len().saturating_sub(MAX_FACTS);
            out.push(RawSample {
                task,
                facts: story[start..].to_vec(),
                question,
                answer: answer.to_lowercase(),
            });
        } else {
            story.push(tokenize(rest));
        }
    }
    Ok(out)
}

/// Token and answer vocabulary, indices in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Vocabulary {
    words: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Every fact, question and answer token of `samples`.
    pub fn build<'a>(samples: impl IntoIterator<Item = &'a RawSample>) -> Self {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for s in samples {
            for t in s.facts.iter().flatten().chain(&s.question).chain(core::iter::once(&s.answer)) {
                index.entry(t.clone()).or_insert(0);
            }
        }
        let words: Vec<String> = index.keys().cloned().collect();
        for (i, v) in index.values_mut().enumerate() {
            *v = i;
        }
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    fn ids(&self, tokens: &[String]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| self.id(t).ok_or_else(|| Error::contract(format!("token {t:?} is not in the vocabulary"))))
            .collect()
    }

    pub fn encode(&self, raw: &RawSample) -> Result<BabiSample> {
        Ok(BabiSample {
            task: raw.task,
            facts: raw.facts.iter().map(|f| self.ids(f)).collect::<Result<_>>()?,
            positions: (1..=raw.facts.len()).collect(),
            question: self.ids(&raw.question)?,
            answer: self.ids(core::slice::from_ref(&raw.answer))?[0],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BabiSample {
    pub task: u8,
    pub facts: Vec<Vec<usize>>,
    /// Sentence position (1-based) of each fact in the retained window.
    pub positions: Vec<usize>,
    pub question: Vec<usize>,
    pub answer: usize,
}

/// Offset `o` in 1..=20, shared by all facts of one question.
pub fn sample_offset(rng: &mut Rng) -> usize {
    rng.gen_range(1..=MAX_OFFSET)
}

/// Zero-based slot in the 40-wide position one-hot for fact position
/// `p` (1-based) and offset `o`.
pub fn position_slot(p: usize, offset: usize) -> usize {
    p + offset - 1
}

/// Switches for the ablation runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Ablation {
    /// A single linear layer instead of the fact encoder MLP.
    pub linear_encoder: bool,
    /// Leave the question encoding out of the node features.
    pub separate_question: bool,
    pub no_dropout: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BabiConfig {
    pub vocab: usize,
    pub hidden: usize,
    pub sentence_units: usize,
    pub steps: usize,
    pub relu_layers: usize,
    pub readout_keep: f64,
    pub ablation: Ablation,
}

impl BabiConfig {
    /// 128 hidden units, 32-unit sentence LSTMs, three steps, readout of
    /// three layers with dropout on the last two.
    pub fn paper(vocab: usize) -> Self {
        BabiConfig {
            vocab,
            hidden: 128,
            sentence_units: 32,
            steps: 3,
            relu_layers: 3,
            readout_keep: 0.5,
            ablation: Ablation::default(),
        }
    }

    fn encoder_input(&self) -> usize {
        let q = if self.ablation.separate_question { 0 } else { self.sentence_units };
        self.sentence_units + q + POSITION_WIDTH
    }

    pub fn encoder_spec(&self) -> MlpSpec {
        if self.ablation.linear_encoder {
            MlpSpec::new(self.encoder_input(), vec![self.hidden])
        } else {
            MlpSpec::uniform(self.encoder_input(), self.hidden, self.relu_layers, self.hidden)
        }
    }

    pub fn rrn_config(&self) -> RrnConfig {
        let mut c = RrnConfig::new(self.hidden, self.steps, self.relu_layers, self.vocab);
        c.edge_width = self.sentence_units;
        c.node_function = NodeFunction::Lstm;
        c.scope = ReadoutScope::PerGraph;
        c.readout_layers = vec![self.hidden, self.hidden, self.vocab];
        c.readout_dropout = if self.ablation.no_dropout {
            vec![None; 3]
        } else {
            vec![Some(self.readout_keep), Some(self.readout_keep), None]
        };
        c
    }
}

#[derive(Clone, Debug)]
pub struct BabiModel {
    config: BabiConfig,
    fact_lstm: LstmCell,
    question_lstm: LstmCell,
    encoder: Mlp,
    rrn: Rrn,
}

/// Per-batch graph pieces: topology, node features, edge attributes.
struct Encoded {
    topology: Topology,
    x: Var,
    edges: Var,
}

impl BabiModel {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, config: BabiConfig) -> Result<Self> {
        let fact_lstm = LstmCell::new(params, rng, &format!("{name}.fact_lstm"), config.vocab, config.sentence_units)?;
        let question_lstm =
            LstmCell::new(params, rng, &format!("{name}.question_lstm"), config.vocab, config.sentence_units)?;
        let encoder = Mlp::new(params, rng, &format!("{name}.encoder"), config.encoder_spec())?;
        let rrn = Rrn::new(params, rng, name, config.rrn_config())?;
        Ok(BabiModel {
            config,
            fact_lstm,
            question_lstm,
            encoder,
            rrn,
        })
    }

    pub fn config(&self) -> &BabiConfig {
        &self.config
    }

    pub fn rrn(&self) -> &Rrn {
        &self.rrn
    }

    /// Last hidden state of `lstm` over one-hot token sequences.
    fn encode_sentences(&self, tape: &mut Tape, bound: &Bound, lstm: &LstmCell, seqs: &[&[usize]]) -> Result<Var> {
        let v = self.config.vocab;
        let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut inputs = Vec::with_capacity(longest);
        for t in 0..longest {
            let mut onehot = vec![0.0; seqs.len() * v];
            for (row, s) in seqs.iter().enumerate() {
                if let Some(&tok) = s.get(t) {
                    if tok >= v {
                        return Err(Error::bounds("token id", tok, v));
                    }
                    onehot[row * v + tok] = 1.0;
                }
            }
            inputs.push(tape.constant(vec![seqs.len(), v], onehot)?);
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        lstm.encode(tape, bound, &inputs, &lengths)
    }

    fn encode(&self, tape: &mut Tape, bound: &Bound, batch: &[BabiSample], offsets: &[usize]) -> Result<Encoded> {
        if offsets.len() != batch.len() {
            return Err(Error::dim("offsets", batch.len(), offsets.len()));
        }
        if batch.iter().any(|s| s.facts.is_empty() || s.facts.len() > MAX_FACTS) {
            return Err(Error::contract("every sample needs 1 to 20 facts"));
        }
        if batch
            .iter()
            .any(|s| s.positions.len() != s.facts.len() || s.positions.iter().any(|p| !(1..=MAX_FACTS).contains(p)))
        {
            return Err(Error::contract("every fact needs a position in 1..=20"));
        }
        if let Some(&o) = offsets.iter().find(|&&o| !(1..=MAX_OFFSET).contains(&o)) {
            return Err(Error::bounds("position offset", o, MAX_OFFSET + 1));
        }
        let parts: Vec<Topology> = batch.iter().map(|s| Topology::fully_connected(s.facts.len())).collect();
        let topology = Topology::union(&parts.iter().collect::<Vec<_>>());
        let facts: Vec<&[usize]> = batch.iter().flat_map(|s| s.facts.iter().map(Vec::as_slice)).collect();
        let questions: Vec<&[usize]> = batch.iter().map(|s| s.question.as_slice()).collect();
        let f = self.encode_sentences(tape, bound, &self.fact_lstm, &facts)?;
        let q = self.encode_sentences(tape, bound, &self.question_lstm, &questions)?;
        let node_graph = topology.node_graph().clone();
        let mut position = vec![0.0; topology.num_nodes() * POSITION_WIDTH];
        let mut node = 0;
        for (s, &o) in batch.iter().zip(offsets) {
            for &p in &s.positions {
                position[node * POSITION_WIDTH + position_slot(p, o)] = 1.0;
                node += 1;
            }
        }
        let position = tape.constant(vec![topology.num_nodes(), POSITION_WIDTH], position)?;
        let joined = if self.config.ablation.separate_question {
            tape.concat(&[f, position])?
        } else {
            let q_nodes = tape.gather_rows(q, node_graph.clone())?;
            tape.concat(&[f, q_nodes, position])?
        };
        let x = self.encoder.forward(tape, bound, joined)?;
        let edge_graph: Rc<[usize]> = topology.src().iter().map(|&s| node_graph[s]).collect();
        let edges = tape.gather_rows(q, edge_graph)?;
        Ok(Encoded { topology, x, edges })
    }

    /// Unrolled run with the answer loss after every step.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &[BabiSample],
        offsets: &[usize],
    ) -> Result<StepOutputs> {
        let e = self.encode(tape, bound, batch, offsets)?;
        let targets = Targets::PerGraph(batch.iter().map(|s| s.answer).collect());
        self.rrn.run_unrolled(tape, bound, &e.topology, e.x, Some(e.edges), &targets)
    }

    /// Predicted answers per step (row 0 reads out the node features).
    pub fn predict_steps(
        &self,
        params: &ParamSet,
        batch: &[BabiSample],
        offsets: &[usize],
        steps: usize,
    ) -> Result<Vec<Vec<usize>>> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let e = self.encode(&mut tape, &bound, batch, offsets)?;
        let mut out = Vec::with_capacity(steps + 1);
        self.rrn
            .infer(params, &e.topology, tape.value(e.x), Some(tape.value(e.edges)), steps, |_, t, logits, _| {
                out.push(rrn::predictions(t, logits));
                Ok(())
            })?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Where is Daniel?"), ["where", "is", "daniel", "?"]);
        assert_eq!(tokenize("Mary went  to the kitchen."), ["mary", "went", "to", "the", "kitchen", "."]);
    }

    #[test]
    fn two_line_story() {
        let s = parse_babi("1 Daniel journeyed to the garden.\n2 Where is Daniel?\tgarden\t1\n", 1, "t").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].facts, [tokenize("Daniel journeyed to the garden.")]);
        assert_eq!(s[0].answer, "garden");
    }

    #[test]
    fn malformed_line_names_its_location() {
        let err = parse_babi("1 A b.\nx Where?\tb\t1\n", 1, "qa1.txt").unwrap_err();
        assert!(format!("{err}").contains("qa1.txt:2"));
        assert!(parse_babi("1 Where?\t\t1\n", 1, "f").is_err());
    }

    #[test]
    fn paper_readout_and_widths() {
        let c = BabiConfig::paper(PAPER_VOCAB).rrn_config();
        assert_eq!(c.readout_layers, [128, 128, 177]);
        assert_eq!(c.readout_dropout, [Some(0.5), Some(0.5), None]);
        assert_eq!(BabiConfig::paper(PAPER_VOCAB).encoder_spec().input, 32 + 32 + 40);
        assert_eq!(position_slot(1, 1), 1);
        assert_eq!(position_slot(20, 20), 39);
    }
}
