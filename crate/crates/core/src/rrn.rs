//! The recurrent relational network.
//!
//! Each step computes a message per directed edge from the sender and
//! receiver states (plus edge attributes), sums the messages arriving at
//! each node, and updates every node from its summed message. A readout
//! and a cross-entropy loss are produced after every step.

use alloc::format;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{Targets, Topology};
use crate::math;
use crate::nn::{Bound, LstmCell, LstmState, Mlp, MlpSpec, ParamSet};
use crate::rng::Rng;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeFunction {
    /// `h' = g(concat(h, x, m))`.
    Mlp,
    /// `h', s' = LSTM(g(concat(x, m)), h, s)`.
    Lstm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadoutScope {
    PerNode,
    /// Sum the node states of each graph, then read out.
    PerGraph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossMode {
    EveryStep,
    LastStep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RrnConfig {
    pub steps: usize,
    pub hidden: usize,
    pub edge_width: usize,
    /// Widths of the message MLP; its input is `2 * hidden + edge_width`.
    pub message_layers: Vec<usize>,
    pub node_function: NodeFunction,
    /// Widths of the node MLP. With [`NodeFunction::Mlp`] the last width
    /// must equal `hidden`; with [`NodeFunction::Lstm`] it is the LSTM
    /// input width.
    pub node_layers: Vec<usize>,
    /// Widths of the readout MLP, ending in the number of classes.
    pub readout_layers: Vec<usize>,
    pub readout_dropout: Vec<Option<f64>>,
    pub scope: ReadoutScope,
    pub inject_features: bool,
    /// Whether the MLP node function sees the previous hidden state.
    pub include_prev_hidden: bool,
    pub loss_mode: LossMode,
}

impl RrnConfig {
    /// MLP update, per-node readout, every-step loss, every MLP with
    /// `relu_layers` hidden layers of width `hidden`.
    pub fn new(hidden: usize, steps: usize, relu_layers: usize, classes: usize) -> Self {
        let mut layers = vec![hidden; relu_layers + 1];
        let mut readout = vec![hidden; relu_layers];
        readout.push(classes);
        RrnConfig {
            steps,
            hidden,
            edge_width: 0,
            message_layers: layers.clone(),
            node_function: NodeFunction::Mlp,
            node_layers: core::mem::take(&mut layers),
            readout_dropout: vec![None; readout.len()],
            readout_layers: readout,
            scope: ReadoutScope::PerNode,
            inject_features: true,
            include_prev_hidden: true,
            loss_mode: LossMode::EveryStep,
        }
    }

    pub fn classes(&self) -> usize {
        self.readout_layers.last().copied().unwrap_or(0)
    }

    fn message_spec(&self) -> MlpSpec {
        MlpSpec::new(2 * self.hidden + self.edge_width, self.message_layers.clone())
    }

    fn node_input(&self) -> usize {
        let message = self.message_layers.last().copied().unwrap_or(0);
        let prev = match self.node_function {
            NodeFunction::Mlp if self.include_prev_hidden => self.hidden,
            _ => 0,
        };
        let x = if self.inject_features { self.hidden } else { 0 };
        prev + x + message
    }

    fn node_spec(&self) -> MlpSpec {
        MlpSpec::new(self.node_input(), self.node_layers.clone())
    }

    fn readout_spec(&self) -> MlpSpec {
        let mut spec = MlpSpec::new(self.hidden, self.readout_layers.clone());
        spec.dropout_keep = self.readout_dropout.clone();
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        if self.message_layers.is_empty() || self.node_layers.is_empty() || self.readout_layers.is_empty() {
            return Err(Error::config("message, node and readout functions need at least one layer"));
        }
        if self.readout_dropout.len() != self.readout_layers.len() {
            return Err(Error::dim("readout dropout entries", self.readout_layers.len(), self.readout_dropout.len()));
        }
        if self.node_input() == 0 {
            return Err(Error::config("node function has no inputs"));
        }
        if self.node_function == NodeFunction::Mlp && self.node_layers.last() != Some(&self.hidden) {
            return Err(Error::dim("node MLP output", self.hidden, self.node_layers.last().copied().unwrap_or(0)));
        }
        Ok(())
    }

    /// Number of scalar parameters the configuration creates.
    pub fn num_params(&self) -> usize {
        let lstm = match self.node_function {
            NodeFunction::Mlp => 0,
            NodeFunction::Lstm => {
                let input = self.node_layers.last().copied().unwrap_or(0);
                (input + self.hidden) * 4 * self.hidden + 4 * self.hidden
            }
        };
        self.message_spec().num_params() + self.node_spec().num_params() + lstm + self.readout_spec().num_params()
    }
}

/// Results of an unrolled run. Index 0 of `hidden` is the initial state;
/// `logits[t - 1]` and `losses[t - 1]` belong to step `t`.
#[derive(Clone, Debug)]
pub struct StepOutputs {
    pub hidden: Vec<Var>,
    pub logits: Vec<Var>,
    pub losses: Vec<Var>,
    /// Training objective according to the loss mode, when targets were
    /// given.
    pub total_loss: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct Rrn {
    config: RrnConfig,
    message: Mlp,
    node: Mlp,
    lstm: Option<LstmCell>,
    readout: Mlp,
}

impl Rrn {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, config: RrnConfig) -> Result<Self> {
        config.validate()?;
        let message = Mlp::new(params, rng, &format!("{name}.message"), config.message_spec())?;
        let node = Mlp::new(params, rng, &format!("{name}.node"), config.node_spec())?;
        let lstm = match config.node_function {
            NodeFunction::Mlp => None,
            NodeFunction::Lstm => Some(LstmCell::new(
                params,
                rng,
                &format!("{name}.lstm"),
                node.spec().output(),
                config.hidden,
            )?),
        };
        let readout = Mlp::new(params, rng, &format!("{name}.readout"), config.readout_spec())?;
        Ok(Rrn {
            config,
            message,
            node,
            lstm,
            readout,
        })
    }

    pub fn config(&self) -> &RrnConfig {
        &self.config
    }

    pub fn message_mlp(&self) -> &Mlp {
        &self.message
    }

    pub fn node_mlp(&self) -> &Mlp {
        &self.node
    }

    pub fn lstm(&self) -> Option<&LstmCell> {
        self.lstm.as_ref()
    }

    pub fn readout_mlp(&self) -> &Mlp {
        &self.readout
    }

    /// One message per edge: `f(concat(h_src, h_dst[, e]))`.
    pub fn compute_messages(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        topology: &Topology,
        h: Var,
        edge_attrs: Option<Var>,
    ) -> Result<Var> {
        self.check_rows(tape, topology, h, "hidden state")?;
        let sender = tape.gather_rows(h, topology.src().clone())?;
        let receiver = tape.gather_rows(h, topology.dst().clone())?;
        let input = match edge_attrs {
            Some(e) => {
                if tape.rows(e) != topology.num_edges() {
                    return Err(Error::dim("edge attribute rows", topology.num_edges(), tape.rows(e)));
                }
                tape.concat(&[sender, receiver, e])?
            }
            None => tape.concat(&[sender, receiver])?,
        };
        self.message.forward(tape, bound, input)
    }

    /// Sum of incoming messages per node, in edge order.
    pub fn aggregate_messages(&self, tape: &mut Tape, topology: &Topology, messages: Var) -> Result<Var> {
        tape.segment_sum(messages, topology.dst().clone(), topology.num_nodes())
    }

    /// Initial recurrent state: `h = x`, LSTM cell at zero.
    pub fn init_states(&self, tape: &mut Tape, topology: &Topology, x: Var) -> Result<LstmState> {
        self.check_rows(tape, topology, x, "node features")?;
        if tape.cols(x) != self.config.hidden {
            return Err(Error::dim("node feature width", self.config.hidden, tape.cols(x)));
        }
        Ok(LstmState {
            hidden: x,
            cell: tape.zeros(topology.num_nodes(), self.config.hidden),
        })
    }

    pub fn node_update(&self, tape: &mut Tape, bound: &Bound, state: LstmState, x: Var, m: Var) -> Result<LstmState> {
        let mut parts = Vec::with_capacity(3);
        match &self.lstm {
            None => {
                if self.config.include_prev_hidden {
                    parts.push(state.hidden);
                }
                if self.config.inject_features {
                    parts.push(x);
                }
                parts.push(m);
                let input = tape.concat(&parts)?;
                let hidden = self.node.forward(tape, bound, input)?;
                Ok(LstmState {
                    hidden,
                    cell: state.cell,
                })
            }
            Some(lstm) => {
                if self.config.inject_features {
                    parts.push(x);
                }
                parts.push(m);
                let input = tape.concat(&parts)?;
                let pre = self.node.forward(tape, bound, input)?;
                lstm.step(tape, bound, pre, state)
            }
        }
    }

    /// Logits per node, or per graph from the summed node states.
    pub fn readout(&self, tape: &mut Tape, bound: &Bound, topology: &Topology, h: Var) -> Result<Var> {
        let input = match self.config.scope {
            ReadoutScope::PerNode => h,
            ReadoutScope::PerGraph => {
                tape.segment_sum(h, topology.node_graph().clone(), topology.num_graphs())?
            }
        };
        self.readout.forward(tape, bound, input)
    }

    /// Runs every step, with a loss per step when targets are given.
    /// Losses are summed over nodes and averaged over graphs.
    pub fn run_unrolled(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        topology: &Topology,
        x: Var,
        edge_attrs: Option<Var>,
        targets: &Targets,
    ) -> Result<StepOutputs> {
        self.run_steps(tape, bound, topology, x, edge_attrs, targets, self.config.steps)
    }

    /// [`Rrn::run_unrolled`] with an explicit number of steps.
    #[allow(clippy::too_many_arguments)]
    pub fn run_steps(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        topology: &Topology,
        x: Var,
        edge_attrs: Option<Var>,
        targets: &Targets,
        steps: usize,
    ) -> Result<StepOutputs> {
        if steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        let labels = self.labels(topology, targets)?;
        let weights: Option<Rc<[f64]>> = labels.as_ref().map(|l| {
            let w = 1.0 / topology.num_graphs().max(1) as f64;
            core::iter::repeat(w).take(l.len()).collect()
        });
        let mut state = self.init_states(tape, topology, x)?;
        let mut out = StepOutputs {
            hidden: vec![state.hidden],
            logits: Vec::with_capacity(steps),
            losses: Vec::with_capacity(steps),
            total_loss: None,
        };
        for step in 1..=steps {
            let messages = self.compute_messages(tape, bound, topology, state.hidden, edge_attrs)?;
            let m = self.aggregate_messages(tape, topology, messages)?;
            state = self.node_update(tape, bound, state, x, m)?;
            let logits = self.readout(tape, bound, topology, state.hidden)?;
            out.hidden.push(state.hidden);
            out.logits.push(logits);
            if let (Some(labels), Some(weights)) = (&labels, &weights) {
                let loss = tape.weighted_cross_entropy(logits, labels.clone(), weights.clone())?;
                if !tape.scalar(loss).is_finite() {
                    return Err(Error::NonFinite { step });
                }
                out.losses.push(loss);
            }
        }
        if !out.losses.is_empty() {
            out.total_loss = Some(match self.config.loss_mode {
                LossMode::EveryStep => tape.add_n(&out.losses)?,
                LossMode::LastStep => *out.losses.last().expect("steps >= 1"),
            });
        }
        Ok(out)
    }

    /// Inference with a fresh tape per step, so memory stays flat in the
    /// number of steps. `on_step` sees step 0 (readout of the initial
    /// state) through `steps`, with that step's logits and hidden state.
    pub fn infer<F>(
        &self,
        params: &ParamSet,
        topology: &Topology,
        x: &[f64],
        edge_attrs: Option<&[f64]>,
        steps: usize,
        mut on_step: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &Tape, Var, Var) -> Result<()>,
    {
        let n = topology.num_nodes();
        let width = self.config.hidden;
        if x.len() != n * width {
            return Err(Error::dim("node feature values", n * width, x.len()));
        }
        let mut hidden = x.to_vec();
        let mut cell = vec![0.0; n * width];
        for step in 0..=steps {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let xv = tape.constant(vec![n, width], x.to_vec())?;
            let mut state = LstmState {
                hidden: tape.constant(vec![n, width], core::mem::take(&mut hidden))?,
                cell: tape.constant(vec![n, width], core::mem::take(&mut cell))?,
            };
            if step > 0 {
                let edges = match edge_attrs {
                    Some(e) => {
                        let cols = if topology.num_edges() == 0 { self.config.edge_width } else { e.len() / topology.num_edges() };
                        Some(tape.constant(vec![topology.num_edges(), cols], e.to_vec())?)
                    }
                    None => None,
                };
                let messages = self.compute_messages(&mut tape, &bound, topology, state.hidden, edges)?;
                let m = self.aggregate_messages(&mut tape, topology, messages)?;
                state = self.node_update(&mut tape, &bound, state, xv, m)?;
            }
            let logits = self.readout(&mut tape, &bound, topology, state.hidden)?;
            on_step(step, &tape, logits, state.hidden)?;
            hidden = tape.value(state.hidden).to_vec();
            cell = tape.value(state.cell).to_vec();
        }
        Ok(())
    }

    fn labels(&self, topology: &Topology, targets: &Targets) -> Result<Option<Rc<[usize]>>> {
        let (labels, expected) = match (targets, self.config.scope) {
            (Targets::None, _) => return Ok(None),
            (Targets::PerNode(t), ReadoutScope::PerNode) => (t, topology.num_nodes()),
            (Targets::PerGraph(t), ReadoutScope::PerGraph) => (t, topology.num_graphs()),
            _ => return Err(Error::contract("target kind does not match the readout scope")),
        };
        if labels.len() != expected {
            return Err(Error::dim("targets", expected, labels.len()));
        }
        Ok(Some(labels.iter().copied().collect()))
    }

    fn check_rows(&self, tape: &Tape, topology: &Topology, v: Var, what: &str) -> Result<()> {
        let rows = if tape.value(v).is_empty() { 0 } else { tape.rows(v) };
        if rows != topology.num_nodes() {
            return Err(Error::dim(what, topology.num_nodes(), rows));
        }
        Ok(())
    }
}

/// Row-wise softmax of a logits matrix.
pub fn probabilities(tape: &Tape, logits: Var) -> Vec<f64> {
    let cols = tape.cols(logits);
    let values = tape.value(logits);
    let mut out = vec![0.0; values.len()];
    if cols > 0 {
        for (row, o) in values.chunks(cols).zip(out.chunks_mut(cols)) {
            math::softmax_into(row, o);
        }
    }
    out
}

/// Row-wise argmax of a logits matrix.
pub fn predictions(tape: &Tape, logits: Var) -> Vec<usize> {
    let cols = tape.cols(logits);
    tape.value(logits).chunks(cols.max(1)).map(math::argmax).collect()
}
