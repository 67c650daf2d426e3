//! Parameter storage and the layers the relational models are built from.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Embedding,
}

impl ParamKind {
    pub fn code(self) -> u8 {
        match self {
            ParamKind::Weight => 0,
            ParamKind::Bias => 1,
            ParamKind::Embedding => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor,
}

/// Ordered, uniquely named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::config(format!("duplicate parameter name {name}")));
        }
        self.params.push(Param {
            name,
            kind,
            tensor: tensor.with_requires_grad(true),
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Records every parameter as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| tape.leaf(&p.tensor)).collect(),
        }
    }

    /// Adds the gradients from a backward pass into each parameter.
    pub fn accumulate_grads(&mut self, bound: &Bound, grads: &Gradients) -> Result<()> {
        if bound.vars.len() != self.params.len() {
            return Err(Error::dim("bound parameter count", self.params.len(), bound.vars.len()));
        }
        for (p, &v) in self.params.iter_mut().zip(&bound.vars) {
            let g = grads
                .get(v)
                .ok_or_else(|| Error::contract(format!("no gradient recorded for {}", p.name)))?;
            p.tensor.accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.tensor.clear_grad();
        }
    }
}

/// Tape handles of a bound [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Uniform Glorot initialization for a `fan_in x fan_out` matrix.
pub fn glorot_uniform(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = math::sqrt(6.0 / (fan_in + fan_out).max(1) as f64);
    Tensor::from_fn(vec![fan_in, fan_out], |_| rng.gen_range(-limit..limit))
}

/// Fully connected layer `y = x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    name: String,
    weight: ParamId,
    bias: ParamId,
    input: usize,
    output: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, output: usize) -> Result<Self> {
        let weight = params.add(format!("{name}.w"), ParamKind::Weight, glorot_uniform(rng, input, output))?;
        let bias = params.add(format!("{name}.b"), ParamKind::Bias, Tensor::zeros(vec![output]))?;
        Ok(Linear {
            name: name.into(),
            weight,
            bias,
            input,
            output,
        })
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        if tape.cols(x) != self.input {
            return Err(Error::dim(format!("layer {}", self.name), self.input, tape.cols(x)));
        }
        let y = tape.matmul(x, bound.var(self.weight))?;
        tape.add_bias(y, bound.var(self.bias))
    }
}

/// Shape of a multi-layer perceptron: ReLU on every layer but the last,
/// which is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input: usize,
    pub layer_widths: Vec<usize>,
    /// Keep probability applied to the output of hidden layer `i` while
    /// training. Entries for the final layer are ignored.
    pub dropout_keep: Vec<Option<f64>>,
}

impl MlpSpec {
    pub fn new(input: usize, layer_widths: Vec<usize>) -> Self {
        let n = layer_widths.len();
        MlpSpec {
            input,
            layer_widths,
            dropout_keep: vec![None; n],
        }
    }

    /// `relu_layers` ReLU layers of `width` followed by a linear map to
    /// `output`.
    pub fn uniform(input: usize, width: usize, relu_layers: usize, output: usize) -> Self {
        let mut widths = vec![width; relu_layers];
        widths.push(output);
        MlpSpec::new(input, widths)
    }

    pub fn with_dropout(mut self, layer: usize, keep: f64) -> Self {
        self.dropout_keep[layer] = Some(keep);
        self
    }

    pub fn output(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(self.input)
    }

    /// Number of scalar parameters.
    pub fn num_params(&self) -> usize {
        let mut prev = self.input;
        let mut total = 0;
        for &w in &self.layer_widths {
            total += prev * w + w;
            prev = w;
        }
        total
    }

    fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        if self.dropout_keep.len() != self.layer_widths.len() {
            return Err(Error::dim(
                "MLP dropout entries",
                self.layer_widths.len(),
                self.dropout_keep.len(),
            ));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("MLP layer widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layer_widths.len());
        let mut prev = spec.input;
        for (i, &w) in spec.layer_widths.iter().enumerate() {
            layers.push(Linear::new(params, rng, &format!("{name}.{i}"), prev, w)?);
            prev = w;
        }
        Ok(Mlp { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, bound, h)?;
            if i < last {
                h = tape.relu(h);
                if let Some(keep) = self.spec.dropout_keep[i] {
                    h = tape.dropout(h, keep)?;
                }
            }
        }
        Ok(h)
    }
}

/// Hidden and cell state of an LSTM, one row per sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmState {
    pub hidden: Var,
    pub cell: Var,
}

impl LstmState {
    pub fn zeros(tape: &mut Tape, batch: usize, units: usize) -> Self {
        LstmState {
            hidden: tape.zeros(batch, units),
            cell: tape.zeros(batch, units),
        }
    }
}

/// LSTM cell with gates laid out as `[input, forget, candidate, output]`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    name: String,
    kernel: ParamId,
    bias: ParamId,
    input: usize,
    units: usize,
}

impl LstmCell {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, input: usize, units: usize) -> Result<Self> {
        let kernel = params.add(
            format!("{name}.kernel"),
            ParamKind::Weight,
            glorot_uniform(rng, input + units, 4 * units),
        )?;
        let mut b = Tensor::zeros(vec![4 * units]);
        b.data_mut()[units..2 * units].fill(1.0);
        let bias = params.add(format!("{name}.bias"), ParamKind::Bias, b)?;
        Ok(LstmCell {
            name: name.into(),
            kernel,
            bias,
            input,
            units,
        })
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn kernel(&self) -> ParamId {
        self.kernel
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    /// One recurrence step; the output is the new hidden state.
    pub fn step(&self, tape: &mut Tape, bound: &Bound, x: Var, state: LstmState) -> Result<LstmState> {
        if tape.cols(x) != self.input {
            return Err(Error::dim(format!("lstm {} input", self.name), self.input, tape.cols(x)));
        }
        for (what, v) in [("hidden", state.hidden), ("cell", state.cell)] {
            if tape.rows(v) != tape.rows(x) {
                return Err(Error::dim(format!("lstm {} {what} batch", self.name), tape.rows(x), tape.rows(v)));
            }
            if tape.cols(v) != self.units {
                return Err(Error::dim(format!("lstm {} {what} width", self.name), self.units, tape.cols(v)));
            }
        }
        let u = self.units;
        let joined = tape.concat(&[x, state.hidden])?;
        let pre = tape.matmul(joined, bound.var(self.kernel))?;
        let gates = tape.add_bias(pre, bound.var(self.bias))?;
        let i_pre = tape.slice_cols(gates, 0, u)?;
        let f_pre = tape.slice_cols(gates, u, u)?;
        let g_pre = tape.slice_cols(gates, 2 * u, u)?;
        let o_pre = tape.slice_cols(gates, 3 * u, u)?;
        let i = tape.sigmoid(i_pre);
        let f = tape.sigmoid(f_pre);
        let g = tape.tanh(g_pre);
        let o = tape.sigmoid(o_pre);
        let keep = tape.mul(f, state.cell)?;
        let write = tape.mul(i, g)?;
        let cell = tape.add(keep, write)?;
        let squashed = tape.tanh(cell);
        let hidden = tape.mul(o, squashed)?;
        Ok(LstmState { hidden, cell })
    }

    /// Runs over padded token sequences and returns the hidden state after
    /// each sequence's last real input. `inputs[t]` is the `batch x input`
    /// matrix for time step `t`; `lengths[b]` is the true length of row `b`.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, inputs: &[Var], lengths: &[usize]) -> Result<Var> {
        let batch = lengths.len();
        let mut state = LstmState::zeros(tape, batch, self.units);
        for (t, &x) in inputs.iter().enumerate() {
            let next = self.step(tape, bound, x, state)?;
            if lengths.iter().all(|&l| l > t) {
                state = next;
                continue;
            }
            let live: Rc<[f64]> = lengths
                .iter()
                .flat_map(|&l| core::iter::repeat(if l > t { 1.0 } else { 0.0 }).take(self.units))
                .collect();
            let dead: Rc<[f64]> = live.iter().map(|m| 1.0 - m).collect();
            let mut blend = |new: Var, old: Var| -> Result<Var> {
                let a = tape.mask(new, live.clone())?;
                let b = tape.mask(old, dead.clone())?;
                tape.add(a, b)
            };
            state = LstmState {
                hidden: blend(next.hidden, state.hidden)?,
                cell: blend(next.cell, state.cell)?,
            };
        }
        Ok(state.hidden)
    }
}

/// Learned lookup table.
#[derive(Clone, Debug)]
pub struct Embedding {
    name: String,
    table: ParamId,
    vocab: usize,
    dim: usize,
}

impl Embedding {
    pub fn new(params: &mut ParamSet, rng: &mut Rng, name: &str, vocab: usize, dim: usize) -> Result<Self> {
        let table = params.add(format!("{name}.table"), ParamKind::Embedding, glorot_uniform(rng, vocab, dim))?;
        Ok(Embedding {
            name: name.into(),
            table,
            vocab,
            dim,
        })
    }

    pub fn table(&self) -> ParamId {
        self.table
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lookup(&self, tape: &mut Tape, bound: &Bound, indices: &[usize]) -> Result<Var> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.vocab) {
            return Err(Error::bounds(format!("embedding {}", self.name), bad, self.vocab));
        }
        tape.gather_rows(bound.var(self.table), indices.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn eval(tape: &Tape, v: Var) -> Vec<f64> {
        tape.value(v).to_vec()
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let mut ps = ParamSet::new();
        let mut r = rng::seeded(1);
        let mlp = Mlp::new(&mut ps, &mut r, "m", MlpSpec::uniform(3, 4, 2, 2)).unwrap();
        for p in ps.iter_mut() {
            p.tensor.data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let x = tape.constant(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.1, 9.0]).unwrap();
        let y = mlp.forward(&mut tape, &b, x).unwrap();
        assert_eq!(eval(&tape, y), vec![0.0; 4]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut ps = ParamSet::new();
        let mut r = rng::seeded(1);
        let mlp = Mlp::new(&mut ps, &mut r, "id", MlpSpec::new(3, vec![3])).unwrap();
        let w = mlp.layers()[0].weight();
        ps.get_mut(w).tensor.data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let x = tape.constant(vec![1, 3], vec![0.3, -7.0, 2.5]).unwrap();
        let y = mlp.forward(&mut tape, &b, x).unwrap();
        assert_eq!(eval(&tape, y), vec![0.3, -7.0, 2.5]);
    }

    #[test]
    fn mlp_shape_error_names_layer() {
        let mut ps = ParamSet::new();
        let mut r = rng::seeded(1);
        let mlp = Mlp::new(&mut ps, &mut r, "enc", MlpSpec::uniform(3, 4, 1, 2)).unwrap();
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let x = tape.constant(vec![1, 2], vec![0.0, 0.0]).unwrap();
        match mlp.forward(&mut tape, &b, x) {
            Err(Error::Dimension { context, .. }) => assert!(context.contains("enc.0")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_lstm_stays_zero() {
        let mut ps = ParamSet::new();
        let mut r = rng::seeded(1);
        let cell = LstmCell::new(&mut ps, &mut r, "l", 3, 2).unwrap();
        for p in ps.iter_mut() {
            p.tensor.data_mut().fill(0.0);
        }
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let x = tape.constant(vec![1, 3], vec![1.0, 2.0, -3.0]).unwrap();
        let s0 = LstmState::zeros(&mut tape, 1, 2);
        let s1 = cell.step(&mut tape, &b, x, s0).unwrap();
        assert_eq!(eval(&tape, s1.hidden), vec![0.0, 0.0]);
        assert_eq!(eval(&tape, s1.cell), vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_gate_keeps_zero_cell() {
        let mut ps = ParamSet::new();
        let mut r = rng::seeded(4);
        let cell = LstmCell::new(&mut ps, &mut r, "l", 2, 3).unwrap();
        let bias = ps.get_mut(cell.bias());
        bias.tensor.data_mut().fill(0.0);
        bias.tensor.data_mut()[3..6].fill(50.0);
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let x = tape.zeros(1, 2);
        let s0 = LstmState::zeros(&mut tape, 1, 3);
        let s1 = cell.step(&mut tape, &b, x, s0).unwrap();
        assert_eq!(eval(&tape, s1.cell), vec![0.0; 3]);
    }

    #[test]
    fn lstm_batch_mismatch_is_dimension_error() {
        let mut ps = ParamSet::new();
        let mut r = rng::seeded(1);
        let cell = LstmCell::new(&mut ps, &mut r, "l", 2, 2).unwrap();
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        let x = tape.zeros(2, 2);
        let s0 = LstmState::zeros(&mut tape, 3, 2);
        assert!(matches!(cell.step(&mut tape, &b, x, s0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn embedding_out_of_range_reports_index() {
        let mut ps = ParamSet::new();
        let mut r = rng::seeded(1);
        let e = Embedding::new(&mut ps, &mut r, "e", 4, 2).unwrap();
        let mut tape = Tape::new();
        let b = ps.bind(&mut tape);
        assert!(matches!(
            e.lookup(&mut tape, &b, &[1, 7]),
            Err(Error::Bounds { index: 7, bound: 4, .. })
        ));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut ps = ParamSet::new();
        ps.add("a", ParamKind::Bias, Tensor::zeros(vec![1])).unwrap();
        assert!(ps.add("a", ParamKind::Bias, Tensor::zeros(vec![1])).is_err());
    }

    #[test]
    fn mlp_param_count_formula() {
        let spec = MlpSpec::uniform(232, 256, 4, 16);
        assert_eq!(spec.num_params(), 261_136);
        let mut ps = ParamSet::new();
        Mlp::new(&mut ps, &mut rng::seeded(0), "m", spec).unwrap();
        assert_eq!(ps.num_scalars(), 261_136);
    }
}
