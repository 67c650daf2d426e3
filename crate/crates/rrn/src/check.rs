//! Finite-difference gradient checks of the task models.

use rand::Rng as _;
use rrn_core::age::{self, AgeConfig, AgeModel};
use rrn_core::babi::{self, BabiConfig, BabiModel, Vocabulary};
use rrn_core::gradcheck::{gradient_check, GradCheckReport};
use rrn_core::graph::{Targets, Topology};
use rrn_core::nn::ParamSet;
use rrn_core::pretty::{self, PrettyConfig, PrettyRrn, Question, Sample};
use rrn_core::rrn::{NodeFunction, Rrn, RrnConfig};
use rrn_core::sudoku::{self, SudokuModel, SudokuModelConfig, CELLS};
use rrn_core::{rng, Tensor};

use crate::data;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckTarget {
    /// A 3-node graph with 5 directed edges.
    Toy,
    /// The Sudoku RRN on the first `nodes` cells (81 = the full model with
    /// embeddings and encoder).
    Sudoku { nodes: usize },
    PrettyClevr,
    AgeArith,
    Babi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckSettings {
    pub hidden: usize,
    pub steps: usize,
    pub relu_layers: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        CheckSettings {
            hidden: 16,
            steps: 2,
            relu_layers: 3,
            seed: 0,
            tolerance: 1e-4,
        }
    }
}

fn features(seed: u64, rows: usize, cols: usize) -> Tensor {
    let mut r = rng::seeded(seed);
    Tensor::from_fn([rows, cols], |_| r.gen_range(-1.0..1.0))
}

fn check_rrn(config: RrnConfig, topo: &Topology, targets: Targets, s: &CheckSettings) -> Result<GradCheckReport> {
    let mut params = ParamSet::new();
    let m = Rrn::new(&mut params, &mut rng::seeded(s.seed), "rrn", config)?;
    let x = features(s.seed ^ 0x5eed, topo.num_nodes(), s.hidden);
    Ok(gradient_check(
        &mut params,
        |tape, b| {
            let xv = tape.leaf(&x);
            let out = m.run_unrolled(tape, b, topo, xv, None, &targets)?;
            Ok(out.total_loss.expect("targets given"))
        },
        s.tolerance,
    )?)
}

pub fn run(target: CheckTarget, s: &CheckSettings) -> Result<GradCheckReport> {
    match target {
        CheckTarget::Toy => {
            let topo = Topology::new(3, &[(0, 1), (1, 0), (1, 2), (2, 1), (0, 2)], false)?;
            let mut config = RrnConfig::new(s.hidden, s.steps, s.relu_layers, 3);
            config.node_function = NodeFunction::Lstm;
            check_rrn(config, &topo, Targets::PerNode(vec![0, 2, 1]), s)
        }
        CheckTarget::Sudoku { nodes } if nodes < CELLS => {
            if nodes == 0 {
                return Err(Error::config("--nodes must be in 1..=81"));
            }
            let edges: Vec<(usize, usize)> = sudoku::topology().edges().filter(|&(a, b)| a < nodes && b < nodes).collect();
            let topo = Topology::new(nodes, &edges, false)?;
            let (_, solution) = data::bundled_sudoku()[0];
            let targets = solution.cells()[..nodes].iter().map(|&d| usize::from(d) - 1).collect();
            let config = SudokuModelConfig {
                hidden: s.hidden,
                embed: s.hidden,
                steps: s.steps,
                relu_layers: s.relu_layers,
                drop_position: false,
            };
            check_rrn(config.rrn_config(), &topo, Targets::PerNode(targets), s)
        }
        CheckTarget::Sudoku { nodes } if nodes == CELLS => {
            let config = SudokuModelConfig {
                hidden: s.hidden,
                embed: 8,
                steps: s.steps,
                relu_layers: s.relu_layers,
                drop_position: false,
            };
            let mut params = ParamSet::new();
            let m = SudokuModel::new(&mut params, &mut rng::seeded(s.seed), config)?;
            let (p, sol) = data::bundled_sudoku()[0];
            Ok(gradient_check(
                &mut params,
                |tape, b| Ok(m.forward(tape, b, &[p], Some(&[sol]))?.total_loss.expect("targets given")),
                s.tolerance,
            )?)
        }
        CheckTarget::Sudoku { .. } => Err(Error::config("--nodes must be in 1..=81")),
        CheckTarget::PrettyClevr => {
            let config = PrettyConfig {
                hidden: s.hidden,
                steps: s.steps,
                relu_layers: s.relu_layers,
                readout_keep: 0.5,
            };
            let mut params = ParamSet::new();
            let m = PrettyRrn::new(&mut params, &mut rng::seeded(s.seed), "pretty", config)?;
            let mut r = rng::seeded(s.seed ^ 0x5eed);
            let batch: Vec<Sample> = (0..2)
                .map(|i| Sample::new(pretty::generate_scene(&mut r), Question::new(5 + 4 * i, 1 + 2 * i).expect("valid")))
                .collect();
            Ok(gradient_check(
                &mut params,
                |tape, b| Ok(m.forward(tape, b, &batch)?.total_loss.expect("targets given")),
                s.tolerance,
            )?)
        }
        CheckTarget::AgeArith => {
            let config = AgeConfig {
                hidden: s.hidden,
                steps: s.steps,
                relu_layers: s.relu_layers,
                readout_keep: Some(0.5),
            };
            let mut params = ParamSet::new();
            let m = AgeModel::new(&mut params, &mut rng::seeded(s.seed), "age", config)?;
            let mut r = rng::seeded(s.seed ^ 0x5eed);
            let batch: Vec<_> = (0..2)
                .map(|k| age::sample_instance(&age::prufer_decode(&age::prufer_at(k * 9973)), &mut r))
                .collect();
            Ok(gradient_check(
                &mut params,
                |tape, b| Ok(m.forward(tape, b, &batch)?.total_loss.expect("targets given")),
                s.tolerance,
            )?)
        }
        CheckTarget::Babi => {
            let raw = babi::parse_babi(data::BABI_SAMPLE, 1, "babi_sample_qa1.txt")?;
            let vocab = Vocabulary::build(&raw);
            let config = BabiConfig {
                hidden: s.hidden,
                sentence_units: s.hidden / 2,
                steps: s.steps,
                relu_layers: s.relu_layers,
                ..BabiConfig::paper(vocab.len())
            };
            let mut params = ParamSet::new();
            let m = BabiModel::new(&mut params, &mut rng::seeded(s.seed), "babi", config)?;
            let batch = [vocab.encode(&raw[0])?, vocab.encode(&raw[3])?];
            Ok(gradient_check(
                &mut params,
                |tape, b| Ok(m.forward(tape, b, &batch, &[2, 9])?.total_loss.expect("targets given")),
                s.tolerance,
            )?)
        }
    }
}
