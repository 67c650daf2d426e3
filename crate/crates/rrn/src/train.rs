//! Experiments and the training loop.
//!
//! Every random choice is drawn from a stream keyed by the config seed, so
//! the batch and dropout masks of update `u` depend on `(seed, u)` only.
//! Together with the optimizer state stored in checkpoints this makes a
//! resumed run continue exactly where the interrupted one stopped.
//!
//! Output directory layout:
//!
//! * `config.txt` - the full configuration
//! * `version.txt` - harness version string
//! * `checkpoint.ckpt` - parameters and Adam state of the latest checkpoint
//! * `best.ckpt` - best by evaluation metric, when `keep_best` is set
//! * `metrics.jsonl` - one [`MetricsRecord`] per evaluation
//! * `timing.jsonl` - wall-clock seconds per evaluation

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng as _;
use rrn_core::age::{self, AgeConfig, AgeInstance, AgeModel};
use rrn_core::babi::{self, Ablation, BabiConfig, BabiModel, BabiSample, Vocabulary};
use rrn_core::checkpoint::Checkpoint;
use rrn_core::nn::{Bound, ParamSet};
use rrn_core::optim::AdamState;
use rrn_core::pretty::{self, PrettyConfig, PrettyMlp, PrettyRrn, Question, Sample, Scene};
use rrn_core::rrn::LossMode;
use rrn_core::sudoku::{self, DatasetSpec, Example, SudokuModel, SudokuModelConfig};
use rrn_core::{rng, Tape, Var};

use crate::config::{PrettyModel, Split, TaskKind, TrainConfig};
use crate::data;
use crate::error::{self, Error, Result};
use crate::eval::Report;
use crate::metrics::{self, JsonlWriter, MetricsRecord, TimingRecord};

pub const VERSION: &str = concat!("rrn ", env!("CARGO_PKG_VERSION"));

const STREAM_INIT: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_BATCH: u64 = 3;
const STREAM_DROPOUT: u64 = 4;
const STREAM_EVAL: u64 = 5;

/// Questions per Pretty-CLEVR scene, indexed `start * 8 + jumps`.
const QUESTIONS: usize = pretty::QUESTIONS_PER_SCENE;
const EVAL_CHUNK: usize = 128;
/// Age instances per evaluation split when `eval_size` is 0.
const AGE_EVAL_DEFAULT: usize = 10_000;

enum Model {
    Sudoku(SudokuModel),
    PrettyRrn(PrettyRrn),
    PrettyMlp(PrettyMlp),
    Age(AgeModel),
    Babi(BabiModel),
}

/// Pretty-CLEVR questions, either every question of generated scenes or
/// explicit samples read from a file.
enum PrettySet {
    Scenes(Vec<Scene>),
    Samples(Vec<Sample>),
}

impl PrettySet {
    fn len(&self) -> usize {
        match self {
            PrettySet::Scenes(s) => s.len() * QUESTIONS,
            PrettySet::Samples(s) => s.len(),
        }
    }

    fn get(&self, i: usize) -> Sample {
        match self {
            PrettySet::Scenes(s) => {
                let q = i % QUESTIONS;
                let question = Question::new((q / (pretty::MAX_JUMPS + 1)) as u8, (q % (pretty::MAX_JUMPS + 1)) as u8)
                    .expect("index within the question grid");
                Sample::new(s[i / QUESTIONS], question)
            }
            PrettySet::Samples(s) => s[i],
        }
    }
}

enum Data {
    Sudoku([Vec<Example>; 3]),
    Pretty([PrettySet; 3]),
    Age {
        train_trees: Vec<u32>,
        train_file: Option<Vec<AgeInstance>>,
        eval: [Vec<AgeInstance>; 3],
    },
    Babi([Vec<BabiSample>; 3]),
}

fn split_index(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Valid => 1,
        Split::Test => 2,
    }
}

/// `limit` evenly strided indices of `0..len` (all of them for 0).
pub fn subset(len: usize, limit: usize) -> Vec<usize> {
    if limit == 0 || limit >= len {
        return (0..len).collect();
    }
    (0..limit).map(|i| i * len / limit).collect()
}

/// A task model with its parameters and data.
pub struct Experiment {
    config: TrainConfig,
    params: ParamSet,
    model: Model,
    data: Data,
    vocab: Option<Vocabulary>,
}

impl Experiment {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let data_seed = rng::mix(&[c.seed, STREAM_DATA]);
        let mut init = rng::stream(c.seed, STREAM_INIT);
        let mut params = ParamSet::new();
        let mut vocab = None;
        let (model, data) = match c.task {
            TaskKind::Sudoku => {
                let [mut train, valid, test] = sudoku_data(c, data_seed)?;
                train.retain(|(p, _)| (c.givens_min..=c.givens_max).contains(&p.givens()));
                if c.train_limit > 0 {
                    train = subset(train.len(), c.train_limit).into_iter().map(|k| train[k]).collect();
                }
                if train.is_empty() {
                    return Err(Error::config("no training puzzles left after the givens filter"));
                }
                let mc = SudokuModelConfig {
                    hidden: c.hidden,
                    embed: c.embed,
                    steps: c.steps,
                    relu_layers: c.relu_layers,
                    drop_position: c.drop_position,
                };
                let m = SudokuModel::new(&mut params, &mut init, mc)?;
                (Model::Sudoku(m), Data::Sudoku([train, valid, test]))
            }
            TaskKind::PrettyClevr => {
                let model = match c.pretty_model {
                    PrettyModel::Mlp => Model::PrettyMlp(PrettyMlp::new(&mut params, &mut init, "pretty.mlp")?),
                    PrettyModel::Rrn | PrettyModel::Rn => {
                        let pc = PrettyConfig {
                            hidden: c.hidden,
                            steps: c.steps,
                            relu_layers: c.relu_layers,
                            readout_keep: c.readout_keep,
                        };
                        Model::PrettyRrn(PrettyRrn::new(&mut params, &mut init, "pretty", pc)?)
                    }
                };
                (model, Data::Pretty(pretty_data(c, data_seed)?))
            }
            TaskKind::AgeArith => {
                let ac = AgeConfig {
                    hidden: c.hidden,
                    steps: c.steps,
                    relu_layers: c.relu_layers,
                    readout_keep: Some(c.readout_keep),
                };
                let m = AgeModel::new(&mut params, &mut init, "age", ac)?;
                (Model::Age(m), age_data(c, data_seed)?)
            }
            TaskKind::Babi => {
                let raw = babi_raw(c)?;
                let v = Vocabulary::build(raw.iter().flatten());
                let encode = |set: &[babi::RawSample]| set.iter().map(|s| v.encode(s)).collect::<rrn_core::Result<Vec<_>>>();
                let sets = [encode(&raw[0])?, encode(&raw[1])?, encode(&raw[2])?];
                let bc = BabiConfig {
                    vocab: v.len(),
                    hidden: c.hidden,
                    sentence_units: c.sentence_units,
                    steps: c.steps,
                    relu_layers: c.relu_layers,
                    readout_keep: c.readout_keep,
                    ablation: Ablation {
                        linear_encoder: c.linear_encoder,
                        separate_question: c.separate_question,
                        no_dropout: c.no_dropout,
                    },
                };
                let m = BabiModel::new(&mut params, &mut init, "babi", bc)?;
                vocab = Some(v);
                (Model::Babi(m), Data::Babi(sets))
            }
        };
        Ok(Experiment {
            config: config.clone(),
            params,
            model,
            data,
            vocab,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        self.vocab.as_ref()
    }

    /// Examples in a split.
    pub fn split_len(&self, split: Split) -> usize {
        let i = split_index(split);
        match &self.data {
            Data::Sudoku(s) => s[i].len(),
            Data::Pretty(s) => s[i].len(),
            Data::Age { eval, .. } => eval[i].len(),
            Data::Babi(s) => s[i].len(),
        }
    }

    /// Per-step losses `l^1..l^T` for the training batch of `update`.
    pub fn batch_losses(&self, update: u64, tape: &mut Tape, bound: &Bound) -> Result<Vec<Var>> {
        let mut r = rng::stream(rng::mix(&[self.config.seed, update]), STREAM_BATCH);
        let n = self.config.batch_size;
        let out = match (&self.model, &self.data) {
            (Model::Sudoku(m), Data::Sudoku([train, ..])) => {
                let batch: Vec<&Example> = (0..n).map(|_| &train[r.gen_range(0..train.len())]).collect();
                let puzzles: Vec<_> = batch.iter().map(|e| e.0).collect();
                let solutions: Vec<_> = batch.iter().map(|e| e.1).collect();
                m.forward(tape, bound, &puzzles, Some(&solutions))?.losses
            }
            (model, Data::Pretty([train, ..])) => {
                if train.len() == 0 {
                    return Err(Error::config("empty Pretty-CLEVR training set"));
                }
                let batch: Vec<Sample> = (0..n)
                    .map(|_| {
                        let s = train.get(r.gen_range(0..train.len()));
                        if self.config.augment {
                            Sample::new(pretty::augment(&s.scene, &mut r), s.question)
                        } else {
                            s
                        }
                    })
                    .collect();
                match model {
                    Model::PrettyRrn(m) => m.forward(tape, bound, &batch)?.losses,
                    Model::PrettyMlp(m) => vec![m.loss(tape, bound, &batch)?],
                    _ => unreachable!("model matches data"),
                }
            }
            (Model::Age(m), Data::Age { train_trees, train_file, .. }) => {
                let batch: Vec<AgeInstance> = match train_file {
                    Some(f) => (0..n).map(|_| f[r.gen_range(0..f.len())]).collect(),
                    None => (0..n)
                        .map(|_| {
                            let t = train_trees[r.gen_range(0..train_trees.len())];
                            age::sample_instance(&age::prufer_decode(&age::prufer_at(t as usize)), &mut r)
                        })
                        .collect(),
                };
                m.forward(tape, bound, &batch)?.losses
            }
            (Model::Babi(m), Data::Babi([train, ..])) => {
                let idx: Vec<usize> = (0..n).map(|_| r.gen_range(0..train.len())).collect();
                let batch: Vec<BabiSample> = idx.iter().map(|&i| train[i].clone()).collect();
                let offsets: Vec<usize> = idx.iter().map(|_| babi::sample_offset(&mut r)).collect();
                m.forward(tape, bound, &batch, &offsets)?.losses
            }
            _ => unreachable!("model matches data"),
        };
        Ok(out)
    }

    /// One Adam update; returns the per-step loss values.
    pub fn train_step(&mut self, update: u64, adam: &mut AdamState) -> Result<Vec<f64>> {
        let mut tape = Tape::training(rng::mix(&[self.config.seed, update, STREAM_DROPOUT]));
        let bound = self.params.bind(&mut tape);
        let losses = self.batch_losses(update, &mut tape, &bound)?;
        let objective = match self.config.loss_mode {
            LossMode::EveryStep => tape.add_n(&losses)?,
            LossMode::LastStep => *losses.last().ok_or_else(|| Error::runtime("model produced no losses"))?,
        };
        let values: Vec<f64> = losses.iter().map(|&l| tape.scalar(l)).collect();
        if !tape.scalar(objective).is_finite() {
            return Err(rrn_core::Error::NonFinite {
                step: values.iter().position(|v| !v.is_finite()).map_or(0, |i| i + 1),
            }
            .into());
        }
        let grads = tape.backward(objective)?;
        self.params.accumulate_grads(&bound, &grads)?;
        adam.step(&mut self.params)?;
        Ok(values)
    }

    /// Accuracy per step `0..=steps` on up to `limit` examples of `split`
    /// (0 = all), chosen by even striding.
    pub fn evaluate(&self, split: Split, steps: usize, limit: usize) -> Result<Report> {
        let i = split_index(split);
        let task = self.config.task;
        let report = match (&self.model, &self.data) {
            (Model::Sudoku(m), Data::Sudoku(sets)) => {
                let set: Vec<Example> = subset(sets[i].len(), limit).into_iter().map(|k| sets[i][k]).collect();
                nonempty(set.len(), split)?;
                let table = sudoku::evaluate(m, &self.params, &set, steps, EVAL_CHUNK)?;
                let mut r = Report::new(task, split, steps, 17..=34);
                for (g, (count, solved)) in table.by_givens {
                    r.rows.insert(g, (count, solved));
                }
                r
            }
            (model, Data::Pretty(sets)) => {
                let idx = subset(sets[i].len(), limit);
                nonempty(idx.len(), split)?;
                let steps = if matches!(model, Model::PrettyMlp(_)) { 0 } else { steps };
                let mut r = Report::new(task, split, steps, 0..=pretty::MAX_JUMPS);
                for chunk in idx.chunks(EVAL_CHUNK) {
                    let batch: Vec<Sample> = chunk.iter().map(|&k| sets[i].get(k)).collect();
                    let per_step = match model {
                        Model::PrettyRrn(m) => m.predict_steps(&self.params, &batch, steps)?,
                        Model::PrettyMlp(m) => vec![m.predict(&self.params, &batch)?],
                        _ => unreachable!("model matches data"),
                    };
                    for (b, s) in batch.iter().enumerate() {
                        r.add(usize::from(s.question.jumps), per_step.iter().map(|p| p[b] == s.label));
                    }
                }
                r
            }
            (Model::Age(m), Data::Age { eval, .. }) => {
                let set: Vec<AgeInstance> = subset(eval[i].len(), limit).into_iter().map(|k| eval[i][k]).collect();
                nonempty(set.len(), split)?;
                let mut r = Report::new(task, split, steps, 0..age::PERSONS);
                for chunk in set.chunks(EVAL_CHUNK) {
                    let per_step = m.predict_steps(&self.params, chunk, steps)?;
                    for (b, inst) in chunk.iter().enumerate() {
                        r.add(usize::from(inst.hops), per_step.iter().map(|p| p[b] == usize::from(inst.answer)));
                    }
                }
                r
            }
            (Model::Babi(m), Data::Babi(sets)) => {
                let idx = subset(sets[i].len(), limit);
                nonempty(idx.len(), split)?;
                let mut r = Report::new(task, split, steps, self.config.babi_tasks.iter().map(|&t| usize::from(t)));
                let mut offsets_rng = rng::stream(self.config.seed, STREAM_EVAL);
                let offsets: Vec<usize> = idx.iter().map(|_| babi::sample_offset(&mut offsets_rng)).collect();
                for (chunk, offs) in idx.chunks(EVAL_CHUNK).zip(offsets.chunks(EVAL_CHUNK)) {
                    let batch: Vec<BabiSample> = chunk.iter().map(|&k| sets[i][k].clone()).collect();
                    let per_step = m.predict_steps(&self.params, &batch, offs, steps)?;
                    for (b, s) in batch.iter().enumerate() {
                        r.add(usize::from(s.task), per_step.iter().map(|p| p[b] == s.answer));
                    }
                }
                r
            }
            _ => unreachable!("model matches data"),
        };
        Ok(report)
    }

    /// Sudoku model and parameters, for step dumps.
    pub fn sudoku_model(&self) -> Option<&SudokuModel> {
        match &self.model {
            Model::Sudoku(m) => Some(m),
            _ => None,
        }
    }
}

fn nonempty(n: usize, split: Split) -> Result<()> {
    if n == 0 {
        return Err(Error::config(format!("the {split} split is empty")));
    }
    Ok(())
}

fn sudoku_data(c: &TrainConfig, seed: u64) -> Result<[Vec<Example>; 3]> {
    if let Some(train) = &c.train_path {
        let read = |p: &Option<PathBuf>| p.as_deref().map(data::read_sudoku).transpose();
        let train = data::read_sudoku(train)?;
        return Ok([train, read(&c.valid_path)?.unwrap_or_default(), read(&c.test_path)?.unwrap_or_default()]);
    }
    let pool = data::bundled_sudoku();
    let spec = DatasetSpec::scaled(c.data_k, pool.len(), seed);
    let s = sudoku::generate_dataset(&spec, &pool)?;
    Ok([s.train, s.valid, s.test])
}

fn pretty_data(c: &TrainConfig, seed: u64) -> Result<[PrettySet; 3]> {
    if c.train_path.is_some() {
        let read = |p: &Option<PathBuf>| -> Result<PrettySet> {
            Ok(PrettySet::Samples(match p {
                Some(p) => data::read_pretty_samples(p)?,
                None => Vec::new(),
            }))
        };
        return Ok([read(&c.train_path)?, read(&c.valid_path)?, read(&c.test_path)?]);
    }
    let s = pretty::generate_splits(c.train_scenes, c.valid_scenes, c.test_scenes, seed);
    let scenes = |v: Vec<(u64, Scene)>| PrettySet::Scenes(v.into_iter().map(|e| e.1).collect());
    Ok([scenes(s.train), scenes(s.valid), scenes(s.test)])
}

fn age_data(c: &TrainConfig, seed: u64) -> Result<Data> {
    let (train_trees, test_trees) = age::split_trees(&mut rng::seeded(seed));
    let n = if c.eval_size == 0 { AGE_EVAL_DEFAULT } else { c.eval_size };
    let draw = |trees: &[u32], stream: u64| -> Vec<AgeInstance> {
        let mut r = rng::stream(rng::mix(&[seed, stream]), STREAM_EVAL);
        (0..n)
            .map(|_| {
                let t = trees[r.gen_range(0..trees.len())];
                age::sample_instance(&age::prufer_decode(&age::prufer_at(t as usize)), &mut r)
            })
            .collect()
    };
    let read = |p: &Option<PathBuf>| p.as_deref().map(data::read_age).transpose();
    let train_file = read(&c.train_path)?;
    let eval = [
        match &train_file {
            Some(f) => f.clone(),
            None => draw(&train_trees, 0),
        },
        read(&c.valid_path)?.unwrap_or_else(|| draw(&test_trees, 1)),
        read(&c.test_path)?.unwrap_or_else(|| draw(&test_trees, 2)),
    ];
    if train_file.as_ref().is_some_and(Vec::is_empty) {
        return Err(Error::config("empty age training file"));
    }
    Ok(Data::Age {
        train_trees,
        train_file,
        eval,
    })
}

fn babi_raw(c: &TrainConfig) -> Result<[Vec<babi::RawSample>; 3]> {
    let sets = if let Some(dir) = &c.babi_dir {
        [
            data::read_babi_dir(dir, &c.babi_tasks, Split::Train)?,
            data::read_babi_dir(dir, &c.babi_tasks, Split::Valid)?,
            data::read_babi_dir(dir, &c.babi_tasks, Split::Test)?,
        ]
    } else if let Some(train) = &c.train_path {
        let task = c.babi_tasks[0];
        let read = |p: &Option<PathBuf>| p.as_deref().map(|p| data::read_babi_file(p, task)).transpose();
        let train = data::read_babi_file(train, task)?;
        let valid = read(&c.valid_path)?.unwrap_or_else(|| train.clone());
        let test = read(&c.test_path)?.unwrap_or_else(|| valid.clone());
        [train, valid, test]
    } else {
        return Err(Error::config("babi needs `babi_dir` or `train_path`"));
    };
    if sets[0].is_empty() {
        return Err(Error::config("empty bAbI training set"));
    }
    Ok(sets)
}

/// Outcome of [`train`].
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub updates: u64,
    pub resumed_from: Option<u64>,
    pub last: Option<MetricsRecord>,
    pub out: PathBuf,
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    out.join("checkpoint.ckpt")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    error::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Restores parameters (and the optimizer state, when present) from a
/// checkpoint file.
pub fn load_checkpoint(path: &Path, params: &mut ParamSet) -> Result<Option<AdamState>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = Checkpoint::decode(&bytes)?;
    ck.restore_params(params)?;
    Ok(ck.restore_adam(params)?)
}

/// Trains into `out`, resuming from `out/checkpoint.ckpt` when present.
///
/// `stop_after` ends the run early after that many total updates without
/// the final evaluation, as an interrupted run would.
pub fn train(config: &TrainConfig, out: &Path, stop_after: Option<u64>) -> Result<RunSummary> {
    config.validate()?;
    error::create_dir_all(out)?;
    let config_file = out.join("config.txt");
    if config_file.exists() {
        let previous = TrainConfig::parse(&error::read_to_string(&config_file)?)?;
        if previous != *config {
            return Err(Error::config(format!(
                "{} holds a run with a different configuration",
                out.display()
            )));
        }
    } else {
        config.save(&config_file)?;
    }
    error::write(out.join("version.txt"), format!("{VERSION}\n"))?;

    let mut exp = Experiment::new(config)?;
    let ckpt = checkpoint_path(out);
    let metrics_path = out.join("metrics.jsonl");
    let timing_path = out.join("timing.jsonl");
    let (mut adam, resumed_from) = if ckpt.exists() {
        let adam = load_checkpoint(&ckpt, exp.params_mut())?
            .ok_or_else(|| Error::runtime(format!("{} has no optimizer state", ckpt.display())))?;
        let at = adam.step_count();
        metrics::truncate_after(&metrics_path, at)?;
        metrics::truncate_after(&timing_path, at)?;
        (adam, Some(at))
    } else {
        let _ = std::fs::remove_file(&metrics_path);
        let _ = std::fs::remove_file(&timing_path);
        let adam = AdamState::new(config.adam(), exp.params());
        write_atomic(&ckpt, &Checkpoint::capture(exp.params(), Some(&adam)).encode())?;
        (adam, None)
    };
    if adam.config != config.adam() {
        return Err(Error::config("checkpoint optimizer settings differ from the config"));
    }

    let mut best = if config.keep_best && metrics_path.exists() {
        metrics::read_records::<MetricsRecord>(&metrics_path)?
            .into_iter()
            .map(|r| r.metric)
            .reduce(|a, b| if better(config.task, b, a) { b } else { a })
    } else {
        None
    };
    let mut metrics_out = JsonlWriter::append(&metrics_path)?;
    let mut timing_out = JsonlWriter::append(&timing_path)?;
    let started = Instant::now();
    let end = stop_after.map_or(config.updates, |s| s.min(config.updates));
    let mut last = None;
    let mut update = adam.step_count();
    while update < end {
        let losses = match exp.train_step(update, &mut adam) {
            Ok(l) => l,
            Err(Error::Core(rrn_core::Error::NonFinite { .. })) => {
                return Err(Error::NonFinite { update, checkpoint: ckpt })
            }
            Err(e) => return Err(e),
        };
        update += 1;
        let finished = update == config.updates;
        if update % config.eval_every == 0 || finished {
            let report = exp.evaluate(config.eval_split, config.test_steps, config.eval_size)?;
            let record = MetricsRecord {
                update,
                seed: config.seed,
                losses,
                split: config.eval_split.to_string(),
                metric_name: report.metric_name().into(),
                metric: report.metric(),
                step_accuracy: report.step_accuracy(),
            };
            metrics_out.write(&record)?;
            timing_out.write(&TimingRecord {
                update,
                seconds: started.elapsed().as_secs_f64(),
            })?;
            if config.keep_best && best.is_none_or(|b| better(config.task, record.metric, b)) {
                best = Some(record.metric);
                write_atomic(&out.join("best.ckpt"), &Checkpoint::capture(exp.params(), None).encode())?;
            }
            last = Some(record);
        }
        if update % config.checkpoint_every == 0 || finished {
            write_atomic(&ckpt, &Checkpoint::capture(exp.params(), Some(&adam)).encode())?;
        }
    }
    Ok(RunSummary {
        updates: update,
        resumed_from,
        last,
        out: out.to_path_buf(),
    })
}

fn better(task: TaskKind, a: f64, b: f64) -> bool {
    if task == TaskKind::Babi {
        a < b
    } else {
        a > b
    }
}

/// Per-step loss values of the first training batch for freshly
/// initialized parameters, without dropout.
pub fn initial_losses(config: &TrainConfig) -> Result<Vec<f64>> {
    let exp = Experiment::new(config)?;
    let mut tape = Tape::new();
    let bound = exp.params().bind(&mut tape);
    let losses = exp.batch_losses(0, &mut tape, &bound)?;
    Ok(losses.iter().map(|&l| tape.scalar(l)).collect())
}
