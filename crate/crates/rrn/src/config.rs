//! Training configuration and its `key = value` file format.
//!
//! A config file is UTF-8 text with one `key = value` pair per line. Blank
//! lines are ignored and `#` starts a comment. Either `task` or `preset`
//! must be present; the remaining keys override the task defaults (or the
//! preset). [`KEYS`] lists every accepted key. [`TrainConfig::to_text`]
//! writes every key, and parsing that text gives back an equal config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rrn_core::optim::{AdamConfig, L2Scope};
use rrn_core::rrn::{LossMode, NodeFunction};

use crate::error::{self, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Sudoku,
    PrettyClevr,
    AgeArith,
    Babi,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Sudoku, TaskKind::PrettyClevr, TaskKind::AgeArith, TaskKind::Babi];

    /// The node function each task model is built with.
    pub fn node_function(self) -> NodeFunction {
        match self {
            TaskKind::PrettyClevr => NodeFunction::Mlp,
            _ => NodeFunction::Lstm,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Sudoku => "sudoku",
            TaskKind::PrettyClevr => "prettyclevr",
            TaskKind::AgeArith => "agearith",
            TaskKind::Babi => "babi",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sudoku" => Ok(TaskKind::Sudoku),
            "prettyclevr" | "pretty" => Ok(TaskKind::PrettyClevr),
            "agearith" | "age" => Ok(TaskKind::AgeArith),
            "babi" => Ok(TaskKind::Babi),
            _ => Err(Error::config(format!("unknown task `{s}`"))),
        }
    }
}

/// Which Pretty-CLEVR model to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrettyModel {
    Rrn,
    /// The RRN configuration with a single step.
    Rn,
    Mlp,
}

/// Dataset split used for periodic evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::config(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub hidden: usize,
    pub steps: usize,
    pub test_steps: usize,
    pub relu_layers: usize,
    pub node_function: NodeFunction,
    pub loss_mode: LossMode,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    pub l2_scope: L2Scope,
    pub batch_size: usize,
    pub updates: u64,
    pub eval_every: u64,
    pub checkpoint_every: u64,
    pub eval_size: usize,
    pub eval_split: Split,
    pub keep_best: bool,
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub readout_keep: f64,
    pub embed: usize,
    pub drop_position: bool,
    pub givens_min: usize,
    pub givens_max: usize,
    pub train_limit: usize,
    pub data_k: usize,
    pub pretty_model: PrettyModel,
    pub augment: bool,
    pub train_scenes: usize,
    pub valid_scenes: usize,
    pub test_scenes: usize,
    pub babi_dir: Option<PathBuf>,
    pub babi_tasks: Vec<u8>,
    pub sentence_units: usize,
    pub linear_encoder: bool,
    pub separate_question: bool,
    pub no_dropout: bool,
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("task", "sudoku | prettyclevr | agearith | babi"),
    ("seed", "master seed for initialization, data and batches"),
    ("hidden", "hidden width of every MLP and the node state"),
    ("steps", "message passing steps T during training"),
    ("test_steps", "steps T' used by evaluation"),
    ("relu_layers", "ReLU layers per MLP before the linear output layer"),
    ("node_function", "mlp | lstm; must match the task model"),
    ("loss_mode", "every-step | last-step"),
    ("learning_rate", "Adam learning rate (constant)"),
    ("beta1", "Adam first moment decay"),
    ("beta2", "Adam second moment decay"),
    ("epsilon", "Adam epsilon"),
    ("l2", "L2 penalty coefficient"),
    ("l2_scope", "weights | all"),
    ("batch_size", "graphs per update"),
    ("updates", "total gradient updates"),
    ("eval_every", "updates between evaluations"),
    ("checkpoint_every", "updates between checkpoints"),
    ("eval_size", "examples per periodic evaluation (0 = whole split)"),
    ("eval_split", "train | valid | test"),
    ("keep_best", "also keep best.ckpt by evaluation metric"),
    ("train_path", "training data file (empty = generate)"),
    ("valid_path", "validation data file (empty = generate)"),
    ("test_path", "test data file (empty = generate)"),
    ("readout_keep", "dropout keep probability in the readout"),
    ("embed", "sudoku: embedding width"),
    ("drop_position", "sudoku: zero the row and column embeddings"),
    ("givens_min", "sudoku: fewest givens kept in the training set"),
    ("givens_max", "sudoku: most givens kept in the training set"),
    ("train_limit", "sudoku: keep N evenly strided training puzzles (0 = all)"),
    ("data_k", "sudoku: puzzles per givens count when generating from the bundled pool"),
    ("pretty_model", "prettyclevr: rrn | rn | mlp"),
    ("augment", "prettyclevr: random rotation and scaling of training scenes"),
    ("train_scenes", "prettyclevr: generated training scenes (128 questions each)"),
    ("valid_scenes", "prettyclevr: generated validation scenes"),
    ("test_scenes", "prettyclevr: generated test scenes"),
    ("babi_dir", "babi: directory holding the qaN_*_{train,valid,test}.txt files"),
    ("babi_tasks", "babi: comma separated task ids, or `all`"),
    ("sentence_units", "babi: width of the sentence LSTMs"),
    ("linear_encoder", "babi ablation: linear fact encoder"),
    ("separate_question", "babi ablation: question encoding left out of node features"),
    ("no_dropout", "babi ablation: no readout dropout"),
];

/// Named starting points accepted by `preset = NAME`.
pub const PRESETS: &[&str] = &[
    "sudoku-paper",
    "sudoku-desk",
    "pretty-paper",
    "pretty-rn",
    "pretty-mlp",
    "age-paper",
    "babi-paper",
];

impl TrainConfig {
    /// Published settings for each task.
    pub fn default_for(task: TaskKind) -> Self {
        let base = TrainConfig {
            task,
            seed: 0,
            hidden: 128,
            steps: 8,
            test_steps: 8,
            relu_layers: 3,
            node_function: task.node_function(),
            loss_mode: LossMode::EveryStep,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-5,
            l2_scope: L2Scope::WeightMatrices,
            batch_size: 512,
            updates: 5_000_000,
            eval_every: 1_000,
            checkpoint_every: 1_000,
            eval_size: 1_000,
            eval_split: Split::Valid,
            keep_best: false,
            train_path: None,
            valid_path: None,
            test_path: None,
            readout_keep: 0.5,
            embed: 16,
            drop_position: false,
            givens_min: 17,
            givens_max: 34,
            train_limit: 0,
            data_k: 100,
            pretty_model: PrettyModel::Rrn,
            augment: true,
            train_scenes: 100_000,
            valid_scenes: 1_000,
            test_scenes: 1_000,
            babi_dir: None,
            babi_tasks: (1..=20).collect(),
            sentence_units: 32,
            linear_encoder: false,
            separate_question: false,
            no_dropout: false,
        };
        match task {
            TaskKind::Sudoku => TrainConfig {
                hidden: 96,
                steps: 32,
                test_steps: 64,
                l2: 1e-4,
                batch_size: 256,
                updates: 300_000,
                ..base
            },
            TaskKind::PrettyClevr => TrainConfig {
                steps: 4,
                test_steps: 4,
                relu_layers: 1,
                learning_rate: 1e-4,
                l2: 0.0,
                batch_size: 128,
                updates: 10_000_000,
                ..base
            },
            TaskKind::AgeArith => base,
            TaskKind::Babi => TrainConfig {
                steps: 3,
                test_steps: 3,
                ..base
            },
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        let c = match name {
            "sudoku-paper" => TrainConfig::default_for(TaskKind::Sudoku),
            "sudoku-desk" => TrainConfig {
                hidden: 32,
                steps: 8,
                test_steps: 8,
                batch_size: 32,
                updates: 20_000,
                eval_every: 1_000,
                eval_size: 500,
                ..TrainConfig::default_for(TaskKind::Sudoku)
            },
            "pretty-paper" => TrainConfig::default_for(TaskKind::PrettyClevr),
            "pretty-rn" => TrainConfig {
                steps: 1,
                test_steps: 1,
                pretty_model: PrettyModel::Rn,
                ..TrainConfig::default_for(TaskKind::PrettyClevr)
            },
            "pretty-mlp" => TrainConfig {
                pretty_model: PrettyModel::Mlp,
                ..TrainConfig::default_for(TaskKind::PrettyClevr)
            },
            "age-paper" => TrainConfig::default_for(TaskKind::AgeArith),
            "babi-paper" => TrainConfig::default_for(TaskKind::Babi),
            _ => return Err(Error::config(format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")))),
        };
        Ok(c)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            l2: self.l2,
            l2_scope: self.l2_scope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.node_function != self.task.node_function() {
            return fail(format!(
                "node_function {} is not available for task {}; its model uses {}",
                node_function_name(self.node_function),
                self.task,
                node_function_name(self.task.node_function())
            ));
        }
        for (key, v) in [
            ("hidden", self.hidden),
            ("steps", self.steps),
            ("test_steps", self.test_steps),
            ("batch_size", self.batch_size),
            ("embed", self.embed),
            ("sentence_units", self.sentence_units),
            ("data_k", self.data_k),
        ] {
            if v == 0 {
                return fail(format!("{key} must be positive"));
            }
        }
        if self.relu_layers == 0 {
            return fail("relu_layers must be at least 1".into());
        }
        if self.eval_every == 0 || self.checkpoint_every == 0 {
            return fail("eval_every and checkpoint_every must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) || !(self.l2 >= 0.0) {
            return fail("epsilon must be positive and l2 non-negative".into());
        }
        if !(self.readout_keep > 0.0 && self.readout_keep <= 1.0) {
            return fail("readout_keep must lie in (0, 1]".into());
        }
        if self.givens_min > self.givens_max || self.givens_max > 81 {
            return fail("need givens_min <= givens_max <= 81".into());
        }
        if self.babi_tasks.is_empty() || self.babi_tasks.iter().any(|t| !(1..=20).contains(t)) {
            return fail("babi_tasks must name tasks in 1..=20".into());
        }
        if self.task == TaskKind::PrettyClevr && self.pretty_model == PrettyModel::Rn && self.steps != 1 {
            return fail("pretty_model rn needs steps = 1".into());
        }
        if self.task == TaskKind::PrettyClevr && self.train_scenes == 0 && self.train_path.is_none() {
            return fail("train_scenes must be positive".into());
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match key {
            "task" => self.task.to_string(),
            "seed" => self.seed.to_string(),
            "hidden" => self.hidden.to_string(),
            "steps" => self.steps.to_string(),
            "test_steps" => self.test_steps.to_string(),
            "relu_layers" => self.relu_layers.to_string(),
            "node_function" => node_function_name(self.node_function).into(),
            "loss_mode" => match self.loss_mode {
                LossMode::EveryStep => "every-step".into(),
                LossMode::LastStep => "last-step".into(),
            },
            "learning_rate" => format!("{:?}", self.learning_rate),
            "beta1" => format!("{:?}", self.beta1),
            "beta2" => format!("{:?}", self.beta2),
            "epsilon" => format!("{:?}", self.epsilon),
            "l2" => format!("{:?}", self.l2),
            "l2_scope" => match self.l2_scope {
                L2Scope::WeightMatrices => "weights".into(),
                L2Scope::All => "all".into(),
            },
            "batch_size" => self.batch_size.to_string(),
            "updates" => self.updates.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "eval_size" => self.eval_size.to_string(),
            "eval_split" => self.eval_split.to_string(),
            "keep_best" => self.keep_best.to_string(),
            "train_path" => path(&self.train_path),
            "valid_path" => path(&self.valid_path),
            "test_path" => path(&self.test_path),
            "readout_keep" => format!("{:?}", self.readout_keep),
            "embed" => self.embed.to_string(),
            "drop_position" => self.drop_position.to_string(),
            "givens_min" => self.givens_min.to_string(),
            "givens_max" => self.givens_max.to_string(),
            "train_limit" => self.train_limit.to_string(),
            "data_k" => self.data_k.to_string(),
            "pretty_model" => match self.pretty_model {
                PrettyModel::Rrn => "rrn".into(),
                PrettyModel::Rn => "rn".into(),
                PrettyModel::Mlp => "mlp".into(),
            },
            "augment" => self.augment.to_string(),
            "train_scenes" => self.train_scenes.to_string(),
            "valid_scenes" => self.valid_scenes.to_string(),
            "test_scenes" => self.test_scenes.to_string(),
            "babi_dir" => path(&self.babi_dir),
            "babi_tasks" => self.babi_tasks.iter().map(u8::to_string).collect::<Vec<_>>().join(","),
            "sentence_units" => self.sentence_units.to_string(),
            "linear_encoder" => self.linear_encoder.to_string(),
            "separate_question" => self.separate_question.to_string(),
            "no_dropout" => self.no_dropout.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "task" => self.task = v.parse()?,
            "seed" => self.seed = num(key, v)?,
            "hidden" => self.hidden = num(key, v)?,
            "steps" => self.steps = num(key, v)?,
            "test_steps" => self.test_steps = num(key, v)?,
            "relu_layers" => self.relu_layers = num(key, v)?,
            "node_function" => {
                self.node_function = match v {
                    "mlp" => NodeFunction::Mlp,
                    "lstm" => NodeFunction::Lstm,
                    _ => return Err(bad(key, v)),
                }
            }
            "loss_mode" => {
                self.loss_mode = match v {
                    "every-step" => LossMode::EveryStep,
                    "last-step" => LossMode::LastStep,
                    _ => return Err(bad(key, v)),
                }
            }
            "learning_rate" => self.learning_rate = num(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = num(key, v)?,
            "epsilon" => self.epsilon = num(key, v)?,
            "l2" => self.l2 = num(key, v)?,
            "l2_scope" => {
                self.l2_scope = match v {
                    "weights" => L2Scope::WeightMatrices,
                    "all" => L2Scope::All,
                    _ => return Err(bad(key, v)),
                }
            }
            "batch_size" => self.batch_size = num(key, v)?,
            "updates" => self.updates = num(key, v)?,
            "eval_every" => self.eval_every = num(key, v)?,
            "checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "eval_size" => self.eval_size = num(key, v)?,
            "eval_split" => self.eval_split = v.parse()?,
            "keep_best" => self.keep_best = flag(key, v)?,
            "train_path" => self.train_path = opt_path(v),
            "valid_path" => self.valid_path = opt_path(v),
            "test_path" => self.test_path = opt_path(v),
            "readout_keep" => self.readout_keep = num(key, v)?,
            "embed" => self.embed = num(key, v)?,
            "drop_position" => self.drop_position = flag(key, v)?,
            "givens_min" => self.givens_min = num(key, v)?,
            "givens_max" => self.givens_max = num(key, v)?,
            "train_limit" => self.train_limit = num(key, v)?,
            "data_k" => self.data_k = num(key, v)?,
            "pretty_model" => {
                self.pretty_model = match v {
                    "rrn" => PrettyModel::Rrn,
                    "rn" => PrettyModel::Rn,
                    "mlp" => PrettyModel::Mlp,
                    _ => return Err(bad(key, v)),
                }
            }
            "augment" => self.augment = flag(key, v)?,
            "train_scenes" => self.train_scenes = num(key, v)?,
            "valid_scenes" => self.valid_scenes = num(key, v)?,
            "test_scenes" => self.test_scenes = num(key, v)?,
            "babi_dir" => self.babi_dir = opt_path(v),
            "babi_tasks" => {
                self.babi_tasks = if v == "all" {
                    (1..=20).collect()
                } else {
                    v.split(',').map(|t| num(key, t.trim())).collect::<Result<_>>()?
                }
            }
            "sentence_units" => self.sentence_units = num(key, v)?,
            "linear_encoder" => self.linear_encoder = flag(key, v)?,
            "separate_question" => self.separate_question = flag(key, v)?,
            "no_dropout" => self.no_dropout = flag(key, v)?,
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key in registry order.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# rrn training configuration\n");
        for (key, _) in KEYS {
            let value = self.get(key).expect("registry keys are gettable");
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim();
            if key != "preset" && !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(Error::config(format!("line {}: unknown key `{key}`", n + 1)));
            }
            if pairs.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        let mut config = match (pairs.remove("preset"), pairs.get("task")) {
            (Some(p), _) => TrainConfig::preset(&p)?,
            (None, Some(t)) => TrainConfig::default_for(t.parse()?),
            (None, None) => return Err(Error::config("config needs a `task` or `preset` key")),
        };
        if let Some(t) = pairs.remove("task") {
            let task: TaskKind = t.parse()?;
            if task != config.task {
                return Err(Error::config(format!("task {task} conflicts with preset task {}", config.task)));
            }
        }
        for (k, v) in &pairs {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        TrainConfig::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        error::write(path, self.to_text())
    }
}

fn node_function_name(f: NodeFunction) -> &'static str {
    match f {
        NodeFunction::Mlp => "mlp",
        NodeFunction::Lstm => "lstm",
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::config(format!("invalid value `{value}` for `{key}`"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_round_trips() {
        for name in PRESETS {
            let c = TrainConfig::preset(name).unwrap();
            c.validate().unwrap();
            assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c, "{name}");
        }
    }

    #[test]
    fn registry_covers_every_key() {
        let c = TrainConfig::default_for(TaskKind::Babi);
        for (key, _) in KEYS {
            let mut d = c.clone();
            d.set(key, &c.get(key).unwrap()).unwrap();
            assert_eq!(d, c, "{key}");
        }
        assert!(c.get("nope").is_none());
    }

    #[test]
    fn comments_overrides_and_errors() {
        let c = TrainConfig::parse("preset = sudoku-desk\nbogus = 1\n");
        assert!(matches!(c, Err(Error::Config(_))));
        let c = TrainConfig::parse("# desk run\npreset = sudoku-desk\n\nseed = 7 # trailing\nloss_mode = last-step\n").unwrap();
        assert_eq!((c.seed, c.hidden, c.loss_mode), (7, 32, LossMode::LastStep));
        assert!(TrainConfig::parse("seed = 1\n").is_err());
        assert!(TrainConfig::parse("task = sudoku\nseed = 1\nseed = 2\n").is_err());
        assert!(TrainConfig::parse("task = sudoku\nnode_function = mlp\n").is_err());
        assert!(TrainConfig::parse("task = babi\nreadout_keep = 0\n").is_err());
        assert!(TrainConfig::parse("task = babi\nbabi_tasks = 3, 21\n").is_err());
    }

    #[test]
    fn published_settings() {
        let s = TrainConfig::preset("sudoku-paper").unwrap();
        assert_eq!((s.hidden, s.steps, s.test_steps, s.batch_size, s.updates), (96, 32, 64, 256, 300_000));
        assert_eq!((s.learning_rate, s.l2), (2e-4, 1e-4));
        let b = TrainConfig::preset("babi-paper").unwrap();
        assert_eq!((b.batch_size, b.learning_rate, b.l2, b.updates, b.steps), (512, 2e-4, 1e-5, 5_000_000, 3));
        let p = TrainConfig::preset("pretty-paper").unwrap();
        assert_eq!((p.batch_size, p.learning_rate, p.steps, p.relu_layers), (128, 1e-4, 4, 1));
    }
}
