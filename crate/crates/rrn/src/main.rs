use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng as _;
use rrn_core::age;
use rrn_core::bp::{self, BpConfig, Factors, Schedule};
use rrn_core::pretty;
use rrn_core::rng;
use rrn_core::sudoku::{self, DatasetSpec, Example, Puzzle, SolveOutcome};
use serde::Serialize;

use rrn::check::{self, CheckSettings, CheckTarget};
use rrn::config::{Split, TrainConfig};
use rrn::error::{Error, Result};
use rrn::metrics::JsonlWriter;
use rrn::train::{self, Experiment};
use rrn::{data, fetch};

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "rrn", version, about = "Recurrent relational networks: datasets, baselines, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the Sudoku train/valid/test sets from a 17-given seed pool.
    GenSudoku(GenSudoku),
    /// Solve puzzles with constraint propagation and search.
    Solve(Solve),
    /// Loopy belief propagation baseline on Sudoku.
    BpBaseline(BpBaseline),
    /// Generate Pretty-CLEVR scenes and questions.
    GenPretty(GenPretty),
    /// Enumerate age-arithmetic trees and sample instances.
    GenAge(GenAge),
    /// Download the bAbI corpus.
    FetchBabi(FetchBabi),
    /// Train a model from a config file.
    Train(TrainArgs),
    /// Evaluate a checkpoint, printing accuracy per step.
    Eval(EvalArgs),
    /// Per-step Sudoku digit probabilities as JSON lines.
    DumpSteps(DumpSteps),
    /// Compare analytic gradients with central differences.
    Gradcheck(Gradcheck),
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecKind {
    Paper,
    Scaled,
}

#[derive(Args)]
struct GenSudoku {
    #[arg(long, value_enum, default_value = "scaled")]
    spec: SpecKind,
    /// Puzzles per givens count for the scaled spec.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Seed puzzles (`puzzle,solution` or bare puzzle lines); defaults to the bundled sample.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Download the 49,151-puzzle collection into the output directory first.
    #[arg(long)]
    fetch: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Solve {
    /// A single 81-character puzzle.
    #[arg(long, conflicts_with = "input")]
    puzzle: Option<String>,
    /// File of puzzles, one per line (a `,solution` suffix is ignored).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Parallel,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum FactorsArg {
    Pairwise,
    Units,
}

#[derive(Args)]
struct BpBaseline {
    #[arg(long, value_enum, default_value = "parallel")]
    schedule: ScheduleArg,
    #[arg(long, value_enum, default_value = "pairwise")]
    factors: FactorsArg,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    #[arg(long, default_value_t = 1000)]
    max_sweeps: usize,
    /// `puzzle,solution` file; defaults to the bundled sample.
    #[arg(long)]
    puzzles: Option<PathBuf>,
    /// Only the first N puzzles.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; results keep input order.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GenPretty {
    #[arg(long, default_value_t = 1000)]
    train: usize,
    #[arg(long, default_value_t = 100)]
    valid: usize,
    #[arg(long, default_value_t = 100)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenAge {
    /// Instances per split.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FetchBabi {
    #[arg(long)]
    out: PathBuf,
    /// Expected SHA-256 of the archive.
    #[arg(long)]
    sha256: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Stop after this many total updates (the run can be resumed).
    #[arg(long)]
    stop_after: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Steps T' (defaults to the config's test_steps).
    #[arg(long)]
    steps: Option<usize>,
    /// Evaluate at most N examples (0 = all).
    #[arg(long, default_value_t = 0)]
    limit: usize,
    /// Also write the table and a JSON report into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpSteps {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    puzzle: String,
    #[arg(long)]
    steps: Option<usize>,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckTask {
    Toy,
    Sudoku,
    Prettyclevr,
    Agearith,
    Babi,
}

#[derive(Args)]
struct Gradcheck {
    #[arg(long, value_enum)]
    task: CheckTask,
    /// Sudoku cells in the checked graph (81 = full model).
    #[arg(long, default_value_t = 81)]
    nodes: usize,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    steps: usize,
    #[arg(long, default_value_t = 3)]
    relu_layers: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenSudoku(a) => gen_sudoku(a),
        Command::Solve(a) => solve(a),
        Command::BpBaseline(a) => bp_baseline(a),
        Command::GenPretty(a) => gen_pretty(a),
        Command::GenAge(a) => gen_age(a),
        Command::FetchBabi(a) => {
            let files = fetch::fetch_babi(&a.out, a.sha256.as_deref())?;
            println!("extracted {} files into {}", files.len(), a.out.join("en-valid-10k").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Train(a) => {
            let mut config = TrainConfig::load(&a.config)?;
            if let Some(s) = a.seed {
                config.seed = s;
            }
            let summary = train::train(&config, &a.out, a.stop_after)?;
            match &summary.last {
                Some(r) => println!("update {}: {} = {:.4}", r.update, r.metric_name, r.metric),
                None => println!("stopped at update {}", summary.updates),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval(a) => eval(a),
        Command::DumpSteps(a) => dump_steps(a),
        Command::Gradcheck(a) => {
            let target = match a.task {
                CheckTask::Toy => CheckTarget::Toy,
                CheckTask::Sudoku => CheckTarget::Sudoku { nodes: a.nodes },
                CheckTask::Prettyclevr => CheckTarget::PrettyClevr,
                CheckTask::Agearith => CheckTarget::AgeArith,
                CheckTask::Babi => CheckTarget::Babi,
            };
            let settings = CheckSettings {
                hidden: a.hidden,
                steps: a.steps,
                relu_layers: a.relu_layers,
                seed: a.seed,
                tolerance: a.tolerance,
            };
            let report = check::run(target, &settings)?;
            println!(
                "max relative error {:.3e} over {} coordinates ({} skipped at kinks), tolerance {:.0e}: {}",
                report.max_relative_error,
                report.checked,
                report.skipped_kinks,
                report.tolerance,
                if report.passed { "pass" } else { "FAIL" }
            );
            if let (Some((name, i)), Some((analytic, numeric))) = (&report.worst, report.worst_values) {
                println!("worst coordinate: {name}[{i}], analytic {analytic:.6e}, numeric {numeric:.6e}");
            }
            Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn gen_sudoku(a: GenSudoku) -> Result<ExitCode> {
    create_dir(&a.out)?;
    let seeds = if a.fetch {
        let raw = fetch::fetch(fetch::SUDOKU17_URL, &a.out.join("sudoku17.txt"), None)?;
        data::read_sudoku_seeds(&raw)?
    } else {
        match &a.seeds {
            Some(p) => data::read_sudoku_seeds(p)?,
            None => data::bundled_sudoku(),
        }
    };
    let spec = match a.spec {
        SpecKind::Paper => DatasetSpec::paper(a.seed),
        SpecKind::Scaled => DatasetSpec::scaled(a.k, seeds.len(), a.seed),
    };
    let needed: usize = spec.pool_sizes.iter().sum();
    if needed > seeds.len() {
        return Err(Error::config(format!(
            "spec needs {needed} seed puzzles but {} were given; use --fetch, --seeds or --spec scaled",
            seeds.len()
        )));
    }
    let sets = sudoku::generate_dataset(&spec, &seeds)?;
    for (name, set) in [("train", &sets.train), ("valid", &sets.valid), ("test", &sets.test)] {
        if let Some((p, _)) = set.iter().find(|(p, s)| !sudoku::validate_solution(s, p)) {
            return Err(Error::runtime(format!("generated record fails validation: {p}")));
        }
        data::write_sudoku(&a.out.join(format!("{name}.csv")), set)?;
        let hist = sudoku::givens_histogram(set);
        let counts: Vec<String> = hist.values().map(usize::to_string).collect();
        println!("{name}: {} records, givens {}..{} counts [{}]", set.len(),
            hist.keys().next().unwrap_or(&0), hist.keys().last().unwrap_or(&0), counts.join(" "));
    }
    Ok(ExitCode::SUCCESS)
}

fn solve(a: Solve) -> Result<ExitCode> {
    let puzzles: Vec<String> = match (&a.puzzle, &a.input) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .lines()
            .map(|l| l.split(',').next().unwrap_or("").trim().to_string())
            .filter(|l| !l.is_empty())
            .collect(),
        (None, None) => return Err(Error::config("give --puzzle or --input")),
    };
    let mut any_failed = false;
    for text in puzzles {
        let p = Puzzle::parse(&text)?;
        match sudoku::solve(&p) {
            SolveOutcome::Solved(s) => println!("{s}"),
            other => {
                any_failed = true;
                println!("{other:?}");
            }
        }
    }
    Ok(if any_failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct BpRecord {
    puzzle: usize,
    givens: usize,
    solved: bool,
    sweeps: usize,
    converged: bool,
    contradiction: bool,
}

fn bp_baseline(a: BpBaseline) -> Result<ExitCode> {
    let mut puzzles: Vec<Example> = match &a.puzzles {
        Some(p) => data::read_sudoku(p)?,
        None => data::bundled_sudoku(),
    };
    if let Some(n) = a.limit {
        puzzles.truncate(n);
    }
    let config = BpConfig {
        factors: match a.factors {
            FactorsArg::Pairwise => Factors::Pairwise,
            FactorsArg::Units => Factors::Units,
        },
        schedule: match a.schedule {
            ScheduleArg::Parallel => Schedule::Parallel,
            ScheduleArg::Random => Schedule::Random,
        },
        damping: a.damping,
        max_sweeps: a.max_sweeps,
        ..BpConfig::default()
    };
    config.validate().map_err(|e| Error::config(e.to_string()))?;
    let records = run_bp(&puzzles, &config, a.seed, a.workers.max(1))?;
    if let Some(path) = &a.report {
        let mut w = JsonlWriter::append(path)?;
        for r in &records {
            w.write(r)?;
        }
    }
    let mut by_givens: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in &records {
        let e = by_givens.entry(r.givens).or_default();
        e.0 += 1;
        e.1 += usize::from(r.solved);
    }
    for (g, (n, s)) in &by_givens {
        println!("givens {g}: {s}/{n} solved ({:.1}%)", 100.0 * *s as f64 / *n as f64);
    }
    let solved = records.iter().filter(|r| r.solved).count();
    let converged = records.iter().filter(|r| r.converged).count();
    println!("total: {solved}/{} solved, {converged} converged", records.len());
    Ok(ExitCode::SUCCESS)
}

/// Puzzle `i` uses the random stream `(seed, i)`, so results do not depend
/// on the worker count.
fn run_bp(puzzles: &[Example], config: &BpConfig, seed: u64, workers: usize) -> Result<Vec<BpRecord>> {
    let one = |i: usize| -> Result<BpRecord> {
        let p = &puzzles[i].0;
        let (res, _, ok) = bp::solve_puzzle(p, config, &mut rng::stream(seed, i as u64))?;
        Ok(BpRecord {
            puzzle: i,
            givens: p.givens(),
            solved: ok,
            sweeps: res.sweeps,
            converged: res.converged,
            contradiction: res.contradiction,
        })
    };
    let chunk = puzzles.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<BpRecord>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..puzzles.len())
            .step_by(chunk)
            .map(|start| {
                let one = &one;
                scope.spawn(move || (start..(start + chunk).min(puzzles.len())).map(one).collect())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(puzzles.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn gen_pretty(a: GenPretty) -> Result<ExitCode> {
    create_dir(&a.out)?;
    let splits = pretty::generate_splits(a.train, a.valid, a.test, a.seed);
    for (name, set) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        let path = a.out.join(format!("{name}.txt"));
        std::fs::write(&path, data::pretty_lines(set)).map_err(|e| Error::io(&path, e))?;
        println!("{name}: {} scenes, {} questions", set.len(), set.len() * pretty::QUESTIONS_PER_SCENE);
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_age(a: GenAge) -> Result<ExitCode> {
    create_dir(&a.out)?;
    let trees = age::enumerate_trees();
    let (train, test) = age::split_trees(&mut rng::seeded(a.seed));
    let mut hops = [0usize; age::PERSONS];
    let mut r = rng::stream(a.seed, 1);
    for t in &trees {
        hops[usize::from(age::sample_instance(t, &mut r).hops)] += 1;
    }
    println!("{} trees; {} train, {} test", trees.len(), train.len(), test.len());
    println!("hop histogram over one instance per tree: {hops:?}");
    for (name, ids, stream) in [("train", &train, 2), ("valid", &test, 3), ("test", &test, 4)] {
        let mut r = rng::stream(a.seed, stream);
        let mut text = String::new();
        for _ in 0..a.count {
            let t = ids[r.gen_range(0..ids.len())] as usize;
            let inst = age::sample_instance(&age::prufer_decode(&age::prufer_at(t)), &mut r);
            text.push_str(&data::age_line(&inst));
            text.push('\n');
        }
        let path = a.out.join(format!("{name}.txt"));
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let ids = |v: &[u32]| v.iter().map(|i| format!("{i}\n")).collect::<String>();
    for (name, v) in [("trees_train.txt", &train), ("trees_test.txt", &test)] {
        let path = a.out.join(name);
        std::fs::write(&path, ids(v)).map_err(|e| Error::io(&path, e))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn restored(config: &Path, seed: Option<u64>, checkpoint: &Path) -> Result<Experiment> {
    let mut config = TrainConfig::load(config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let mut exp = Experiment::new(&config)?;
    train::load_checkpoint(checkpoint, exp.params_mut())?;
    Ok(exp)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let split: Split = a.split.parse()?;
    let exp = restored(&a.config, a.seed, &a.checkpoint)?;
    let steps = a.steps.unwrap_or(exp.config().test_steps);
    let report = exp.evaluate(split, steps, a.limit)?;
    let table = report.to_table();
    print!("{table}");
    println!("{} = {:.4}", report.metric_name(), report.metric());
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join(format!("report_{split}.tsv"));
        std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
        let path = dir.join(format!("report_{split}.json"));
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::runtime(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct StepDump {
    step: usize,
    /// 81 rows of 9 digit probabilities.
    probabilities: Vec<Vec<f64>>,
}

fn dump_steps(a: DumpSteps) -> Result<ExitCode> {
    let exp = restored(&a.config, None, &a.checkpoint)?;
    let model = exp
        .sudoku_model()
        .ok_or_else(|| Error::config("dump-steps needs a sudoku config"))?;
    let puzzle = Puzzle::parse(a.puzzle.trim())?;
    let steps = a.steps.unwrap_or(exp.config().test_steps);
    let tables = model.dump_steps(exp.params(), &[puzzle], steps)?;
    let mut text = String::new();
    for (step, table) in tables.iter().enumerate() {
        let probabilities = table.chunks(9).map(<[f64]>::to_vec).collect();
        let line = serde_json::to_string(&StepDump { step, probabilities }).map_err(|e| Error::runtime(e.to_string()))?;
        text.push_str(&line);
        text.push('\n');
    }
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("stdout", e))?,
    }
    Ok(ExitCode::SUCCESS)
}
