use std::path::Path;
use std::process::{Command, Output};

fn rrn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrn")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = "\
# small Sudoku run
preset = sudoku-desk
seed = 3
hidden = 8
embed = 8
steps = 2
test_steps = 2
relu_layers = 1
batch_size = 4
updates = 4
eval_every = 2
checkpoint_every = 2
eval_size = 8
data_k = 1
";

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&rrn(&["--help"])), 0);
    assert_eq!(code(&rrn(&[])), 2);
    assert_eq!(code(&rrn(&["frobnicate"])), 2);
    let out = rrn(&["solve", "--no-such-flag"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&rrn(&["train", "--config", "missing.cfg", "--out", "unused"])), 2);
}

#[test]
fn bad_config_exits_2_and_runtime_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "task = sudoku\nlearning_rte = 0.1\n").unwrap();
    assert_eq!(code(&rrn(&["train", "--config", path(&cfg), "--out", path(dir.path())])), 2);
    std::fs::write(&cfg, "task = sudoku\nhidden = many\n").unwrap();
    assert_eq!(code(&rrn(&["train", "--config", path(&cfg), "--out", path(dir.path())])), 2);
    assert_eq!(code(&rrn(&["solve", "--input", path(&dir.path().join("absent.txt"))])), 1);
    let contradictory = format!("11{}", "0".repeat(79));
    assert_eq!(code(&rrn(&["solve", "--puzzle", &contradictory])), 1);
}

#[test]
fn gradcheck_on_nine_cells_passes() {
    let out = rrn(&["gradcheck", "--task", "sudoku", "--nodes", "9"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("max relative error"));
}

#[test]
fn solve_prints_the_solution() {
    let (p, s) = rrn::data::bundled_sudoku()[0];
    let out = rrn(&["solve", "--puzzle", &p.to_string()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), s.to_string());
}

#[test]
fn generators_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = rrn(&["gen-sudoku", "--spec", "paper", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2, "the bundled pool is too small for the full spec");

    let sd = dir.path().join("sudoku");
    assert_eq!(code(&rrn(&["gen-sudoku", "--k", "2", "--seed", "4", "--out", path(&sd)])), 0);
    for split in ["train", "valid", "test"] {
        let records = rrn::data::read_sudoku(&sd.join(format!("{split}.csv"))).unwrap();
        assert_eq!(records.len(), 36);
    }
    let again = dir.path().join("again");
    assert_eq!(code(&rrn(&["gen-sudoku", "--k", "2", "--seed", "4", "--out", path(&again)])), 0);
    assert_eq!(std::fs::read(sd.join("test.csv")).unwrap(), std::fs::read(again.join("test.csv")).unwrap());

    let pd = dir.path().join("pretty");
    let args = ["gen-pretty", "--train", "3", "--valid", "1", "--test", "1", "--out", path(&pd)];
    assert_eq!(code(&rrn(&args)), 0);
    assert_eq!(rrn::data::read_pretty(&pd.join("train.txt")).unwrap().len(), 3 * 128);

    let ad = dir.path().join("age");
    assert_eq!(code(&rrn(&["gen-age", "--count", "5", "--out", path(&ad)])), 0);
    assert_eq!(rrn::data::read_age(&ad.join("test.txt")).unwrap().len(), 5);
}

#[test]
fn bp_baseline_reports_per_puzzle() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bp.jsonl");
    let args = ["bp-baseline", "--factors", "units", "--limit", "3", "--workers", "2", "--report", path(&report)];
    let out = rrn(&args);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("total: "));
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 3);
}

#[test]
fn train_eval_and_dump_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    let run = dir.path().join("run");
    let out = rrn(&["train", "--config", path(&cfg), "--out", path(&run)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ckpt = run.join("checkpoint.ckpt");
    assert!(ckpt.exists() && run.join("metrics.jsonl").exists());

    let report = dir.path().join("report");
    let args = ["eval", "--config", path(&cfg), "--checkpoint", path(&ckpt), "--steps", "3", "--limit", "10", "--out", path(&report)];
    let out = rrn(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("givens\tcount\tstep0\tstep1\tstep2\tstep3\n"));

    let (p, _) = rrn::data::bundled_sudoku()[1];
    let args = ["dump-steps", "--config", path(&cfg), "--checkpoint", path(&ckpt), "--puzzle", &p.to_string()];
    let out = rrn(&args);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).lines().count(), 3);

    let other = dir.path().join("other.cfg");
    std::fs::write(&other, TINY.replace("hidden = 8", "hidden = 12")).unwrap();
    let out = rrn(&["eval", "--config", path(&other), "--checkpoint", path(&ckpt)]);
    assert_eq!(code(&out), 1);
}
