//! Dataset files.
//!
//! * Sudoku: `puzzle,solution` per line, two 81-character digit strings
//!   with `0` for blanks. A line with only a puzzle (Royle's format) is
//!   accepted by [`read_sudoku_seeds`], which solves it.
//! * Pretty-CLEVR: one question per line, see [`rrn_core::pretty::record_to_line`].
//! * Age arithmetic: `prufer ages anchor question` per line, e.g.
//!   `123456 20,24,18,30,31,32,33,34 0 2`.
//! * bAbI: the standard task files, read from a directory.

use std::fs;
use std::path::{Path, PathBuf};

use rrn_core::age::{self, AgeInstance, PERSONS, PRUFER_LEN};
use rrn_core::babi::{self, RawSample};
use rrn_core::pretty::{self, QaRecord, Sample, Scene};
use rrn_core::sudoku::{self, Example, Puzzle, Solution, SolveOutcome};

use crate::config::Split;
use crate::error::{self, Error, Result};

/// 200 17-given puzzles with solutions, shipped for offline use.
pub const SUDOKU17_SAMPLE: &str = include_str!("../data/sudoku17_sample.csv");
/// 50 task-1 style questions in bAbI layout.
pub const BABI_SAMPLE: &str = include_str!("../data/babi_sample_qa1.txt");

fn parse_error(source: &Path, line: usize, message: impl Into<String>) -> Error {
    rrn_core::Error::Parse {
        location: format!("{}:{line}", source.display()),
        message: message.into(),
    }
    .into()
}

pub fn parse_sudoku(text: &str, source: &Path) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("quizzes") {
            continue;
        }
        let (p, s) = line
            .split_once(',')
            .ok_or_else(|| parse_error(source, n + 1, "expected `puzzle,solution`"))?;
        let p = Puzzle::parse(p.trim()).map_err(|e| parse_error(source, n + 1, e.to_string()))?;
        let s = Solution::parse(s.trim()).map_err(|e| parse_error(source, n + 1, e.to_string()))?;
        out.push((p, s));
    }
    Ok(out)
}

pub fn read_sudoku(path: &Path) -> Result<Vec<Example>> {
    parse_sudoku(&error::read_to_string(path)?, path)
}

pub fn sudoku_lines(examples: &[Example]) -> String {
    let mut out = String::with_capacity(examples.len() * 164);
    for (p, s) in examples {
        out.push_str(&format!("{p},{s}\n"));
    }
    out
}

pub fn write_sudoku(path: &Path, examples: &[Example]) -> Result<()> {
    error::write(path, sudoku_lines(examples))
}

/// The bundled 17-given pool.
pub fn bundled_sudoku() -> Vec<Example> {
    parse_sudoku(SUDOKU17_SAMPLE, Path::new("sudoku17_sample.csv")).expect("bundled sample parses")
}

/// Seed puzzles from `puzzle,solution` lines or bare puzzle lines; bare
/// puzzles are solved and must have a unique solution.
pub fn read_sudoku_seeds(path: &Path) -> Result<Vec<Example>> {
    let text = error::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.contains(',') {
            out.extend(parse_sudoku(line, path).map_err(|_| parse_error(path, n + 1, "bad record"))?);
            continue;
        }
        let p = Puzzle::parse(line).map_err(|e| parse_error(path, n + 1, e.to_string()))?;
        match sudoku::solve(&p) {
            SolveOutcome::Solved(s) => out.push((p, s)),
            other => return Err(parse_error(path, n + 1, format!("seed puzzle is not uniquely solvable: {other:?}"))),
        }
    }
    Ok(out)
}

pub fn pretty_lines(scenes: &[(u64, Scene)]) -> String {
    let mut out = String::new();
    for (id, scene) in scenes {
        for r in pretty::emit_questions(*id, scene) {
            out.push_str(&pretty::record_to_line(scene, &r));
            out.push('\n');
        }
    }
    out
}

pub fn read_pretty(path: &Path) -> Result<Vec<(Scene, QaRecord)>> {
    let text = error::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| pretty::parse_line(l).map_err(|e| parse_error(path, n + 1, e.to_string())))
        .collect()
}

/// Questions of a Pretty-CLEVR file as training samples.
pub fn read_pretty_samples(path: &Path) -> Result<Vec<Sample>> {
    Ok(read_pretty(path)?
        .into_iter()
        .map(|(scene, r)| Sample {
            scene,
            question: r.question,
            label: r.question.head_index(r.answer),
        })
        .collect())
}

pub fn age_line(inst: &AgeInstance) -> String {
    let prufer = age::prufer_encode(&inst.tree).expect("instances hold trees");
    let seq: String = prufer.iter().map(|d| char::from(b'0' + d)).collect();
    let ages: Vec<String> = inst.ages.iter().map(u8::to_string).collect();
    format!("{seq} {} {} {}", ages.join(","), inst.anchor, inst.question)
}

pub fn parse_age_line(line: &str) -> std::result::Result<AgeInstance, String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 4 {
        return Err("expected `prufer ages anchor question`".into());
    }
    let digits: Vec<u8> = f[0].bytes().map(|b| b.wrapping_sub(b'0')).collect();
    if digits.len() != PRUFER_LEN || digits.iter().any(|&d| usize::from(d) >= PERSONS) {
        return Err(format!("bad Prüfer sequence `{}`", f[0]));
    }
    let ages: Vec<u8> = f[1]
        .split(',')
        .map(|a| a.parse::<u8>().ok().filter(|&a| usize::from(a) < age::AGES))
        .collect::<Option<_>>()
        .ok_or("bad ages")?;
    if ages.len() != PERSONS {
        return Err("expected 8 ages".into());
    }
    let person = |s: &str| s.parse::<u8>().ok().filter(|&p| usize::from(p) < PERSONS).ok_or("bad person");
    let (anchor, question) = (person(f[2])?, person(f[3])?);
    let tree = age::prufer_decode(&digits.try_into().expect("length checked"));
    let ages: [u8; PERSONS] = ages.try_into().expect("length checked");
    if tree.edges.iter().any(|&(a, b)| ages[usize::from(a)] == ages[usize::from(b)]) {
        return Err("tree edge joins equal ages".into());
    }
    Ok(age::instance_from(&tree, ages, anchor, question))
}

pub fn read_age(path: &Path) -> Result<Vec<AgeInstance>> {
    let text = error::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_age_line(l).map_err(|e| parse_error(path, n + 1, e)))
        .collect()
}

/// Task files `qa{N}_*{split}.txt` in `dir`, sorted by task.
pub fn babi_files(dir: &Path, tasks: &[u8], split: Split) -> Result<Vec<(u8, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    names.sort();
    let suffix = format!("_{split}.txt");
    let mut out = Vec::new();
    for &t in tasks {
        let prefix = format!("qa{t}_");
        let found = names.iter().find(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&prefix) && n.ends_with(&suffix))
        });
        match found {
            Some(p) => out.push((t, p.clone())),
            None => return Err(Error::runtime(format!("no qa{t} {split} file in {}", dir.display()))),
        }
    }
    Ok(out)
}

pub fn read_babi_dir(dir: &Path, tasks: &[u8], split: Split) -> Result<Vec<RawSample>> {
    let mut out = Vec::new();
    for (t, path) in babi_files(dir, tasks, split)? {
        let text = error::read_to_string(&path)?;
        out.extend(babi::parse_babi(&text, t, &path.display().to_string())?);
    }
    Ok(out)
}

pub fn read_babi_file(path: &Path, task: u8) -> Result<Vec<RawSample>> {
    let text = error::read_to_string(path)?;
    Ok(babi::parse_babi(&text, task, &path.display().to_string())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rrn_core::rng;

    #[test]
    fn bundled_pool_round_trips() {
        let pool = bundled_sudoku();
        assert_eq!(pool.len(), 200);
        assert_eq!(parse_sudoku(&sudoku_lines(&pool), Path::new("x")).unwrap(), pool);
    }

    #[test]
    fn sudoku_errors_carry_the_line() {
        let err = parse_sudoku("\n12,34\n", Path::new("f.csv")).unwrap_err();
        assert!(err.to_string().contains("f.csv:2"), "{err}");
    }

    #[test]
    fn age_lines_round_trip() {
        let mut r = rng::seeded(4);
        for k in 0..200 {
            let tree = age::prufer_decode(&age::prufer_at(k * 1237));
            let inst = age::sample_instance(&tree, &mut r);
            assert_eq!(parse_age_line(&age_line(&inst)).unwrap(), inst);
        }
        assert!(parse_age_line("123456 1,2,3 0 0").is_err());
        assert!(parse_age_line("923456 1,2,3,4,5,6,7,8 0 0").is_err());
    }
}
