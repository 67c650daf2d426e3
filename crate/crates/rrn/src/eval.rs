//! Accuracy-vs-steps reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::{Split, TaskKind};

/// Correct counts after `t = 0..=steps` steps, broken down by a task key:
/// givens for Sudoku, jumps for Pretty-CLEVR, hops for age arithmetic and
/// the task id for bAbI. Step 0 reads out the encoded features before any
/// message passing; a model without steps has only that column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: String,
    pub split: String,
    pub key_name: String,
    pub steps: usize,
    /// key -> (examples, correct per step)
    pub rows: BTreeMap<usize, (usize, Vec<usize>)>,
}

impl Report {
    pub fn new(task: TaskKind, split: Split, steps: usize, keys: impl IntoIterator<Item = usize>) -> Self {
        let key_name = match task {
            TaskKind::Sudoku => "givens",
            TaskKind::PrettyClevr => "jumps",
            TaskKind::AgeArith => "hops",
            TaskKind::Babi => "task",
        };
        Report {
            task: task.to_string(),
            split: split.to_string(),
            key_name: key_name.into(),
            steps,
            rows: keys.into_iter().map(|k| (k, (0, vec![0; steps + 1]))).collect(),
        }
    }

    /// Counts one example: `correct[t]` for each step column.
    pub fn add(&mut self, key: usize, correct: impl IntoIterator<Item = bool>) {
        let steps = self.steps;
        let row = self.rows.entry(key).or_insert_with(|| (0, vec![0; steps + 1]));
        row.0 += 1;
        for (c, ok) in row.1.iter_mut().zip(correct) {
            *c += usize::from(ok);
        }
    }

    pub fn total(&self) -> usize {
        self.rows.values().map(|r| r.0).sum()
    }

    pub fn accuracy(&self, step: usize) -> f64 {
        let correct: usize = self.rows.values().map(|r| r.1[step]).sum();
        correct as f64 / self.total().max(1) as f64
    }

    pub fn step_accuracy(&self) -> Vec<f64> {
        (0..=self.steps).map(|t| self.accuracy(t)).collect()
    }

    pub fn row_accuracy(&self, key: usize, step: usize) -> Option<f64> {
        self.rows
            .get(&key)
            .filter(|r| r.0 > 0)
            .map(|r| r.1[step] as f64 / r.0 as f64)
    }

    /// Accuracy over the rows whose key satisfies `keep`.
    pub fn accuracy_where(&self, step: usize, keep: impl Fn(usize) -> bool) -> f64 {
        let (n, c) = self
            .rows
            .iter()
            .filter(|(k, _)| keep(**k))
            .fold((0, 0), |(n, c), (_, r)| (n + r.0, c + r.1[step]));
        c as f64 / n.max(1) as f64
    }

    pub fn metric_name(&self) -> &'static str {
        match self.task.as_str() {
            "sudoku" => "puzzle_accuracy",
            "prettyclevr" => "question_accuracy",
            "agearith" => "age_accuracy",
            _ => "babi_error",
        }
    }

    /// The task metric at the last step; bAbI reports the error rate.
    pub fn metric(&self) -> f64 {
        let acc = self.accuracy(self.steps);
        if self.task == "babi" {
            1.0 - acc
        } else {
            acc
        }
    }

    pub fn higher_is_better(&self) -> bool {
        self.task != "babi"
    }

    /// Tab-separated table: one row per key plus an `all` row, one
    /// accuracy column per step.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{}\tcount", self.key_name);
        for t in 0..=self.steps {
            let _ = write!(out, "\tstep{t}");
        }
        out.push('\n');
        let cell = |c: usize, n: usize| if n == 0 { "-".to_string() } else { format!("{:.4}", c as f64 / n as f64) };
        for (k, (n, correct)) in &self.rows {
            let _ = write!(out, "{k}\t{n}");
            for &c in correct {
                let _ = write!(out, "\t{}", cell(c, *n));
            }
            out.push('\n');
        }
        let _ = write!(out, "all\t{}", self.total());
        for a in self.step_accuracy() {
            let _ = write!(out, "\t{a:.4}");
        }
        out.push('\n');
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jumps_table_has_eight_rows() {
        let mut r = Report::new(TaskKind::PrettyClevr, Split::Test, 2, 0..8);
        r.add(0, [true, true, true]);
        r.add(3, [false, false, true]);
        assert_eq!(r.rows.len(), 8);
        assert_eq!(r.step_accuracy(), vec![0.5, 0.5, 1.0]);
        assert_eq!(r.row_accuracy(3, 0), Some(0.0));
        assert_eq!(r.row_accuracy(5, 0), None);
        let table = r.to_table();
        assert_eq!(table.lines().count(), 1 + 8 + 1);
        assert!(table.starts_with("jumps\tcount\tstep0\tstep1\tstep2\n"));
        assert_eq!(r.metric_name(), "question_accuracy");
    }

    #[test]
    fn babi_metric_is_error() {
        let mut r = Report::new(TaskKind::Babi, Split::Valid, 0, [1]);
        r.add(1, [true]);
        r.add(1, [false]);
        r.add(1, [true]);
        r.add(1, [true]);
        assert_eq!(r.metric(), 0.25);
        assert!(!r.higher_is_better());
    }
}
