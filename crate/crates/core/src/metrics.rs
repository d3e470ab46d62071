//! Average accuracy, forgetting and learning-curve area.
//!
//! All three derive from `a(k, i, j)`: accuracy on the test set of task `j`
//! after the `i`-th minibatch of task `k`. Task indices `k` and `j` are
//! 1-based in memory; `i = 0` is the evaluation before the first update of a
//! task and `i = N_k` the one after its last minibatch.
//!
//! CSV form (`k,i,j,accuracy`) stores `k` and `j` 0-based; `i` is written as
//! is. `N_k` is not stored: on load it is taken as the largest `i` recorded
//! for task `k`, which holds because the end-of-task evaluation is always the
//! last one of a task.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyMatrix<T> {
    entries: BTreeMap<(usize, usize, usize), T>,
    per_task_batches: BTreeMap<usize, usize>,
}

pub const CSV_HEADER: &str = "k,i,j,accuracy";

impl<T: Scalar> AccuracyMatrix<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            per_task_batches: BTreeMap::new(),
        }
    }

    /// Records `a(k, i, j)` with 1-based `k`, `j`.
    pub fn record(&mut self, k: usize, i: usize, j: usize, accuracy: T) -> Result<()> {
        if k == 0 || j == 0 {
            return Err(Error::InvalidConfig("task indices are 1-based".into()));
        }
        if !(accuracy >= T::zero() && accuracy <= T::one()) {
            return Err(Error::Domain {
                what: "accuracy",
                value: accuracy.to_f64_lossy(),
            });
        }
        self.entries.insert((k, i, j), accuracy);
        Ok(())
    }

    /// Sets `N_k`, the number of minibatches of task `k`.
    pub fn set_task_batches(&mut self, k: usize, batches: usize) {
        self.per_task_batches.insert(k, batches);
    }

    pub fn task_batches(&self, k: usize) -> Option<usize> {
        self.per_task_batches.get(&k).copied()
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> Option<T> {
        self.entries.get(&(k, i, j)).copied()
    }

    /// Number of tasks with a known batch count.
    pub fn num_tasks(&self) -> usize {
        self.per_task_batches.keys().next_back().copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize, usize), T)> + '_ {
        self.entries.iter().map(|(&key, &v)| (key, v))
    }

    fn end_of_task(&self, k: usize, j: usize, missing: &mut Vec<(usize, usize, usize)>) -> T {
        let n = self.task_batches(k).unwrap_or(0);
        match self.get(k, n, j) {
            Some(a) => a,
            None => {
                missing.push((k, n, j));
                T::nan()
            }
        }
    }

    /// `A_k = (1/k) Σ_{j ≤ k} a(k, N_k, j)`
    pub fn average_accuracy(&self, k: usize) -> Result<T> {
        if k == 0 {
            return Err(Error::Undefined("average accuracy of zero tasks"));
        }
        let mut missing = Vec::new();
        let total: T = (1..=k).map(|j| self.end_of_task(k, j, &mut missing)).sum();
        if !missing.is_empty() {
            return Err(Error::MissingEntries(missing));
        }
        Ok(total / T::of_usize(k))
    }

    /// `F_k = (1/(k-1)) Σ_{j<k} f_j^k` with
    /// `f_j^k = max_{j ≤ l < k} a(l, N_l, j) − a(k, N_k, j)`.
    pub fn forgetting(&self, k: usize) -> Result<T> {
        if k < 2 {
            return Err(Error::Undefined("forgetting before the second task"));
        }
        let mut missing = Vec::new();
        let mut total = T::zero();
        for j in 1..k {
            let best = (j..k)
                .map(|l| self.end_of_task(l, j, &mut missing))
                .fold(T::neg_infinity(), T::max);
            total = total + (best - self.end_of_task(k, j, &mut missing));
        }
        if !missing.is_empty() {
            return Err(Error::MissingEntries(missing));
        }
        Ok(total / T::of_usize(k - 1))
    }

    /// `Z_b = (1/T) Σ_{k ≤ T} a(k, b, k)` for `b = 0..=beta`.
    pub fn learning_curve(&self, beta: usize, tasks: usize) -> Result<Vec<T>> {
        if tasks == 0 {
            return Err(Error::Undefined("learning curve of zero tasks"));
        }
        let mut missing = Vec::new();
        let curve = (0..=beta)
            .map(|b| {
                let sum: T = (1..=tasks)
                    .map(|k| {
                        self.get(k, b, k).unwrap_or_else(|| {
                            missing.push((k, b, k));
                            T::nan()
                        })
                    })
                    .sum();
                sum / T::of_usize(tasks)
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEntries(missing));
        }
        Ok(curve)
    }

    /// `LCA_β = (1/(β+1)) Σ_{b ≤ β} Z_b`
    pub fn lca(&self, beta: usize, tasks: usize) -> Result<T> {
        let curve = self.learning_curve(beta, tasks)?;
        Ok(curve.into_iter().sum::<T>() / T::of_usize(beta + 1))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for (&(k, i, j), a) in &self.entries {
            writeln!(out, "{},{},{},{}", k - 1, i, j - 1, a).expect("writing to a String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::Parse(format!(
                    "expected header {CSV_HEADER:?}, found {other:?}"
                )))
            }
        }
        let mut m = Self::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::Parse(format!("line {}: {line:?}", n + 2));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(bad());
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| bad());
            let (k, i, j) = (idx(fields[0])? + 1, idx(fields[1])?, idx(fields[2])? + 1);
            let a: T = fields[3].parse().map_err(|_| bad())?;
            m.record(k, i, j, a)?;
            let nk = m.per_task_batches.entry(k).or_insert(0);
            *nk = (*nk).max(i);
        }
        Ok(m)
    }
}
