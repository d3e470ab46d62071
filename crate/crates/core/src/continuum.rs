//! Single-pass training over a task sequence.
//!
//! For every task in order the training set is shuffled once and consumed in
//! minibatches. Each minibatch produces the current-task gradient; methods
//! with an episodic memory also compute a reference gradient on examples of
//! earlier tasks and mix the two before the SGD step. The minibatch is offered
//! to the memory after the step.
//!
//! Randomness is split into independent streams (parameter init, per-task
//! shuffles, memory population, reference sampling), all derived from
//! `RunConfig::seed`, so every method sees the same data order.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::memory::{EpisodicMemory, MemoryMode};
use crate::metrics::AccuracyMatrix;
use crate::mix::{mix_agem, mix_gem, mix_mega1, mix_mega2, pair_diagnostics, MixDecision, MixInputs};
use crate::net::{
    evaluate, init_params, loss_and_grad, loss_and_grad_multi, sgd_step, Batch, LossGrad,
    NetworkSpec, ParamVector,
};
use crate::qp::NqpOptions;
use crate::scalar::{vec, Scalar};
use crate::stream::{child_seed, task_rng, Example, TaskSpec};

const SHUFFLE_SALT: u64 = 0x5348_5546;
const MEMORY_SALT: u64 = 0x4D45_4D4F;
const REF_SALT: u64 = 0x5245_4653;
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Van,
    Gem,
    Agem,
    Mega1,
    Mega2,
    Multitask,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Van,
        Method::Gem,
        Method::Agem,
        Method::Mega1,
        Method::Mega2,
        Method::Multitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Van => "van",
            Method::Gem => "gem",
            Method::Agem => "agem",
            Method::Mega1 => "mega1",
            Method::Mega2 => "mega2",
            Method::Multitask => "multitask",
        }
    }

    pub fn uses_memory(self) -> bool {
        matches!(self, Method::Gem | Method::Agem | Method::Mega1 | Method::Mega2)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .or(match key.as_str() {
                "megai" => Some(Method::Mega1),
                "megaii" => Some(Method::Mega2),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub method: Method,
    pub lr: T,
    pub batch_size: usize,
    pub ref_batch_size: usize,
    pub mem_capacity: usize,
    /// MEGA-I sensitivity threshold; required for, and only for, `mega1`.
    pub epsilon: Option<T>,
    pub seed: u64,
    /// Early-evaluation horizon β: `a(k, b, k)` is recorded for `b ≤ β`.
    pub eval_batches: usize,
    pub memory_mode: MemoryMode,
    pub qp: NqpOptions<T>,
}

impl<T: Scalar> RunConfig<T> {
    /// Defaults: batch 10, lr 0.1, reference batch 256, 250 examples per task,
    /// β = 10, reservoir memory.
    pub fn new(method: Method, seed: u64) -> Self {
        Self {
            method,
            lr: T::of(0.1),
            batch_size: 10,
            ref_batch_size: 256,
            mem_capacity: 250,
            epsilon: (method == Method::Mega1).then(|| T::of(1e-3)),
            seed,
            eval_batches: 10,
            memory_mode: MemoryMode::Reservoir,
            qp: NqpOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > T::zero() && self.lr.is_finite()) {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.method.uses_memory() && (self.ref_batch_size == 0 || self.mem_capacity == 0) {
            return Err(Error::InvalidConfig(format!(
                "{} needs a positive memory capacity and reference batch size",
                self.method
            )));
        }
        match (self.method, self.epsilon) {
            (Method::Mega1, None) => Err(Error::InvalidConfig("mega1 requires epsilon".into())),
            (Method::Mega1, Some(e)) if !(e > T::zero()) => {
                Err(Error::InvalidConfig("epsilon must be positive".into()))
            }
            (Method::Mega1, Some(_)) => Ok(()),
            (m, Some(_)) => Err(Error::InvalidConfig(format!("epsilon is only used by mega1, not {m}"))),
            (_, None) => Ok(()),
        }
    }
}

/// Diagnostics of one update step. Reference-side fields are `None` when no
/// reference gradient was used.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T> {
    pub step: usize,
    pub task: usize,
    pub loss_t: T,
    pub loss_ref: Option<T>,
    pub g_norm: T,
    pub gref_norm: Option<T>,
    pub theta_tilde: Option<T>,
    pub theta: Option<T>,
    pub k1: Option<T>,
    pub k2: Option<T>,
}

pub const TRACE_HEADER: &str = "step,task,loss_t,loss_ref,g_norm,gref_norm,theta_tilde,theta,k1,k2";
/// First field of the row appended to the trace of a failed run.
pub const TRACE_FAILURE_MARKER: &str = "FAILED";

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn trace_to_csv<T: Scalar>(rows: &[TraceRow<T>]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.task,
            r.loss_t,
            opt(r.loss_ref),
            r.g_norm,
            opt(r.gref_norm),
            opt(r.theta_tilde),
            opt(r.theta),
            opt(r.k1),
            opt(r.k2)
        )
        .expect("writing to a String");
    }
    out
}

/// The marker row closing the trace of a run that aborted.
pub fn trace_failure_row(step: Option<usize>, message: &str) -> String {
    let step = step.map(|s| s.to_string()).unwrap_or_default();
    format!(
        "{TRACE_FAILURE_MARKER},{step},{}\n",
        message.replace([',', '\n', '\r'], " ")
    )
}

/// Parses a trace written by [`trace_to_csv`], skipping failure markers.
pub fn parse_trace_csv<T: Scalar>(text: &str) -> Result<Vec<TraceRow<T>>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TRACE_HEADER => {}
        other => {
            return Err(Error::Parse(format!(
                "expected trace header {TRACE_HEADER:?}, found {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() || line.starts_with(TRACE_FAILURE_MARKER) {
            continue;
        }
        let bad = || Error::Parse(format!("trace line {}: {line:?}", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad());
        }
        let req = |s: &str| s.trim().parse::<T>().map_err(|_| bad());
        let optional = |s: &str| -> Result<Option<T>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                req(s).map(Some)
            }
        };
        rows.push(TraceRow {
            step: f[0].trim().parse().map_err(|_| bad())?,
            task: f[1].trim().parse().map_err(|_| bad())?,
            loss_t: req(f[2])?,
            loss_ref: optional(f[3])?,
            g_norm: req(f[4])?,
            gref_norm: optional(f[5])?,
            theta_tilde: optional(f[6])?,
            theta: optional(f[7])?,
            k1: optional(f[8])?,
            k2: optional(f[9])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report<T> {
    /// `A_T`
    pub average_accuracy: T,
    /// `F_T`; undefined for a single task and for the multi-task reference.
    pub forgetting: Option<T>,
    /// `LCA_β` at `lca_beta`.
    pub lca: Option<T>,
    pub lca_beta: usize,
    /// `A_k` for `k = 1..=T` (only `A_T` for the multi-task reference).
    pub accuracy_curve: Vec<T>,
    /// `Z_b` for `b = 0..=lca_beta`.
    pub learning_curve: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult<T> {
    pub matrix: AccuracyMatrix<T>,
    pub report: Report<T>,
    pub trace: Vec<TraceRow<T>>,
    pub final_params: ParamVector<T>,
}

fn test_batches<T: Scalar>(task: &TaskSpec<T>) -> Vec<Batch<T>> {
    task.test
        .chunks(EVAL_CHUNK)
        .map(|c| Batch::from_examples(c, task.head))
        .collect()
}

fn check_stream<T: Scalar>(spec: &NetworkSpec, stream: &[TaskSpec<T>]) -> Result<()> {
    spec.validate()?;
    if stream.is_empty() {
        return Err(Error::InvalidConfig("task stream is empty".into()));
    }
    for pair in stream.windows(2) {
        if pair[1].task_id <= pair[0].task_id {
            return Err(Error::InvalidConfig("task ids must be strictly increasing".into()));
        }
    }
    for task in stream {
        if task.head >= spec.heads {
            return Err(Error::ShapeMismatch {
                what: "head index bound",
                expected: spec.heads,
                found: task.head,
            });
        }
        if task.train.is_empty() || task.test.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "task {} has an empty train or test set",
                task.task_id
            )));
        }
        if let Some(e) = task.train.iter().chain(&task.test).find(|e| e.input.len() != spec.input_dim) {
            return Err(Error::ShapeMismatch {
                what: "example input",
                expected: spec.input_dim,
                found: e.input.len(),
            });
        }
    }
    Ok(())
}

fn shuffled_order(seed: u64, position: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut task_rng(child_seed(seed, SHUFFLE_SALT), position));
    order
}

fn aborted(step: usize) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        e @ Error::RunAborted { .. } => e,
        e => Error::RunAborted {
            step,
            source: Box::new(e),
        },
    }
}

fn row_from_decision<T: Scalar>(
    step: usize,
    task: usize,
    cur: &LossGrad<T>,
    reference: Option<&LossGrad<T>>,
    decision: &MixDecision<T>,
) -> TraceRow<T> {
    let mut row = TraceRow {
        step,
        task,
        loss_t: cur.loss,
        loss_ref: None,
        g_norm: vec::norm(&cur.grad),
        gref_norm: None,
        theta_tilde: None,
        theta: None,
        k1: None,
        k2: None,
    };
    if let Some(r) = reference {
        let diag = decision.diagnostics.clone().unwrap_or_else(|| {
            pair_diagnostics(
                &MixInputs {
                    g: &cur.grad,
                    loss_t: cur.loss,
                    g_ref: &r.grad,
                    loss_ref: r.loss,
                },
                &decision.mixed,
            )
        });
        row.loss_ref = Some(r.loss);
        row.gref_norm = Some(vec::norm(&r.grad));
        row.theta_tilde = diag.theta_tilde;
        row.theta = diag.theta;
        row.k1 = diag.k1;
        row.k2 = diag.k2;
    }
    row
}

struct Trainer<'a, T: Scalar> {
    spec: &'a NetworkSpec,
    cfg: &'a RunConfig<T>,
    memory: EpisodicMemory<T>,
    mem_rng: ChaCha8Rng,
    ref_rng: ChaCha8Rng,
}

impl<T: Scalar> Trainer<'_, T> {
    /// The mixed gradient for one minibatch plus its trace row.
    fn step(
        &mut self,
        w: &[T],
        task: &TaskSpec<T>,
        batch: &Batch<T>,
        step: usize,
    ) -> Result<(Vec<T>, TraceRow<T>)> {
        let cur = loss_and_grad(self.spec, w, batch)?;
        let plain = |cur: &LossGrad<T>| TraceRow {
            step,
            task: task.task_id,
            loss_t: cur.loss,
            loss_ref: None,
            g_norm: vec::norm(&cur.grad),
            gref_norm: None,
            theta_tilde: None,
            theta: None,
            k1: None,
            k2: None,
        };
        match self.cfg.method {
            Method::Van | Method::Multitask => {
                let row = plain(&cur);
                Ok((cur.grad, row))
            }
            Method::Gem => {
                let refs = self.memory.per_task_ref_grads(self.spec, w, task.task_id)?;
                if refs.is_empty() {
                    let row = plain(&cur);
                    return Ok((cur.grad, row));
                }
                let slices: Vec<&[T]> = refs.iter().map(|r| r.grad.as_slice()).collect();
                let decision = mix_gem(&cur.grad, &slices, &self.cfg.qp)?;
                // Trace the average of the per-task references.
                let m = T::of_usize(refs.len());
                let mut mean = LossGrad {
                    loss: refs.iter().map(|r| r.loss).sum::<T>() / m,
                    grad: vec![T::zero(); w.len()],
                };
                for r in &refs {
                    vec::axpy(T::one() / m, &r.grad, &mut mean.grad);
                }
                let row = row_from_decision(step, task.task_id, &cur, Some(&mean), &decision);
                Ok((decision.mixed, row))
            }
            Method::Agem | Method::Mega1 | Method::Mega2 => {
                let Some(sample) =
                    self.memory
                        .sample_ref_batch(task.task_id, self.cfg.ref_batch_size, &mut self.ref_rng)
                else {
                    let row = plain(&cur);
                    return Ok((cur.grad, row));
                };
                let batches: Vec<Batch<T>> = sample.into_iter().map(|(_, b)| b).collect();
                let reference = loss_and_grad_multi(self.spec, w, &batches)?;
                let inputs = MixInputs {
                    g: &cur.grad,
                    loss_t: cur.loss,
                    g_ref: &reference.grad,
                    loss_ref: reference.loss,
                };
                let decision = match self.cfg.method {
                    Method::Agem => mix_agem(&inputs),
                    Method::Mega1 => mix_mega1(&inputs, self.cfg.epsilon.expect("validated"))?,
                    _ => mix_mega2(&inputs),
                };
                let row = row_from_decision(step, task.task_id, &cur, Some(&reference), &decision);
                Ok((decision.mixed, row))
            }
        }
    }

    fn remember(&mut self, task: &TaskSpec<T>, examples: &[&Example<T>]) {
        if !self.cfg.method.uses_memory() {
            return;
        }
        for ex in examples {
            self.memory.offer(task.task_id, task.head, ex, &mut self.mem_rng);
        }
    }
}

fn finish<T: Scalar>(
    matrix: AccuracyMatrix<T>,
    trace: Vec<TraceRow<T>>,
    final_params: ParamVector<T>,
    eval_batches: usize,
) -> Result<RunResult<T>> {
    let tasks = matrix.num_tasks();
    let accuracy_curve = (1..=tasks)
        .map(|k| matrix.average_accuracy(k))
        .collect::<Result<Vec<_>>>()?;
    let min_batches = (1..=tasks)
        .filter_map(|k| matrix.task_batches(k))
        .min()
        .unwrap_or(0);
    let lca_beta = eval_batches.min(min_batches);
    let learning_curve = matrix.learning_curve(lca_beta, tasks)?;
    let lca = learning_curve.iter().copied().sum::<T>() / T::of_usize(lca_beta + 1);
    let report = Report {
        average_accuracy: *accuracy_curve.last().expect("at least one task"),
        forgetting: (tasks >= 2).then(|| matrix.forgetting(tasks)).transpose()?,
        lca: Some(lca),
        lca_beta,
        accuracy_curve,
        learning_curve,
    };
    Ok(RunResult {
        matrix,
        report,
        trace,
        final_params,
    })
}

/// Runs the continuum, appending per-step diagnostics to `trace` as it goes
/// so a failed run still leaves its partial trace behind.
pub fn run_continuum_traced<T: Scalar>(
    spec: &NetworkSpec,
    stream: &[TaskSpec<T>],
    cfg: &RunConfig<T>,
    trace: &mut Vec<TraceRow<T>>,
) -> Result<RunResult<T>> {
    cfg.validate()?;
    check_stream(spec, stream)?;
    if cfg.method == Method::Multitask {
        return run_multitask_traced(spec, stream, cfg, trace);
    }

    let mut w: ParamVector<T> = init_params(spec, cfg.seed);
    let mut trainer = Trainer {
        spec,
        cfg,
        memory: EpisodicMemory::new(cfg.mem_capacity, cfg.memory_mode),
        mem_rng: ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, MEMORY_SALT)),
        ref_rng: ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, REF_SALT)),
    };
    let tests: Vec<Vec<Batch<T>>> = stream.iter().map(test_batches).collect();
    let mut matrix = AccuracyMatrix::new();
    let mut step = 0;

    for (pos, task) in stream.iter().enumerate() {
        let k = pos + 1;
        let order = shuffled_order(cfg.seed, pos, task.train.len());
        let chunks: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        let n_k = chunks.len();
        matrix.set_task_batches(k, n_k);
        matrix.record(k, 0, k, evaluate(spec, &w, &tests[pos])?)?;

        for (b, idx) in chunks.iter().enumerate() {
            let examples: Vec<&Example<T>> = idx.iter().map(|&i| &task.train[i]).collect();
            let batch = Batch::from_examples(examples.iter().copied(), task.head);
            let (mixed, row) = trainer.step(&w, task, &batch, step).map_err(aborted(step))?;
            trace.push(row);
            w = sgd_step(&w, &mixed, cfg.lr);
            if !vec::all_finite(&w) {
                return Err(aborted(step)(Error::NumericOverflow("parameter update")));
            }
            trainer.remember(task, &examples);
            step += 1;
            let done = b + 1;
            if done <= cfg.eval_batches && done < n_k {
                matrix.record(k, done, k, evaluate(spec, &w, &tests[pos])?)?;
            }
        }
        for (j, test) in tests.iter().enumerate().take(k) {
            matrix.record(k, n_k, j + 1, evaluate(spec, &w, test)?)?;
        }
    }

    finish(matrix, std::mem::take(trace), w, cfg.eval_batches).map(|mut r| {
        trace.clone_from(&r.trace);
        r.trace.shrink_to_fit();
        r
    })
}

pub fn run_continuum<T: Scalar>(
    spec: &NetworkSpec,
    stream: &[TaskSpec<T>],
    cfg: &RunConfig<T>,
) -> Result<RunResult<T>> {
    run_continuum_traced(spec, stream, cfg, &mut Vec::new())
}

fn run_multitask_traced<T: Scalar>(
    spec: &NetworkSpec,
    stream: &[TaskSpec<T>],
    cfg: &RunConfig<T>,
    trace: &mut Vec<TraceRow<T>>,
) -> Result<RunResult<T>> {
    let pooled: Vec<(&TaskSpec<T>, &Example<T>)> = stream
        .iter()
        .flat_map(|t| t.train.iter().map(move |e| (t, e)))
        .collect();
    let order = shuffled_order(cfg.seed, 0, pooled.len());
    let mut w: ParamVector<T> = init_params(spec, cfg.seed);
    let chunks: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();

    for (step, idx) in chunks.iter().enumerate() {
        // One batch per head, in order of first appearance.
        let mut groups: Vec<(usize, Vec<&Example<T>>)> = Vec::new();
        for &i in *idx {
            let (task, ex) = pooled[i];
            match groups.iter_mut().find(|(h, _)| *h == task.head) {
                Some((_, v)) => v.push(ex),
                None => groups.push((task.head, vec![ex])),
            }
        }
        let batches: Vec<Batch<T>> = groups
            .into_iter()
            .map(|(h, exs)| Batch::from_examples(exs, h))
            .collect();
        let cur = loss_and_grad_multi(spec, &w, &batches).map_err(aborted(step))?;
        trace.push(TraceRow {
            step,
            task: pooled[idx[0]].0.task_id,
            loss_t: cur.loss,
            loss_ref: None,
            g_norm: vec::norm(&cur.grad),
            gref_norm: None,
            theta_tilde: None,
            theta: None,
            k1: None,
            k2: None,
        });
        w = sgd_step(&w, &cur.grad, cfg.lr);
        if !vec::all_finite(&w) {
            return Err(aborted(step)(Error::NumericOverflow("parameter update")));
        }
    }

    let tasks = stream.len();
    let mut matrix = AccuracyMatrix::new();
    matrix.set_task_batches(tasks, chunks.len());
    for (j, task) in stream.iter().enumerate() {
        matrix.record(tasks, chunks.len(), j + 1, evaluate(spec, &w, &test_batches(task))?)?;
    }
    let a_t = matrix.average_accuracy(tasks)?;
    Ok(RunResult {
        matrix,
        report: Report {
            average_accuracy: a_t,
            forgetting: None,
            lca: None,
            lca_beta: 0,
            accuracy_curve: vec![a_t],
            learning_curve: Vec::new(),
        },
        trace: trace.clone(),
        final_params: w,
    })
}

/// The multi-task reference: all tasks' training data pooled, shuffled and
/// passed over once with plain SGD, evaluated on every test set at the end.
pub fn run_multitask<T: Scalar>(
    spec: &NetworkSpec,
    stream: &[TaskSpec<T>],
    cfg: &RunConfig<T>,
) -> Result<RunResult<T>> {
    let mut cfg = cfg.clone();
    cfg.method = Method::Multitask;
    cfg.epsilon = None;
    cfg.validate()?;
    check_stream(spec, stream)?;
    run_multitask_traced(spec, stream, &cfg, &mut Vec::new())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSearch<T> {
    pub best: T,
    /// `(epsilon, A_T on the cross-validation tasks)`, ascending in epsilon.
    pub scores: Vec<(T, T)>,
}

/// The MEGA-I threshold from `grid` with the best final average accuracy on
/// the cross-validation tasks. Ties go to the smaller epsilon. With
/// `passes > 1` every cross-validation training set is repeated that often.
pub fn search_epsilon<T: Scalar>(
    spec: &NetworkSpec,
    cv_tasks: &[TaskSpec<T>],
    grid: &[T],
    cfg: &RunConfig<T>,
    passes: usize,
) -> Result<EpsilonSearch<T>> {
    if cv_tasks.is_empty() {
        return Err(Error::InvalidConfig("epsilon search needs cross-validation tasks".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("epsilon grid is empty".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    grid.dedup();

    let repeated: Vec<TaskSpec<T>>;
    let tasks = if passes > 1 {
        repeated = cv_tasks
            .iter()
            .map(|t| TaskSpec {
                train: t.train.iter().cloned().cycle().take(t.train.len() * passes).collect(),
                ..t.clone()
            })
            .collect();
        &repeated[..]
    } else {
        cv_tasks
    };

    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(T, T)> = None;
    for &eps in &grid {
        let mut run_cfg = cfg.clone();
        run_cfg.method = Method::Mega1;
        run_cfg.epsilon = Some(eps);
        let acc = run_continuum(spec, tasks, &run_cfg)?.report.average_accuracy;
        scores.push((eps, acc));
        if best.is_none_or(|(_, a)| acc > a) {
            best = Some((eps, acc));
        }
    }
    Ok(EpsilonSearch {
        best: best.expect("grid is nonempty").0,
        scores,
    })
}

/// `{1e-5, 1e-4, 1e-3, 1e-2, 1e-1}`
pub fn default_epsilon_grid<T: Scalar>() -> Vec<T> {
    (-5..=-1).map(|e| T::of(10f64.powi(e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("MEGA-II".parse::<Method>().unwrap(), Method::Mega2);
        assert_eq!("A-GEM".parse::<Method>().unwrap(), Method::Agem);
        assert!("ewc".parse::<Method>().is_err());
    }

    #[test]
    fn epsilon_only_for_mega1() {
        let mut c = RunConfig::<f64>::new(Method::Mega1, 0);
        assert!(c.validate().is_ok());
        c.epsilon = None;
        assert!(c.validate().is_err());
        let mut c = RunConfig::<f64>::new(Method::Agem, 0);
        assert!(c.validate().is_ok());
        c.epsilon = Some(0.1);
        assert!(c.validate().is_err());
        let mut c = RunConfig::<f64>::new(Method::Van, 0);
        c.lr = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_grid_values() {
        let g: Vec<f64> = default_epsilon_grid();
        assert_eq!(g, vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1]);
    }

    #[test]
    fn trace_csv_round_trip() {
        let rows = vec![
            TraceRow {
                step: 0,
                task: 0,
                loss_t: 1.5_f64,
                loss_ref: None,
                g_norm: 0.25,
                gref_norm: None,
                theta_tilde: None,
                theta: None,
                k1: None,
                k2: None,
            },
            TraceRow {
                step: 1,
                task: 1,
                loss_t: 0.1 + 0.2,
                loss_ref: Some(0.0),
                g_norm: 1.0 / 3.0,
                gref_norm: Some(2.0),
                theta_tilde: Some(1.2),
                theta: Some(0.4),
                k1: Some(f64::INFINITY),
                k2: Some(1.0 / 6.0),
            },
        ];
        let mut text = trace_to_csv(&rows);
        text.push_str(&trace_failure_row(Some(2), "boom, at step 2"));
        assert_eq!(parse_trace_csv::<f64>(&text).unwrap(), rows);
        assert!(parse_trace_csv::<f64>("nope\n").is_err());
    }
}
