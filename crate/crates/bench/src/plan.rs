//! Experiment plans: a method × seed grid over one task stream, executed in
//! parallel and written out as results.csv, metrics.json, traces and plots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use lifelong_core::{
    run_continuum_traced, search_epsilon, trace_failure_row, trace_to_csv, Error, EpsilonSearch,
    Method, NetworkSpec, RunConfig, RunResult, StreamConfig, Task, TraceRow,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, TrainSection};
use crate::data::{build_experiment, DataSource};
use crate::k2::{K2Histogram, DEFAULT_BINS};
use crate::plots::{histogram_chart, line_chart, Series};
use crate::results::{Aggregate, ResultRow, ResultsTable};

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub stream_cfg: StreamConfig,
    pub spec: NetworkSpec,
    pub cv_tasks: Vec<Task>,
    pub eval_tasks: Vec<Task>,
    pub run_cfgs: Vec<RunConfig<f64>>,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
    pub emit_trace: bool,
    pub timing: bool,
    pub source: DataSource,
    /// The MEGA-I threshold in use and, if searched, the search scores.
    pub epsilon: Option<f64>,
    pub epsilon_search: Option<EpsilonSearch<f64>>,
}

pub fn run_config(train: &TrainSection, method: Method, seed: u64, epsilon: Option<f64>) -> Result<RunConfig<f64>> {
    let mut c = RunConfig::new(method, seed);
    c.lr = train.lr;
    c.batch_size = train.batch_size;
    c.ref_batch_size = train.ref_batch_size;
    c.mem_capacity = train.memory_per_task;
    c.eval_batches = train.eval_batches;
    c.memory_mode = train.memory_mode()?;
    c.epsilon = if method == Method::Mega1 { epsilon } else { None };
    Ok(c)
}

/// Runs the epsilon grid on the cross-validation tasks with the first seed.
pub fn search_cv_epsilon(
    cfg: &ExperimentConfig,
    spec: &NetworkSpec,
    cv_tasks: &[Task],
) -> Result<EpsilonSearch<f64>> {
    if cv_tasks.is_empty() {
        bail!("mega1 needs train.epsilon or stream.cv_tasks > 0 to search for it");
    }
    let base = run_config(&cfg.train, Method::Mega1, cfg.train.seeds[0], Some(1.0))?;
    Ok(search_epsilon(
        spec,
        cv_tasks,
        &cfg.train.epsilon_grid,
        &base,
        cfg.train.cv_passes,
    )?)
}

impl ExperimentPlan {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let exp = build_experiment(cfg)?;
        let methods = cfg.train.methods()?;
        let (epsilon, epsilon_search) = match cfg.train.epsilon {
            Some(e) => (Some(e), None),
            None if methods.contains(&Method::Mega1) => {
                let s = search_cv_epsilon(cfg, &exp.spec, &exp.cv_tasks)?;
                (Some(s.best), Some(s))
            }
            None => (None, None),
        };
        let mut run_cfgs = Vec::new();
        for &m in &methods {
            for &seed in &cfg.train.seeds {
                let rc = run_config(&cfg.train, m, seed, epsilon)?;
                rc.validate()?;
                run_cfgs.push(rc);
            }
        }
        Ok(Self {
            stream_cfg: exp.stream_cfg,
            spec: exp.spec,
            cv_tasks: exp.cv_tasks,
            eval_tasks: exp.eval_tasks,
            run_cfgs,
            output_dir: cfg.output.dir.clone(),
            emit_plots: cfg.output.plots,
            emit_trace: cfg.output.trace,
            timing: cfg.output.timing,
            source: exp.source,
            epsilon,
            epsilon_search,
        })
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub method: Method,
    pub seed: u64,
    pub result: Result<RunResult<f64>, Error>,
    /// Rows recorded before the run ended, complete or not.
    pub trace: Vec<TraceRow<f64>>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curves {
    /// Task index `k` for each `A_k`.
    pub k: Vec<f64>,
    #[serde(rename = "A_k")]
    pub a_k: Vec<f64>,
    #[serde(rename = "Z_b")]
    pub z_b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K2Summary {
    pub fraction_below_one: f64,
    pub total: usize,
    pub histogram: K2Histogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub method: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub data_source: DataSource,
    pub tasks: usize,
    pub epsilon: Option<f64>,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub curves: BTreeMap<String, Curves>,
    pub k2: BTreeMap<String, K2Summary>,
    pub failures: Vec<Failure>,
}

#[derive(Debug)]
pub struct PlanOutcome {
    pub table: ResultsTable,
    pub metrics: Metrics,
    pub runs: Vec<RunOutput>,
}

impl PlanOutcome {
    pub fn failed(&self) -> bool {
        !self.metrics.failures.is_empty()
    }
}

fn execute(plan: &ExperimentPlan, cfg: &RunConfig<f64>) -> RunOutput {
    let mut trace = Vec::new();
    let start = Instant::now();
    let result = run_continuum_traced(&plan.spec, &plan.eval_tasks, cfg, &mut trace);
    RunOutput {
        method: cfg.method,
        seed: cfg.seed,
        result,
        trace,
        wall_time_s: start.elapsed().as_secs_f64(),
    }
}

fn mean_curve(curves: &[&[f64]]) -> Vec<f64> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64)
        .collect()
}

fn summarize(plan: &ExperimentPlan, runs: &[RunOutput]) -> (ResultsTable, Metrics) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut by_method: BTreeMap<Method, Vec<&RunResult<f64>>> = BTreeMap::new();
    let mut k2_by_method: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for run in runs {
        k2_by_method
            .entry(run.method)
            .or_default()
            .extend(run.trace.iter().filter_map(|r| r.k2));
        match &run.result {
            Ok(r) => {
                rows.push(ResultRow {
                    method: run.method,
                    seed: run.seed,
                    a_t: r.report.average_accuracy,
                    f_t: r.report.forgetting,
                    lca: r.report.lca,
                    wall_time_s: plan.timing.then_some(run.wall_time_s),
                });
                by_method.entry(run.method).or_default().push(r);
            }
            Err(e) => failures.push(Failure {
                method: run.method.name().into(),
                seed: run.seed,
                error: e.to_string(),
            }),
        }
    }
    let table = ResultsTable::new(rows);
    let curves = by_method
        .iter()
        .map(|(m, results)| {
            let a: Vec<&[f64]> = results.iter().map(|r| r.report.accuracy_curve.as_slice()).collect();
            let z: Vec<&[f64]> = results.iter().map(|r| r.report.learning_curve.as_slice()).collect();
            let a_k = mean_curve(&a);
            let tasks = plan.eval_tasks.len();
            let k = (tasks + 1 - a_k.len()..=tasks).map(|k| k as f64).collect();
            (m.name().to_string(), Curves { k, a_k, z_b: mean_curve(&z) })
        })
        .collect();
    let k2 = k2_by_method
        .into_iter()
        .filter_map(|(m, values)| {
            let h = K2Histogram::from_values(values, DEFAULT_BINS).ok()?;
            Some((
                m.name().to_string(),
                K2Summary {
                    fraction_below_one: h.fraction_below_one(),
                    total: h.total,
                    histogram: h,
                },
            ))
        })
        .collect();
    let metrics = Metrics {
        data_source: plan.source,
        tasks: plan.eval_tasks.len(),
        epsilon: plan.epsilon,
        aggregates: table.aggregates(),
        curves,
        k2,
        failures,
    };
    (table, metrics)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_plots(dir: &Path, metrics: &Metrics) -> Result<()> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).with_context(|| format!("creating {}", plots.display()))?;
    let acc: Vec<Series<'_>> = metrics
        .curves
        .iter()
        .map(|(name, c)| Series { name, x: c.k.clone(), y: &c.a_k })
        .collect();
    write(
        &plots.join("avg_accuracy.svg"),
        &line_chart("Average accuracy", "tasks learned k", "A_k", &acc, true),
    )?;
    let lca: Vec<Series<'_>> = metrics
        .curves
        .iter()
        .filter(|(_, c)| !c.z_b.is_empty())
        .map(|(name, c)| Series {
            name,
            x: (0..c.z_b.len()).map(|b| b as f64).collect(),
            y: &c.z_b,
        })
        .collect();
    write(
        &plots.join("lca.svg"),
        &line_chart("Learning curve", "minibatches b", "Z_b", &lca, true),
    )?;
    let preferred = ["mega2", "mega1", "agem", "gem"];
    if let Some((name, s)) = preferred
        .iter()
        .find_map(|p| metrics.k2.get_key_value(*p))
    {
        write(
            &plots.join("k2_hist.svg"),
            &histogram_chart(&format!("log10(k2), {name}"), &s.histogram),
        )?;
    }
    Ok(())
}

fn write_trace(dir: &Path, run: &RunOutput) -> Result<()> {
    let mut text = trace_to_csv(&run.trace);
    if let Err(e) = &run.result {
        let step = match e {
            Error::RunAborted { step, .. } => Some(*step),
            _ => None,
        };
        text.push_str(&trace_failure_row(step, &e.to_string()));
    }
    write(&dir.join(format!("{}_seed{}.csv", run.method, run.seed)), &text)
}

/// Executes every run and writes all artifacts. Failed runs are reported in
/// the outcome and in metrics.json; the successful ones are still written.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutcome> {
    let dir = &plan.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut runs: Vec<RunOutput> = plan.run_cfgs.par_iter().map(|c| execute(plan, c)).collect();
    runs.sort_by_key(|r| (r.method, r.seed));

    if plan.emit_trace {
        let traces = dir.join("traces");
        fs::create_dir_all(&traces).with_context(|| format!("creating {}", traces.display()))?;
        for run in &runs {
            write_trace(&traces, run)?;
        }
    }
    let (table, metrics) = summarize(plan, &runs);
    write(&dir.join("results.csv"), &table.to_csv())?;
    let json = serde_json::to_string_pretty(&metrics).context("serializing metrics")?;
    write(&dir.join("metrics.json"), &(json + "\n"))?;
    if plan.emit_plots {
        write_plots(dir, &metrics)?;
    }
    Ok(PlanOutcome {
        table,
        metrics,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path, extra: &[&str]) -> ExperimentConfig {
        let mut o: Vec<String> = vec![
            "stream.tasks=2".into(),
            "stream.examples_per_task=60".into(),
            "synthetic.test=40".into(),
            "model.hidden=[8]".into(),
            "train.ref_batch_size=16".into(),
            "train.memory_per_task=10".into(),
            "train.eval_batches=3".into(),
            format!("output.dir={:?}", dir.display().to_string()),
        ];
        o.extend(extra.iter().map(|s| s.to_string()));
        ExperimentConfig::parse("", &o).unwrap()
    }

    #[test]
    fn single_run_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &["train.methods=[\"mega2\"]", "train.seeds=[4]"]);
        let out = run_plan(&ExperimentPlan::from_config(&cfg).unwrap()).unwrap();
        assert!(!out.failed());
        assert_eq!(out.table.rows.len(), 1);
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(dir.path().join("plots/avg_accuracy.svg").is_file());
        assert!(dir.path().join("plots/k2_hist.svg").is_file());
        assert!(!dir.path().join("traces").exists());
    }

    #[test]
    fn mega1_without_epsilon_needs_cv_tasks() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &["train.methods=[\"mega1\"]"]);
        assert!(ExperimentPlan::from_config(&cfg).is_err());
        let cfg = config(dir.path(), &["train.methods=[\"mega1\"]", "stream.cv_tasks=1", "train.epsilon_grid=[0.01, 0.1]"]);
        let plan = ExperimentPlan::from_config(&cfg).unwrap();
        assert!([0.01, 0.1].contains(&plan.epsilon.unwrap()));
        assert_eq!(plan.epsilon_search.unwrap().scores.len(), 2);
        assert_eq!(plan.eval_tasks.len(), 2);
    }

    #[test]
    fn failed_runs_leave_marked_traces() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &["train.methods=[\"van\", \"agem\"]", "output.trace=true", "output.plots=false"]);
        let mut plan = ExperimentPlan::from_config(&cfg).unwrap();
        plan.run_cfgs[0].lr = 1e300;
        let out = run_plan(&plan).unwrap();
        assert!(out.failed());
        assert_eq!(out.table.rows.len(), 1);
        let van = fs::read_to_string(dir.path().join("traces/van_seed0.csv")).unwrap();
        assert!(van.lines().last().unwrap().starts_with("FAILED,"));
        let agem = fs::read_to_string(dir.path().join("traces/agem_seed0.csv")).unwrap();
        assert!(!agem.contains("FAILED"));
        assert!(!dir.path().join("plots").exists());
    }
}
