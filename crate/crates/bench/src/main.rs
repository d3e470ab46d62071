use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use lifelong_bench::config::ExperimentConfig;
use lifelong_bench::k2::{k2_histogram, trace_files, DEFAULT_BINS};
use lifelong_bench::plan::search_cv_epsilon;
use lifelong_bench::plots::histogram_chart;
use lifelong_bench::{data, run_plan, ExperimentPlan};

#[derive(Parser)]
#[command(name = "lifelong", version, about = "Continual-learning experiments with episodic-memory gradient mixing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method × seed grid and write results, metrics, traces and plots.
    Run(RunArgs),
    /// Analyse saved outputs.
    Analyze {
        #[command(subcommand)]
        what: Analysis,
    },
    /// Pick the MEGA-I threshold on the cross-validation tasks.
    SearchEpsilon(ConfigArgs),
}

#[derive(Subcommand)]
enum Analysis {
    /// Histogram of log10(k2) over every trace CSV under a directory.
    K2Hist {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        /// Also write the histogram as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.lr=0.05`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Comma-separated methods: van, gem, agem, mega1, mega2, multitask.
    #[arg(long)]
    method: Option<String>,
    #[arg(long, value_parser = ["permuted", "split", "synthetic"])]
    dataset: Option<String>,
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    examples_per_task: Option<usize>,
    #[arg(long)]
    memory_per_task: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    ref_batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    no_plots: bool,
    /// Write one trace CSV per run.
    #[arg(long)]
    trace: bool,
    /// Leave wall_time_s empty so results.csv is byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl RunArgs {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.base.set.clone();
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                o.push(format!("{key}={v}"));
            }
        };
        push(
            "train.methods",
            self.method.as_ref().map(|m| {
                let names: Vec<String> = m.split(',').map(|s| format!("{:?}", s.trim())).collect();
                format!("[{}]", names.join(","))
            }),
        );
        push("stream.dataset", self.dataset.as_ref().map(|d| format!("{d:?}")));
        push("stream.tasks", self.tasks.map(|v| v.to_string()));
        push("stream.examples_per_task", self.examples_per_task.map(|v| v.to_string()));
        push("train.memory_per_task", self.memory_per_task.map(|v| v.to_string()));
        push("train.batch_size", self.batch_size.map(|v| v.to_string()));
        push("train.ref_batch_size", self.ref_batch_size.map(|v| v.to_string()));
        push("train.lr", self.lr.map(|v| format!("{v:?}")));
        push("train.epsilon", self.epsilon.map(|v| format!("{v:?}")));
        push(
            "train.seeds",
            self.seeds.as_ref().map(|s| format!("{s:?}")),
        );
        push("output.dir", self.output.as_ref().map(|p| format!("{:?}", p.display().to_string())));
        if self.no_plots {
            o.push("output.plots=false".into());
        }
        if self.trace {
            o.push("output.trace=true".into());
        }
        if self.no_timing {
            o.push("output.timing=false".into());
        }
        o
    }
}

fn load(config: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    match config {
        Some(p) => ExperimentConfig::load(p, overrides),
        None => ExperimentConfig::parse("", overrides),
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = load(args.base.config.as_deref(), &args.overrides())?;
    let plan = ExperimentPlan::from_config(&cfg)?;
    if plan.source == data::DataSource::Synthetic && cfg.stream.mnist_dir.is_some() {
        eprintln!("MNIST files not found; using synthetic clusters as the base data");
    }
    let outcome = run_plan(&plan)?;
    for (method, agg) in &outcome.metrics.aggregates {
        let fmt = |s: Option<lifelong_bench::results::Stat>| match s {
            Some(s) => match s.std {
                Some(sd) => format!("{:.4} ± {:.4}", s.mean, sd),
                None => format!("{:.4}", s.mean),
            },
            None => "-".into(),
        };
        println!(
            "{method:<10} A_T {}  F_T {}  LCA {}",
            fmt(agg.a_t),
            fmt(agg.f_t),
            fmt(agg.lca)
        );
    }
    println!("wrote {}", plan.output_dir.display());
    for f in &outcome.metrics.failures {
        eprintln!("run {} seed {} failed: {}", f.method, f.seed, f.error);
    }
    Ok(if outcome.failed() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Analyze {
            what: Analysis::K2Hist { traces, bins, svg },
        } => {
            let files = trace_files(&traces)?;
            let h = k2_histogram(&files, bins)?;
            let width = h.width();
            println!("traces: {}  steps with k2: {}", files.len(), h.total);
            println!("fraction k2 < 1: {}", h.fraction_below_one());
            println!("(-inf, {}): {}", h.lo, h.underflow);
            for (i, c) in h.counts.iter().enumerate() {
                let lo = h.lo + i as f64 * width;
                println!("[{:.3}, {:.3}): {c}", lo, lo + width);
            }
            println!("[{}, inf]: {}", h.hi, h.overflow);
            if let Some(path) = svg {
                std::fs::write(&path, histogram_chart("log10(k2)", &h))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SearchEpsilon(args) => {
            let cfg = load(args.config.as_deref(), &args.set)?;
            let exp = data::build_experiment(&cfg)?;
            let s = search_cv_epsilon(&cfg, &exp.spec, &exp.cv_tasks)?;
            for (eps, acc) in &s.scores {
                println!("epsilon {eps:e}: A = {acc}");
            }
            println!("best epsilon: {}", s.best);
            Ok(ExitCode::SUCCESS)
        }
    }
}
