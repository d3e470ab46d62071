//! Experiment configuration.
//!
//! A config file is TOML: flat `key = value` pairs grouped under the section
//! headers `[stream]`, `[synthetic]`, `[model]`, `[train]` and `[output]`.
//! Every key has a default, so an empty file is a valid config. Any key can be
//! overridden from the command line as `section.key=value`.
//!
//! ```toml
//! [stream]
//! dataset = "permuted"        # permuted | split | synthetic
//! tasks = 20
//! examples_per_task = 200     # 0 keeps every available example
//! cv_tasks = 3                # extra leading tasks for the epsilon search
//! seed = 0
//! mnist_dir = "data/mnist"    # IDX files; synthetic clusters stand in if absent
//! base_train = 2000           # subsample of the base training set, 0 = all
//!
//! [train]
//! methods = ["agem", "mega1", "mega2"]
//! seeds = [1, 2, 3]
//! lr = 0.1
//! ```

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use lifelong_core::{MemoryMode, Method, SyntheticParams};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Permuted,
    Split,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSection {
    pub dataset: Dataset,
    pub tasks: usize,
    pub examples_per_task: usize,
    pub cv_tasks: usize,
    pub seed: u64,
    pub mnist_dir: Option<PathBuf>,
    pub base_train: usize,
}

impl Default for StreamSection {
    fn default() -> Self {
        Self {
            dataset: Dataset::Synthetic,
            tasks: 5,
            examples_per_task: 1000,
            cv_tasks: 0,
            seed: 0,
            mnist_dir: None,
            base_train: 0,
        }
    }
}

/// Gaussian-cluster data: the `synthetic` dataset itself, and the stand-in
/// base set for `permuted` and `split` when no MNIST files are available.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub dim: usize,
    pub classes: usize,
    /// Test examples per task (synthetic) or in the stand-in base set.
    pub test: usize,
    /// Training examples in the stand-in base set.
    pub base_train: usize,
    pub sigma: f64,
    pub spread: f64,
    pub min_separation: f64,
    pub multi_head: bool,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        let p = SyntheticParams::default();
        Self {
            dim: p.dim,
            classes: p.classes,
            test: p.test_per_task,
            base_train: 10_000,
            sigma: p.sigma,
            spread: p.spread,
            min_separation: p.min_separation,
            multi_head: p.multi_head,
        }
    }
}

impl SyntheticSection {
    pub fn params(&self) -> SyntheticParams {
        SyntheticParams {
            dim: self.dim,
            classes: self.classes,
            train_per_task: SyntheticParams::default().train_per_task,
            test_per_task: self.test,
            sigma: self.sigma,
            spread: self.spread,
            min_separation: self.min_separation,
            multi_head: self.multi_head,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub lr: f64,
    pub batch_size: usize,
    pub ref_batch_size: usize,
    pub memory_per_task: usize,
    /// MEGA-I threshold; searched on the CV tasks when absent.
    pub epsilon: Option<f64>,
    pub epsilon_grid: Vec<f64>,
    pub cv_passes: usize,
    pub eval_batches: usize,
    pub memory_mode: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            methods: ["van", "agem", "mega1", "mega2"].map(String::from).to_vec(),
            seeds: vec![0],
            lr: 0.1,
            batch_size: 10,
            ref_batch_size: 256,
            memory_per_task: 250,
            epsilon: None,
            epsilon_grid: lifelong_core::default_epsilon_grid(),
            cv_passes: 1,
            eval_batches: 10,
            memory_mode: "reservoir".into(),
        }
    }
}

impl TrainSection {
    pub fn methods(&self) -> Result<Vec<Method>> {
        let mut out: Vec<Method> = self
            .methods
            .iter()
            .map(|m| m.parse::<Method>().map_err(anyhow::Error::from))
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn memory_mode(&self) -> Result<MemoryMode> {
        match self.memory_mode.to_ascii_lowercase().as_str() {
            "reservoir" => Ok(MemoryMode::Reservoir),
            "ring" => Ok(MemoryMode::Ring),
            other => bail!("unknown memory_mode {other:?} (expected reservoir or ring)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub plots: bool,
    pub trace: bool,
    /// Record per-run wall time. Off makes results.csv byte-reproducible.
    pub timing: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            plots: true,
            trace: false,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub stream: StreamSection,
    pub synthetic: SyntheticSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parses config text after applying `section.key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table.try_into().context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if t.seeds.is_empty() {
            bail!("train.seeds is empty");
        }
        let mut seeds = t.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != t.seeds.len() {
            bail!("train.seeds contains duplicates");
        }
        if t.methods()?.is_empty() {
            bail!("train.methods is empty");
        }
        t.memory_mode()?;
        if self.stream.tasks == 0 {
            bail!("stream.tasks must be positive");
        }
        Ok(())
    }
}

/// Sets `section.key` to `value`, read as a TOML value when it parses as one
/// and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override {assignment:?} is not of the form section.key=value"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .with_context(|| format!("override key {path:?} is not of the form section.key"))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let Some(sec) = entry.as_table_mut() else {
        bail!("{section} is not a section");
    };
    sec.insert(key.to_string(), value);
    Ok(())
}
