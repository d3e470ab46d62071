//! Builds the task stream and network shape a config describes.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lifelong_core::{
    idx::load_idx, make_permuted_stream, make_split_stream, make_synthetic_stream, partition_cv,
    subsample_base, synthetic_base, BaseData, NetworkSpec, StreamConfig, StreamKind, Task,
};
use serde::Serialize;

use crate::config::{Dataset, ExperimentConfig};

pub const MNIST_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Mnist,
    Synthetic,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub stream_cfg: StreamConfig,
    pub spec: NetworkSpec,
    pub cv_tasks: Vec<Task>,
    pub eval_tasks: Vec<Task>,
    pub source: DataSource,
}

/// The four IDX paths under `dir` if all of them exist.
pub fn mnist_paths(dir: &Path) -> Option<[PathBuf; 4]> {
    let paths = MNIST_FILES.map(|f| dir.join(f));
    paths.iter().all(|p| p.is_file()).then_some(paths)
}

pub fn load_mnist(dir: &Path) -> Result<Option<BaseData<f64>>> {
    let Some([tr_x, tr_y, te_x, te_y]) = mnist_paths(dir) else {
        return Ok(None);
    };
    let train = load_idx(&tr_x, &tr_y).with_context(|| format!("loading {}", tr_x.display()))?;
    let test = load_idx(&te_x, &te_y).with_context(|| format!("loading {}", te_x.display()))?;
    let num_classes = train.iter().chain(&test).map(|e| e.label + 1).max().unwrap_or(0);
    Ok(Some(BaseData {
        train,
        test,
        num_classes,
    }))
}

fn base_data(cfg: &ExperimentConfig) -> Result<(BaseData<f64>, DataSource)> {
    let s = &cfg.stream;
    let mnist = match &s.mnist_dir {
        Some(dir) => load_mnist(dir)?,
        None => None,
    };
    let (base, source) = match mnist {
        Some(b) => (b, DataSource::Mnist),
        None => {
            let syn = &cfg.synthetic;
            let base = synthetic_base(&syn.params(), syn.base_train, syn.test, s.seed)?;
            (base, DataSource::Synthetic)
        }
    };
    Ok((subsample_base(&base, s.base_train, s.seed)?, source))
}

pub fn build_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    let s = &cfg.stream;
    let kind = match s.dataset {
        Dataset::Permuted => StreamKind::Permuted,
        Dataset::Split => StreamKind::Split,
        Dataset::Synthetic => StreamKind::Synthetic,
    };
    let stream_cfg = StreamConfig {
        kind,
        num_tasks: s.tasks + s.cv_tasks,
        examples_per_task: s.examples_per_task,
        cv_tasks: s.cv_tasks,
        seed: s.seed,
    };
    let (tasks, source, input_dim, heads, classes) = match s.dataset {
        Dataset::Synthetic => {
            let params = cfg.synthetic.params();
            let tasks = make_synthetic_stream(&stream_cfg, &params)?;
            let heads = if params.multi_head { stream_cfg.num_tasks } else { 1 };
            (tasks, DataSource::Synthetic, params.dim, heads, params.classes)
        }
        Dataset::Permuted => {
            let (base, source) = base_data(cfg)?;
            let dim = base.input_dim();
            let classes = base.num_classes;
            (make_permuted_stream(&base, &stream_cfg)?, source, dim, 1, classes)
        }
        Dataset::Split => {
            let (base, source) = base_data(cfg)?;
            let dim = base.input_dim();
            let per_head = base.num_classes / stream_cfg.num_tasks.max(1);
            let tasks = make_split_stream(&base, &stream_cfg)?;
            (tasks, source, dim, stream_cfg.num_tasks, per_head)
        }
    };
    let spec = NetworkSpec::new(input_dim, cfg.model.hidden.clone(), heads, classes)?;
    let (cv_tasks, eval_tasks) = partition_cv(tasks, &stream_cfg);
    Ok(Experiment {
        stream_cfg,
        spec,
        cv_tasks,
        eval_tasks,
        source,
    })
}
