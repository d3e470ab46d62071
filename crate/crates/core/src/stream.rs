//! Task sequences: permuted-input tasks, split-class tasks and a synthetic
//! Gaussian-cluster generator, plus the cross-validation partition.
//!
//! Every generator is a pure function of its inputs. Per-task randomness comes
//! from [`child_seed`]`(stream_seed, task_index)`, so appending tasks never
//! changes the earlier ones.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub input: Vec<T>,
    pub label: usize,
}

/// One task `D_t` with its train/test split and output head.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec<T> {
    pub task_id: usize,
    pub train: Vec<Example<T>>,
    pub test: Vec<Example<T>>,
    pub head: usize,
    /// Original class id for each local label.
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Permuted,
    Split,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamConfig {
    pub kind: StreamKind,
    pub num_tasks: usize,
    /// Training examples per task; 0 keeps everything available.
    pub examples_per_task: usize,
    pub cv_tasks: usize,
    pub seed: u64,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 {
            return Err(Error::InvalidConfig("num_tasks must be positive".into()));
        }
        if self.cv_tasks >= self.num_tasks {
            return Err(Error::InvalidConfig(format!(
                "cv_tasks ({}) must be smaller than num_tasks ({})",
                self.cv_tasks, self.num_tasks
            )));
        }
        Ok(())
    }

    fn expect(&self, kind: StreamKind) -> Result<()> {
        self.validate()?;
        if self.kind != kind {
            return Err(Error::InvalidConfig(format!(
                "stream kind {:?} passed to the {kind:?} generator",
                self.kind
            )));
        }
        Ok(())
    }
}

/// A labelled dataset that streams are carved out of.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseData<T> {
    pub train: Vec<Example<T>>,
    pub test: Vec<Example<T>>,
    pub num_classes: usize,
}

impl<T> BaseData<T> {
    pub fn input_dim(&self) -> usize {
        self.train.first().map_or(0, |e| e.input.len())
    }
}

/// SplitMix64 finalizer over `(seed, index)`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn task_rng(seed: u64, task: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, task as u64))
}

const CLASS_SHUFFLE_SALT: u64 = 0x5EED_C1A5;
const BASE_SUBSAMPLE_SALT: u64 = 0xBA5E_5AB5;

/// The pixel permutation of task `task`; task 0 is the identity.
pub fn task_permutation(seed: u64, task: usize, dim: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..dim).collect();
    if task > 0 {
        perm.shuffle(&mut task_rng(seed, task));
    }
    perm
}

fn subsample<T: Clone, R: Rng>(data: &[T], count: usize, rng: &mut R) -> Result<Vec<T>> {
    if count == 0 {
        return Ok(data.to_vec());
    }
    if count > data.len() {
        return Err(Error::TooFewExamples {
            requested: count,
            available: data.len(),
        });
    }
    let mut picked = index::sample(rng, data.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| data[i].clone()).collect())
}

fn permute<T: Scalar>(ex: &Example<T>, perm: &[usize]) -> Example<T> {
    Example {
        input: perm.iter().map(|&p| ex.input[p]).collect(),
        label: ex.label,
    }
}

/// Each task applies one fixed pixel permutation to every train and test
/// input. All tasks share head 0. Test sets are never subsampled.
pub fn make_permuted_stream<T: Scalar>(
    base: &BaseData<T>,
    cfg: &StreamConfig,
) -> Result<Vec<TaskSpec<T>>> {
    cfg.expect(StreamKind::Permuted)?;
    let dim = base.input_dim();
    (0..cfg.num_tasks)
        .map(|t| {
            let perm = task_permutation(cfg.seed, t, dim);
            // The subsample stream is salted so it is independent of the permutation.
            let mut rng = task_rng(child_seed(cfg.seed, 1), t);
            let train = subsample(&base.train, cfg.examples_per_task, &mut rng)?;
            Ok(TaskSpec {
                task_id: t,
                train: train.iter().map(|e| permute(e, &perm)).collect(),
                test: base.test.iter().map(|e| permute(e, &perm)).collect(),
                head: 0,
                classes: (0..base.num_classes).collect(),
            })
        })
        .collect()
}

/// Partitions the classes into `num_tasks` disjoint groups of equal size;
/// task `t` uses head `t` with labels remapped to `0..group`.
pub fn make_split_stream<T: Scalar>(
    base: &BaseData<T>,
    cfg: &StreamConfig,
) -> Result<Vec<TaskSpec<T>>> {
    cfg.expect(StreamKind::Split)?;
    let classes = base.num_classes;
    if classes < cfg.num_tasks || classes % cfg.num_tasks != 0 {
        return Err(Error::TooFewClasses {
            classes,
            tasks: cfg.num_tasks,
        });
    }
    let group = classes / cfg.num_tasks;
    let mut order: Vec<usize> = (0..classes).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(child_seed(
        cfg.seed,
        CLASS_SHUFFLE_SALT,
    )));

    (0..cfg.num_tasks)
        .map(|t| {
            let mut members = order[t * group..(t + 1) * group].to_vec();
            members.sort_unstable();
            let select = |data: &[Example<T>]| -> Vec<Example<T>> {
                data.iter()
                    .filter_map(|e| {
                        members.iter().position(|&c| c == e.label).map(|local| Example {
                            input: e.input.clone(),
                            label: local,
                        })
                    })
                    .collect()
            };
            let pool = select(&base.train);
            let train = subsample(&pool, cfg.examples_per_task, &mut task_rng(cfg.seed, t))?;
            Ok(TaskSpec {
                task_id: t,
                train,
                test: select(&base.test),
                head: t,
                classes: members,
            })
        })
        .collect()
}

/// Shape of the synthetic Gaussian-cluster tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub dim: usize,
    pub classes: usize,
    /// Used when `examples_per_task` is 0.
    pub train_per_task: usize,
    pub test_per_task: usize,
    /// Cluster standard deviation.
    pub sigma: f64,
    /// Half-width of the box the cluster means are drawn from.
    pub spread: f64,
    /// Minimum distance between two means of one task, in units of `sigma`.
    pub min_separation: f64,
    /// Give task `t` its own head `t` instead of sharing head 0.
    pub multi_head: bool,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            dim: 20,
            classes: 5,
            train_per_task: 1000,
            test_per_task: 500,
            sigma: 1.0,
            spread: 4.0,
            min_separation: 6.0,
            multi_head: false,
        }
    }
}

impl SyntheticParams {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.classes == 0 || self.test_per_task == 0 {
            return Err(Error::InvalidConfig(
                "synthetic dim, classes and test size must be positive".into(),
            ));
        }
        if !(self.sigma > 0.0 && self.spread > 0.0) {
            return Err(Error::InvalidConfig("sigma and spread must be positive".into()));
        }
        Ok(())
    }
}

/// Draws `classes` means in `[-spread, spread]^dim`, pairwise at least
/// `min_separation * sigma` apart. The box is widened if rejection stalls.
fn cluster_means<R: Rng>(p: &SyntheticParams, rng: &mut R) -> Vec<Vec<f64>> {
    let min_dist = p.min_separation * p.sigma;
    let mut spread = p.spread;
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(p.classes);
    let mut rejected = 0;
    while means.len() < p.classes {
        let candidate: Vec<f64> = (0..p.dim).map(|_| rng.random_range(-spread..=spread)).collect();
        let ok = means.iter().all(|m| {
            m.iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= min_dist
        });
        if ok {
            means.push(candidate);
        } else {
            rejected += 1;
            if rejected % 1000 == 0 {
                spread *= 1.5;
            }
        }
    }
    means
}

fn draw_cluster_examples<T: Scalar, R: Rng>(
    means: &[Vec<f64>],
    sigma: f64,
    count: usize,
    rng: &mut R,
) -> Vec<Example<T>> {
    let mut out: Vec<Example<T>> = (0..count)
        .map(|i| {
            let label = i % means.len();
            let input = means[label]
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    T::of(m + sigma * z)
                })
                .collect();
            Example { input, label }
        })
        .collect();
    out.shuffle(rng);
    out
}

/// Every task is `classes` Gaussian clusters with task-specific means.
pub fn make_synthetic_stream<T: Scalar>(
    cfg: &StreamConfig,
    params: &SyntheticParams,
) -> Result<Vec<TaskSpec<T>>> {
    cfg.expect(StreamKind::Synthetic)?;
    params.validate()?;
    let train_n = if cfg.examples_per_task > 0 {
        cfg.examples_per_task
    } else {
        params.train_per_task
    };
    Ok((0..cfg.num_tasks)
        .map(|t| {
            let mut rng = task_rng(cfg.seed, t);
            let means = cluster_means(params, &mut rng);
            TaskSpec {
                task_id: t,
                train: draw_cluster_examples(&means, params.sigma, train_n, &mut rng),
                test: draw_cluster_examples(&means, params.sigma, params.test_per_task, &mut rng),
                head: if params.multi_head { t } else { 0 },
                classes: (0..params.classes).collect(),
            }
        })
        .collect())
}

/// A single Gaussian-cluster dataset, standing in for MNIST when the IDX files
/// are unavailable. Feed it to the permuted or split generators.
pub fn synthetic_base<T: Scalar>(
    params: &SyntheticParams,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<BaseData<T>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 0xBA5E));
    let means = cluster_means(params, &mut rng);
    Ok(BaseData {
        train: draw_cluster_examples(&means, params.sigma, train, &mut rng),
        test: draw_cluster_examples(&means, params.sigma, test, &mut rng),
        num_classes: params.classes,
    })
}

/// A fixed random subset of `train` examples of the base training set, e.g.
/// a small MNIST sample for the limited-example regime. `0` keeps all; test
/// data is untouched.
pub fn subsample_base<T: Scalar>(base: &BaseData<T>, train: usize, seed: u64) -> Result<BaseData<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, BASE_SUBSAMPLE_SALT));
    Ok(BaseData {
        train: subsample(&base.train, train, &mut rng)?,
        test: base.test.clone(),
        num_classes: base.num_classes,
    })
}

/// First `cv_tasks` tasks form the cross-validation segment, the rest the
/// evaluation segment. Order is preserved.
pub fn partition_cv<T>(
    stream: Vec<TaskSpec<T>>,
    cfg: &StreamConfig,
) -> (Vec<TaskSpec<T>>, Vec<TaskSpec<T>>) {
    let mut cv = stream;
    let eval = cv.split_off(cfg.cv_tasks.min(cv.len()));
    (cv, eval)
}
