//! Per-task episodic memory with online uniform population.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::net::{loss_and_grad, Batch, LossGrad, NetworkSpec};
use crate::scalar::Scalar;
use crate::stream::Example;

/// How a full store treats new examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MemoryMode {
    /// Reservoir sampling: the store is a uniform sample of everything offered.
    #[default]
    Reservoir,
    /// Ring buffer: the store holds the most recent examples.
    Ring,
}

#[derive(Debug, Clone, PartialEq)]
struct TaskStore<T> {
    head: usize,
    examples: Vec<Example<T>>,
    seen: usize,
    /// Next slot to overwrite in ring mode.
    cursor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMemory<T> {
    capacity_per_task: usize,
    mode: MemoryMode,
    stores: BTreeMap<usize, TaskStore<T>>,
}

/// Reference examples grouped by originating task, one batch per task so
/// each is routed through its own head.
pub type RefBatches<T> = Vec<(usize, Batch<T>)>;

impl<T: Scalar> EpisodicMemory<T> {
    pub fn new(capacity_per_task: usize, mode: MemoryMode) -> Self {
        Self {
            capacity_per_task,
            mode,
            stores: BTreeMap::new(),
        }
    }

    pub fn capacity_per_task(&self) -> usize {
        self.capacity_per_task
    }

    pub fn store(&self, task: usize) -> &[Example<T>] {
        self.stores.get(&task).map_or(&[], |s| &s.examples)
    }

    pub fn seen_count(&self, task: usize) -> usize {
        self.stores.get(&task).map_or(0, |s| s.seen)
    }

    /// Task ids with at least one stored example, ascending.
    pub fn tasks(&self) -> impl Iterator<Item = usize> + '_ {
        self.stores
            .iter()
            .filter(|(_, s)| !s.examples.is_empty())
            .map(|(&t, _)| t)
    }

    /// Offers one training example of `task` (routed through `head`).
    pub fn offer<R: Rng>(&mut self, task: usize, head: usize, example: &Example<T>, rng: &mut R) {
        let cap = self.capacity_per_task;
        let store = self.stores.entry(task).or_insert_with(|| TaskStore {
            head,
            examples: Vec::with_capacity(cap),
            seen: 0,
            cursor: 0,
        });
        store.seen += 1;
        if cap == 0 {
            return;
        }
        if store.examples.len() < cap {
            store.examples.push(example.clone());
            return;
        }
        match self.mode {
            MemoryMode::Reservoir => {
                let slot = rng.random_range(0..store.seen);
                if slot < cap {
                    store.examples[slot] = example.clone();
                }
            }
            MemoryMode::Ring => {
                store.examples[store.cursor] = example.clone();
                store.cursor = (store.cursor + 1) % cap;
            }
        }
    }

    fn past_stores(&self, current_task: usize) -> impl Iterator<Item = (usize, &TaskStore<T>)> {
        self.stores
            .range(..current_task)
            .filter(|(_, s)| !s.examples.is_empty())
            .map(|(&t, s)| (t, s))
    }

    /// Draws `batch_size` examples uniformly with replacement from the union
    /// of stores of tasks before `current_task`. If the union holds no more
    /// than `batch_size` examples it is returned whole, once.
    ///
    /// `None` means there is nothing to sample from.
    pub fn sample_ref_batch<R: Rng>(
        &self,
        current_task: usize,
        batch_size: usize,
        rng: &mut R,
    ) -> Option<RefBatches<T>> {
        let stores: Vec<_> = self.past_stores(current_task).collect();
        let total: usize = stores.iter().map(|(_, s)| s.examples.len()).sum();
        if total == 0 || batch_size == 0 {
            return None;
        }
        if total <= batch_size {
            return Some(
                stores
                    .into_iter()
                    .map(|(t, s)| (t, Batch::from_examples(&s.examples, s.head)))
                    .collect(),
            );
        }
        let mut picks: Vec<Vec<usize>> = vec![Vec::new(); stores.len()];
        for _ in 0..batch_size {
            let mut flat = rng.random_range(0..total);
            for (slot, (_, s)) in stores.iter().enumerate() {
                if flat < s.examples.len() {
                    picks[slot].push(flat);
                    break;
                }
                flat -= s.examples.len();
            }
        }
        Some(
            stores
                .into_iter()
                .zip(picks)
                .filter(|(_, p)| !p.is_empty())
                .map(|((t, s), p)| (t, Batch::from_examples(p.iter().map(|&i| &s.examples[i]), s.head)))
                .collect(),
        )
    }

    /// GEM reference gradients: the mean loss gradient over each whole store
    /// `M_k` for every task `k < current_task` that has been offered data.
    pub fn per_task_ref_grads(
        &self,
        spec: &NetworkSpec,
        w: &[T],
        current_task: usize,
    ) -> Result<Vec<LossGrad<T>>> {
        self.stores
            .range(..current_task)
            .map(|(&t, s)| {
                if s.examples.is_empty() {
                    return Err(Error::EmptyMemoryStore(t));
                }
                loss_and_grad(spec, w, &Batch::from_examples(&s.examples, s.head))
            })
            .collect()
    }
}
