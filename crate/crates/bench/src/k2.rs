//! Histogram of `log10(k2)` over training traces, where `k2 = ‖g‖ / ‖g_ref‖`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lifelong_core::parse_trace_csv;
use serde::Serialize;
use walkdir::WalkDir;

pub const DEFAULT_BINS: usize = 31;
pub const LOG10_RANGE: f64 = 3.0;

/// Equal-width bins over `[lo, hi)` in `log10(k2)`. Values outside the range,
/// `k2 = 0` and `k2 = ∞` land in the underflow and overflow bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K2Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
    pub below_one: usize,
    pub total: usize,
}

impl K2Histogram {
    /// `bins` bins over `[-range, range)`. An odd count centres a bin on `k2 = 1`.
    pub fn new(bins: usize, range: f64) -> Result<Self> {
        if bins == 0 || !(range > 0.0) {
            bail!("histogram needs at least one bin and a positive range");
        }
        Ok(Self {
            lo: -range,
            hi: range,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
            below_one: 0,
            total: 0,
        })
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    /// Adds one value; NaN is ignored.
    pub fn add(&mut self, k2: f64) {
        if k2.is_nan() || k2 < 0.0 {
            return;
        }
        self.total += 1;
        if k2 < 1.0 {
            self.below_one += 1;
        }
        let x = k2.log10();
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi {
            self.overflow += 1;
        } else {
            let last = self.counts.len() - 1;
            let bin = ((x - self.lo) / self.width()).floor() as usize;
            self.counts[bin.min(last)] += 1;
        }
    }

    pub fn fraction_below_one(&self) -> f64 {
        self.below_one as f64 / self.total as f64
    }

    pub fn from_values(values: impl IntoIterator<Item = f64>, bins: usize) -> Result<Self> {
        let mut h = Self::new(bins, LOG10_RANGE)?;
        values.into_iter().for_each(|v| h.add(v));
        if h.total == 0 {
            bail!("no k2 values to histogram");
        }
        Ok(h)
    }
}

/// Every `*.csv` file under `dir`, in path order.
pub fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.with_context(|| format!("scanning {}", dir.display()))?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "csv") {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

pub fn k2_values(path: &Path) -> Result<Vec<f64>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = parse_trace_csv::<f64>(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(rows.into_iter().filter_map(|r| r.k2).collect())
}

pub fn k2_histogram(traces: &[PathBuf], bins: usize) -> Result<K2Histogram> {
    if traces.is_empty() {
        bail!("no trace files given");
    }
    let mut values = Vec::new();
    for p in traces {
        values.extend(k2_values(p)?);
    }
    K2Histogram::from_values(values, bins)
}
