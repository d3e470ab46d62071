//! Per-run results, their CSV form and per-method aggregates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use lifelong_core::Method;
use serde::{Deserialize, Serialize};

pub const RESULTS_HEADER: &str = "method,seed,A_T,F_T,LCA_10,wall_time_s";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub a_t: f64,
    pub f_t: Option<f64>,
    pub lca: Option<f64>,
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

/// Mean and sample standard deviation; the deviation needs two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n >= 2).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(Stat { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    #[serde(rename = "A_T")]
    pub a_t: Option<Stat>,
    #[serde(rename = "F_T")]
    pub f_t: Option<Stat>,
    #[serde(rename = "LCA_10")]
    pub lca: Option<Stat>,
    pub wall_time_s: Option<Stat>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultsTable {
    /// Rows ordered by `(method, seed)`.
    pub fn new(mut rows: Vec<ResultRow>) -> Self {
        rows.sort_by(|a, b| (a.method, a.seed).cmp(&(b.method, b.seed)));
        Self { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method,
                r.seed,
                r.a_t,
                opt(r.f_t),
                opt(r.lca),
                opt(r.wall_time_s)
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(RESULTS_HEADER) {
            bail!("results file does not start with {RESULTS_HEADER:?}");
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let ctx = || format!("results line {}: {line:?}", n + 2);
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                bail!("{}", ctx());
            }
            let optional = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    Ok(Some(s.parse::<f64>().with_context(ctx)?))
                }
            };
            rows.push(ResultRow {
                method: f[0].parse().with_context(ctx)?,
                seed: f[1].parse().with_context(ctx)?,
                a_t: f[2].parse().with_context(ctx)?,
                f_t: optional(f[3])?,
                lca: optional(f[4])?,
                wall_time_s: optional(f[5])?,
            });
        }
        Ok(Self::new(rows))
    }

    pub fn methods(&self) -> Vec<Method> {
        let mut m: Vec<Method> = self.rows.iter().map(|r| r.method).collect();
        m.dedup();
        m
    }

    pub fn aggregates(&self) -> BTreeMap<String, Aggregate> {
        self.methods()
            .into_iter()
            .map(|m| {
                let rows: Vec<&ResultRow> = self.rows.iter().filter(|r| r.method == m).collect();
                let col = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Option<Stat> {
                    Stat::of(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
                };
                let agg = Aggregate {
                    runs: rows.len(),
                    a_t: col(&|r| Some(r.a_t)),
                    f_t: col(&|r| r.f_t),
                    lca: col(&|r| r.lca),
                    wall_time_s: col(&|r| r.wall_time_s),
                };
                (m.name().to_string(), agg)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, seed: u64, a: f64) -> ResultRow {
        ResultRow {
            method,
            seed,
            a_t: a,
            f_t: Some(a / 7.0),
            lca: Some(a / 3.0),
            wall_time_s: None,
        }
    }

    #[test]
    fn sample_std_needs_two_values() {
        assert_eq!(Stat::of(&[]), None);
        let one = Stat::of(&[0.5]).unwrap();
        assert_eq!((one.mean, one.std), (0.5, None));
        let two = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!(two.mean, 2.0);
        assert_eq!(two.std, Some(2f64.sqrt()));
    }

    #[test]
    fn rows_sort_by_method_then_seed() {
        let t = ResultsTable::new(vec![
            row(Method::Mega2, 2, 0.9),
            row(Method::Van, 5, 0.7),
            row(Method::Mega2, 1, 0.8),
        ]);
        let keys: Vec<_> = t.rows.iter().map(|r| (r.method, r.seed)).collect();
        assert_eq!(keys, vec![(Method::Van, 5), (Method::Mega2, 1), (Method::Mega2, 2)]);
        assert_eq!(t.methods(), vec![Method::Van, Method::Mega2]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut r = row(Method::Multitask, 3, 0.1 + 0.2);
        r.f_t = None;
        r.lca = None;
        r.wall_time_s = Some(1.0 / 3.0);
        let t = ResultsTable::new(vec![row(Method::Agem, 1, 1.0 / 3.0), r]);
        let text = t.to_csv();
        assert!(text.starts_with("method,seed,A_T,F_T,LCA_10,wall_time_s\nagem,1,"));
        let back = ResultsTable::from_csv(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), text);
        assert_eq!(back.aggregates(), t.aggregates());
    }

    #[test]
    fn aggregates_skip_missing_columns() {
        let mut r = row(Method::Multitask, 1, 0.5);
        r.f_t = None;
        let a = ResultsTable::new(vec![r]).aggregates();
        let m = &a["multitask"];
        assert_eq!(m.runs, 1);
        assert!(m.f_t.is_none() && m.wall_time_s.is_none());
        assert_eq!(m.a_t.unwrap().std, None);
    }

    #[test]
    fn rejects_malformed_csv() {
        assert!(ResultsTable::from_csv("a,b\n").is_err());
        assert!(ResultsTable::from_csv(&format!("{RESULTS_HEADER}\nvan,1,0.5\n")).is_err());
        assert!(ResultsTable::from_csv(&format!("{RESULTS_HEADER}\newc,1,0.5,,,\n")).is_err());
    }
}
