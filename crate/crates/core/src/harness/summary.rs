use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::LearnerKind;
use super::run::{Metric, MetricTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    /// Sample standard deviation over seeds divided by `sqrt(n)`; 0 for one seed.
    pub std_err: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub learner: LearnerKind,
    pub seeds: usize,
    pub metrics: BTreeMap<Metric, SeriesStats>,
}

/// Final-iteration comparison of two learners over the seeds they share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub metric: Metric,
    pub first: LearnerKind,
    pub second: LearnerKind,
    pub seeds: usize,
    /// Mean of `first - second`.
    pub mean_diff: f64,
    /// `None` with fewer than two seeds or zero spread.
    pub t_stat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub learners: Vec<LearnerSummary>,
    pub comparisons: Vec<PairedComparison>,
}

pub fn mean_and_std_err(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn paired_t(diffs: &[f64]) -> Option<f64> {
    if diffs.len() < 2 {
        return None;
    }
    let (mean, se) = mean_and_std_err(diffs);
    (se > 0.0).then(|| mean / se)
}

pub fn summarize(traces: &[MetricTrace]) -> Result<Summary> {
    if traces.is_empty() {
        return Err(Error::Empty("traces"));
    }
    let mut groups: BTreeMap<LearnerKind, Vec<&MetricTrace>> = BTreeMap::new();
    for t in traces {
        groups.entry(t.learner).or_default().push(t);
    }
    let mut learners = Vec::new();
    for (learner, group) in &groups {
        let first = group[0];
        let mut metrics = BTreeMap::new();
        for (metric, series) in &first.series {
            let len = series.len();
            let mut stats = SeriesStats {
                mean: Vec::with_capacity(len),
                std_err: Vec::with_capacity(len),
            };
            let mut columns = Vec::with_capacity(group.len());
            for t in group {
                let s = t
                    .get(*metric)
                    .ok_or_else(|| Error::config(format!("{learner} seed {} lacks {metric}", t.seed)))?;
                if s.len() != len {
                    return Err(Error::Shape {
                        what: "trace length",
                        expected: len,
                        found: s.len(),
                    });
                }
                columns.push(s);
            }
            let mut at = vec![0.0; columns.len()];
            for i in 0..len {
                for (slot, col) in at.iter_mut().zip(&columns) {
                    *slot = col[i];
                }
                let (m, se) = mean_and_std_err(&at);
                stats.mean.push(m);
                stats.std_err.push(se);
            }
            metrics.insert(*metric, stats);
        }
        learners.push(LearnerSummary {
            learner: *learner,
            seeds: group.len(),
            metrics,
        });
    }

    let mut comparisons = Vec::new();
    let kinds: Vec<LearnerKind> = groups.keys().copied().collect();
    for (i, &a) in kinds.iter().enumerate() {
        for &b in &kinds[i + 1..] {
            for &metric in groups[&a][0].series.keys() {
                let finals = |k: LearnerKind| -> BTreeMap<u64, f64> {
                    groups[&k]
                        .iter()
                        .filter_map(|t| t.last(metric).map(|v| (t.seed, v)))
                        .collect()
                };
                let (fa, fb) = (finals(a), finals(b));
                let diffs: Vec<f64> = fa.iter().filter_map(|(s, va)| fb.get(s).map(|vb| va - vb)).collect();
                if diffs.is_empty() {
                    continue;
                }
                comparisons.push(PairedComparison {
                    metric,
                    first: a,
                    second: b,
                    seeds: diffs.len(),
                    mean_diff: diffs.iter().sum::<f64>() / diffs.len() as f64,
                    t_stat: paired_t(&diffs),
                });
            }
        }
    }
    Ok(Summary { learners, comparisons })
}

impl Summary {
    pub fn learner(&self, kind: LearnerKind) -> Option<&LearnerSummary> {
        self.learners.iter().find(|l| l.learner == kind)
    }

    /// Plain-text table of final values and paired comparisons.
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<10} {:<16} {:>6} {:>14} {:>12}",
            "learner", "metric", "seeds", "final mean", "std err"
        )
        .unwrap();
        for l in &self.learners {
            for (m, s) in &l.metrics {
                let last = s.mean.len().saturating_sub(1);
                writeln!(
                    out,
                    "{:<10} {:<16} {:>6} {:>14.6} {:>12.6}",
                    l.learner.name(),
                    m.name(),
                    l.seeds,
                    s.mean.get(last).copied().unwrap_or(f64::NAN),
                    s.std_err.get(last).copied().unwrap_or(f64::NAN)
                )
                .unwrap();
            }
        }
        if !self.comparisons.is_empty() {
            writeln!(out).unwrap();
            writeln!(
                out,
                "{:<20} {:<16} {:>6} {:>14} {:>10}",
                "pair", "metric", "seeds", "mean diff", "t"
            )
            .unwrap();
            for c in &self.comparisons {
                let t = c.t_stat.map_or("-".to_string(), |t| format!("{t:.3}"));
                writeln!(
                    out,
                    "{:<20} {:<16} {:>6} {:>14.6} {:>10}",
                    format!("{}-{}", c.first, c.second),
                    c.metric.name(),
                    c.seeds,
                    c.mean_diff,
                    t
                )
                .unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(learner: LearnerKind, seed: u64, d: &[f64]) -> MetricTrace {
        MetricTrace {
            learner,
            seed,
            series: [(Metric::Distance, d.to_vec())].into_iter().collect(),
        }
    }

    #[test]
    fn single_trace_has_zero_error() {
        let s = summarize(&[trace(LearnerKind::Sgd, 0, &[3.0, 2.0])]).unwrap();
        let st = &s.learners[0].metrics[&Metric::Distance];
        assert_eq!(st.mean, vec![3.0, 2.0]);
        assert_eq!(st.std_err, vec![0.0, 0.0]);
    }

    #[test]
    fn identical_traces_average_to_themselves() {
        let t = [
            trace(LearnerKind::Sgd, 0, &[1.5, 0.25]),
            trace(LearnerKind::Sgd, 1, &[1.5, 0.25]),
        ];
        let s = summarize(&t).unwrap();
        assert_eq!(s.learners[0].metrics[&Metric::Distance].mean, vec![1.5, 0.25]);
    }

    #[test]
    fn mismatched_lengths_fail() {
        let t = [
            trace(LearnerKind::Sgd, 0, &[1.0, 2.0]),
            trace(LearnerKind::Sgd, 1, &[1.0]),
        ];
        assert!(summarize(&t).is_err());
        assert!(summarize(&[]).is_err());
    }
}
