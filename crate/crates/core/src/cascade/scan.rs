use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::RecognizerModel;
use crate::raster::PlotImage;

/// Ordered recognizers sharing one image geometry and rasterization policy.
#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    recognizers: Vec<RecognizerModel>,
    side: usize,
    policy: String,
}

impl Cascade {
    pub fn new(side: usize, policy: impl Into<String>) -> Self {
        Self {
            recognizers: Vec::new(),
            side,
            policy: policy.into(),
        }
    }

    /// Appends a recognizer at the tail.
    pub fn push(&mut self, model: RecognizerModel) -> Result<()> {
        if model.side() != self.side {
            return Err(Error::Geometry {
                expected: self.side,
                got: model.side(),
            });
        }
        self.recognizers.push(model);
        Ok(())
    }

    pub fn recognizers(&self) -> &[RecognizerModel] {
        &self.recognizers
    }

    pub fn len(&self) -> usize {
        self.recognizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recognizers.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn policy(&self) -> &str {
        &self.policy
    }

    /// `"{position}:{class}"` for each recognizer.
    pub fn ids(&self) -> Vec<String> {
        self.recognizers
            .iter()
            .enumerate()
            .map(|(i, r)| format!("{i}:{}", r.class_name()))
            .collect()
    }

    /// Same cascade with recognizers in a different order.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        if order.len() != self.len() || !order.iter().all(|&i| i < self.len() && seen.insert(i)) {
            return Err(Error::Config(format!("{order:?} is not a permutation of 0..{}", self.len())));
        }
        Ok(Self {
            recognizers: order.iter().map(|&i| self.recognizers[i].clone()).collect(),
            side: self.side,
            policy: self.policy.clone(),
        })
    }

    /// Assigns each plot to the first recognizer that accepts it; plots no
    /// recognizer accepts form the residual.
    pub fn scan(&self, plots: &[(String, PlotImage)]) -> Result<ScanPartition> {
        let mut ids = BTreeSet::new();
        for (id, im) in plots {
            if im.side() != self.side {
                return Err(Error::Geometry {
                    expected: self.side,
                    got: im.side(),
                });
            }
            if !ids.insert(id.as_str()) {
                return Err(Error::Conflict(format!("plot id {id} appears twice")));
            }
        }
        let mut remaining: Vec<usize> = (0..plots.len()).collect();
        let mut buckets = Vec::with_capacity(self.len());
        let mut scores: BTreeMap<String, PlotScore> = BTreeMap::new();
        for (r, model) in self.recognizers.iter().enumerate() {
            let images: Vec<&PlotImage> = remaining.iter().map(|&i| &plots[i].1).collect();
            let s = model.scores(&images)?;
            let mut bucket = Vec::new();
            let mut rest = Vec::with_capacity(remaining.len());
            for (&i, &score) in remaining.iter().zip(&s) {
                let id = &plots[i].0;
                let entry = scores.entry(id.clone()).or_insert(PlotScore {
                    bucket: None,
                    score,
                });
                if score > model.tau() {
                    entry.bucket = Some(r);
                    entry.score = score;
                    bucket.push(id.clone());
                } else {
                    entry.score = entry.score.max(score);
                    rest.push(i);
                }
            }
            bucket.sort();
            buckets.push(bucket);
            remaining = rest;
        }
        let mut residual: Vec<String> = remaining.iter().map(|&i| plots[i].0.clone()).collect();
        residual.sort();
        Ok(ScanPartition {
            recognizers: self.ids(),
            buckets,
            residual,
            scores,
        })
    }
}

/// Winning recognizer and score of one plot; residual plots keep their
/// highest score (absent when the cascade is empty).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotScore {
    pub bucket: Option<usize>,
    pub score: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPartition {
    pub recognizers: Vec<String>,
    /// Accepted plot ids per recognizer, sorted.
    pub buckets: Vec<Vec<String>>,
    /// Plot ids no recognizer accepted, sorted.
    pub residual: Vec<String>,
    pub scores: BTreeMap<String, PlotScore>,
}

impl ScanPartition {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum::<usize>() + self.residual.len()
    }

    /// Fraction of plots covered by the first `k` recognizers, for k = 0..=len.
    pub fn prefix_coverage(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        let mut acc = 0;
        std::iter::once(0.0)
            .chain(self.buckets.iter().map(|b| {
                acc += b.len();
                acc as f64 / total
            }))
            .collect()
    }

    /// Checks that buckets and residual are disjoint and cover `ids` exactly.
    pub fn is_partition_of<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> bool {
        let expected: BTreeSet<&str> = ids.into_iter().collect();
        let mut seen = BTreeSet::new();
        for id in self.buckets.iter().flatten().chain(&self.residual) {
            if !seen.insert(id.as_str()) {
                return false;
            }
        }
        seen == expected
    }

    /// Bucket index of `id` (`None` for residual), or an error for unknown ids.
    pub fn bucket_of(&self, id: &str) -> Result<Option<usize>> {
        if let Some(b) = self.buckets.iter().position(|b| b.binary_search_by(|x| x.as_str().cmp(id)).is_ok()) {
            return Ok(Some(b));
        }
        if self.residual.binary_search_by(|x| x.as_str().cmp(id)).is_ok() {
            return Ok(None);
        }
        Err(Error::Unknown {
            what: "plot",
            name: id.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognizerEval {
    pub recognizer: String,
    pub class_name: String,
    pub accepted: usize,
    /// `None` when the bucket is empty.
    pub precision: Option<f64>,
    /// `None` when the class does not occur.
    pub recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recognizers: Vec<RecognizerEval>,
    pub residual: usize,
    /// Fraction of novel-class plots left in the residual; `None` without
    /// novel plots.
    pub residual_novelty_recall: Option<f64>,
    /// Coverage after each cascade prefix, starting with the empty prefix.
    pub prefix_coverage: Vec<f64>,
}

/// Scores a partition against ground-truth class labels. Recognizer `i`
/// targets the class it was trained on.
pub fn evaluate(
    partition: &ScanPartition,
    class_of: &[&str],
    truth: &BTreeMap<String, String>,
    novel: &BTreeSet<String>,
) -> Result<EvalReport> {
    if class_of.len() != partition.buckets.len() {
        return Err(Error::Config(format!(
            "{} class names for {} buckets",
            class_of.len(),
            partition.buckets.len()
        )));
    }
    let label = |id: &String| {
        truth.get(id).map(String::as_str).ok_or_else(|| Error::Unknown {
            what: "ground-truth label for plot",
            name: id.clone(),
        })
    };
    let mut class_totals: BTreeMap<&str, usize> = BTreeMap::new();
    for id in partition.buckets.iter().flatten().chain(&partition.residual) {
        *class_totals.entry(label(id)?).or_default() += 1;
    }
    let recognizers = partition
        .buckets
        .iter()
        .zip(class_of)
        .zip(&partition.recognizers)
        .map(|((bucket, class), rid)| {
            let hits = bucket.iter().filter(|id| truth[*id] == *class).count();
            RecognizerEval {
                recognizer: rid.clone(),
                class_name: class.to_string(),
                accepted: bucket.len(),
                precision: (!bucket.is_empty()).then(|| hits as f64 / bucket.len() as f64),
                recall: class_totals.get(class).map(|&t| hits as f64 / t as f64),
            }
        })
        .collect();
    let novel_total: usize = class_totals.iter().filter(|(c, _)| novel.contains(**c)).map(|(_, n)| n).sum();
    let novel_residual = partition.residual.iter().filter(|id| novel.contains(&truth[*id])).count();
    Ok(EvalReport {
        recognizers,
        residual: partition.residual.len(),
        residual_novelty_recall: (novel_total > 0).then(|| novel_residual as f64 / novel_total as f64),
        prefix_coverage: partition.prefix_coverage(),
    })
}
