use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower bound in words.
    pub lo: usize,
    /// Exclusive upper bound in words.
    pub hi: usize,
    pub count: usize,
}

/// Word-count summary. `std` is the sample standard deviation (n - 1),
/// quartiles use linear interpolation between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: usize,
    pub total_words: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub std: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub bin_width: usize,
    pub group_by: Option<String>,
    pub overall: LengthStats,
    pub groups: BTreeMap<String, LengthStats>,
}

fn quantile(sorted: &[usize], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] as f64 + (h - lo as f64) * (sorted[hi] as f64 - sorted[lo] as f64)
}

fn length_stats(mut lengths: Vec<usize>, bin_width: usize) -> LengthStats {
    lengths.sort_unstable();
    let n = lengths.len();
    let total: usize = lengths.iter().sum();
    let mean = total as f64 / n as f64;
    let ss: f64 = lengths.iter().map(|&x| (x as f64 - mean).powi(2)).sum();
    let std = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
    let min = lengths[0];
    let max = lengths[n - 1];
    let first = min / bin_width * bin_width;
    let n_bins = (max - first) / bin_width + 1;
    let mut histogram: Vec<HistogramBin> = (0..n_bins)
        .map(|i| HistogramBin {
            lo: first + i * bin_width,
            hi: first + (i + 1) * bin_width,
            count: 0,
        })
        .collect();
    for &x in &lengths {
        histogram[(x - first) / bin_width].count += 1;
    }
    LengthStats {
        count: n,
        total_words: total,
        min,
        max,
        mean,
        std,
        q1: quantile(&lengths, 0.25),
        median: quantile(&lengths, 0.5),
        q3: quantile(&lengths, 0.75),
        histogram,
    }
}

/// Word-length statistics for the whole corpus and, optionally, per value
/// of a metadata key.
pub fn stats(corpus: &Corpus, group_by: Option<&str>, bin_width: usize) -> Result<StatsReport> {
    if corpus.is_empty() {
        return Err(Error::data("cannot compute statistics of an empty corpus"));
    }
    if bin_width == 0 {
        return Err(Error::config("histogram bin width must be at least 1"));
    }
    let mut grouped: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    if let Some(key) = group_by {
        for s in corpus.sentences() {
            let value = s.meta.get(key).ok_or_else(|| {
                Error::data(format!("sentence `{}` has no metadata key `{key}`", s.id))
            })?;
            grouped.entry(value.clone()).or_default().push(s.word_count());
        }
    }
    let overall = corpus.sentences().iter().map(|s| s.word_count()).collect();
    Ok(StatsReport {
        bin_width,
        group_by: group_by.map(str::to_string),
        overall: length_stats(overall, bin_width),
        groups: grouped
            .into_iter()
            .map(|(k, v)| (k, length_stats(v, bin_width)))
            .collect(),
    })
}
