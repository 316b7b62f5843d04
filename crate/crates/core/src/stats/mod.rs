//! Comparing k models over N evaluation subsets: Friedman with chi-square
//! and F statistics, Nemenyi post-hoc, and pairwise Wilcoxon signed-rank.

pub mod dist;
mod wilcoxon;

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use dist::{chi2_sf, f_sf, studentized_range_quantile, studentized_range_sf};

pub use wilcoxon::{wilcoxon, Alternative, WilcoxonMode, WilcoxonResult};

/// Metric values, one row per subset and one column per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub models: Vec<String>,
    pub subsets: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub higher_is_better: bool,
}

impl ScoreMatrix {
    pub fn new(models: Vec<String>, subsets: Vec<String>, values: Vec<Vec<f64>>, higher_is_better: bool) -> Result<Self> {
        if models.len() < 2 || subsets.len() < 2 {
            return Err(Error::data(format!(
                "need at least 2 models and 2 subsets, got {} and {}",
                models.len(),
                subsets.len()
            )));
        }
        if values.len() != subsets.len() {
            return Err(Error::data(format!("{} subsets but {} rows", subsets.len(), values.len())));
        }
        for (row, id) in values.iter().zip(&subsets) {
            if row.len() != models.len() {
                return Err(Error::data(format!(
                    "subset `{id}`: {} values for {} models",
                    row.len(),
                    models.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::data(format!("subset `{id}`: non-finite value {v}")));
            }
        }
        Ok(ScoreMatrix {
            models,
            subsets,
            values,
            higher_is_better,
        })
    }

    /// Reads a CSV whose first column names the subset and whose other
    /// columns hold one model each.
    pub fn from_csv(path: &Path, higher_is_better: bool) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::data(format!("{}: {other:?}", path.display())),
        })?;
        let models: Vec<String> = reader.headers()?.iter().skip(1).map(|h| h.trim().to_string()).collect();
        let name = path.display().to_string();
        let mut subsets = Vec::new();
        let mut values = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let bad = |message: String| Error::Record {
                source_name: name.clone(),
                record: i + 1,
                message,
            };
            subsets.push(record.get(0).unwrap_or_default().trim().to_string());
            let row = record
                .iter()
                .skip(1)
                .map(|c| c.trim().parse::<f64>().map_err(|e| bad(format!("`{c}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            values.push(row);
        }
        ScoreMatrix::new(models, subsets, values, higher_is_better)
    }

    pub fn k(&self) -> usize {
        self.models.len()
    }

    pub fn n(&self) -> usize {
        self.subsets.len()
    }

    /// Per-subset ranks, 1 for the best model, ties sharing their average
    /// rank.
    pub fn ranks(&self) -> Vec<Vec<f64>> {
        self.values
            .iter()
            .map(|row| {
                let oriented: Vec<f64> = if self.higher_is_better {
                    row.iter().map(|v| -v).collect()
                } else {
                    row.clone()
                };
                average_ranks(&oriented)
            })
            .collect()
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        let ranks = self.ranks();
        (0..self.k())
            .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / self.n() as f64)
            .collect()
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }
}

/// Ranks in ascending order starting at 1; ties get the mean of the ranks
/// they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Degrees of freedom for the F statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FDegrees {
    /// `(k-1, (k-1)(N-1))`.
    #[default]
    ImanDavenport,
    /// `(k-1-2/N, (N-1)(k-1-2/N))`, as pingouin computes it.
    Fractional,
}

impl FromStr for FDegrees {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iman-davenport" => Ok(FDegrees::ImanDavenport),
            "fractional" => Ok(FDegrees::Fractional),
            _ => Err(Error::config(format!("unknown F degrees of freedom `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub q: f64,
    pub p_q: f64,
    /// Infinite when the rankings agree perfectly.
    pub f: f64,
    pub p_f: f64,
    pub df_f: (f64, f64),
    pub mean_ranks: Vec<f64>,
    pub alpha: f64,
    pub reject: bool,
    pub note: Option<String>,
}

pub fn friedman(m: &ScoreMatrix, alpha: f64, degrees: FDegrees) -> FriedmanResult {
    let (k, n) = (m.k() as f64, m.n() as f64);
    let mean_ranks = m.mean_ranks();
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let q = (12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0).powi(2) / 4.0)).max(0.0);
    let p_q = chi2_sf(q, k - 1.0);
    let d1 = match degrees {
        FDegrees::ImanDavenport => k - 1.0,
        FDegrees::Fractional => k - 1.0 - 2.0 / n,
    };
    let df_f = (d1, (n - 1.0) * d1);
    let denom = n * (k - 1.0) - q;
    let (f, p_f, note) = if denom <= 1e-12 * n * k {
        (
            f64::INFINITY,
            0.0,
            Some("rankings agree on every subset: F is infinite and its p-value is the limit 0".to_string()),
        )
    } else {
        let f = (n - 1.0) * q / denom;
        (f, f_sf(f, df_f.0, df_f.1), None)
    };
    FriedmanResult {
        q,
        p_q,
        f,
        p_f,
        df_f,
        mean_ranks,
        alpha,
        reject: p_q.min(p_f) < alpha,
        note,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemenyiPair {
    pub a: String,
    pub b: String,
    pub rank_difference: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub models: Vec<String>,
    pub mean_ranks: Vec<f64>,
    /// Symmetric, with ones on the diagonal.
    pub p_values: Vec<Vec<f64>>,
    pub alpha: f64,
    /// Studentized range critical value at `alpha`.
    pub q_alpha: f64,
    pub critical_difference: f64,
    pub significant: Vec<NemenyiPair>,
}

/// Pairwise p-values from mean-rank differences scaled by
/// `sqrt(k(k+1)/(6N))` and referred to the studentized range with
/// infinite degrees of freedom.
pub fn nemenyi(m: &ScoreMatrix, alpha: f64) -> NemenyiResult {
    let (k, n) = (m.k(), m.n() as f64);
    let se = (k as f64 * (k as f64 + 1.0) / (6.0 * n)).sqrt();
    let mean_ranks = m.mean_ranks();
    let mut p_values = vec![vec![1.0; k]; k];
    let mut significant = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let diff = (mean_ranks[i] - mean_ranks[j]).abs();
            let p = studentized_range_sf(diff / se * std::f64::consts::SQRT_2, k);
            p_values[i][j] = p;
            p_values[j][i] = p;
            if p < alpha {
                significant.push(NemenyiPair {
                    a: m.models[i].clone(),
                    b: m.models[j].clone(),
                    rank_difference: diff,
                    p,
                });
            }
        }
    }
    let q_alpha = studentized_range_quantile(alpha, k);
    NemenyiResult {
        models: m.models.clone(),
        mean_ranks,
        p_values,
        alpha,
        q_alpha,
        critical_difference: q_alpha / std::f64::consts::SQRT_2 * se,
        significant,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonPair {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub result: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub alpha: f64,
    pub f_degrees: FDegrees,
    pub wilcoxon_mode: WilcoxonMode,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            alpha: 0.05,
            f_degrees: FDegrees::ImanDavenport,
            wilcoxon_mode: WilcoxonMode::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub metric: String,
    pub models: Vec<String>,
    pub subsets: usize,
    pub friedman: FriedmanResult,
    pub nemenyi: NemenyiResult,
    pub wilcoxon_pairs: Vec<WilcoxonPair>,
}

pub fn compare(metric: &str, m: &ScoreMatrix, config: &CompareConfig) -> CompareReport {
    let mut wilcoxon_pairs = Vec::new();
    for i in 0..m.k() {
        for j in i + 1..m.k() {
            wilcoxon_pairs.push(WilcoxonPair {
                a: m.models[i].clone(),
                b: m.models[j].clone(),
                result: wilcoxon(&m.column(i), &m.column(j), config.wilcoxon_mode, Alternative::TwoSided)
                    .expect("columns have equal length"),
            });
        }
    }
    CompareReport {
        metric: metric.to_string(),
        models: m.models.clone(),
        subsets: m.n(),
        friedman: friedman(m, config.alpha, config.f_degrees),
        nemenyi: nemenyi(m, config.alpha),
        wilcoxon_pairs,
    }
}

fn p_fmt(p: f64) -> String {
    if p < 0.001 {
        format!("{p:.6}")
    } else {
        format!("{p:.4}")
    }
}

impl CompareReport {
    pub fn to_markdown(&self) -> String {
        let f = &self.friedman;
        let mut out = format!("## {}\n\n", self.metric);
        let _ = writeln!(
            out,
            "Friedman over {} subsets: Q = {:.2}, p-value = {}; F = {:.2}, p-value = {}. {} at alpha = {}.",
            self.subsets,
            f.q,
            p_fmt(f.p_q),
            f.f,
            p_fmt(f.p_f),
            if f.reject { "Significant" } else { "Not significant" },
            f.alpha
        );
        if let Some(note) = &f.note {
            let _ = writeln!(out, "\nNote: {note}.");
        }
        out.push_str("\n| Model | Mean rank |\n|---|---:|\n");
        for (m, r) in self.models.iter().zip(&f.mean_ranks) {
            let _ = writeln!(out, "| {m} | {r:.2} |");
        }
        let nm = &self.nemenyi;
        let _ = writeln!(
            out,
            "\nNemenyi: critical difference {:.4} (q = {:.3}).",
            nm.critical_difference, nm.q_alpha
        );
        if nm.significant.is_empty() {
            out.push_str("No pair differs significantly.\n");
        }
        for s in &nm.significant {
            let _ = writeln!(out, "- between {} and {} (p-value = {})", s.a, s.b, p_fmt(s.p));
        }
        out.push_str("\n| Pair | W | n | p-value |\n|---|---:|---:|---:|\n");
        for w in &self.wilcoxon_pairs {
            let _ = writeln!(
                out,
                "| {} vs {} | {} | {} | {} |",
                w.a,
                w.b,
                w.result.statistic,
                w.result.n,
                p_fmt(w.result.p)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(rows: &[&[f64]]) -> ScoreMatrix {
        let k = rows[0].len();
        ScoreMatrix::new(
            (0..k).map(|j| format!("m{j}")).collect(),
            (0..rows.len()).map(|i| format!("s{i}")).collect(),
            rows.iter().map(|r| r.to_vec()).collect(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn identical_models_have_no_difference() {
        let m = matrix(&[&[0.9, 0.9, 0.9], &[0.8, 0.8, 0.8], &[0.7, 0.7, 0.7]]);
        let f = friedman(&m, 0.05, FDegrees::ImanDavenport);
        assert_eq!(f.mean_ranks, [2.0, 2.0, 2.0]);
        assert_eq!((f.q, f.p_q), (0.0, 1.0));
        assert!(!f.reject);
        let n = nemenyi(&m, 0.05);
        assert!(n.p_values.iter().flatten().all(|p| *p == 1.0));
    }

    #[test]
    fn perfect_ranking_closed_form() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![0.99 - i as f64 * 0.001, 0.9, 0.8, 0.7]).collect();
        let m = ScoreMatrix::new(
            ["a", "b", "c", "d"].map(String::from).to_vec(),
            (0..5).map(|i| i.to_string()).collect(),
            rows,
            true,
        )
        .unwrap();
        let f = friedman(&m, 0.05, FDegrees::ImanDavenport);
        let sum_sq: f64 = f.mean_ranks.iter().map(|r| r * r).sum();
        assert_eq!(sum_sq, 30.0);
        let closed = 12.0 * 5.0 / (4.0 * 5.0) * (30.0 - 4.0 * 25.0 / 4.0);
        assert_eq!(closed, 15.0);
        assert!((f.q - 15.0).abs() < 1e-12);
        assert!(f.p_q < 0.01);
        assert!(f.f.is_infinite() && f.p_f == 0.0 && f.note.is_some());
    }

    #[test]
    fn scipy_friedman_value() {
        let m = matrix(&[
            &[0.99, 0.98, 0.97, 0.96],
            &[0.985, 0.99, 0.96, 0.97],
            &[0.97, 0.975, 0.965, 0.96],
            &[0.99, 0.97, 0.98, 0.95],
            &[0.98, 0.98, 0.96, 0.97],
        ]);
        let f = friedman(&m, 0.05, FDegrees::ImanDavenport);
        // scipy applies a tie correction; this subset has one tie (row 5).
        let tie_factor = 1.0 - (2.0f64.powi(3) - 2.0) / (5.0 * (64.0 - 4.0));
        assert!((f.q / tie_factor - 10.224489795918364).abs() < 1e-9);
    }

    #[test]
    fn reported_test_statistics_reproduce_reported_p_values() {
        // (Q, p_Q) and (F, p_F) pairs for k = 4 models over N = 5 subsets.
        let chi = |q: f64| chi2_sf(q, 3.0);
        assert_eq!(format!("{:.2}", chi(8.28)), "0.04");
        assert_eq!(format!("{:.3}", chi(12.12)), "0.007");
        assert_eq!(format!("{:.3}", chi(12.84)), "0.005");
        // Q = 7.70 is itself rounded; the unrounded statistic gave 0.0527.
        assert!((chi(7.70) - 0.0527).abs() < 2e-4);
        let frac = |f: f64| f_sf(f, 3.0 - 0.4, 4.0 * 2.6);
        assert_eq!(format!("{:.6}", frac(16.83)), "0.000337");
        assert_eq!(format!("{:.6}", frac(23.78)), "0.000077");
        assert_eq!(format!("{:.3}", frac(4.21)), "0.038");
        // F from Q with the Iman-Davenport formula.
        let f_of = |q: f64| 4.0 * q / (15.0 - q);
        assert_eq!(format!("{:.2}", f_of(12.12)), "16.83");
        assert_eq!(format!("{:.2}", f_of(12.84)), "23.78");
    }

    #[test]
    fn nemenyi_reported_pairwise_values() {
        // Mean-rank gaps at k = 4, N = 5 that give the reported p-values.
        let se = (4.0 * 5.0 / 30.0f64).sqrt();
        let p = |d: f64| studentized_range_sf(d / se * std::f64::consts::SQRT_2, 4);
        assert_eq!(format!("{:.3}", p(2.2)), "0.036");
        assert_eq!(format!("{:.3}", p(2.0)), "0.068");
        assert_eq!(format!("{:.3}", p(2.8)), "0.003");
    }

    #[test]
    fn nemenyi_extreme_pair_and_cd() {
        let rows: Vec<Vec<f64>> = (0..5).map(|_| vec![4.0, 3.0, 2.0, 1.0]).collect();
        let m = ScoreMatrix::new(
            ["A", "B", "C", "D"].map(String::from).to_vec(),
            (0..5).map(|i| i.to_string()).collect(),
            rows,
            true,
        )
        .unwrap();
        let n = nemenyi(&m, 0.05);
        assert!((n.q_alpha - 3.633).abs() < 0.01);
        let se = (4.0 * 5.0 / 30.0f64).sqrt();
        assert!((n.critical_difference - 3.633 / 2f64.sqrt() * se).abs() < 0.01);
        let min = n.p_values.iter().flatten().cloned().fold(1.0, f64::min);
        assert_eq!(min, n.p_values[0][3]);
        assert_eq!(n.significant.len(), 1);
        assert_eq!((n.significant[0].a.as_str(), n.significant[0].b.as_str()), ("A", "D"));
        let md = compare("precision", &m, &CompareConfig::default()).to_markdown();
        assert!(md.contains("- between A and D (p-value = "), "{md}");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f1.csv");
        std::fs::write(&path, "subset,BERTimbau,PTT5\n1,0.99,0.98\n2,0.97,0.985\n").unwrap();
        let m = ScoreMatrix::from_csv(&path, true).unwrap();
        assert_eq!(m.models, ["BERTimbau", "PTT5"]);
        assert_eq!(m.values[1], [0.97, 0.985]);
        std::fs::write(&path, "subset,a,b\n1,0.9,x\n2,1,1\n").unwrap();
        assert!(ScoreMatrix::from_csv(&path, true).is_err());
        std::fs::write(&path, "subset,a,b\n1,0.9,0.8\n").unwrap();
        assert!(ScoreMatrix::from_csv(&path, true).is_err());
    }

    fn matrices() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
        (2usize..6, 2usize..8).prop_flat_map(|(k, n)| {
            (
                prop::collection::vec(prop::collection::vec((0u8..6).prop_map(f64::from), k), n),
                Just(k),
            )
        })
    }

    proptest! {
        #[test]
        fn rank_rows_sum_and_permutation_invariance((rows, k) in matrices(), shift in 0usize..5) {
            let m = ScoreMatrix::new(
                (0..k).map(|j| format!("m{j}")).collect(),
                (0..rows.len()).map(|i| format!("s{i}")).collect(),
                rows.clone(),
                true,
            ).unwrap();
            for r in m.ranks() {
                prop_assert!((r.iter().sum::<f64>() - (k * (k + 1)) as f64 / 2.0).abs() < 1e-9);
            }
            let f = friedman(&m, 0.05, FDegrees::ImanDavenport);
            prop_assert!(f.q >= 0.0);
            let perm: Vec<usize> = (0..k).map(|j| (j + shift) % k).collect();
            let permuted = ScoreMatrix::new(
                perm.iter().map(|j| format!("m{j}")).collect(),
                m.subsets.clone(),
                rows.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect(),
                true,
            ).unwrap();
            let g = friedman(&permuted, 0.05, FDegrees::ImanDavenport);
            prop_assert!((f.q - g.q).abs() < 1e-9);
            prop_assert!((f.p_q - g.p_q).abs() < 1e-12);
            for (a, &j) in g.mean_ranks.iter().zip(&perm) {
                prop_assert!((a - f.mean_ranks[j]).abs() < 1e-12);
            }
            let nm = nemenyi(&m, 0.05);
            for i in 0..k {
                prop_assert_eq!(nm.p_values[i][i], 1.0);
                for j in 0..k {
                    prop_assert_eq!(nm.p_values[i][j], nm.p_values[j][i]);
                    for l in 0..k {
                        let (dij, dil) = ((f.mean_ranks[i] - f.mean_ranks[j]).abs(), (f.mean_ranks[i] - f.mean_ranks[l]).abs());
                        if dij > dil + 1e-12 {
                            prop_assert!(nm.p_values[i][j] <= nm.p_values[i][l] + 1e-12);
                        }
                    }
                }
            }
        }
    }
}
