use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::average_ranks;
use super::dist::normal_sf;
use crate::error::{Error, Result};

/// Largest sample for which `Auto` enumerates all sign assignments.
pub const EXACT_LIMIT: usize = 15;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMode {
    /// Exact up to [`EXACT_LIMIT`] non-zero differences, normal beyond.
    #[default]
    Auto,
    Exact,
    NormalApprox,
}

impl FromStr for WilcoxonMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(WilcoxonMode::Auto),
            "exact" => Ok(WilcoxonMode::Exact),
            "normal-approx" => Ok(WilcoxonMode::NormalApprox),
            _ => Err(Error::config(format!("unknown Wilcoxon mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// `x` tends to exceed `y`.
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)` for two-sided tests, `W+` otherwise.
    pub statistic: f64,
    pub p: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub exact: bool,
    pub note: Option<String>,
}

/// Signed-rank test of `x - y`. Zero differences are dropped before
/// ranking; tied magnitudes share their average rank.
pub fn wilcoxon(x: &[f64], y: &[f64], mode: WilcoxonMode, alternative: Alternative) -> Result<WilcoxonResult> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::data(format!(
            "Wilcoxon needs two non-empty lists of equal length, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p: 1.0,
            n: 0,
            exact: true,
            note: Some("all differences are zero".into()),
        });
    }
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let exact = match mode {
        WilcoxonMode::Auto => n <= EXACT_LIMIT,
        WilcoxonMode::Exact => true,
        WilcoxonMode::NormalApprox => false,
    };
    let (upper, lower) = if exact {
        exact_tails(&ranks, w_plus)
    } else {
        let mean = total / 2.0;
        let ties: f64 = tie_sizes(&ranks).map(|t| t * t * t - t).sum();
        let var = (n * (n + 1) * (2 * n + 1)) as f64 / 24.0 - ties / 48.0;
        let z = (w_plus - mean) / var.sqrt();
        (normal_sf(z), normal_sf(-z))
    };
    let p = match alternative {
        Alternative::TwoSided => (2.0 * upper.min(lower)).min(1.0),
        Alternative::Greater => upper,
        Alternative::Less => lower,
    };
    Ok(WilcoxonResult {
        statistic: match alternative {
            Alternative::TwoSided => w_plus.min(w_minus),
            _ => w_plus,
        },
        p,
        n,
        exact,
        note: None,
    })
}

fn tie_sizes(ranks: &[f64]) -> impl Iterator<Item = f64> {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|r| **r == sorted[i]).count();
        sizes.push(j as f64);
        i += j;
    }
    sizes.into_iter()
}

/// `P(W+ >= w)` and `P(W+ <= w)` over all `2^n` equally likely sign
/// assignments. Ranks are doubled so that average ranks stay integral.
fn exact_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
    let target = (2.0 * w_plus).round() as u64;
    let n = ranks.len();
    let (mut ge, mut le) = (0u64, 0u64);
    for mask in 0u64..1 << n {
        let mut s = 0;
        for (i, r) in doubled.iter().enumerate() {
            if mask >> i & 1 == 1 {
                s += r;
            }
        }
        ge += (s >= target) as u64;
        le += (s <= target) as u64;
    }
    let all = (1u64 << n) as f64;
    (ge as f64 / all, le as f64 / all)
}
