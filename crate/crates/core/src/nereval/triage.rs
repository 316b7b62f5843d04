//! Classification of generated sentences that differ from their target.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use super::similarity::similarity_ratio;
use crate::tagcodec::plain_words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Critical,
    NonCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reason {
    NumericAlteration,
    WordChange,
    Repetition,
    FormattingOnly,
}

impl Reason {
    pub fn is_critical(self) -> bool {
        !matches!(self, Reason::FormattingOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriage {
    pub sentence_id: String,
    pub severity: Severity,
    pub reasons: BTreeSet<Reason>,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriageConfig {
    /// Shortest n-gram (in words) counted as a repetition.
    pub min_repeat_ngram: usize,
}

impl Default for TriageConfig {
    fn default() -> Self {
        TriageConfig { min_repeat_ngram: 4 }
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:[.,]\d+)*(\s?%)?").expect("valid"))
}

/// Canonical form of a number written with `.` thousands and `,` decimal
/// separators: `1.000,50` and `1000,5` are equal, `824,00` and `8924,00` are
/// not.
fn canonical_number(raw: &str) -> String {
    let percent = raw.ends_with('%');
    let digits = raw.trim_end_matches('%').trim_end();
    let (int, frac) = match digits.rfind(',') {
        Some(k) => (&digits[..k], &digits[k + 1..]),
        None => (digits, ""),
    };
    let int: String = int.chars().filter(char::is_ascii_digit).collect();
    let int = int.trim_start_matches('0');
    let frac = frac.trim_end_matches('0');
    let mut out = if int.is_empty() { "0".to_string() } else { int.to_string() };
    if !frac.is_empty() {
        out.push('.');
        out.push_str(frac);
    }
    if percent {
        out.push('%');
    }
    out
}

fn numbers(words: &[String]) -> Vec<String> {
    let text = words.join(" ");
    let mut out: Vec<String> = number_re().find_iter(&text).map(|m| canonical_number(m.as_str())).collect();
    out.sort();
    out
}

/// Lowercase, accent-free, letters only; digits are left to the numeric
/// check. Words with no letters disappear.
fn normalized_words(words: &[String]) -> Vec<String> {
    words
        .iter()
        .flat_map(|w| w.split('_'))
        .map(|w| {
            w.nfd()
                .filter(|c| !is_combining_mark(*c))
                .flat_map(char::to_lowercase)
                .filter(|c| c.is_alphabetic())
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Largest number of back-to-back copies of each n-gram with `n >= min_n`
/// that occurs at least twice in a row.
fn consecutive_repeats(words: &[String], min_n: usize) -> HashMap<&[String], usize> {
    let mut out: HashMap<&[String], usize> = HashMap::new();
    let min_n = min_n.max(1);
    for n in min_n..=words.len() / 2 {
        let mut i = 0;
        while i + 2 * n <= words.len() {
            let gram = &words[i..i + n];
            let mut copies = 1;
            while i + (copies + 1) * n <= words.len() && &words[i + copies * n..i + (copies + 1) * n] == gram {
                copies += 1;
            }
            if copies > 1 {
                let e = out.entry(gram).or_insert(0);
                *e = (*e).max(copies);
            }
            i += 1;
        }
    }
    out
}

fn copies_in(words: &[String], gram: &[String]) -> usize {
    let n = gram.len();
    let mut best = 0;
    for i in 0..words.len().saturating_sub(n - 1) {
        let mut copies = 0;
        while i + (copies + 1) * n <= words.len() && &words[i + copies * n..i + (copies + 1) * n] == gram {
            copies += 1;
        }
        best = best.max(copies);
    }
    best
}

/// Drops every back-to-back copy of a repeated n-gram, keeping one.
fn collapse_repeats(words: &[String], min_n: usize) -> Vec<String> {
    let mut out: Vec<String> = words.to_vec();
    loop {
        let mut changed = false;
        'scan: for n in min_n.max(1)..=out.len() / 2 {
            for i in 0..=out.len() - 2 * n {
                if out[i..i + n] == out[i + n..i + 2 * n] {
                    out.drain(i + n..i + 2 * n);
                    changed = true;
                    break 'scan;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Triage of one target/generated pair in bracketed generation format.
/// Identical strings yield `None`.
///
/// * numeric-alteration: the multisets of numbers differ;
/// * repetition: some n-gram of at least `min_repeat_ngram` words is
///   repeated back to back more often than in the target;
/// * word-change: the letter-only, lowercased, accent-free words still
///   differ once repeats are collapsed;
/// * formatting-only: none of the above.
///
/// Entity labels are ignored; label changes are scored by the MUC tally.
pub fn triage_generation(sentence_id: &str, target: &str, generated: &str, config: &TriageConfig) -> Option<ErrorTriage> {
    if target == generated {
        return None;
    }
    let (tw, gw) = (plain_words(target), plain_words(generated));
    let mut reasons = BTreeSet::new();
    if numbers(&tw) != numbers(&gw) {
        reasons.insert(Reason::NumericAlteration);
    }
    let (tn, gn) = (normalized_words(&tw), normalized_words(&gw));
    let raw_target: Vec<String> = tw.iter().map(|w| w.to_lowercase()).collect();
    let raw_generated: Vec<String> = gw.iter().map(|w| w.to_lowercase()).collect();
    let repeated = consecutive_repeats(&raw_generated, config.min_repeat_ngram)
        .into_iter()
        .any(|(gram, copies)| copies > copies_in(&raw_target, gram))
        || consecutive_repeats(&gn, config.min_repeat_ngram)
            .into_iter()
            .any(|(gram, copies)| copies > copies_in(&tn, gram));
    if repeated {
        reasons.insert(Reason::Repetition);
    }
    if collapse_repeats(&tn, config.min_repeat_ngram) != collapse_repeats(&gn, config.min_repeat_ngram) {
        reasons.insert(Reason::WordChange);
    }
    if reasons.is_empty() {
        reasons.insert(Reason::FormattingOnly);
    }
    let severity = if reasons.iter().any(|r| r.is_critical()) {
        Severity::Critical
    } else {
        Severity::NonCritical
    };
    Some(ErrorTriage {
        sentence_id: sentence_id.to_string(),
        severity,
        reasons,
        similarity: similarity_ratio(target, generated),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageSummary {
    pub evaluated: usize,
    pub with_errors: usize,
    pub critical: usize,
    pub non_critical: usize,
    /// Share of the evaluated sentences with any error, in percent.
    pub error_percent: Option<f64>,
    pub critical_histogram: Vec<HistogramBin>,
    pub non_critical_histogram: Vec<HistogramBin>,
}

/// Equal-width bins over `[0, 1]`; the last bin includes 1.
pub fn similarity_histogram(values: impl IntoIterator<Item = f64>, bins: usize) -> Vec<HistogramBin> {
    let bins = bins.max(1);
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            lower: k as f64 / bins as f64,
            upper: (k + 1) as f64 / bins as f64,
            count: 0,
        })
        .collect();
    for v in values {
        let k = ((v.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1);
        out[k].count += 1;
    }
    out
}

/// Severity counts over `evaluated` sentences and similarity histograms
/// per severity.
pub fn triage_summary(triages: &[ErrorTriage], evaluated: usize, bins: usize) -> TriageSummary {
    let of = |s: Severity| triages.iter().filter(move |t| t.severity == s);
    TriageSummary {
        evaluated,
        with_errors: triages.len(),
        critical: of(Severity::Critical).count(),
        non_critical: of(Severity::NonCritical).count(),
        error_percent: (evaluated > 0).then(|| 100.0 * triages.len() as f64 / evaluated as f64),
        critical_histogram: similarity_histogram(of(Severity::Critical).map(|t| t.similarity), bins),
        non_critical_histogram: similarity_histogram(of(Severity::NonCritical).map(|t| t.similarity), bins),
    }
}
