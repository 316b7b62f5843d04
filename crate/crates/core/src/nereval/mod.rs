//! Scoring predictions against gold: token-level P/R/F1, MUC-5 categories
//! with manual overrides, generation error triage and similarity ratios.

mod align;
mod muc;
mod prf;
mod similarity;
mod triage;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagcodec::{decode_seq, Diagnostic, Tag, TagScheme, TaggedSentence};

pub use align::{align_for_muc, pair_sentences, AlignedPair};
pub use muc::{
    apply_overrides, categorize_token, load_overrides, muc_categorize, muc_events, muc_metrics, verification_csv,
    Counts, MucCategory, MucEvent, MucMetrics, MucTally, OverrideOutcome, OverrideRecord, Verdict, VerdictCounts,
};
pub use prf::{prf_report, AverageScores, ClassScores, PrfReport};
pub use similarity::{matched_chars, similarity_ratio};
pub use triage::{
    similarity_histogram, triage_generation, triage_summary, ErrorTriage, HistogramBin, Reason, Severity,
    TriageConfig, TriageSummary,
};

/// Whether `B-X` and `I-X` count as the same tag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareMode {
    #[default]
    LabelOnly,
    StrictBio,
}

impl CompareMode {
    pub fn same(self, a: &Tag, b: &Tag) -> bool {
        match self {
            CompareMode::LabelOnly => a.label() == b.label(),
            CompareMode::StrictBio => a == b,
        }
    }
}

impl fmt::Display for CompareMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompareMode::LabelOnly => "label-only",
            CompareMode::StrictBio => "strict-bio",
        })
    }
}

impl FromStr for CompareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label-only" => Ok(CompareMode::LabelOnly),
            "strict-bio" => Ok(CompareMode::StrictBio),
            _ => Err(Error::config(format!("unknown comparison mode `{s}`"))),
        }
    }
}

/// A prediction line: either tagged tokens or generated text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionRecord {
    Tagged(TaggedSentence),
    Generated { id: String, generated: String },
}

/// Reads predictions; generated text is decoded leniently.
pub fn load_predictions(path: &Path, scheme: &TagScheme) -> Result<(Vec<TaggedSentence>, Vec<Diagnostic>)> {
    let records: Vec<PredictionRecord> = crate::jsonl::read(path)?;
    let mut out = Vec::with_capacity(records.len());
    let mut diagnostics = Vec::new();
    for r in records {
        match r {
            PredictionRecord::Tagged(t) => out.push(t),
            PredictionRecord::Generated { id, generated } => {
                let (t, d) = decode_seq(&id, &generated, scheme, false)?;
                out.push(t);
                diagnostics.extend(d);
            }
        }
    }
    Ok((out, diagnostics))
}

/// MUC events of every pair, in pair order.
pub fn corpus_events(pairs: &[AlignedPair], mode: CompareMode) -> Vec<MucEvent> {
    use rayon::prelude::*;
    pairs.par_iter().map(|p| muc_events(p, mode)).flatten_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagcodec::{encode_seq, TagScheme};

    #[test]
    fn generated_predictions_are_decoded_and_aligned() {
        let scheme = TagScheme::financial();
        let gold = TaggedSentence::new(
            "g1",
            "a receita passou de R$ 10,8 bilhões".split(' ').map(String::from).collect(),
            ["O", "O", "O", "O", "B-MONEY", "I-MONEY", "I-MONEY"].iter().map(|t| t.parse().unwrap()).collect(),
        );
        assert_eq!(
            encode_seq(&gold).unwrap().target_text,
            "a receita passou de [R$_10,8_bilhões|MONEY]"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.jsonl");
        let seg = "[R$_8,8_bilhões|MONEY]";
        std::fs::write(
            &path,
            format!("{{\"id\":\"g1\",\"generated\":\"a receita passou de {seg} {seg} {seg}\"}}\n"),
        )
        .unwrap();
        let (pred, diags) = load_predictions(&path, &scheme).unwrap();
        assert!(diags.is_empty());
        let pairs = pair_sentences(&[gold], &pred).unwrap();
        let tally = MucTally::from_events(&corpus_events(&pairs, CompareMode::LabelOnly));
        // R$ and bilhões match once, 10,8 is missing, and the other eight
        // predicted entity tokens are spurious.
        assert_eq!(tally.total, Counts { cor: 2, inc: 0, mis: 1, spu: 7 });
    }
}
