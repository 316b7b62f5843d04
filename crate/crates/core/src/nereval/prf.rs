//! Token-level precision, recall and F1 over entity tokens.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::align::AlignedPair;
use super::CompareMode;
use crate::error::{Error, Result};
use crate::tagcodec::{Tag, TagScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub mode: CompareMode,
    pub classes: Vec<ClassScores>,
    pub macro_avg: AverageScores,
    pub micro_avg: AverageScores,
    pub weighted_avg: AverageScores,
}

#[derive(Default, Clone, Copy)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

fn div(n: usize, d: usize) -> Option<f64> {
    (d > 0).then(|| n as f64 / d as f64)
}

impl Confusion {
    fn scores(&self) -> (Option<f64>, Option<f64>, Option<f64>) {
        (
            div(self.tp, self.tp + self.fp),
            div(self.tp, self.tp + self.fn_),
            div(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
        )
    }
}

fn mean(values: impl Iterator<Item = (Option<f64>, f64)>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (v, w) in values {
        if let Some(v) = v {
            num += v * w;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

fn class_of(tag: &Tag, mode: CompareMode) -> Option<String> {
    match mode {
        CompareMode::LabelOnly => tag.label().map(str::to_string),
        CompareMode::StrictBio => (!tag.is_outside()).then(|| tag.to_string()),
    }
}

/// Per-class scores plus macro, micro and support-weighted averages.
///
/// Classes are the entity labels (or B-/I- tags in strict mode) seen on
/// either side. Scores with a zero denominator are `None`; averages skip
/// them.
pub fn prf_report(pairs: &[AlignedPair], scheme: &TagScheme, mode: CompareMode) -> Result<PrfReport> {
    let mut table: BTreeMap<String, Confusion> = BTreeMap::new();
    for pair in pairs {
        for (g, p) in pair.gold.iter().zip(&pair.pred) {
            for t in [g, p] {
                if scheme.id_of(t).is_none() {
                    return Err(Error::data(format!(
                        "sentence `{}`: tag `{t}` is not in the scheme",
                        pair.sentence_id
                    )));
                }
            }
            let (gc, pc) = (class_of(g, mode), class_of(p, mode));
            if gc == pc {
                if let Some(c) = gc {
                    table.entry(c).or_default().tp += 1;
                }
                continue;
            }
            if let Some(c) = gc {
                table.entry(c).or_default().fn_ += 1;
            }
            if let Some(c) = pc {
                table.entry(c).or_default().fp += 1;
            }
        }
    }
    let classes: Vec<ClassScores> = table
        .iter()
        .map(|(class, c)| {
            let (precision, recall, f1) = c.scores();
            ClassScores {
                class: class.clone(),
                precision,
                recall,
                f1,
                support: c.tp + c.fn_,
            }
        })
        .collect();
    let support: usize = classes.iter().map(|c| c.support).sum();
    let avg = |weight: &dyn Fn(&ClassScores) -> f64| AverageScores {
        precision: mean(classes.iter().map(|c| (c.precision, weight(c)))),
        recall: mean(classes.iter().map(|c| (c.recall, weight(c)))),
        f1: mean(classes.iter().map(|c| (c.f1, weight(c)))),
        support,
    };
    let macro_avg = avg(&|_| 1.0);
    let weighted_avg = avg(&|c| c.support as f64);
    let total = table.values().fold(Confusion::default(), |a, c| Confusion {
        tp: a.tp + c.tp,
        fp: a.fp + c.fp,
        fn_: a.fn_ + c.fn_,
    });
    let (precision, recall, f1) = total.scores();
    Ok(PrfReport {
        mode,
        classes,
        macro_avg,
        micro_avg: AverageScores {
            precision,
            recall,
            f1,
            support,
        },
        weighted_avg,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl PrfReport {
    /// One row per class followed by the three averages.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| | Precision | Recall | F1-score | Support |\n|---|---:|---:|---:|---:|\n");
        for c in &self.classes {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                c.class,
                cell(c.precision),
                cell(c.recall),
                cell(c.f1),
                c.support
            );
        }
        for (name, a) in [
            ("macro avg", &self.macro_avg),
            ("micro avg", &self.micro_avg),
            ("weighted avg", &self.weighted_avg),
        ] {
            let _ = writeln!(
                out,
                "| {name} | {} | {} | {} | {} |",
                cell(a.precision),
                cell(a.recall),
                cell(a.f1),
                a.support
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nereval::pair_sentences;
    use crate::tagcodec::{build_scheme, TaggedSentence};

    fn ts(id: &str, tags: &[&str]) -> TaggedSentence {
        TaggedSentence::new(
            id,
            (0..tags.len()).map(|i| format!("w{i}")).collect(),
            tags.iter().map(|t| t.parse().unwrap()).collect(),
        )
    }

    fn scheme() -> TagScheme {
        build_scheme(&["A", "B"]).unwrap()
    }

    #[test]
    fn perfect_prediction() {
        let g = [ts("1", &["B-A", "I-A", "O", "B-B"])];
        let r = prf_report(&pair_sentences(&g, &g).unwrap(), &scheme(), CompareMode::LabelOnly).unwrap();
        for c in &r.classes {
            assert_eq!((c.precision, c.recall, c.f1), (Some(1.0), Some(1.0), Some(1.0)));
        }
        assert_eq!(r.macro_avg.f1, Some(1.0));
    }

    #[test]
    fn two_class_confusion_by_hand() {
        // gold: A A A B B O O ; pred: A A B B O A O
        let g = [ts("1", &["B-A", "I-A", "I-A", "B-B", "I-B", "O", "O"])];
        let p = [ts("1", &["B-A", "I-A", "B-B", "I-B", "O", "B-A", "O"])];
        let r = prf_report(&pair_sentences(&g, &p).unwrap(), &scheme(), CompareMode::LabelOnly).unwrap();
        // A: tp 2, fp 1, fn 1. B: tp 1, fp 1, fn 1.
        let a = &r.classes[0];
        assert_eq!((a.precision, a.recall, a.f1, a.support), (Some(2.0 / 3.0), Some(2.0 / 3.0), Some(4.0 / 6.0), 3));
        let b = &r.classes[1];
        assert_eq!((b.precision, b.recall, b.f1, b.support), (Some(0.5), Some(0.5), Some(0.5), 2));
        assert!((r.macro_avg.precision.unwrap() - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
        assert_eq!(r.micro_avg.precision, Some(3.0 / 5.0));
        assert_eq!(r.micro_avg.recall, Some(3.0 / 5.0));
        assert!((r.weighted_avg.recall.unwrap() - (3.0 * 2.0 / 3.0 + 2.0 * 0.5) / 5.0).abs() < 1e-15);
        assert_eq!(r.micro_avg.support, 5);
    }

    #[test]
    fn class_without_support_has_no_recall() {
        let g = [ts("1", &["O", "B-A"])];
        let p = [ts("1", &["B-B", "B-A"])];
        let r = prf_report(&pair_sentences(&g, &p).unwrap(), &scheme(), CompareMode::LabelOnly).unwrap();
        let b = r.classes.iter().find(|c| c.class == "B").unwrap();
        assert_eq!((b.precision, b.recall, b.support), (Some(0.0), None, 0));
        assert_eq!(r.macro_avg.recall, Some(1.0));
    }

    #[test]
    fn unknown_tag_is_an_error() {
        let g = [ts("1", &["B-Z"])];
        assert!(prf_report(&pair_sentences(&g, &g).unwrap(), &scheme(), CompareMode::LabelOnly).is_err());
    }

    #[test]
    fn markdown_has_per_class_rows_and_three_averages() {
        let g = [ts("1", &["B-A", "O", "B-B"])];
        let md = prf_report(&pair_sentences(&g, &g).unwrap(), &scheme(), CompareMode::LabelOnly)
            .unwrap()
            .to_markdown();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 2 + 2 + 3);
        assert_eq!(lines[2], "| A | 1.0000 | 1.0000 | 1.0000 | 1 |");
        assert!(lines[4].starts_with("| macro avg |"));
        assert!(lines[6].starts_with("| weighted avg |"));
    }
}
