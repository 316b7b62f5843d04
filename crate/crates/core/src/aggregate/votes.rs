use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::tagcodec::{repair_bio, spans_to_bio, Diagnostic, EntitySpan, Tag, TagScheme};
use crate::weaklabel::SpanAnnotation;

/// Printed form of an abstention.
pub const ABSTAIN: &str = "ABSTAIN";

/// Per-function, per-token votes for one sentence. A vote is a tag id of the
/// scheme, or `None` when the function abstains.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMatrix {
    pub sentence_id: String,
    pub tokens: Vec<String>,
    pub functions: Vec<String>,
    pub votes: Vec<Vec<Option<usize>>>,
}

impl VoteMatrix {
    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Votes cast on token `t`, one per function.
    pub fn column(&self, t: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        self.votes.iter().map(move |row| row[t])
    }

    pub fn is_all_abstain(&self) -> bool {
        self.votes.iter().flatten().all(Option::is_none)
    }

    /// Votes as printable tags, `ABSTAIN` for abstentions.
    pub fn render(&self, scheme: &TagScheme) -> Vec<Vec<String>> {
        self.votes
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| match v.and_then(|id| scheme.tag(id)) {
                        Some(tag) => tag.to_string(),
                        None => ABSTAIN.to_string(),
                    })
                    .collect()
            })
            .collect()
    }
}

/// Projects one sentence's spans onto token votes, one row per function in
/// `functions`. Spans not on token boundaries are widened and reported.
pub fn build_vote_matrix(
    sentence: &Sentence,
    spans: &[&SpanAnnotation],
    functions: &[String],
    scheme: &TagScheme,
) -> Result<(VoteMatrix, Vec<Diagnostic>)> {
    let mut by_function: Vec<Vec<EntitySpan>> = vec![Vec::new(); functions.len()];
    for s in spans {
        if s.sentence_id != sentence.id {
            return Err(Error::data(format!(
                "span from sentence `{}` passed with sentence `{}`",
                s.sentence_id, sentence.id
            )));
        }
        let f = functions.iter().position(|f| *f == s.source).ok_or_else(|| {
            Error::data(format!(
                "sentence `{}`: span source `{}` is not a known labeling function",
                sentence.id, s.source
            ))
        })?;
        by_function[f].push(EntitySpan {
            start: s.char_start,
            end: s.char_end,
            label: s.label.clone(),
        });
    }
    let mut diagnostics = Vec::new();
    let mut votes = Vec::with_capacity(functions.len());
    for entities in &by_function {
        let (tagged, diags) = spans_to_bio(sentence, entities, scheme)?;
        diagnostics.extend(diags);
        votes.push(
            tagged
                .tags
                .iter()
                .map(|t| if t.is_outside() { None } else { scheme.id_of(t) })
                .collect(),
        );
    }
    Ok((
        VoteMatrix {
            sentence_id: sentence.id.clone(),
            tokens: sentence.tokens.iter().map(|t| t.surface.clone()).collect(),
            functions: functions.to_vec(),
            votes,
        },
        diagnostics,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Prefer the label with more votes in the whole matrix, then the
    /// alphabetically first tag.
    #[default]
    LabelFrequency,
    /// Prefer the alphabetically first tag.
    Lexicographic,
}

impl fmt::Display for TieBreak {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TieBreak::LabelFrequency => "label-frequency",
            TieBreak::Lexicographic => "lexicographic",
        })
    }
}

impl FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "label-frequency" => Ok(TieBreak::LabelFrequency),
            "lexicographic" => Ok(TieBreak::Lexicographic),
            other => Err(Error::config(format!("unknown tie-break `{other}`"))),
        }
    }
}

/// Per-token plurality vote, repaired to valid BIO. Tokens nobody voted on
/// are `O`.
pub fn majority_vote(matrix: &VoteMatrix, scheme: &TagScheme, tie_break: TieBreak) -> Vec<Tag> {
    let mut label_freq: BTreeMap<usize, usize> = BTreeMap::new();
    if tie_break == TieBreak::LabelFrequency {
        for id in matrix.votes.iter().flatten().flatten() {
            if let Some(l) = scheme.label_of_id(*id) {
                *label_freq.entry(l).or_insert(0) += 1;
            }
        }
    }
    let mut tags: Vec<Tag> = (0..matrix.num_tokens())
        .map(|t| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for id in matrix.column(t).flatten() {
                *counts.entry(id).or_insert(0) += 1;
            }
            // Tag ids follow the sorted labels, so the lowest id is also the
            // alphabetically first tag.
            let best = counts.iter().max_by(|(a, ca), (b, cb)| {
                let fa = scheme.label_of_id(**a).and_then(|l| label_freq.get(&l)).unwrap_or(&0);
                let fb = scheme.label_of_id(**b).and_then(|l| label_freq.get(&l)).unwrap_or(&0);
                ca.cmp(cb).then(fa.cmp(fb)).then(b.cmp(a))
            });
            best.and_then(|(id, _)| scheme.tag(*id)).unwrap_or(Tag::Outside)
        })
        .collect();
    repair_bio(&mut tags);
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(sentence: &str, a: usize, b: usize, text: &str, label: &str, source: &str) -> SpanAnnotation {
        SpanAnnotation {
            sentence_id: sentence.into(),
            char_start: a,
            char_end: b,
            surface: crate::corpus::char_slice(text, a, b).into(),
            label: label.into(),
            source: source.into(),
        }
    }

    fn matrix(rows: &[&[&str]], scheme: &TagScheme) -> VoteMatrix {
        let n = rows[0].len();
        VoteMatrix {
            sentence_id: "m".into(),
            tokens: (0..n).map(|i| format!("t{i}")).collect(),
            functions: (0..rows.len()).map(|i| format!("f{i}")).collect(),
            votes: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|v| if *v == "-" { None } else { scheme.id_of(&v.parse().unwrap()) })
                        .collect()
                })
                .collect(),
        }
    }

    fn strs(tags: &[Tag]) -> Vec<String> {
        tags.iter().map(Tag::to_string).collect()
    }

    #[test]
    fn no_spans_all_abstain() {
        let s = Sentence::new("s", "nada a declarar");
        let (m, _) = build_vote_matrix(&s, &[], &["f".into()], &TagScheme::financial()).unwrap();
        assert!(m.is_all_abstain());
        assert_eq!(m.votes[0].len(), 3);
    }

    #[test]
    fn lucro_liquido_votes() {
        let text = "O lucro líquido aumentou";
        let s = Sentence::new("s", text);
        let scheme = TagScheme::financial();
        let sp = span("s", 2, 15, text, "LUCRO", "g");
        let (m, d) = build_vote_matrix(&s, &[&sp], &["g".into()], &scheme).unwrap();
        assert!(d.is_empty());
        assert_eq!(m.render(&scheme)[0], ["ABSTAIN", "B-LUCRO", "I-LUCRO", "ABSTAIN"]);
    }

    #[test]
    fn disagreements_are_kept() {
        let text = "os Seguros cresceram";
        let s = Sentence::new("s", text);
        let scheme = TagScheme::financial();
        let a = span("s", 3, 10, text, "PRODUTO", "f1");
        let b = span("s", 3, 10, text, "RESULTADO", "f2");
        let (m, _) = build_vote_matrix(&s, &[&a, &b], &["f1".into(), "f2".into()], &scheme).unwrap();
        let r = m.render(&scheme);
        assert_eq!(r[0][1], "B-PRODUTO");
        assert_eq!(r[1][1], "B-RESULTADO");
    }

    #[test]
    fn foreign_or_unknown_spans_rejected() {
        let text = "a b c";
        let s = Sentence::new("s", text);
        let scheme = TagScheme::financial();
        let foreign = span("t", 0, 1, text, "LUCRO", "f");
        assert!(build_vote_matrix(&s, &[&foreign], &["f".into()], &scheme).is_err());
        let unknown = span("s", 0, 1, text, "LUCRO", "zzz");
        assert!(build_vote_matrix(&s, &[&unknown], &["f".into()], &scheme).is_err());
    }

    #[test]
    fn snapped_span_reported() {
        let text = "do Santander.";
        let s = Sentence::new("s", text);
        let sp = span("s", 3, 12, text, "COMPANY", "f");
        let (m, d) = build_vote_matrix(&s, &[&sp], &["f".into()], &TagScheme::financial()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(m.votes[0], [None, Some(7)]);
    }

    #[test]
    fn unanimous_and_lexicographic() {
        let scheme = TagScheme::financial();
        let m = matrix(&[&["B-LUCRO"], &["B-LUCRO"], &["-"]], &scheme);
        assert_eq!(strs(&majority_vote(&m, &scheme, TieBreak::Lexicographic)), ["B-LUCRO"]);
        let m = matrix(&[&["B-RESULTADO"], &["B-PRODUTO"]], &scheme);
        assert_eq!(strs(&majority_vote(&m, &scheme, TieBreak::Lexicographic)), ["B-PRODUTO"]);
    }

    #[test]
    fn label_frequency_tie_break() {
        let scheme = TagScheme::financial();
        // RESULTADO has more votes overall, so it wins the tied token.
        let m = matrix(
            &[&["B-RESULTADO", "B-RESULTADO"], &["B-PRODUTO", "B-RESULTADO"]],
            &scheme,
        );
        assert_eq!(strs(&majority_vote(&m, &scheme, TieBreak::LabelFrequency)), ["B-RESULTADO", "B-RESULTADO"]);
        assert_eq!(strs(&majority_vote(&m, &scheme, TieBreak::Lexicographic)), ["B-PRODUTO", "B-RESULTADO"]);
    }

    #[test]
    fn five_token_counts() {
        let scheme = TagScheme::financial();
        let m = matrix(
            &[
                &["-", "B-LUCRO", "I-LUCRO", "I-MONEY", "B-YEAR"],
                &["-", "B-LUCRO", "I-LUCRO", "-", "B-YEAR"],
                &["B-ORG", "B-MONEY", "-", "-", "-"],
                &["-", "B-LUCRO", "I-LUCRO", "-", "B-QUARTER"],
            ],
            &scheme,
        );
        // Token 3 has a lone orphan I-MONEY, repaired to B-MONEY.
        assert_eq!(
            strs(&majority_vote(&m, &scheme, TieBreak::Lexicographic)),
            ["B-ORG", "B-LUCRO", "I-LUCRO", "B-MONEY", "B-YEAR"]
        );
    }
}
