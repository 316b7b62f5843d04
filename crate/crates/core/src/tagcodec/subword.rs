use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TagScheme, TaggedSentence};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Label id carried by special tokens; ignored by the training loss.
pub const IGNORE_INDEX: i64 = -100;

/// Special tokens a tokenizer adds around each sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub prefix: Vec<String>,
    pub suffix: Vec<String>,
}

impl SpecialTokens {
    /// `[CLS] ... [SEP]`
    pub fn bert() -> Self {
        SpecialTokens {
            prefix: vec!["[CLS]".into()],
            suffix: vec!["[SEP]".into()],
        }
    }

    /// `... </s>`
    pub fn t5() -> Self {
        SpecialTokens {
            prefix: vec![],
            suffix: vec!["</s>".into()],
        }
    }

    /// Anonymous specials when only their counts are known.
    pub fn counts(prefix: usize, suffix: usize) -> Self {
        SpecialTokens {
            prefix: vec!["<special>".into(); prefix],
            suffix: vec!["<special>".into(); suffix],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subword {
    pub surface: String,
    /// Index of the source token; `None` for special tokens.
    pub token: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordAlignment {
    pub subwords: Vec<Subword>,
    pub label_ids: Vec<i64>,
}

impl SubwordAlignment {
    /// Recovers one tag id per token by dropping specials and keeping the
    /// first subword of every token.
    pub fn token_label_ids(&self) -> Vec<i64> {
        let mut out = Vec::new();
        let mut last = None;
        for (sw, &id) in self.subwords.iter().zip(&self.label_ids) {
            if let Some(t) = sw.token {
                if last != Some(t) {
                    out.push(id);
                    last = Some(t);
                }
            }
        }
        out
    }
}

/// Repeats each token's tag id on every one of its subwords and pads the
/// special positions with [`IGNORE_INDEX`].
pub fn align_subwords(
    tagged: &TaggedSentence,
    segmentation: &[Vec<String>],
    specials: &SpecialTokens,
    scheme: &TagScheme,
) -> Result<SubwordAlignment> {
    if segmentation.len() != tagged.tokens.len() {
        return Err(Error::data(format!(
            "sentence `{}`: segmentation covers {} tokens, sentence has {}",
            tagged.sentence_id,
            segmentation.len(),
            tagged.tokens.len()
        )));
    }
    let ids = tagged.tag_ids(scheme)?;
    let mut subwords = Vec::new();
    let mut label_ids = Vec::new();
    for s in &specials.prefix {
        subwords.push(Subword {
            surface: s.clone(),
            token: None,
        });
        label_ids.push(IGNORE_INDEX);
    }
    for (i, pieces) in segmentation.iter().enumerate() {
        if pieces.is_empty() {
            return Err(Error::data(format!(
                "sentence `{}`: token {i} (`{}`) has no subwords",
                tagged.sentence_id, tagged.tokens[i]
            )));
        }
        for p in pieces {
            subwords.push(Subword {
                surface: p.clone(),
                token: Some(i),
            });
            label_ids.push(ids[i] as i64);
        }
    }
    for s in &specials.suffix {
        subwords.push(Subword {
            surface: s.clone(),
            token: None,
        });
        label_ids.push(IGNORE_INDEX);
    }
    Ok(SubwordAlignment {
        subwords,
        label_ids,
    })
}

/// Supplies subword pieces for every token of a sentence.
pub trait Segmenter {
    fn segment(&self, sentence_id: &str, tokens: &[String]) -> Result<Vec<Vec<String>>>;
}

/// Externally produced segmentations keyed by sentence id, loaded from
/// JSON-lines `{"id", "subwords": [[piece, ...], ...]}`.
#[derive(Debug, Clone, Default)]
pub struct SegmentationTable {
    by_id: HashMap<String, Vec<Vec<String>>>,
}

#[derive(Deserialize)]
struct SegmentationLine {
    id: String,
    subwords: Vec<Vec<String>>,
}

impl SegmentationTable {
    pub fn insert(&mut self, id: impl Into<String>, pieces: Vec<Vec<String>>) {
        self.by_id.insert(id.into(), pieces);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let lines: Vec<SegmentationLine> = crate::jsonl::read(path)?;
        Ok(SegmentationTable {
            by_id: lines.into_iter().map(|l| (l.id, l.subwords)).collect(),
        })
    }
}

impl Segmenter for SegmentationTable {
    fn segment(&self, sentence_id: &str, tokens: &[String]) -> Result<Vec<Vec<String>>> {
        let pieces = self
            .by_id
            .get(sentence_id)
            .ok_or_else(|| Error::data(format!("no segmentation for sentence `{sentence_id}`")))?;
        if pieces.len() != tokens.len() {
            return Err(Error::data(format!(
                "sentence `{sentence_id}`: segmentation covers {} tokens, sentence has {}",
                pieces.len(),
                tokens.len()
            )));
        }
        Ok(pieces.clone())
    }
}

impl<F> Segmenter for F
where
    F: Fn(&str) -> Vec<String>,
{
    fn segment(&self, _sentence_id: &str, tokens: &[String]) -> Result<Vec<Vec<String>>> {
        Ok(tokens.iter().map(|t| self(t)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubwordStats {
    pub tokens: usize,
    pub subwords: usize,
    pub ratio: f64,
}

impl SubwordStats {
    pub fn new(tokens: usize, subwords: usize) -> Self {
        let ratio = if tokens == 0 {
            0.0
        } else {
            subwords as f64 / tokens as f64
        };
        SubwordStats {
            tokens,
            subwords,
            ratio,
        }
    }

    /// The ratio as printed in reports, two decimals.
    pub fn ratio_display(&self) -> String {
        format!("{:.2}", self.ratio)
    }
}

/// Subwords produced per whitespace token over a whole corpus.
pub fn subword_ratio(corpus: &Corpus, segmenter: &dyn Segmenter) -> Result<SubwordStats> {
    let mut tokens = 0;
    let mut subwords = 0;
    for s in corpus.sentences() {
        let surfaces: Vec<String> = s.tokens.iter().map(|t| t.surface.clone()).collect();
        let pieces = segmenter.segment(&s.id, &surfaces)?;
        if let Some(i) = pieces.iter().position(Vec::is_empty) {
            return Err(Error::data(format!("sentence `{}`: token {i} has no subwords", s.id)));
        }
        tokens += surfaces.len();
        subwords += pieces.iter().map(Vec::len).sum::<usize>();
    }
    Ok(SubwordStats::new(tokens, subwords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use crate::tagcodec::Tag;
    use proptest::prelude::*;

    fn worked_example() -> TaggedSentence {
        let tokens = ["O", "lucro", "líquido", "do", "Santander", "aumentou"];
        let tags = ["O", "B-LUCRO", "I-LUCRO", "O", "B-COMPANY", "O"];
        TaggedSentence::new(
            "s",
            tokens.iter().map(|s| s.to_string()).collect(),
            tags.iter().map(|t| t.parse().unwrap()).collect(),
        )
    }

    fn seg(pieces: &[&[&str]]) -> Vec<Vec<String>> {
        pieces.iter().map(|p| p.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn santander_repeats_its_id() {
        let t = TaggedSentence::new("s", vec!["Santander".into()], vec![Tag::Begin("COMPANY".into())]);
        let a = align_subwords(&t, &seg(&[&["Santa", "##nder"]]), &SpecialTokens::default(), &TagScheme::financial()).unwrap();
        assert_eq!(a.label_ids, [7, 7]);
    }

    #[test]
    fn worked_example_with_specials() {
        let segmentation = seg(&[&["O"], &["lucro"], &["líquido"], &["do"], &["Santa", "##nder"], &["aumentou"]]);
        let a = align_subwords(&worked_example(), &segmentation, &SpecialTokens::bert(), &TagScheme::financial()).unwrap();
        assert_eq!(a.label_ids, [-100, 0, 21, 22, 0, 7, 7, 0, -100]);
        assert_eq!(a.subwords[0].surface, "[CLS]");
        assert_eq!(a.token_label_ids(), [0, 21, 22, 0, 7, 0]);
    }

    #[test]
    fn one_to_one_is_verbatim() {
        let t = worked_example();
        let segmentation: Vec<Vec<String>> = t.tokens.iter().map(|s| vec![s.clone()]).collect();
        let scheme = TagScheme::financial();
        let a = align_subwords(&t, &segmentation, &SpecialTokens::default(), &scheme).unwrap();
        let ids: Vec<i64> = t.tag_ids(&scheme).unwrap().into_iter().map(|i| i as i64).collect();
        assert_eq!(a.label_ids, ids);
    }

    #[test]
    fn empty_piece_list_is_error() {
        let t = worked_example();
        let mut segmentation: Vec<Vec<String>> = t.tokens.iter().map(|s| vec![s.clone()]).collect();
        segmentation[3].clear();
        assert!(align_subwords(&t, &segmentation, &SpecialTokens::default(), &TagScheme::financial()).is_err());
    }

    #[test]
    fn ratio_examples() {
        let c = Corpus::new(vec![
            Sentence::new("a", "um dois três"),
            Sentence::new("b", "Santander aumentou"),
        ])
        .unwrap();
        let identity = |t: &str| vec![t.to_string()];
        assert_eq!(subword_ratio(&c, &identity).unwrap().ratio_display(), "1.00");
        // Tokens of more than four chars split into 2 pieces: dois/três/um stay whole,
        // Santander and aumentou split, so 7 pieces over 5 tokens.
        let halves = |t: &str| {
            let chars: Vec<char> = t.chars().collect();
            if chars.len() > 4 {
                vec![chars[..2].iter().collect(), chars[2..].iter().collect()]
            } else {
                vec![t.to_string()]
            }
        };
        let r = subword_ratio(&c, &halves).unwrap();
        assert_eq!((r.tokens, r.subwords), (5, 7));
        assert_eq!(r.ratio, 7.0 / 5.0);
        assert_eq!(SubwordStats::new(1_996_940, 2_381_471).ratio_display(), "1.19");
        assert_eq!(SubwordStats::new(1_996_940, 2_662_520).ratio_display(), "1.33");
    }

    proptest! {
        #[test]
        fn alignment_length_and_recovery(
            piece_counts in prop::collection::vec(1usize..4, 1..12),
            prefix in 0usize..3,
            suffix in 0usize..3,
            tag_choice in prop::collection::vec(0usize..3, 12),
        ) {
            let scheme = crate::tagcodec::build_scheme(&["A"]).unwrap();
            let n = piece_counts.len();
            let mut tags = Vec::new();
            for i in 0..n {
                let tag = match (tag_choice[i], tags.last()) {
                    (1, _) => Tag::Begin("A".into()),
                    (2, Some(Tag::Begin(_) | Tag::Inside(_))) => Tag::Inside("A".into()),
                    _ => Tag::Outside,
                };
                tags.push(tag);
            }
            let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
            let t = TaggedSentence::new("p", tokens, tags);
            let segmentation: Vec<Vec<String>> = piece_counts.iter().map(|&k| vec!["x".to_string(); k]).collect();
            let a = align_subwords(&t, &segmentation, &SpecialTokens::counts(prefix, suffix), &scheme).unwrap();
            prop_assert_eq!(a.label_ids.len(), piece_counts.iter().sum::<usize>() + prefix + suffix);
            let expected: Vec<i64> = t.tag_ids(&scheme).unwrap().into_iter().map(|i| i as i64).collect();
            prop_assert_eq!(a.token_label_ids(), expected);
        }
    }
}
