use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagcodec::{Tag, TaggedSentence};

/// Gold and predicted tags on a common set of positions. A position present
/// on one side only carries `O` on the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub sentence_id: String,
    pub gold: Vec<Tag>,
    pub pred: Vec<Tag>,
    /// Source token index on each side, per position.
    pub positions: Vec<(Option<usize>, Option<usize>)>,
}

impl AlignedPair {
    /// Position-wise pairing of equally long sentences.
    pub fn identity(gold: &TaggedSentence, pred: &TaggedSentence) -> Result<Self> {
        if gold.tags.len() != pred.tags.len() {
            return Err(Error::data(format!(
                "sentence `{}`: gold has {} tokens, prediction {}",
                gold.sentence_id,
                gold.tags.len(),
                pred.tags.len()
            )));
        }
        Ok(AlignedPair {
            sentence_id: gold.sentence_id.clone(),
            gold: gold.tags.clone(),
            pred: pred.tags.clone(),
            positions: (0..gold.tags.len()).map(|i| (Some(i), Some(i))).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

/// Longest-common-subsequence alignment on token surfaces.
///
/// Unmatched tokens are paired with an implicit `O`. At a gap, gold-only
/// positions come before prediction-only ones.
pub fn align_for_muc(gold: &TaggedSentence, pred: &TaggedSentence) -> AlignedPair {
    let (g, p) = (&gold.tokens, &pred.tokens);
    let (n, m) = (g.len(), p.len());
    // lcs[i][j] = LCS length of g[i..] and p[j..]
    let mut lcs = vec![0u32; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[at(i, j)] = if g[i] == p[j] {
                lcs[at(i + 1, j + 1)] + 1
            } else {
                lcs[at(i + 1, j)].max(lcs[at(i, j + 1)])
            };
        }
    }
    let mut positions = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && g[i] == p[j] && lcs[at(i, j)] == lcs[at(i + 1, j + 1)] + 1 {
            positions.push((Some(i), Some(j)));
            i += 1;
            j += 1;
        } else if i < n && (j == m || lcs[at(i + 1, j)] >= lcs[at(i, j + 1)]) {
            positions.push((Some(i), None));
            i += 1;
        } else {
            positions.push((None, Some(j)));
            j += 1;
        }
    }
    let tag = |tags: &[Tag], k: Option<usize>| k.map_or(Tag::Outside, |k| tags[k].clone());
    AlignedPair {
        sentence_id: gold.sentence_id.clone(),
        gold: positions.iter().map(|&(a, _)| tag(&gold.tags, a)).collect(),
        pred: positions.iter().map(|&(_, b)| tag(&pred.tags, b)).collect(),
        positions,
    }
}

/// Pairs predictions with gold sentences by id. Equal-length pairs are
/// compared position by position, the rest through [`align_for_muc`].
pub fn pair_sentences(gold: &[TaggedSentence], pred: &[TaggedSentence]) -> Result<Vec<AlignedPair>> {
    let mut by_id: HashMap<&str, &TaggedSentence> = HashMap::with_capacity(pred.len());
    for p in pred {
        if by_id.insert(p.sentence_id.as_str(), p).is_some() {
            return Err(Error::data(format!("duplicate prediction for sentence `{}`", p.sentence_id)));
        }
    }
    let gold_ids: std::collections::HashSet<&str> = gold.iter().map(|g| g.sentence_id.as_str()).collect();
    let mut extra: Vec<&str> = by_id.keys().copied().filter(|id| !gold_ids.contains(id)).collect();
    if !extra.is_empty() {
        extra.sort_unstable();
        return Err(Error::data(format!("predictions for unknown sentences: {}", extra.join(", "))));
    }
    gold.iter()
        .map(|g| {
            let p = by_id
                .get(g.sentence_id.as_str())
                .ok_or_else(|| Error::data(format!("no prediction for sentence `{}`", g.sentence_id)))?;
            if g.tags.len() != g.tokens.len() || p.tags.len() != p.tokens.len() {
                return Err(Error::data(format!("sentence `{}`: tokens and tags differ in length", g.sentence_id)));
            }
            if g.tags.len() == p.tags.len() {
                AlignedPair::identity(g, p)
            } else {
                Ok(align_for_muc(g, p))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(words: &str, tags: &str) -> TaggedSentence {
        TaggedSentence::new(
            "s",
            words.split(' ').map(String::from).collect(),
            tags.split(' ').map(|t| t.parse().unwrap()).collect(),
        )
    }

    #[test]
    fn equal_sequences_align_identically() {
        let a = ts("o lucro subiu", "O B-LUCRO O");
        let aligned = align_for_muc(&a, &a);
        assert_eq!(aligned.positions, [(Some(0), Some(0)), (Some(1), Some(1)), (Some(2), Some(2))]);
    }

    #[test]
    fn inserted_token_is_unmatched() {
        let g = ts("o lucro subiu", "O B-LUCRO O");
        let p = ts("o lucro muito subiu", "O B-LUCRO O O");
        let aligned = align_for_muc(&g, &p);
        assert_eq!(aligned.positions[2], (None, Some(2)));
        assert_eq!(aligned.len(), 4);
    }

    #[test]
    fn pairing_reports_missing_and_extra_ids() {
        let g = ts("a b", "O O");
        let mut other = g.clone();
        other.sentence_id = "t".into();
        assert!(pair_sentences(&[g.clone()], &[]).is_err());
        assert!(pair_sentences(&[g.clone()], &[g.clone(), other]).is_err());
        assert_eq!(pair_sentences(&[g.clone()], &[g]).unwrap().len(), 1);
    }
}
