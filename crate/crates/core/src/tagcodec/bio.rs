use serde::{Deserialize, Serialize};

use super::{Diagnostic, DiagnosticKind, Tag, TagScheme, TaggedSentence};
use crate::corpus::Sentence;
use crate::error::{Error, Result};

/// A labeled char span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// A maximal run of entity tokens `[start, end)` sharing one label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRun {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Groups tags into entity runs. An `I-X` that does not continue an `X`
/// entity opens a new one.
pub fn entity_runs(tags: &[Tag]) -> Vec<EntityRun> {
    let mut runs: Vec<EntityRun> = Vec::new();
    let mut open = false;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => open = false,
            Tag::Inside(l) if open && runs.last().is_some_and(|r| r.label == *l) => {
                runs.last_mut().expect("open run").end = i + 1;
            }
            Tag::Begin(l) | Tag::Inside(l) => {
                runs.push(EntityRun {
                    start: i,
                    end: i + 1,
                    label: l.clone(),
                });
                open = true;
            }
        }
    }
    runs
}

/// Promotes every orphan `I-X` to `B-X`.
pub fn repair_bio(tags: &mut [Tag]) {
    let mut prev_label: Option<String> = None;
    for tag in tags.iter_mut() {
        if let Tag::Inside(l) = tag {
            if prev_label.as_deref() != Some(l.as_str()) {
                *tag = Tag::Begin(l.clone());
            }
        }
        prev_label = tag.label().map(str::to_string);
    }
}

/// Token range covered by a char span, and whether the span had to be widened.
pub(crate) fn covering_tokens(sentence: &Sentence, start: usize, end: usize) -> Option<(usize, usize, bool)> {
    let first = sentence.tokens.iter().position(|t| t.end > start)?;
    let last = sentence.tokens.iter().rposition(|t| t.start < end)?;
    if last < first {
        return None;
    }
    let exact = sentence.tokens[first].start == start && sentence.tokens[last].end == end;
    Some((first, last + 1, !exact))
}

/// Projects labeled char spans onto BIO tags.
///
/// Spans that cut through a token are widened to whole tokens. When spans
/// overlap, the one covering more tokens wins (earlier start breaks ties)
/// and the loser is reported.
pub fn spans_to_bio(
    sentence: &Sentence,
    entities: &[EntitySpan],
    scheme: &TagScheme,
) -> Result<(TaggedSentence, Vec<Diagnostic>)> {
    let mut diagnostics = Vec::new();
    let mut placed = Vec::new();
    for e in entities {
        if !scheme.has_label(&e.label) {
            return Err(Error::data(format!(
                "sentence `{}`: label `{}` is not in the scheme",
                sentence.id, e.label
            )));
        }
        match covering_tokens(sentence, e.start, e.end) {
            Some((a, b, snapped)) => {
                if snapped {
                    diagnostics.push(Diagnostic::new(
                        &sentence.id,
                        DiagnosticKind::Snapped,
                        format!("span {}..{} widened to token boundaries", e.start, e.end),
                    ));
                }
                placed.push((a, b, e));
            }
            None => diagnostics.push(Diagnostic::new(
                &sentence.id,
                DiagnosticKind::NoTokens,
                format!("span {}..{} covers no token", e.start, e.end),
            )),
        }
    }
    placed.sort_by(|x, y| (y.1 - y.0).cmp(&(x.1 - x.0)).then(x.0.cmp(&y.0)));

    let mut tags = vec![Tag::Outside; sentence.tokens.len()];
    let mut taken = vec![false; sentence.tokens.len()];
    for (a, b, e) in placed {
        if taken[a..b].iter().any(|&t| t) {
            diagnostics.push(Diagnostic::new(
                &sentence.id,
                DiagnosticKind::Overlap,
                format!("{} span {}..{} overlaps a longer entity", e.label, e.start, e.end),
            ));
            continue;
        }
        tags[a] = Tag::Begin(e.label.clone());
        for t in &mut tags[a + 1..b] {
            *t = Tag::Inside(e.label.clone());
        }
        taken[a..b].iter_mut().for_each(|t| *t = true);
    }
    let tokens = sentence.tokens.iter().map(|t| t.surface.clone()).collect();
    Ok((TaggedSentence::new(&sentence.id, tokens, tags), diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, label: &str) -> EntitySpan {
        EntitySpan {
            start,
            end,
            label: label.into(),
        }
    }

    fn tags(t: &TaggedSentence) -> Vec<String> {
        t.tags.iter().map(Tag::to_string).collect()
    }

    #[test]
    fn lucro_liquido_example() {
        let s = Sentence::new("s", "O lucro líquido aumentou");
        let (t, d) = spans_to_bio(&s, &[span(2, 15, "LUCRO")], &TagScheme::financial()).unwrap();
        assert_eq!(tags(&t), ["O", "B-LUCRO", "I-LUCRO", "O"]);
        assert!(d.is_empty());
    }

    #[test]
    fn worked_example_tag_ids() {
        let s = Sentence::new("s", "O lucro líquido do Santander aumentou");
        let scheme = TagScheme::financial();
        let (t, _) = spans_to_bio(&s, &[span(2, 15, "LUCRO"), span(19, 28, "COMPANY")], &scheme).unwrap();
        assert_eq!(t.tag_ids(&scheme).unwrap(), [0, 21, 22, 0, 7, 0]);
    }

    #[test]
    fn no_entities_all_outside() {
        let s = Sentence::new("s", "nada a declarar");
        let (t, _) = spans_to_bio(&s, &[], &TagScheme::financial()).unwrap();
        assert!(t.tags.iter().all(Tag::is_outside));
    }

    #[test]
    fn adjacent_entities_both_begin() {
        let scheme = crate::tagcodec::build_scheme(&["X", "Y"]).unwrap();
        let s = Sentence::new("s", "a b");
        let (t, _) = spans_to_bio(&s, &[span(0, 1, "X"), span(2, 3, "Y")], &scheme).unwrap();
        assert_eq!(tags(&t), ["B-X", "B-Y"]);
    }

    #[test]
    fn unknown_label_is_error() {
        let s = Sentence::new("s", "a");
        assert!(spans_to_bio(&s, &[span(0, 1, "NOPE")], &TagScheme::financial()).is_err());
    }

    #[test]
    fn snapping_and_nesting() {
        let text = "o Resultado das Operações de Seguros.";
        let s = Sentence::new("s", text);
        let scheme = TagScheme::financial();
        // "Seguros" inside the trailing token "Seguros." and nested in RESULTADO.
        let (t, d) = spans_to_bio(&s, &[span(29, 36, "PRODUTO"), span(2, 36, "RESULTADO")], &scheme).unwrap();
        assert_eq!(tags(&t), ["O", "B-RESULTADO", "I-RESULTADO", "I-RESULTADO", "I-RESULTADO", "I-RESULTADO"]);
        let kinds: Vec<_> = d.iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::Overlap));
        assert!(kinds.contains(&DiagnosticKind::Snapped));
    }

    #[test]
    fn repair_promotes_orphans() {
        let mut t: Vec<Tag> = ["I-A", "I-A", "O", "B-A", "I-B"].iter().map(|s| s.parse().unwrap()).collect();
        repair_bio(&mut t);
        let got: Vec<String> = t.iter().map(Tag::to_string).collect();
        assert_eq!(got, ["B-A", "I-A", "O", "B-A", "B-B"]);
    }

    #[test]
    fn runs_split_on_label_change() {
        let t: Vec<Tag> = ["B-A", "I-A", "I-B", "O", "I-A"].iter().map(|s| s.parse().unwrap()).collect();
        let runs = entity_runs(&t);
        let got: Vec<_> = runs.iter().map(|r| (r.start, r.end, r.label.as_str())).collect();
        assert_eq!(got, [(0, 2, "A"), (2, 3, "B"), (4, 5, "A")]);
    }
}
