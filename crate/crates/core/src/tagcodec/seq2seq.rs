//! The bracketed generation format.
//!
//! Entity runs become `[w1_w2_..._wn|LABEL]`; every other token is copied.
//! Inside entity brackets a literal `\` is written `\\` and a literal `_` is
//! written `\_`, so an unescaped underscore always separates two words.

use serde::{Deserialize, Serialize};

use super::{entity_runs, Diagnostic, DiagnosticKind, Tag, TagScheme, TaggedSentence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqTarget {
    pub sentence_id: String,
    pub target_text: String,
}

fn escape_word(word: &str) -> String {
    let mut out = String::with_capacity(word.len());
    for c in word.chars() {
        if c == '\\' || c == '_' {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Splits an entity body on unescaped underscores and unescapes each word.
fn split_body(body: &str) -> Vec<String> {
    let mut words = vec![String::new()];
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(n @ ('\\' | '_')) => words.last_mut().expect("non-empty").push(n),
                Some(other) => {
                    let w = words.last_mut().expect("non-empty");
                    w.push('\\');
                    w.push(other);
                }
                None => words.last_mut().expect("non-empty").push('\\'),
            },
            '_' => words.push(String::new()),
            c => words.last_mut().expect("non-empty").push(c),
        }
    }
    words.retain(|w| !w.is_empty());
    words
}

enum TokenShape<'a> {
    Plain,
    Entity { body: &'a str, label: &'a str },
    Malformed,
}

fn classify(token: &str) -> TokenShape<'_> {
    let looks_bracketed = token.starts_with('[') || token.ends_with(']') || token.contains('|');
    if !looks_bracketed {
        return TokenShape::Plain;
    }
    if token.len() >= 3 && token.starts_with('[') && token.ends_with(']') {
        let inner = &token[1..token.len() - 1];
        if let Some(pipe) = inner.rfind('|') {
            let (body, label) = (&inner[..pipe], &inner[pipe + 1..]);
            let bad = |s: &str| s.contains(['[', ']', '|']);
            if !label.is_empty() && !bad(label) && !bad(body) {
                return TokenShape::Entity { body, label };
            }
        }
    }
    // Brackets or pipes in running text are not necessarily an error.
    if token.starts_with('[') && token.contains('|') {
        TokenShape::Malformed
    } else {
        TokenShape::Plain
    }
}

/// Writes the generation target for a tagged sentence.
pub fn encode_seq(tagged: &TaggedSentence) -> Result<SeqTarget> {
    let id = &tagged.sentence_id;
    if tagged.tokens.len() != tagged.tags.len() {
        return Err(Error::data(format!("sentence `{id}`: tokens and tags differ in length")));
    }
    for tok in &tagged.tokens {
        if tok.is_empty() || tok.chars().any(char::is_whitespace) {
            return Err(Error::data(format!(
                "sentence `{id}`: token `{tok}` is empty or contains whitespace"
            )));
        }
    }
    let runs = entity_runs(&tagged.tags);
    let mut out: Vec<String> = Vec::with_capacity(tagged.tokens.len());
    let mut next_run = runs.iter().peekable();
    let mut i = 0;
    while i < tagged.tokens.len() {
        if let Some(run) = next_run.next_if(|r| r.start == i) {
            let words = &tagged.tokens[run.start..run.end];
            if let Some(w) = words.iter().find(|w| w.contains(['|', '[', ']'])) {
                return Err(Error::data(format!(
                    "sentence `{id}`: entity word `{w}` contains `|`, `[` or `]`"
                )));
            }
            let body: Vec<String> = words.iter().map(|w| escape_word(w)).collect();
            out.push(format!("[{}|{}]", body.join("_"), run.label));
            i = run.end;
        } else {
            let tok = &tagged.tokens[i];
            if matches!(classify(tok), TokenShape::Entity { .. }) {
                return Err(Error::data(format!(
                    "sentence `{id}`: outside token `{tok}` would read back as an entity"
                )));
            }
            out.push(tok.clone());
            i += 1;
        }
    }
    Ok(SeqTarget {
        sentence_id: id.clone(),
        target_text: out.join(" "),
    })
}

/// The words of a generated string with entity markup removed. Malformed
/// bracket tokens are kept verbatim.
pub fn plain_words(generated: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in generated.split_whitespace() {
        match classify(raw) {
            TokenShape::Entity { body, .. } => out.extend(split_body(body)),
            _ => out.push(raw.to_string()),
        }
    }
    out
}

/// Reads generated text back into tokens and BIO tags.
///
/// In lenient mode nothing fails: unknown labels turn the entity words into
/// `O` tokens, malformed bracket tokens are kept verbatim as `O`, and each
/// case is reported. In strict mode the first such problem is an error.
pub fn decode_seq(
    sentence_id: &str,
    generated: &str,
    scheme: &TagScheme,
    strict: bool,
) -> Result<(TaggedSentence, Vec<Diagnostic>)> {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut diagnostics = Vec::new();
    for raw in generated.split_whitespace() {
        let problem = match classify(raw) {
            TokenShape::Plain => {
                tokens.push(raw.to_string());
                tags.push(Tag::Outside);
                None
            }
            TokenShape::Malformed => {
                tokens.push(raw.to_string());
                tags.push(Tag::Outside);
                Some((DiagnosticKind::MalformedPattern, format!("malformed entity token `{raw}`")))
            }
            TokenShape::Entity { body, label } => {
                let words = split_body(body);
                if words.is_empty() {
                    Some((DiagnosticKind::EmptyEntity, format!("entity `{raw}` has no words")))
                } else if !scheme.has_label(label) {
                    for w in words {
                        tokens.push(w);
                        tags.push(Tag::Outside);
                    }
                    Some((DiagnosticKind::UnknownLabel, format!("unknown label `{label}` in `{raw}`")))
                } else {
                    for (k, w) in words.into_iter().enumerate() {
                        tokens.push(w);
                        tags.push(if k == 0 {
                            Tag::Begin(label.to_string())
                        } else {
                            Tag::Inside(label.to_string())
                        });
                    }
                    None
                }
            }
        };
        if let Some((kind, message)) = problem {
            if strict {
                return Err(Error::data(format!("sentence `{sentence_id}`: {message}")));
            }
            diagnostics.push(Diagnostic::new(sentence_id, kind, message));
        }
    }
    Ok((TaggedSentence::new(sentence_id, tokens, tags), diagnostics))
}
