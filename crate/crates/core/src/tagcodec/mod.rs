//! Representational transforms between character spans, BIO tag sequences,
//! integer tag ids, subword-aligned label ids, and the bracketed
//! `[entity|LABEL]` text used as a generation target.

mod bio;
mod scheme;
mod seq2seq;
mod subword;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use bio::{entity_runs, repair_bio, spans_to_bio, EntityRun, EntitySpan};
pub use scheme::{build_scheme, TagScheme, DEFAULT_LABELS};
pub use seq2seq::{decode_seq, encode_seq, plain_words, SeqTarget};
pub use subword::{
    align_subwords, subword_ratio, SegmentationTable, Segmenter, SpecialTokens, Subword,
    SubwordAlignment, SubwordStats, IGNORE_INDEX,
};

/// One BIO tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn label(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(l) | Tag::Inside(l) => Some(l),
        }
    }

    pub fn is_outside(&self) -> bool {
        matches!(self, Tag::Outside)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(l) => write!(f, "B-{l}"),
            Tag::Inside(l) => write!(f, "I-{l}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        match (s.strip_prefix("B-"), s.strip_prefix("I-")) {
            (Some(l), _) if !l.is_empty() => Ok(Tag::Begin(l.to_string())),
            (_, Some(l)) if !l.is_empty() => Ok(Tag::Inside(l.to_string())),
            _ => Err(Error::data(format!("`{s}` is not a BIO tag"))),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tokens of one sentence with one tag each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedSentence {
    #[serde(rename = "id")]
    pub sentence_id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<Tag>,
}

impl TaggedSentence {
    pub fn new(sentence_id: impl Into<String>, tokens: Vec<String>, tags: Vec<Tag>) -> Self {
        TaggedSentence {
            sentence_id: sentence_id.into(),
            tokens,
            tags,
        }
    }

    /// Checks equal lengths, scheme membership and BIO well-formedness.
    pub fn validate(&self, scheme: &TagScheme) -> Result<()> {
        if self.tokens.len() != self.tags.len() {
            return Err(Error::data(format!(
                "sentence `{}`: {} tokens but {} tags",
                self.sentence_id,
                self.tokens.len(),
                self.tags.len()
            )));
        }
        let mut prev = &Tag::Outside;
        for (i, tag) in self.tags.iter().enumerate() {
            if scheme.id_of(tag).is_none() {
                return Err(Error::data(format!(
                    "sentence `{}`: tag `{tag}` is not in the scheme",
                    self.sentence_id
                )));
            }
            if let Tag::Inside(l) = tag {
                if prev.label() != Some(l.as_str()) {
                    return Err(Error::data(format!(
                        "sentence `{}`: `{tag}` at token {i} does not continue an entity",
                        self.sentence_id
                    )));
                }
            }
            prev = tag;
        }
        Ok(())
    }

    /// Integer tag ids under `scheme`.
    pub fn tag_ids(&self, scheme: &TagScheme) -> Result<Vec<usize>> {
        self.tags
            .iter()
            .map(|t| {
                scheme.id_of(t).ok_or_else(|| {
                    Error::data(format!(
                        "sentence `{}`: tag `{t}` is not in the scheme",
                        self.sentence_id
                    ))
                })
            })
            .collect()
    }

    pub fn to_token_class_record(&self, scheme: &TagScheme) -> Result<TokenClassRecord> {
        Ok(TokenClassRecord {
            id: self.sentence_id.clone(),
            tokens: self.tokens.clone(),
            ner_tags: self.tag_ids(scheme)?,
        })
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Token-classification export line: `{"id", "tokens", "ner_tags"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenClassRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub ner_tags: Vec<usize>,
}

/// Generation export line: `{"id", "input", "target"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seq2SeqRecord {
    pub id: String,
    pub input: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    /// `[entity|LABEL]` with a label outside the scheme.
    UnknownLabel,
    /// Bracket or pipe syntax that does not form a valid entity token.
    MalformedPattern,
    /// `[|LABEL]` or an entity with no words.
    EmptyEntity,
    /// A span whose ends did not fall on token boundaries.
    Snapped,
    /// A span dropped because a longer overlapping span won.
    Overlap,
    /// A span that covers no token at all.
    NoTokens,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub sentence_id: String,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub(crate) fn new(sentence_id: &str, kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            sentence_id: sentence_id.to_string(),
            kind,
            message: message.into(),
        }
    }
}
