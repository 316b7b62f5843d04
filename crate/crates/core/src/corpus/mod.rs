//! Sentence corpora: ingestion, filtering, descriptive statistics and
//! reproducible train/validation/test splits.
//!
//! All offsets in this crate are counted in Unicode scalar values (chars),
//! not bytes, so `"O lucro líquido"` puts `líquido` at `8..15`.

mod split;
mod stats;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

pub use split::{partition_sizes, split, Partition, SplitManifestHeader, SplitOutput, SplitSpec, PRNG_NAME};
pub use stats::{stats, HistogramBin, LengthStats, StatsReport};

/// A whitespace-delimited token with char offsets into its sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
}

impl Token {
    /// A token counts as a word unless it is made only of punctuation/symbols.
    pub fn is_word(&self) -> bool {
        self.surface.chars().any(char::is_alphanumeric)
    }
}

/// Splits `text` on Unicode whitespace, recording char offsets.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(Token {
                    surface: std::mem::take(&mut current),
                    start,
                    end: pos,
                });
            }
        } else {
            if current.is_empty() {
                start = pos;
            }
            current.push(ch);
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(Token {
            surface: current,
            start,
            end: pos,
        });
    }
    tokens
}

/// Slices `text` by char offsets. Out-of-range offsets are clamped.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let from = indices.by_ref().nth(start).unwrap_or(text.len());
    let to = if end <= start {
        from
    } else {
        indices.nth(end - start - 1).unwrap_or(text.len())
    };
    &text[from..to]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub id: String,
    pub text: String,
    /// Provenance keys such as ticker, year and quarter.
    pub meta: BTreeMap<String, String>,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self::with_meta(id, text, BTreeMap::new())
    }

    pub fn with_meta(
        id: impl Into<String>,
        text: impl Into<String>,
        meta: BTreeMap<String, String>,
    ) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Sentence {
            id: id.into(),
            text,
            meta,
            tokens,
        }
    }

    /// Number of tokens that are not pure punctuation.
    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_word()).count()
    }

    /// Text between two char offsets.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        char_slice(&self.text, start, end)
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

// On disk a sentence is a flat object: {"id", "text", ...meta}.
impl Serialize for Sentence {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(2 + self.meta.len()))?;
        map.serialize_entry("id", &self.id)?;
        map.serialize_entry("text", &self.text)?;
        for (k, v) in &self.meta {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Sentence {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Map::<String, Value>::deserialize(deserializer)?;
        let (id, text, meta) = split_record(value).map_err(D::Error::custom)?;
        let id = id.ok_or_else(|| D::Error::custom("missing `id`"))?;
        Ok(Sentence::with_meta(id, text, meta))
    }
}

type RecordParts = (Option<String>, String, BTreeMap<String, String>);

fn split_record(mut value: serde_json::Map<String, Value>) -> std::result::Result<RecordParts, String> {
    let text = match value.remove("text") {
        Some(Value::String(s)) => s,
        Some(_) => return Err("`text` is not a string".into()),
        None => return Err("missing `text`".into()),
    };
    let id = value.remove("id").map(value_to_string);
    let meta = value.into_iter().map(|(k, v)| (k, value_to_string(v))).collect();
    Ok((id, text, meta))
}

fn value_to_string(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    /// Seconds since the Unix epoch at ingest time.
    pub ingested_at: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    pub provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate sentence ids.
    pub fn new(sentences: Vec<Sentence>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(sentences.len());
        for s in &sentences {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::data(format!("duplicate sentence id `{}`", s.id)));
            }
        }
        Ok(Corpus {
            sentences,
            provenance: Provenance::default(),
        })
    }

    pub(crate) fn from_parts(sentences: Vec<Sentence>, provenance: Provenance) -> Self {
        Corpus {
            sentences,
            provenance,
        }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Sentence> {
        self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        crate::jsonl::write(path, &self.sentences)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Format> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Format::Csv),
            "jsonl" | "ndjson" => Some(Format::Jsonl),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::config(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// Reads a corpus from CSV (header row with a `text` column) or JSON-lines.
///
/// Records without an `id` get `<file-stem>:<row-index>` (0-based). Every
/// other column is kept as provenance metadata.
pub fn ingest(path: &Path, format: Format) -> Result<Corpus> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string();
    let name = path.display().to_string();
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let sentences = match format {
        Format::Jsonl => ingest_jsonl(&raw, &stem, &name)?,
        Format::Csv => ingest_csv(&raw, &stem, &name)?,
    };
    let mut corpus = Corpus::new(sentences)?;
    corpus.provenance = Provenance {
        sources: vec![name],
        ingested_at: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs()),
    };
    Ok(corpus)
}

fn ingest_jsonl(raw: &[u8], stem: &str, name: &str) -> Result<Vec<Sentence>> {
    let text = std::str::from_utf8(raw)
        .map_err(|e| Error::data(format!("{name}: not valid UTF-8: {e}")))?;
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::Record {
            source_name: name.to_string(),
            record: line_no + 1,
            message,
        };
        let value: Value = serde_json::from_str(line).map_err(|e| record_err(e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(record_err("expected a JSON object".into()));
        };
        let (id, text, meta) = split_record(map).map_err(record_err)?;
        let id = id.unwrap_or_else(|| format!("{stem}:{}", out.len()));
        out.push(Sentence::with_meta(id, text, meta));
    }
    Ok(out)
}

fn ingest_csv(raw: &[u8], stem: &str, name: &str) -> Result<Vec<Sentence>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(raw);
    let headers = reader.headers()?.clone();
    let text_idx = headers
        .iter()
        .position(|h| h == "text")
        .ok_or_else(|| Error::Record {
            source_name: name.to_string(),
            record: 0,
            message: "header row has no `text` column".into(),
        })?;
    let id_idx = headers.iter().position(|h| h == "id");
    let mut out = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let text = record.get(text_idx).ok_or_else(|| Error::Record {
            source_name: name.to_string(),
            record: row + 1,
            message: "missing `text`".into(),
        })?;
        let id = id_idx
            .and_then(|i| record.get(i))
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| format!("{stem}:{row}"));
        let meta = headers
            .iter()
            .zip(record.iter())
            .enumerate()
            .filter(|(i, _)| *i != text_idx && Some(*i) != id_idx)
            .map(|(_, (h, v))| (h.to_string(), v.to_string()))
            .collect();
        out.push(Sentence::with_meta(id, text, meta));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    TooShort,
    Duplicate,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::TooShort => "too-short",
            DropReason::Duplicate => "duplicate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropped {
    pub sentence: Sentence,
    pub reason: DropReason,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub kept: Corpus,
    pub dropped: Vec<Dropped>,
}

impl FilterOutput {
    pub fn dropped_corpus(&self) -> Corpus {
        Corpus::from_parts(
            self.dropped.iter().map(|d| d.sentence.clone()).collect(),
            self.kept.provenance.clone(),
        )
    }
}

/// Keeps sentences with more than `min_words` words and, when `dedupe` is
/// set, drops every repeat of an already kept text (compared after trimming
/// outer whitespace).
pub fn filter(corpus: &Corpus, min_words: usize, dedupe: bool) -> FilterOutput {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for s in corpus.sentences() {
        let reason = if s.word_count() <= min_words {
            Some(DropReason::TooShort)
        } else if dedupe && !seen.insert(s.text.trim()) {
            Some(DropReason::Duplicate)
        } else {
            None
        };
        match reason {
            Some(reason) => dropped.push(Dropped {
                sentence: s.clone(),
                reason,
            }),
            None => kept.push(s.clone()),
        }
    }
    FilterOutput {
        kept: Corpus::from_parts(kept, corpus.provenance.clone()),
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn tokenize_keeps_char_offsets() {
        let toks = tokenize("O lucro líquido aumentou");
        let spans: Vec<_> = toks.iter().map(|t| (t.surface.as_str(), t.start, t.end)).collect();
        assert_eq!(
            spans,
            vec![("O", 0, 1), ("lucro", 2, 7), ("líquido", 8, 15), ("aumentou", 16, 24)]
        );
    }

    #[test]
    fn char_slice_handles_multibyte() {
        let t = "O lucro líquido do Santander";
        assert_eq!(char_slice(t, 2, 15), "lucro líquido");
        assert_eq!(char_slice(t, 19, 28), "Santander");
        assert_eq!(char_slice(t, 28, 28), "");
        assert_eq!(char_slice(t, 25, 99), "der");
    }

    #[test]
    fn tokens_rebuild_text() {
        let text = "  Por favor,\taguardem.  ";
        let toks = tokenize(text);
        let mut rebuilt = String::new();
        let mut pos = 0;
        for t in &toks {
            rebuilt.push_str(char_slice(text, pos, t.start));
            rebuilt.push_str(&t.surface);
            pos = t.end;
        }
        rebuilt.push_str(char_slice(text, pos, usize::MAX));
        assert_eq!(rebuilt, text);
    }

    #[test]
    fn word_count_ignores_punctuation_tokens() {
        let s = Sentence::new("a", "Resultado - de 10 % .");
        assert_eq!(s.tokens.len(), 6);
        assert_eq!(s.word_count(), 3);
    }

    fn write_tmp(suffix: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_single_jsonl_record() {
        let f = write_tmp(".jsonl", "{\"text\":\"Obrigado.\"}\n");
        let c = ingest(f.path(), Format::Jsonl).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences()[0].tokens.len(), 1);
        let stem = f.path().file_stem().unwrap().to_str().unwrap();
        assert_eq!(c.sentences()[0].id, format!("{stem}:0"));
    }

    #[test]
    fn ingest_csv_preserves_order_and_meta() {
        let f = write_tmp(
            ".csv",
            "ticker,year,text\nITUB,2022,Primeira frase.\nSANB,2021,\"Segunda, com vírgula.\"\nBBAS,2020,Terceira.\n",
        );
        let c = ingest(f.path(), Format::Csv).unwrap();
        let texts: Vec<_> = c.sentences().iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["Primeira frase.", "Segunda, com vírgula.", "Terceira."]);
        assert_eq!(c.sentences()[1].meta["ticker"], "SANB");
        assert_eq!(c.sentences()[1].meta["year"], "2021");
    }

    #[test]
    fn ingest_reports_missing_text_with_row() {
        let f = write_tmp(".jsonl", "{\"text\":\"ok\"}\n{\"body\":\"nope\"}\n");
        match ingest(f.path(), Format::Jsonl) {
            Err(Error::Record { record, .. }) => assert_eq!(record, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp(".csv", "id,body\n1,x\n");
        assert!(matches!(ingest(f.path(), Format::Csv), Err(Error::Record { .. })));
    }

    #[test]
    fn ingest_missing_file_is_io_error() {
        let err = ingest(Path::new("/definitely/not/here.jsonl"), Format::Jsonl).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn sentence_roundtrips_through_jsonl() {
        let mut meta = BTreeMap::new();
        meta.insert("year".to_string(), "2022".to_string());
        let s = Sentence::with_meta("x:1", "Lucro de R$ 9,8 bilhões.", meta);
        let line = serde_json::to_string(&s).unwrap();
        assert_eq!(line, r#"{"id":"x:1","text":"Lucro de R$ 9,8 bilhões.","year":"2022"}"#);
        let back: Sentence = serde_json::from_str(&line).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Corpus::new(vec![Sentence::new("a", "x"), Sentence::new("a", "y")]);
        assert!(err.is_err());
    }

    #[test]
    fn filter_drops_four_word_greeting() {
        let c = Corpus::new(vec![Sentence::new("g", "Muito obrigado a todos.")]).unwrap();
        let out = filter(&c, 4, true);
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped[0].reason, DropReason::TooShort);
    }

    #[test]
    fn filter_dedupes_in_order() {
        let text = "A receita cresceu muito neste trimestre.";
        let c = Corpus::new(vec![
            Sentence::new("a", text),
            Sentence::new("b", format!(" {text} ")),
        ])
        .unwrap();
        let out = filter(&c, 4, true);
        assert_eq!(out.kept.sentences()[0].id, "a");
        assert_eq!(out.dropped[0].sentence.id, "b");
        assert_eq!(out.dropped[0].reason, DropReason::Duplicate);
        assert_eq!(filter(&c, 4, false).kept.len(), 2);
    }

    #[test]
    fn filter_noop() {
        let sentences = (0..10).map(|i| Sentence::new(format!("s{i}"), "a b")).collect();
        let c = Corpus::new(sentences).unwrap();
        assert_eq!(filter(&c, 0, false).kept.len(), 10);
    }
}
