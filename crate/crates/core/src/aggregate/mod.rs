//! Consensus labels from conflicting labeling functions: a majority-vote
//! baseline and an HMM fitted with EM over BIO states.

pub mod hmm;
mod model;
mod votes;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Sentence};
use crate::error::Result;
use crate::tagcodec::{entity_runs, Diagnostic, Tag, TagScheme, TaggedSentence};
use crate::weaklabel::SpanAnnotation;

pub use model::{fit_hmm, AggregationModel, Decoded, DecodeMode, FunctionEmissions, HmmConfig};
pub use votes::{build_vote_matrix, majority_vote, TieBreak, VoteMatrix, ABSTAIN};

/// One consensus entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedEntity {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub label: String,
    pub confidence: f64,
}

/// A sentence with its consensus entities, as written to the annotated
/// corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub id: String,
    pub text: String,
    pub entities: Vec<AnnotatedEntity>,
}

impl AnnotatedSentence {
    /// Rebuilds entities from token tags and per-token confidences.
    pub fn from_tags(sentence: &Sentence, tags: &[Tag], confidence: &[f64]) -> Self {
        let entities = entity_runs(tags)
            .into_iter()
            .map(|run| {
                let start = sentence.tokens[run.start].start;
                let end = sentence.tokens[run.end - 1].end;
                let conf = &confidence[run.start..run.end];
                AnnotatedEntity {
                    start,
                    end,
                    surface: sentence.slice(start, end).to_string(),
                    label: run.label,
                    confidence: conf.iter().sum::<f64>() / conf.len() as f64,
                }
            })
            .collect();
        AnnotatedSentence {
            id: sentence.id.clone(),
            text: sentence.text.clone(),
            entities,
        }
    }

    /// Token-level view for the encoders.
    pub fn to_tagged(&self, scheme: &TagScheme) -> Result<(TaggedSentence, Vec<Diagnostic>)> {
        let spans: Vec<_> = self
            .entities
            .iter()
            .map(|e| crate::tagcodec::EntitySpan {
                start: e.start,
                end: e.end,
                label: e.label.clone(),
            })
            .collect();
        crate::tagcodec::spans_to_bio(&Sentence::new(&self.id, &self.text), &spans, scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateConfig {
    #[serde(default)]
    pub hmm: HmmConfig,
    #[serde(default)]
    pub mode: DecodeMode,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        AggregateConfig {
            hmm: HmmConfig::default(),
            mode: DecodeMode::Viterbi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub sentences: usize,
    pub annotated_sentences: usize,
    pub unannotated_sentences: usize,
    pub total_annotations: usize,
    /// Mean entities per annotated sentence.
    pub mean_per_annotated: f64,
    pub per_label: BTreeMap<String, usize>,
    pub snapped_or_dropped_spans: usize,
}

impl AggregateReport {
    pub fn new(annotated: &[AnnotatedSentence], unannotated: usize, diagnostics: usize) -> Self {
        let mut per_label = BTreeMap::new();
        for e in annotated.iter().flat_map(|s| &s.entities) {
            *per_label.entry(e.label.clone()).or_insert(0) += 1;
        }
        let total: usize = per_label.values().sum();
        AggregateReport {
            sentences: annotated.len() + unannotated,
            annotated_sentences: annotated.len(),
            unannotated_sentences: unannotated,
            total_annotations: total,
            mean_per_annotated: mean_per_sentence(total, annotated.len()),
            per_label,
            snapped_or_dropped_spans: diagnostics,
        }
    }
}

pub fn mean_per_sentence(annotations: usize, sentences: usize) -> f64 {
    if sentences == 0 {
        0.0
    } else {
        annotations as f64 / sentences as f64
    }
}

pub struct AggregateOutput {
    pub annotated: Vec<AnnotatedSentence>,
    pub unannotated: Corpus,
    pub model: AggregationModel,
    pub report: AggregateReport,
    pub diagnostics: Vec<Diagnostic>,
}

/// Vote matrices for every sentence, in corpus order.
pub fn vote_matrices(
    corpus: &Corpus,
    spans: &[SpanAnnotation],
    functions: &[String],
    scheme: &TagScheme,
) -> Result<(Vec<VoteMatrix>, Vec<Diagnostic>)> {
    let mut by_sentence: HashMap<&str, Vec<&SpanAnnotation>> = HashMap::new();
    for s in spans {
        by_sentence.entry(s.sentence_id.as_str()).or_default().push(s);
    }
    let known: std::collections::HashSet<&str> = corpus.sentences().iter().map(|s| s.id.as_str()).collect();
    if let Some(orphan) = by_sentence.keys().find(|id| !known.contains(*id)) {
        return Err(crate::Error::data(format!("span refers to unknown sentence `{orphan}`")));
    }
    let mut matrices = Vec::with_capacity(corpus.len());
    let mut diagnostics = Vec::new();
    for sentence in corpus.sentences() {
        let mine = by_sentence.get(sentence.id.as_str()).map_or(&[][..], Vec::as_slice);
        let (m, d) = build_vote_matrix(sentence, mine, functions, scheme)?;
        matrices.push(m);
        diagnostics.extend(d);
    }
    Ok((matrices, diagnostics))
}

/// Decodes every sentence with a fitted model and partitions the corpus.
pub fn decode_corpus(
    corpus: &Corpus,
    matrices: &[VoteMatrix],
    model: &AggregationModel,
    scheme: &TagScheme,
    mode: DecodeMode,
) -> Result<(Vec<AnnotatedSentence>, Corpus)> {
    let mut annotated = Vec::new();
    let mut rest = Vec::new();
    for (sentence, m) in corpus.sentences().iter().zip(matrices) {
        let d = model.decode(m, scheme, mode)?;
        let a = AnnotatedSentence::from_tags(sentence, &d.tags, &d.confidence);
        if a.entities.is_empty() {
            rest.push(sentence.clone());
        } else {
            annotated.push(a);
        }
    }
    Ok((annotated, Corpus::from_parts(rest, corpus.provenance.clone())))
}

/// Fits the HMM on the corpus votes, decodes every sentence and separates
/// sentences with at least one entity from the rest.
pub fn aggregate_corpus(
    corpus: &Corpus,
    spans: &[SpanAnnotation],
    functions: &[String],
    scheme: &TagScheme,
    config: &AggregateConfig,
) -> Result<AggregateOutput> {
    let (matrices, diagnostics) = vote_matrices(corpus, spans, functions, scheme)?;
    let model = fit_hmm(&matrices, scheme, &config.hmm)?;
    let (annotated, unannotated) = decode_corpus(corpus, &matrices, &model, scheme, config.mode)?;
    let report = AggregateReport::new(&annotated, unannotated.len(), diagnostics.len());
    Ok(AggregateOutput {
        annotated,
        unannotated,
        model,
        report,
        diagnostics,
    })
}
