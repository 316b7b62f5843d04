//! Labeling functions: regex annotators, heuristics and gazetteers.
//!
//! Each function labels the corpus on its own. Overlaps between functions
//! are left for the aggregation step.

mod gazetteer;
mod heuristic;
mod pattern;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, Sentence};
use crate::error::{Error, Result};
use crate::tagcodec::TagScheme;

pub use gazetteer::{Gazetteer, GazetteerMatcher};
pub use heuristic::HeuristicRule;
pub use pattern::LongestMatcher;
use pattern::CharIndex;

/// Version tag of the shipped default rules and gazetteers.
pub const DEFAULT_RULES_VERSION: &str = "rules-v1";

const DEFAULT_RULES: &str = include_str!("../../data/rules-v1.json");

const DEFAULT_GAZETTEERS: &[(&str, &str)] = &[
    ("balanco_patrimonial.json", include_str!("../../data/gazetteers/balanco_patrimonial.json")),
    ("carteira.json", include_str!("../../data/gazetteers/carteira.json")),
    ("cliente.json", include_str!("../../data/gazetteers/cliente.json")),
    ("company.json", include_str!("../../data/gazetteers/company.json")),
    ("condicoes_macroeconomicas.json", include_str!("../../data/gazetteers/condicoes_macroeconomicas.json")),
    ("despesa.json", include_str!("../../data/gazetteers/despesa.json")),
    ("indicador_eficiencia.json", include_str!("../../data/gazetteers/indicador_eficiencia.json")),
    ("indicador_liquidez.json", include_str!("../../data/gazetteers/indicador_liquidez.json")),
    ("indicador_rentabilidade.json", include_str!("../../data/gazetteers/indicador_rentabilidade.json")),
    ("indicador_valuation.json", include_str!("../../data/gazetteers/indicador_valuation.json")),
    ("lucro.json", include_str!("../../data/gazetteers/lucro.json")),
    ("org.json", include_str!("../../data/gazetteers/org.json")),
    ("produto.json", include_str!("../../data/gazetteers/produto.json")),
    ("provento.json", include_str!("../../data/gazetteers/provento.json")),
    ("provisao.json", include_str!("../../data/gazetteers/provisao.json")),
    ("receita.json", include_str!("../../data/gazetteers/receita.json")),
    ("resultado.json", include_str!("../../data/gazetteers/resultado.json")),
    ("risco.json", include_str!("../../data/gazetteers/risco.json")),
];

/// One labeled span proposed by one labeling function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub sentence_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub surface: String,
    pub label: String,
    pub source: String,
}

impl SpanAnnotation {
    fn new(sentence: &Sentence, start: usize, end: usize, label: &str, source: &str) -> Self {
        SpanAnnotation {
            sentence_id: sentence.id.clone(),
            char_start: start,
            char_end: end,
            surface: sentence.slice(start, end).to_string(),
            label: label.to_string(),
            source: source.to_string(),
        }
    }

    /// Checks offsets and surface against the sentence the span points into.
    pub fn check(&self, sentence: &Sentence) -> Result<()> {
        let ok = self.char_start < self.char_end
            && self.char_end <= sentence.char_len()
            && sentence.slice(self.char_start, self.char_end) == self.surface;
        if ok {
            Ok(())
        } else {
            Err(Error::data(format!(
                "span {}..{} `{}` does not match sentence `{}`",
                self.char_start, self.char_end, self.surface, sentence.id
            )))
        }
    }
}

/// A regex annotator for one label.
#[derive(Debug, Clone)]
pub struct PatternAnnotator {
    pub name: String,
    pub label: String,
    matcher: LongestMatcher,
}

impl PatternAnnotator {
    pub fn new(name: impl Into<String>, label: impl Into<String>, pattern: &str) -> Result<Self> {
        let name = name.into();
        let matcher = LongestMatcher::new(pattern)
            .map_err(|e| Error::config(format!("rule `{name}`: {e}")))?;
        Ok(PatternAnnotator {
            name,
            label: label.into(),
            matcher,
        })
    }

    pub fn pattern(&self) -> &str {
        self.matcher.as_str()
    }
}

#[derive(Debug, Clone)]
pub struct HeuristicAnnotator {
    pub name: String,
    pub label: String,
    pub rule: HeuristicRule,
}

impl HeuristicAnnotator {
    /// The rule under its own name and default label.
    pub fn standard(rule: HeuristicRule) -> Self {
        HeuristicAnnotator {
            name: rule.to_string(),
            label: rule.default_label().to_string(),
            rule,
        }
    }
}

#[derive(Debug, Clone)]
pub enum LabelingFunction {
    Regex(PatternAnnotator),
    Heuristic(HeuristicAnnotator),
    Gazetteer(GazetteerMatcher),
}

impl LabelingFunction {
    pub fn name(&self) -> &str {
        match self {
            LabelingFunction::Regex(p) => &p.name,
            LabelingFunction::Heuristic(h) => &h.name,
            LabelingFunction::Gazetteer(g) => g.source(),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            LabelingFunction::Regex(p) => &p.label,
            LabelingFunction::Heuristic(h) => &h.label,
            LabelingFunction::Gazetteer(g) => g.label(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LabelingFunction::Regex(_) => "regex",
            LabelingFunction::Heuristic(_) => "heuristic",
            LabelingFunction::Gazetteer(_) => "gazetteer",
        }
    }

    /// Spans this function proposes for one sentence, in text order.
    pub fn annotate(&self, sentence: &Sentence) -> Vec<SpanAnnotation> {
        let text = sentence.text.as_str();
        let char_ranges = |bytes: Vec<(usize, usize)>| {
            let idx = CharIndex::new(text);
            bytes
                .into_iter()
                .map(|(a, b)| (idx.char_of(a), idx.char_of(b)))
                .collect::<Vec<_>>()
        };
        let ranges = match self {
            LabelingFunction::Regex(p) => char_ranges(p.matcher.find_iter(text)),
            LabelingFunction::Heuristic(h) => char_ranges(h.rule.find(text)),
            LabelingFunction::Gazetteer(g) => g.find(text),
        };
        ranges
            .into_iter()
            .map(|(a, b)| SpanAnnotation::new(sentence, a, b, self.label(), self.name()))
            .collect()
    }
}

/// One entry of a rule file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub name: String,
    pub kind: RuleKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    /// Heuristic rule id; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Regex,
    Heuristic,
}

impl RuleSpec {
    fn build(&self) -> Result<LabelingFunction> {
        match self.kind {
            RuleKind::Regex => {
                let pattern = self
                    .pattern
                    .as_deref()
                    .ok_or_else(|| Error::config(format!("regex rule `{}` has no pattern", self.name)))?;
                Ok(LabelingFunction::Regex(PatternAnnotator::new(&self.name, &self.label, pattern)?))
            }
            RuleKind::Heuristic => {
                let rule = self.rule.as_deref().unwrap_or(&self.name).parse()?;
                Ok(LabelingFunction::Heuristic(HeuristicAnnotator {
                    name: self.name.clone(),
                    label: self.label.clone(),
                    rule,
                }))
            }
        }
    }
}

/// A set of labeling functions with unique names.
#[derive(Debug, Clone, Default)]
pub struct FunctionSet {
    functions: Vec<LabelingFunction>,
    fingerprint: Sha256,
}

impl FunctionSet {
    pub fn new() -> Self {
        FunctionSet::default()
    }

    pub fn push(&mut self, f: LabelingFunction) -> Result<()> {
        if self.functions.iter().any(|g| g.name() == f.name()) {
            return Err(Error::config(format!("duplicate labeling function `{}`", f.name())));
        }
        self.functions.push(f);
        Ok(())
    }

    /// Parses a rule file (a JSON list of rules).
    pub fn add_rules_json(&mut self, json: &str, origin: &str) -> Result<()> {
        let rules: Vec<RuleSpec> = serde_json::from_str(json)
            .map_err(|e| Error::config(format!("rule file {origin}: {e}")))?;
        self.fingerprint.update(b"rules\0");
        self.fingerprint.update(json.as_bytes());
        for r in &rules {
            self.push(r.build()?)?;
        }
        Ok(())
    }

    pub fn add_gazetteer_json(&mut self, json: &str, origin: &str) -> Result<()> {
        let g: Gazetteer = serde_json::from_str(json)
            .map_err(|e| Error::config(format!("gazetteer {origin}: {e}")))?;
        let g = g
            .normalized()
            .map_err(|e| Error::config(format!("gazetteer {origin}: {e}")))?;
        self.fingerprint.update(b"gazetteer\0");
        self.fingerprint.update(json.as_bytes());
        self.push(LabelingFunction::Gazetteer(GazetteerMatcher::new(&g)))
    }

    pub fn add_gazetteer(&mut self, g: &Gazetteer) -> Result<()> {
        self.fingerprint.update(b"gazetteer\0");
        self.fingerprint.update(serde_json::to_vec(g)?);
        self.push(LabelingFunction::Gazetteer(GazetteerMatcher::new(g)))
    }

    pub fn load_rules(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.add_rules_json(&text, &path.display().to_string())
    }

    /// Loads every `*.json` file in `dir`, in file-name order.
    pub fn load_gazetteer_dir(&mut self, dir: &Path) -> Result<()> {
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "gazetteer directory {} does not exist",
                dir.display()
            )));
        }
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            self.add_gazetteer_json(&text, &path.display().to_string())?;
        }
        Ok(())
    }

    /// The shipped regex rules, heuristics and gazetteers.
    pub fn defaults() -> Self {
        let mut set = FunctionSet::new();
        set.add_default_rules().expect("default rules are valid");
        set.add_default_gazetteers().expect("default gazetteers are valid");
        set
    }

    pub fn add_default_rules(&mut self) -> Result<()> {
        self.add_rules_json(DEFAULT_RULES, DEFAULT_RULES_VERSION)
    }

    pub fn add_default_gazetteers(&mut self) -> Result<()> {
        for (name, json) in DEFAULT_GAZETTEERS {
            self.add_gazetteer_json(json, name)?;
        }
        Ok(())
    }

    /// Writes the default rule file and gazetteers to disk.
    pub fn write_defaults(rules_path: &Path, gazetteer_dir: &Path) -> Result<()> {
        std::fs::write(rules_path, DEFAULT_RULES).map_err(|e| Error::io(rules_path, e))?;
        std::fs::create_dir_all(gazetteer_dir).map_err(|e| Error::io(gazetteer_dir, e))?;
        for (name, json) in DEFAULT_GAZETTEERS {
            let p = gazetteer_dir.join(name);
            std::fs::write(&p, json).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn functions(&self) -> &[LabelingFunction] {
        &self.functions
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.name().to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Hex digest over the rule and gazetteer sources in load order.
    pub fn fingerprint(&self) -> String {
        hex::encode(self.fingerprint.clone().finalize())
    }

    pub fn validate(&self, scheme: &TagScheme) -> Result<()> {
        for f in &self.functions {
            if !scheme.has_label(f.label()) {
                return Err(Error::config(format!(
                    "labeling function `{}` targets unknown label `{}`",
                    f.name(),
                    f.label()
                )));
            }
        }
        Ok(())
    }

    /// Runs every function over the corpus. Output is ordered by sentence,
    /// then function, then position.
    pub fn annotate(&self, corpus: &Corpus) -> Vec<SpanAnnotation> {
        annotate_with(corpus, &self.functions)
    }
}

fn annotate_with(corpus: &Corpus, functions: &[LabelingFunction]) -> Vec<SpanAnnotation> {
    corpus
        .sentences()
        .par_iter()
        .flat_map_iter(|s| functions.iter().flat_map(move |f| f.annotate(s)))
        .collect()
}

pub fn run_regex_annotators(corpus: &Corpus, patterns: &[PatternAnnotator]) -> Vec<SpanAnnotation> {
    let fs: Vec<_> = patterns.iter().cloned().map(LabelingFunction::Regex).collect();
    annotate_with(corpus, &fs)
}

pub fn run_heuristic_annotators(corpus: &Corpus, rules: &[HeuristicRule]) -> Vec<SpanAnnotation> {
    let fs: Vec<_> = rules
        .iter()
        .map(|r| LabelingFunction::Heuristic(HeuristicAnnotator::standard(*r)))
        .collect();
    annotate_with(corpus, &fs)
}

pub fn run_gazetteer(corpus: &Corpus, gazetteers: &[Gazetteer]) -> Vec<SpanAnnotation> {
    let fs: Vec<_> = gazetteers
        .iter()
        .map(|g| LabelingFunction::Gazetteer(GazetteerMatcher::new(g)))
        .collect();
    annotate_with(corpus, &fs)
}

/// Number of spans per label.
pub fn label_counts(spans: &[SpanAnnotation]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in spans {
        *counts.entry(s.label.clone()).or_insert(0) += 1;
    }
    counts
}

/// Checks every span against the corpus: known sentence, in-range offsets,
/// matching surface, and a label from `scheme`.
pub fn check_spans(corpus: &Corpus, spans: &[SpanAnnotation], scheme: &TagScheme) -> Result<()> {
    let by_id: HashMap<&str, &Sentence> = corpus.sentences().iter().map(|s| (s.id.as_str(), s)).collect();
    for s in spans {
        let sentence = by_id
            .get(s.sentence_id.as_str())
            .ok_or_else(|| Error::data(format!("span refers to unknown sentence `{}`", s.sentence_id)))?;
        s.check(sentence)?;
        if !scheme.has_label(&s.label) {
            return Err(Error::data(format!("span label `{}` is not in the scheme", s.label)));
        }
    }
    Ok(())
}
