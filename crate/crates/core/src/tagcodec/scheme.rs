use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Tag;
use crate::error::{Error, Result};

/// The 23 financial-domain labels of the shipped scheme.
pub const DEFAULT_LABELS: [&str; 23] = [
    "BALANCO_PATRIMONIAL",
    "CARTEIRA",
    "CLIENTE",
    "COMPANY",
    "CONDICOES_MACROECONOMICAS",
    "DESPESA",
    "INDICADOR_EFICIENCIA",
    "INDICADOR_LIQUIDEZ",
    "INDICADOR_RENTABILIDADE",
    "INDICADOR_VALUATION",
    "LUCRO",
    "MONEY",
    "ORG",
    "PERCENTUAL",
    "PRODUTO",
    "PROVENTO",
    "PROVISAO",
    "QUARTER",
    "RECEITA",
    "RESULTADO",
    "RISCO",
    "SEMESTER",
    "YEAR",
];

/// Sorted label set plus the derived tag list and tag-to-id map.
///
/// `O` is id 0; label `k` (0-based, sorted) owns `B-` at `2k + 1` and `I-`
/// at `2k + 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemeFile")]
pub struct TagScheme {
    labels: Vec<String>,
    tags: Vec<String>,
    tag_to_id: BTreeMap<String, usize>,
}

#[derive(Deserialize)]
struct SchemeFile {
    labels: Vec<String>,
    #[serde(default)]
    tags: Option<Vec<String>>,
    #[serde(default)]
    tag_to_id: Option<BTreeMap<String, usize>>,
}

impl TryFrom<SchemeFile> for TagScheme {
    type Error = Error;

    fn try_from(file: SchemeFile) -> Result<Self> {
        let scheme = build_scheme(&file.labels)?;
        if file.tags.as_ref().is_some_and(|t| *t != scheme.tags)
            || file.tag_to_id.as_ref().is_some_and(|m| *m != scheme.tag_to_id)
        {
            return Err(Error::config(
                "scheme file tags disagree with the sorted label list",
            ));
        }
        Ok(scheme)
    }
}

/// Builds the scheme from an unordered label list.
pub fn build_scheme<S: AsRef<str>>(labels: &[S]) -> Result<TagScheme> {
    if labels.is_empty() {
        return Err(Error::config("a tag scheme needs at least one label"));
    }
    let mut seen = HashSet::new();
    for l in labels {
        let l = l.as_ref();
        if l.is_empty() {
            return Err(Error::config("empty label"));
        }
        if l.chars().any(|c| c.is_whitespace() || matches!(c, '|' | '[' | ']')) {
            return Err(Error::config(format!(
                "label `{l}` contains whitespace or one of `|[]`"
            )));
        }
        if !seen.insert(l) {
            return Err(Error::config(format!("duplicate label `{l}`")));
        }
    }
    let mut sorted: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
    sorted.sort();
    let mut tags = vec!["O".to_string()];
    for l in &sorted {
        tags.push(format!("B-{l}"));
        tags.push(format!("I-{l}"));
    }
    let tag_to_id = tags.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(TagScheme {
        labels: sorted,
        tags,
        tag_to_id,
    })
}

impl TagScheme {
    /// The shipped 23-label financial scheme.
    pub fn financial() -> Self {
        build_scheme(&DEFAULT_LABELS).expect("default labels are valid")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn tag_to_id(&self) -> &BTreeMap<String, usize> {
        &self.tag_to_id
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.label_index(label).is_some()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn id_of(&self, tag: &Tag) -> Option<usize> {
        match tag {
            Tag::Outside => Some(0),
            Tag::Begin(l) => self.label_index(l).map(|k| 2 * k + 1),
            Tag::Inside(l) => self.label_index(l).map(|k| 2 * k + 2),
        }
    }

    pub fn tag(&self, id: usize) -> Option<Tag> {
        if id == 0 {
            return Some(Tag::Outside);
        }
        let label = self.labels.get((id - 1) / 2)?.clone();
        Some(if id % 2 == 1 {
            Tag::Begin(label)
        } else {
            Tag::Inside(label)
        })
    }

    /// Label index owning tag id `id`, or `None` for `O`.
    pub fn label_of_id(&self, id: usize) -> Option<usize> {
        (id > 0 && id < self.tags.len()).then(|| (id - 1) / 2)
    }

    pub fn is_inside_id(&self, id: usize) -> bool {
        id > 0 && id % 2 == 0
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("scheme serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&raw)?)
    }
}
