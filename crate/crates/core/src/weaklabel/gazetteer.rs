use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

fn default_true() -> bool {
    true
}

/// A phrase list for one label, as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gazetteer {
    pub label: String,
    pub case_sensitive: bool,
    #[serde(default = "default_true")]
    pub accent_sensitive: bool,
    pub phrases: Vec<String>,
}

impl Gazetteer {
    /// Whitespace-normalizes the phrases and checks the list is usable.
    pub fn new(label: impl Into<String>, phrases: &[&str], case_sensitive: bool) -> Result<Self> {
        Gazetteer {
            label: label.into(),
            case_sensitive,
            accent_sensitive: true,
            phrases: phrases.iter().map(|p| p.to_string()).collect(),
        }
        .normalized()
    }

    pub fn with_accent_sensitive(mut self, yes: bool) -> Self {
        self.accent_sensitive = yes;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: Gazetteer = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("gazetteer {}: {e}", path.display())))?;
        g.normalized()
            .map_err(|e| Error::config(format!("gazetteer {}: {e}", path.display())))
    }

    pub(crate) fn normalized(mut self) -> Result<Self> {
        if self.label.trim().is_empty() {
            return Err(Error::config("gazetteer has an empty label"));
        }
        if self.phrases.is_empty() {
            return Err(Error::config(format!("gazetteer `{}` has no phrases", self.label)));
        }
        for p in &mut self.phrases {
            let norm = p.split_whitespace().collect::<Vec<_>>().join(" ");
            if norm.is_empty() {
                return Err(Error::config(format!("gazetteer `{}` has an empty phrase", self.label)));
            }
            *p = norm;
        }
        Ok(self)
    }
}

/// Splits text into maximal alphanumeric runs and single punctuation chars,
/// returning each piece with its char range. Whitespace is dropped.
fn pieces(text: &str) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut word: Option<(usize, String)> = None;
    let mut n = 0;
    for (i, c) in text.chars().enumerate() {
        n = i + 1;
        if c.is_alphanumeric() || is_combining_mark(c) {
            word.get_or_insert_with(|| (i, String::new())).1.push(c);
            continue;
        }
        if let Some((s, w)) = word.take() {
            out.push((s, i, w));
        }
        if !c.is_whitespace() {
            out.push((i, i + 1, c.to_string()));
        }
    }
    if let Some((s, w)) = word {
        out.push((s, n, w));
    }
    out
}

#[derive(Debug, Default, Clone)]
struct Node {
    children: HashMap<String, usize>,
    terminal: bool,
}

/// An immutable trie over phrase pieces, built once and shared by workers.
#[derive(Debug, Clone)]
pub struct GazetteerMatcher {
    label: String,
    source: String,
    case_sensitive: bool,
    accent_sensitive: bool,
    nodes: Vec<Node>,
}

impl GazetteerMatcher {
    pub fn new(g: &Gazetteer) -> Self {
        let mut m = GazetteerMatcher {
            label: g.label.clone(),
            source: format!("gazetteer:{}", g.label),
            case_sensitive: g.case_sensitive,
            accent_sensitive: g.accent_sensitive,
            nodes: vec![Node::default()],
        };
        for phrase in &g.phrases {
            let keys: Vec<String> = pieces(phrase).into_iter().map(|(_, _, p)| m.key(&p)).collect();
            let mut at = 0;
            for k in keys {
                at = match m.nodes[at].children.get(&k) {
                    Some(&next) => next,
                    None => {
                        m.nodes.push(Node::default());
                        let next = m.nodes.len() - 1;
                        m.nodes[at].children.insert(k, next);
                        next
                    }
                };
            }
            m.nodes[at].terminal = true;
        }
        m
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn key(&self, piece: &str) -> String {
        let mut k = if self.case_sensitive {
            piece.to_string()
        } else {
            piece.to_lowercase()
        };
        if !self.accent_sensitive {
            k = k.nfd().filter(|c| !is_combining_mark(*c)).collect();
        }
        k
    }

    /// Char ranges of non-overlapping matches, longest at each start.
    pub fn find(&self, text: &str) -> Vec<(usize, usize)> {
        let ps = pieces(text);
        let keys: Vec<String> = ps.iter().map(|(_, _, p)| self.key(p)).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < ps.len() {
            let mut at = 0;
            let mut best = None;
            for (j, k) in keys.iter().enumerate().skip(i) {
                match self.nodes[at].children.get(k) {
                    Some(&next) => at = next,
                    None => break,
                }
                if self.nodes[at].terminal {
                    best = Some(j);
                }
            }
            match best {
                Some(j) => {
                    out.push((ps[i].0, ps[j].1));
                    i = j + 1;
                }
                None => i += 1,
            }
        }
        out
    }
}
