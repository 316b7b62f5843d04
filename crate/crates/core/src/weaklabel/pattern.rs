use regex_automata::meta::Regex;
use regex_automata::{Anchored, Input, MatchKind};

use crate::error::{Error, Result};

/// A regex searched with leftmost-longest, non-overlapping semantics.
///
/// The leftmost start is found with an ordinary leftmost-first search, then
/// an anchored all-matches search from that start reports the longest end.
#[derive(Debug, Clone)]
pub struct LongestMatcher {
    source: String,
    first: Regex,
    longest: Regex,
}

impl LongestMatcher {
    pub fn new(pattern: &str) -> Result<Self> {
        let err = |e: regex_automata::meta::BuildError| {
            Error::config(format!("invalid regex `{pattern}`: {e}"))
        };
        let first = Regex::new(pattern).map_err(err)?;
        let longest = Regex::builder()
            .configure(Regex::config().match_kind(MatchKind::All))
            .build(pattern)
            .map_err(err)?;
        Ok(LongestMatcher {
            source: pattern.to_string(),
            first,
            longest,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Non-empty byte ranges of all non-overlapping leftmost-longest matches.
    pub fn find_iter(&self, haystack: &str) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut at = 0;
        while at <= haystack.len() {
            let Some(m) = self.first.search(&Input::new(haystack).range(at..)) else {
                break;
            };
            let end = self
                .longest
                .search(&Input::new(haystack).range(m.start()..).anchored(Anchored::Yes))
                .map_or(m.end(), |l| l.end().max(m.end()));
            if end > m.start() {
                out.push((m.start(), end));
                at = end;
            } else {
                // Skip an empty match without splitting a char.
                at = m.start()
                    + haystack[m.start()..]
                        .chars()
                        .next()
                        .map_or(1, char::len_utf8);
            }
        }
        out
    }
}

/// Maps byte offsets at char boundaries to char offsets.
pub(crate) struct CharIndex {
    bytes: Vec<usize>,
}

impl CharIndex {
    pub fn new(text: &str) -> Self {
        let mut bytes: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        bytes.push(text.len());
        CharIndex { bytes }
    }

    pub fn char_of(&self, byte: usize) -> usize {
        self.bytes
            .binary_search(&byte)
            .expect("offset on a char boundary")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefers_longest_alternative() {
        let m = LongestMatcher::new(r"R\$\s?\d+|R\$\s?\d+\s+MM\b").unwrap();
        let h = "O lucro foi de R$ 900 MM e R$ 5";
        let got: Vec<&str> = m.find_iter(h).into_iter().map(|(a, b)| &h[a..b]).collect();
        assert_eq!(got, ["R$ 900 MM", "R$ 5"]);
    }

    #[test]
    fn empty_matches_skipped() {
        let m = LongestMatcher::new(r"x*").unwrap();
        let h = "ação xx";
        let got: Vec<&str> = m.find_iter(h).into_iter().map(|(a, b)| &h[a..b]).collect();
        assert_eq!(got, ["xx"]);
    }

    #[test]
    fn invalid_pattern_is_config_error() {
        assert!(LongestMatcher::new("(unclosed").unwrap_err().is_config());
    }

    #[test]
    fn char_index() {
        let idx = CharIndex::new("líquido x");
        assert_eq!(idx.char_of(0), 0);
        assert_eq!(idx.char_of(3), 2);
        assert_eq!(idx.char_of(10), 9);
    }
}
