//! Hand-written annotators for percentages and monetary amounts.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::pattern::LongestMatcher;
use crate::error::{Error, Result};

// Brazilian numerals: `.` groups thousands, `,` starts the decimals.
const NUMBER: &str = r"\d{1,3}(?:\.\d{3})+(?:,\d+)?|\d+(?:,\d+)?";

const SCALE_WORDS: &[&str] = &[
    "mil", "milhão", "milhões", "bilhão", "bilhões", "trilhão", "trilhões", "MM", "MI", "BI", "Mi",
    "Bi", "mi", "bi", "mm", "bn", "tri",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeuristicRule {
    Percent,
    Money,
}

impl HeuristicRule {
    pub fn default_label(self) -> &'static str {
        match self {
            HeuristicRule::Percent => "PERCENTUAL",
            HeuristicRule::Money => "MONEY",
        }
    }

    fn matcher(self) -> &'static LongestMatcher {
        static PERCENT: OnceLock<LongestMatcher> = OnceLock::new();
        static MONEY: OnceLock<LongestMatcher> = OnceLock::new();
        match self {
            HeuristicRule::Percent => PERCENT.get_or_init(|| {
                let p = format!(r"[-+]?(?:{NUMBER})(?:\s?%|\s+por\s+cento\b)");
                LongestMatcher::new(&p).expect("percent pattern compiles")
            }),
            HeuristicRule::Money => MONEY.get_or_init(|| {
                let scales = SCALE_WORDS.join("|");
                let p = format!(r"(?:\bR|\bUS)\$\s?-?(?:{NUMBER})(?:\s?(?:{scales})\b)?");
                LongestMatcher::new(&p).expect("money pattern compiles")
            }),
        }
    }

    /// Byte ranges of every match in `text`.
    pub fn find(self, text: &str) -> Vec<(usize, usize)> {
        let hits = self.matcher().find_iter(text);
        match self {
            // A percentage glued to a preceding word ("x10%") is not a value.
            HeuristicRule::Percent => hits
                .into_iter()
                .filter(|&(a, _)| !text[..a].chars().next_back().is_some_and(char::is_alphanumeric))
                .collect(),
            HeuristicRule::Money => hits,
        }
    }
}

impl fmt::Display for HeuristicRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeuristicRule::Percent => "percent",
            HeuristicRule::Money => "money",
        })
    }
}

impl FromStr for HeuristicRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percent" => Ok(HeuristicRule::Percent),
            "money" => Ok(HeuristicRule::Money),
            other => Err(Error::config(format!("unknown heuristic rule `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn found(rule: HeuristicRule, text: &str) -> Vec<String> {
        rule.find(text).into_iter().map(|(a, b)| text[a..b].to_string()).collect()
    }

    #[test]
    fn percent_forms() {
        assert_eq!(found(HeuristicRule::Percent, "foram 0,08% de perdas"), ["0,08%"]);
        assert_eq!(found(HeuristicRule::Percent, "alta de 12 % e queda de -1,5%"), ["12 %", "-1,5%"]);
        assert_eq!(found(HeuristicRule::Percent, "cresceu 3 por cento"), ["3 por cento"]);
        assert!(found(HeuristicRule::Percent, "código x10%").is_empty());
    }

    #[test]
    fn money_forms() {
        assert_eq!(found(HeuristicRule::Money, "O lucro foi de R$ 900 MM"), ["R$ 900 MM"]);
        assert_eq!(found(HeuristicRule::Money, "R$ 10,8 bilhões"), ["R$ 10,8 bilhões"]);
        assert_eq!(found(HeuristicRule::Money, "de R$824,00 para R$ 1.234.567,89."), ["R$824,00", "R$ 1.234.567,89"]);
        assert_eq!(found(HeuristicRule::Money, "US$ 2 bi"), ["US$ 2 bi"]);
        // Scale word must be a whole word.
        assert_eq!(found(HeuristicRule::Money, "R$ 5 milhares"), ["R$ 5"]);
    }
}
