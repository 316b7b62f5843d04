//! Token-level MUC-5 categories, the derived error rates and manual
//! verification overrides.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::align::AlignedPair;
use super::CompareMode;
use crate::error::{Error, Result};
use crate::tagcodec::{Tag, TaggedSentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MucCategory {
    Cor,
    Inc,
    Mis,
    Spu,
}

impl fmt::Display for MucCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MucCategory::Cor => "COR",
            MucCategory::Inc => "INC",
            MucCategory::Mis => "MIS",
            MucCategory::Spu => "SPU",
        })
    }
}

impl FromStr for MucCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "COR" => Ok(MucCategory::Cor),
            "INC" => Ok(MucCategory::Inc),
            "MIS" => Ok(MucCategory::Mis),
            "SPU" => Ok(MucCategory::Spu),
            _ => Err(Error::data(format!("unknown MUC category `{s}`"))),
        }
    }
}

/// Category of one position, or `None` when both sides are `O`.
pub fn categorize_token(gold: &Tag, pred: &Tag, mode: CompareMode) -> Option<MucCategory> {
    match (gold.is_outside(), pred.is_outside()) {
        (true, true) => None,
        (true, false) => Some(MucCategory::Spu),
        (false, true) => Some(MucCategory::Mis),
        (false, false) if mode.same(gold, pred) => Some(MucCategory::Cor),
        (false, false) => Some(MucCategory::Inc),
    }
}

/// One categorized position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MucEvent {
    pub sentence_id: String,
    /// Position in the aligned pair; the token index when no alignment was
    /// needed.
    pub token_index: usize,
    pub category: MucCategory,
    pub gold: Tag,
    pub pred: Tag,
}

impl MucEvent {
    /// The label the event is tallied under: the gold label, or the
    /// predicted one for spurious events.
    pub fn class(&self) -> &str {
        match self.category {
            MucCategory::Spu => self.pred.label(),
            _ => self.gold.label(),
        }
        .expect("entity side present")
    }
}

pub fn muc_events(pair: &AlignedPair, mode: CompareMode) -> Vec<MucEvent> {
    pair.gold
        .iter()
        .zip(&pair.pred)
        .enumerate()
        .filter_map(|(i, (g, p))| {
            categorize_token(g, p, mode).map(|category| MucEvent {
                sentence_id: pair.sentence_id.clone(),
                token_index: i,
                category,
                gold: g.clone(),
                pred: p.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub cor: usize,
    pub inc: usize,
    pub mis: usize,
    pub spu: usize,
}

impl Counts {
    fn bump(&mut self, c: MucCategory, by: isize) {
        let slot = match c {
            MucCategory::Cor => &mut self.cor,
            MucCategory::Inc => &mut self.inc,
            MucCategory::Mis => &mut self.mis,
            MucCategory::Spu => &mut self.spu,
        };
        *slot = slot.checked_add_signed(by).expect("tally underflow");
    }

    pub fn get(&self, c: MucCategory) -> usize {
        match c {
            MucCategory::Cor => self.cor,
            MucCategory::Inc => self.inc,
            MucCategory::Mis => self.mis,
            MucCategory::Spu => self.spu,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MucTally {
    #[serde(flatten)]
    pub total: Counts,
    pub per_class: BTreeMap<String, Counts>,
}

impl MucTally {
    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a MucEvent>) -> Self {
        let mut t = MucTally::default();
        for e in events {
            t.add(e.class(), e.category, 1);
        }
        t
    }

    fn add(&mut self, class: &str, c: MucCategory, by: isize) {
        self.total.bump(c, by);
        self.per_class.entry(class.to_string()).or_default().bump(c, by);
    }

    pub fn merge(&mut self, other: &MucTally) {
        for (class, counts) in &other.per_class {
            for c in [MucCategory::Cor, MucCategory::Inc, MucCategory::Mis, MucCategory::Spu] {
                self.add(class, c, counts.get(c) as isize);
            }
        }
    }

    pub fn metrics(&self) -> MucMetrics {
        muc_metrics(&self.total)
    }
}

/// Categorizes an equal-length pair.
pub fn muc_categorize(gold: &TaggedSentence, pred: &TaggedSentence, mode: CompareMode) -> Result<MucTally> {
    let pair = AlignedPair::identity(gold, pred)?;
    Ok(MucTally::from_events(&muc_events(&pair, mode)))
}

/// The four error rates. A rate with a zero denominator is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MucMetrics {
    pub error_per_response_fill: Option<f64>,
    pub undergeneration: Option<f64>,
    pub overgeneration: Option<f64>,
    pub substitution: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn muc_metrics(c: &Counts) -> MucMetrics {
    MucMetrics {
        error_per_response_fill: ratio(c.inc + c.mis + c.spu, c.cor + c.inc + c.mis + c.spu),
        undergeneration: ratio(c.mis, c.cor + c.inc + c.mis),
        overgeneration: ratio(c.spu, c.cor + c.inc + c.spu),
        substitution: ratio(c.inc, c.cor + c.inc),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(Verdict::Yes),
            "no" => Ok(Verdict::No),
            _ => Err(Error::data(format!("verdict must be yes or no, got `{s}`"))),
        }
    }
}

/// A manual judgement of one INC, MIS or SPU event. `yes` means the model
/// was right.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub sentence_id: String,
    pub token_index: usize,
    pub category: MucCategory,
    pub verdict: Verdict,
}

#[derive(Deserialize)]
struct OverrideRow {
    sentence_id: String,
    token_index: usize,
    category: String,
    verdict: String,
}

pub fn load_overrides(path: &Path) -> Result<Vec<OverrideRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(format!("{}: {other:?}", path.display())),
    })?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<OverrideRow>().enumerate() {
        let record_err = |message: String| Error::Record {
            source_name: name.clone(),
            record: i + 1,
            message,
        };
        let row = row.map_err(|e| record_err(e.to_string()))?;
        let category = row.category.parse().map_err(|e: Error| record_err(e.to_string()))?;
        if category == MucCategory::Cor {
            return Err(record_err("COR events cannot be overridden".into()));
        }
        out.push(OverrideRecord {
            sentence_id: row.sentence_id,
            token_index: row.token_index,
            category,
            verdict: row.verdict.parse().map_err(|e: Error| record_err(e.to_string()))?,
        });
    }
    Ok(out)
}

/// Manual verification outcome per category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub yes: usize,
    pub no: usize,
    /// Events without an override; they keep their category.
    pub unreviewed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideOutcome {
    pub raw: MucTally,
    pub adjusted: MucTally,
    /// Spurious events judged correct.
    pub correct_additions: usize,
    /// Missing or incorrect events where the gold annotation was wrong.
    pub gold_errors: usize,
    pub verification: BTreeMap<MucCategory, VerdictCounts>,
}

/// Applies manual verdicts. A `yes` removes the event from the error
/// counts: a spurious one becomes a correct addition, a missing or
/// incorrect one a gold annotation error. COR is never touched.
pub fn apply_overrides(events: &[MucEvent], overrides: &[OverrideRecord]) -> Result<OverrideOutcome> {
    let index: HashMap<(&str, usize), &MucEvent> =
        events.iter().map(|e| ((e.sentence_id.as_str(), e.token_index), e)).collect();
    let mut seen = HashSet::new();
    let mut offenders = Vec::new();
    for o in overrides {
        let key = (o.sentence_id.as_str(), o.token_index);
        match index.get(&key) {
            Some(e) if e.category == o.category && o.category != MucCategory::Cor => {
                if !seen.insert(key) {
                    offenders.push(format!("{}:{} (duplicate)", o.sentence_id, o.token_index));
                }
            }
            Some(e) => offenders.push(format!(
                "{}:{} (is {}, not {})",
                o.sentence_id, o.token_index, e.category, o.category
            )),
            None => offenders.push(format!("{}:{} {} (no such event)", o.sentence_id, o.token_index, o.category)),
        }
    }
    if !offenders.is_empty() {
        return Err(Error::data(format!("overrides without a matching event: {}", offenders.join(", "))));
    }

    let raw = MucTally::from_events(events);
    let mut adjusted = raw.clone();
    let mut verification: BTreeMap<MucCategory, VerdictCounts> = [MucCategory::Inc, MucCategory::Mis, MucCategory::Spu]
        .into_iter()
        .map(|c| (c, VerdictCounts { unreviewed: raw.total.get(c), ..Default::default() }))
        .collect();
    let (mut correct_additions, mut gold_errors) = (0, 0);
    for o in overrides {
        let e = index[&(o.sentence_id.as_str(), o.token_index)];
        let v = verification.get_mut(&o.category).expect("error category");
        v.unreviewed -= 1;
        match o.verdict {
            Verdict::No => v.no += 1,
            Verdict::Yes => {
                v.yes += 1;
                adjusted.add(e.class(), e.category, -1);
                if e.category == MucCategory::Spu {
                    correct_additions += 1;
                } else {
                    gold_errors += 1;
                }
            }
        }
    }
    Ok(OverrideOutcome {
        raw,
        adjusted,
        correct_additions,
        gold_errors,
        verification,
    })
}

/// The verification table as CSV: one `COR` row, then `No`/`Yes` rows for
/// MIS, INC and SPU, one column per model. Unreviewed events count as `No`.
pub fn verification_csv(models: &[(&str, &OverrideOutcome)]) -> String {
    let mut out = String::from("metric,correct");
    for (name, _) in models {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    let mut row = |metric: &str, correct: &str, value: &dyn Fn(&OverrideOutcome) -> usize| {
        out.push_str(&format!("{metric},{correct}"));
        for (_, o) in models {
            out.push_str(&format!(",{}", value(o)));
        }
        out.push('\n');
    };
    row("COR", "", &|o| o.raw.total.cor);
    for c in [MucCategory::Mis, MucCategory::Inc, MucCategory::Spu] {
        let name = c.to_string();
        row(&name, "No", &|o| {
            let v = o.verification[&c];
            v.no + v.unreviewed
        });
        row("", "Yes", &|o| o.verification[&c].yes);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(tags: &[&str]) -> TaggedSentence {
        TaggedSentence::new(
            "s",
            tags.iter().enumerate().map(|(i, _)| format!("w{i}")).collect(),
            tags.iter().map(|t| t.parse().unwrap()).collect(),
        )
    }

    #[test]
    fn identical_sequences_are_all_correct() {
        let a = ts(&["B-LUCRO", "I-LUCRO", "O", "B-COMPANY"]);
        let t = muc_categorize(&a, &a, CompareMode::LabelOnly).unwrap();
        assert_eq!(t.total, Counts { cor: 3, ..Default::default() });
    }

    #[test]
    fn shifted_entity_is_missing_and_spurious() {
        let t = muc_categorize(&ts(&["B-LUCRO", "O"]), &ts(&["O", "B-LUCRO"]), CompareMode::LabelOnly).unwrap();
        assert_eq!(t.total, Counts { mis: 1, spu: 1, ..Default::default() });
    }

    #[test]
    fn prefix_sensitivity_follows_mode() {
        let g = ts(&["B-LUCRO", "I-LUCRO"]);
        let p = ts(&["B-LUCRO", "B-LUCRO"]);
        assert_eq!(muc_categorize(&g, &p, CompareMode::LabelOnly).unwrap().total.cor, 2);
        let strict = muc_categorize(&g, &p, CompareMode::StrictBio).unwrap().total;
        assert_eq!((strict.cor, strict.inc), (1, 1));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(muc_categorize(&ts(&["O"]), &ts(&["O", "O"]), CompareMode::LabelOnly).is_err());
    }

    #[test]
    fn metric_edge_cases() {
        let m = muc_metrics(&Counts { cor: 10, ..Default::default() });
        assert_eq!(
            [m.error_per_response_fill, m.undergeneration, m.overgeneration, m.substitution],
            [Some(0.0); 4]
        );
        let m = muc_metrics(&Counts { mis: 5, ..Default::default() });
        assert_eq!(m.error_per_response_fill, Some(1.0));
        assert_eq!(m.undergeneration, Some(1.0));
        assert_eq!(m.overgeneration, None);
        assert_eq!(m.substitution, None);
        let m = muc_metrics(&Counts::default());
        assert_eq!(m.error_per_response_fill, None);
    }

    #[test]
    fn pooled_table_column_by_hand() {
        let m = muc_metrics(&Counts { cor: 30058, inc: 9, mis: 48, spu: 95 });
        assert_eq!(m.error_per_response_fill, Some(152.0 / 30210.0));
        assert_eq!(m.undergeneration, Some(48.0 / 30115.0));
        assert_eq!(m.overgeneration, Some(95.0 / 30162.0));
        assert_eq!(m.substitution, Some(9.0 / 30067.0));
    }

    fn event(id: &str, i: usize, c: MucCategory) -> MucEvent {
        let (g, p) = match c {
            MucCategory::Cor => ("B-LUCRO", "B-LUCRO"),
            MucCategory::Inc => ("B-LUCRO", "B-MONEY"),
            MucCategory::Mis => ("B-LUCRO", "O"),
            MucCategory::Spu => ("O", "B-MONEY"),
        };
        MucEvent {
            sentence_id: id.into(),
            token_index: i,
            category: c,
            gold: g.parse().unwrap(),
            pred: p.parse().unwrap(),
        }
    }

    fn over(id: &str, i: usize, c: MucCategory, v: Verdict) -> OverrideRecord {
        OverrideRecord {
            sentence_id: id.into(),
            token_index: i,
            category: c,
            verdict: v,
        }
    }

    #[test]
    fn spurious_yes_becomes_correct_addition() {
        let events = [event("a", 0, MucCategory::Cor), event("a", 1, MucCategory::Spu)];
        let out = apply_overrides(&events, &[over("a", 1, MucCategory::Spu, Verdict::Yes)]).unwrap();
        assert_eq!(out.raw.total.spu, 1);
        assert_eq!(out.adjusted.total.spu, 0);
        assert_eq!(out.adjusted.total.cor, 1);
        assert_eq!(out.correct_additions, 1);
        assert_eq!(out.adjusted.per_class["MONEY"].spu, 0);
    }

    #[test]
    fn verdict_no_changes_nothing() {
        let events = [event("a", 0, MucCategory::Mis), event("a", 1, MucCategory::Inc)];
        let out = apply_overrides(
            &events,
            &[over("a", 0, MucCategory::Mis, Verdict::No), over("a", 1, MucCategory::Inc, Verdict::Yes)],
        )
        .unwrap();
        assert_eq!(out.adjusted.total, Counts { mis: 1, ..Default::default() });
        assert_eq!(out.gold_errors, 1);
    }

    #[test]
    fn dangling_overrides_are_listed() {
        let events = [event("a", 0, MucCategory::Mis)];
        let err = apply_overrides(
            &events,
            &[over("a", 0, MucCategory::Spu, Verdict::Yes), over("zz", 7, MucCategory::Mis, Verdict::No)],
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("a:0") && err.contains("zz:7"), "{err}");
        let dup = [over("a", 0, MucCategory::Mis, Verdict::No), over("a", 0, MucCategory::Mis, Verdict::No)];
        assert!(apply_overrides(&events, &dup).is_err());
    }

    #[test]
    fn verification_table_layout() {
        let events = [event("a", 0, MucCategory::Cor), event("a", 1, MucCategory::Spu), event("a", 2, MucCategory::Mis)];
        let out = apply_overrides(&events, &[over("a", 1, MucCategory::Spu, Verdict::Yes)]).unwrap();
        assert_eq!(
            verification_csv(&[("m", &out)]),
            "metric,correct,m\nCOR,,1\nMIS,No,1\n,Yes,0\nINC,No,0\n,Yes,0\nSPU,No,0\n,Yes,1\n"
        );
    }

    fn tag_strategy() -> impl Strategy<Value = String> {
        prop_oneof![
            3 => Just("O".to_string()),
            1 => prop::sample::select(vec!["B-A", "I-A", "B-B", "I-B", "B-C"]).prop_map(String::from),
        ]
    }

    fn brute(g: &str, p: &str) -> Option<MucCategory> {
        if g == "O" && p == "O" {
            None
        } else if g == "O" {
            Some(MucCategory::Spu)
        } else if p == "O" {
            Some(MucCategory::Mis)
        } else if g[2..] == p[2..] {
            Some(MucCategory::Cor)
        } else {
            Some(MucCategory::Inc)
        }
    }

    proptest! {
        #[test]
        fn tally_matches_per_token_rules(
            pairs in prop::collection::vec((tag_strategy(), tag_strategy()), 50)
        ) {
            let g: Vec<&str> = pairs.iter().map(|p| p.0.as_str()).collect();
            let p: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
            let t = muc_categorize(&ts(&g), &ts(&p), CompareMode::LabelOnly).unwrap();
            let mut want = Counts::default();
            for (a, b) in g.iter().zip(&p) {
                if let Some(c) = brute(a, b) {
                    want.bump(c, 1);
                }
            }
            prop_assert_eq!(t.total, want);
            let gold_entities = g.iter().filter(|t| **t != "O").count();
            let pred_entities = p.iter().filter(|t| **t != "O").count();
            prop_assert_eq!(t.total.cor + t.total.inc + t.total.mis, gold_entities);
            prop_assert_eq!(t.total.cor + t.total.inc + t.total.spu, pred_entities);
            let mut sum = Counts::default();
            for c in t.per_class.values() {
                sum.cor += c.cor; sum.inc += c.inc; sum.mis += c.mis; sum.spu += c.spu;
            }
            prop_assert_eq!(sum, t.total);
            for v in [t.metrics().error_per_response_fill, t.metrics().undergeneration,
                      t.metrics().overgeneration, t.metrics().substitution].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn modes_agree_without_prefix_disagreements(
            pairs in prop::collection::vec((tag_strategy(), tag_strategy()), 1..40)
        ) {
            // Force every entity-vs-entity pair to share its B/I prefix.
            let fixed: Vec<(String, String)> = pairs
                .into_iter()
                .map(|(g, p)| if g != "O" && p != "O" { let q = format!("{}{}", &g[..2], &p[2..]); (g, q) } else { (g, p) })
                .collect();
            let g: Vec<&str> = fixed.iter().map(|p| p.0.as_str()).collect();
            let p: Vec<&str> = fixed.iter().map(|p| p.1.as_str()).collect();
            let a = muc_categorize(&ts(&g), &ts(&p), CompareMode::LabelOnly).unwrap();
            let b = muc_categorize(&ts(&g), &ts(&p), CompareMode::StrictBio).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn overrides_never_lower_cor_or_go_negative(
            cats in prop::collection::vec(0usize..4, 1..40),
            picks in prop::collection::vec(any::<(bool, bool)>(), 40)
        ) {
            let all = [MucCategory::Cor, MucCategory::Inc, MucCategory::Mis, MucCategory::Spu];
            let events: Vec<MucEvent> = cats.iter().enumerate().map(|(i, c)| event("s", i, all[*c])).collect();
            let overrides: Vec<OverrideRecord> = events
                .iter()
                .zip(&picks)
                .filter(|(e, (take, _))| *take && e.category != MucCategory::Cor)
                .map(|(e, (_, yes))| over("s", e.token_index, e.category, if *yes { Verdict::Yes } else { Verdict::No }))
                .collect();
            let out = apply_overrides(&events, &overrides).unwrap();
            prop_assert_eq!(out.adjusted.total.cor, out.raw.total.cor);
            let removed = out.correct_additions + out.gold_errors;
            let sum = |c: &Counts| c.inc + c.mis + c.spu;
            prop_assert_eq!(sum(&out.adjusted.total) + removed, sum(&out.raw.total));
        }
    }
}
