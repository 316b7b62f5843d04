use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{sha256_file, write_json, write_text, Done, PipelineConfig, Runner};
use crate::aggregate::{aggregate_corpus, AnnotatedSentence};
use crate::corpus::{filter, ingest, split, stats, Corpus, Format, Sentence};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::nereval::{
    apply_overrides, corpus_events, load_overrides, pair_sentences, prf_report, triage_generation, triage_summary,
    verification_csv, AlignedPair, MucTally, OverrideOutcome, PredictionRecord,
};
use crate::stats::{compare, ScoreMatrix};
use crate::tagcodec::{decode_seq, encode_seq, Seq2SeqRecord, TagScheme, TaggedSentence};
use crate::weaklabel::{label_counts, FunctionSet, SpanAnnotation};

const PARTITIONS: [&str; 3] = ["train", "validation", "test"];

/// Per-subset metrics written as score matrices, with their orientation.
const METRICS: [(&str, bool); 7] = [
    ("precision", true),
    ("recall", true),
    ("f1", true),
    ("error_per_response_fill", false),
    ("undergeneration", false),
    ("overgeneration", false),
    ("substitution", false),
];

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoreFile {
    metric: String,
    higher_is_better: bool,
    /// Absent when some subset has no defined value.
    file: Option<String>,
}

fn inputs<const N: usize>(items: [(String, String); N]) -> BTreeMap<String, String> {
    items.into_iter().collect()
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    ingest(path, Format::Jsonl)
}

pub(super) fn run_all(runner: &mut Runner, config: &PipelineConfig, scheme: &TagScheme, functions: &FunctionSet) -> Result<()> {
    let raw = &config.paths.corpus;
    let format = config.format()?;
    let id_prefix = raw.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus").to_string();
    let ingested = runner.stage(
        "ingest",
        json!({ "format": format, "id_prefix": id_prefix }),
        inputs([("corpus".into(), sha256_file(raw)?)]),
        |dir| ingest(raw, format)?.write_jsonl(&dir.join("corpus.jsonl")),
    )?;

    let f = &config.filter;
    let filtered = runner.stage(
        "filter",
        serde_json::to_value(f)?,
        inputs([ingested.input("corpus.jsonl")]),
        |dir| {
            let out = filter(&read_corpus(&ingested.path("corpus.jsonl"))?, f.min_words, f.dedupe);
            if out.kept.is_empty() {
                return Err(Error::data("no sentence survives filtering"));
            }
            out.kept.write_jsonl(&dir.join("kept.jsonl"))?;
            jsonl::write(
                &dir.join("dropped.jsonl"),
                out.dropped.iter().map(|d| json!({ "id": d.sentence.id, "reason": d.reason, "text": d.sentence.text })),
            )?;
            write_json(&dir.join("length_stats.json"), &stats(&out.kept, f.group_by.as_deref(), f.bin_width)?)
        },
    )?;

    let annotated = runner.stage(
        "annotate",
        json!({}),
        inputs([
            filtered.input("kept.jsonl"),
            ("functions".into(), functions.fingerprint()),
            ("scheme".into(), scheme.fingerprint()),
        ]),
        |dir| {
            let spans = functions.annotate(&read_corpus(&filtered.path("kept.jsonl"))?);
            jsonl::write(&dir.join("spans.jsonl"), &spans)?;
            write_json(&dir.join("label_counts.json"), &label_counts(&spans))?;
            write_json(&dir.join("functions.json"), &functions.names())
        },
    )?;

    let aggregated = runner.stage(
        "aggregate",
        serde_json::to_value(&config.aggregation)?,
        inputs([
            filtered.input("kept.jsonl"),
            annotated.input("spans.jsonl"),
            annotated.input("functions.json"),
            ("scheme".into(), scheme.fingerprint()),
        ]),
        |dir| {
            let corpus = read_corpus(&filtered.path("kept.jsonl"))?;
            let spans: Vec<SpanAnnotation> = jsonl::read(&annotated.path("spans.jsonl"))?;
            let names: Vec<String> = read_json(&annotated.path("functions.json"))?;
            let out = aggregate_corpus(&corpus, &spans, &names, scheme, &config.aggregation)?;
            jsonl::write(&dir.join("annotated.jsonl"), &out.annotated)?;
            out.unannotated.write_jsonl(&dir.join("unannotated.jsonl"))?;
            write_json(&dir.join("model.json"), &out.model)?;
            write_json(&dir.join("report.json"), &out.report)?;
            jsonl::write(&dir.join("diagnostics.jsonl"), &out.diagnostics)
        },
    )?;

    let spec = config.split;
    let splitted = runner.stage(
        "split",
        serde_json::to_value(spec)?,
        inputs([aggregated.input("annotated.jsonl")]),
        |dir| {
            let annotated: Vec<AnnotatedSentence> = jsonl::read(&aggregated.path("annotated.jsonl"))?;
            let corpus = Corpus::new(annotated.iter().map(|a| Sentence::new(&a.id, &a.text)).collect())?;
            let out = split(&corpus, &spec)?;
            let by_id: HashMap<&str, &AnnotatedSentence> = annotated.iter().map(|a| (a.id.as_str(), a)).collect();
            for (name, part) in PARTITIONS.iter().zip([&out.train, &out.validation, &out.test]) {
                let rows = part.sentences().iter().map(|s| by_id[s.id.as_str()]);
                jsonl::write(&dir.join(format!("{name}.jsonl")), rows)?;
            }
            jsonl::write(&dir.join("split_manifest.jsonl"), out.manifest_lines())
        },
    )?;

    let encoded = runner.stage(
        "encode",
        json!({}),
        PARTITIONS
            .iter()
            .map(|p| splitted.input(&format!("{p}.jsonl")))
            .chain([("scheme".into(), scheme.fingerprint())])
            .collect(),
        |dir| {
            let mut diagnostics = Vec::new();
            for p in PARTITIONS {
                let rows: Vec<AnnotatedSentence> = jsonl::read(&splitted.path(&format!("{p}.jsonl")))?;
                let mut tagged = Vec::with_capacity(rows.len());
                for a in &rows {
                    let (t, d) = a.to_tagged(scheme)?;
                    tagged.push(t);
                    diagnostics.extend(d);
                }
                jsonl::write(&dir.join(format!("{p}.tags.jsonl")), &tagged)?;
                let tokens = tagged.iter().map(|t| t.to_token_class_record(scheme)).collect::<Result<Vec<_>>>()?;
                jsonl::write(&dir.join(format!("{p}.tokens.jsonl")), &tokens)?;
                let seq = tagged
                    .iter()
                    .map(|t| {
                        Ok(Seq2SeqRecord {
                            id: t.sentence_id.clone(),
                            input: t.text(),
                            target: encode_seq(t)?.target_text,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                jsonl::write(&dir.join(format!("{p}.seq2seq.jsonl")), &seq)?;
            }
            write_json(&dir.join("scheme.json"), scheme)?;
            jsonl::write(&dir.join("diagnostics.jsonl"), &diagnostics)
        },
    )?;

    let models = &config.eval.models;
    if models.is_empty() {
        runner.skip("evaluate", "no models configured");
        runner.skip("stats", "no models configured");
        return Ok(());
    }
    let mut eval_inputs = inputs([
        encoded.input("test.tags.jsonl"),
        encoded.input("test.seq2seq.jsonl"),
        encoded.input("scheme.json"),
    ]);
    for m in models {
        eval_inputs.insert(format!("model:{}/predictions", m.name), sha256_file(&m.predictions)?);
        if let Some(o) = &m.overrides {
            eval_inputs.insert(format!("model:{}/overrides", m.name), sha256_file(o)?);
        }
    }
    let e = &config.eval;
    let eval_params = json!({
        "mode": e.mode,
        "subsets": e.subsets,
        "histogram_bins": e.histogram_bins,
        "triage": e.triage,
        "models": models.iter().map(|m| &m.name).collect::<Vec<_>>(),
    });
    let evaluated = runner.stage("evaluate", eval_params, eval_inputs, |dir| evaluate(dir, config, &encoded))?;

    if models.len() < 2 {
        runner.skip("stats", "fewer than two models");
        return Ok(());
    }
    if e.subsets < 2 {
        runner.skip("stats", "fewer than two subsets");
        return Ok(());
    }
    let stats_inputs = evaluated
        .files()
        .filter(|f| f.starts_with("scores"))
        .map(|f| evaluated.input(f))
        .collect();
    runner.stage("stats", serde_json::to_value(&config.stats)?, stats_inputs, |dir| {
        let files: Vec<ScoreFile> = read_json(&evaluated.path("scores.json"))?;
        let mut summary = String::new();
        for sf in files {
            let Some(file) = &sf.file else {
                let _ = writeln!(summary, "## {}\n\nnot tested: some subset has no defined value\n", sf.metric);
                continue;
            };
            let m = ScoreMatrix::from_csv(&evaluated.path(file), sf.higher_is_better)?;
            let report = compare(&sf.metric, &m, &config.stats);
            write_json(&dir.join(format!("compare_{}.json", sf.metric)), &report)?;
            let md = report.to_markdown();
            write_text(&dir.join(format!("compare_{}.md", sf.metric)), &md)?;
            summary.push_str(&md);
            summary.push('\n');
        }
        write_text(&dir.join("summary.md"), &summary)
    })?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn for_model(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Data(msg) => Error::data(format!("model `{name}`: {msg}")),
        other => other,
    }
}

/// Scores every model on the test split, whole and in subsets. Sentence `i`
/// of the test file belongs to subset `i mod subsets`.
fn evaluate(dir: &Path, config: &PipelineConfig, encoded: &Done) -> Result<()> {
    let e = &config.eval;
    let scheme: TagScheme = read_json(&encoded.path("scheme.json"))?;
    let gold: Vec<TaggedSentence> = jsonl::read(&encoded.path("test.tags.jsonl"))?;
    let targets: HashMap<String, String> = jsonl::read::<Seq2SeqRecord>(&encoded.path("test.seq2seq.jsonl"))?
        .into_iter()
        .map(|r| (r.id, r.target))
        .collect();
    if gold.len() < e.subsets {
        return Err(Error::data(format!(
            "the test split has {} sentences, fewer than the {} evaluation subsets",
            gold.len(),
            e.subsets
        )));
    }
    let subset_of: HashMap<&str, usize> =
        gold.iter().enumerate().map(|(i, g)| (g.sentence_id.as_str(), i % e.subsets)).collect();

    let mut cells: BTreeMap<&str, Vec<Vec<Option<f64>>>> =
        METRICS.iter().map(|(m, _)| (*m, vec![Vec::new(); e.subsets])).collect();
    let mut outcomes: Vec<(String, OverrideOutcome)> = Vec::new();
    for m in &e.models {
        let name = m.name.as_str();
        let records: Vec<PredictionRecord> = jsonl::read(&m.predictions)?;
        let mut preds = Vec::new();
        let mut diagnostics = Vec::new();
        let mut triages = Vec::new();
        let mut generated_count = 0;
        for r in records {
            match r {
                PredictionRecord::Tagged(t) if subset_of.contains_key(t.sentence_id.as_str()) => preds.push(t),
                PredictionRecord::Generated { id, generated } if subset_of.contains_key(id.as_str()) => {
                    let (t, d) = decode_seq(&id, &generated, &scheme, false)?;
                    preds.push(t);
                    diagnostics.extend(d);
                    generated_count += 1;
                    triages.extend(triage_generation(&id, &targets[&id], &generated, &e.triage));
                }
                _ => {}
            }
        }
        let pairs = pair_sentences(&gold, &preds).map_err(for_model(name))?;
        let report = prf_report(&pairs, &scheme, e.mode).map_err(for_model(name))?;
        write_json(&dir.join(format!("{name}.prf.json")), &report)?;
        write_text(&dir.join(format!("{name}.prf.md")), &report.to_markdown())?;

        let events = corpus_events(&pairs, e.mode);
        let overrides = match &m.overrides {
            Some(p) => load_overrides(p)?,
            None => Vec::new(),
        };
        let outcome = apply_overrides(&events, &overrides).map_err(for_model(name))?;
        jsonl::write(&dir.join(format!("{name}.muc_events.jsonl")), &events)?;
        write_json(
            &dir.join(format!("{name}.muc.json")),
            &json!({
                "outcome": outcome,
                "raw_metrics": outcome.raw.metrics(),
                "adjusted_metrics": outcome.adjusted.metrics(),
            }),
        )?;
        jsonl::write(&dir.join(format!("{name}.diagnostics.jsonl")), &diagnostics)?;
        if generated_count > 0 {
            jsonl::write(&dir.join(format!("{name}.triage.jsonl")), &triages)?;
            write_json(
                &dir.join(format!("{name}.triage_summary.json")),
                &triage_summary(&triages, generated_count, e.histogram_bins),
            )?;
        }

        for s in 0..e.subsets {
            let sub: Vec<AlignedPair> =
                pairs.iter().filter(|p| subset_of[p.sentence_id.as_str()] == s).cloned().collect();
            let avg = prf_report(&sub, &scheme, e.mode)?.macro_avg;
            let muc = MucTally::from_events(&corpus_events(&sub, e.mode)).metrics();
            for (metric, value) in [
                ("precision", avg.precision),
                ("recall", avg.recall),
                ("f1", avg.f1),
                ("error_per_response_fill", muc.error_per_response_fill),
                ("undergeneration", muc.undergeneration),
                ("overgeneration", muc.overgeneration),
                ("substitution", muc.substitution),
            ] {
                cells.get_mut(metric).expect("known metric")[s].push(value);
            }
        }
        outcomes.push((m.name.clone(), outcome));
    }
    let table: Vec<(&str, &OverrideOutcome)> = outcomes.iter().map(|(n, o)| (n.as_str(), o)).collect();
    write_text(&dir.join("verification.csv"), &verification_csv(&table))?;

    let mut files = Vec::new();
    for (metric, higher_is_better) in METRICS {
        let rows = &cells[metric];
        let complete = rows.iter().flatten().all(Option::is_some);
        let file = complete.then(|| format!("scores_{metric}.csv"));
        if let Some(f) = &file {
            let mut csv = String::from("subset");
            for m in &e.models {
                let _ = write!(csv, ",{}", m.name);
            }
            csv.push('\n');
            for (s, row) in rows.iter().enumerate() {
                let _ = write!(csv, "subset-{}", s + 1);
                for v in row.iter().flatten() {
                    let _ = write!(csv, ",{v}");
                }
                csv.push('\n');
            }
            write_text(&dir.join(f), &csv)?;
        }
        files.push(ScoreFile {
            metric: metric.to_string(),
            higher_is_better,
            file,
        });
    }
    write_json(&dir.join("scores.json"), &files)
}
