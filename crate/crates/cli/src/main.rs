use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use finespan_core::aggregate::{
    aggregate_corpus, decode_corpus, vote_matrices, AggregateConfig, AggregationModel, AnnotatedSentence, DecodeMode,
};
use finespan_core::corpus::{self, Corpus, Format, SplitSpec};
use finespan_core::nereval::{
    apply_overrides, corpus_events, load_overrides, load_predictions, pair_sentences, prf_report, triage_generation,
    triage_summary, verification_csv, CompareMode, PredictionRecord, TriageConfig,
};
use finespan_core::pipeline::{self, load_resources, run_pipeline, PipelineConfig, RunOptions};
use finespan_core::stats::{compare, CompareConfig, FDegrees, ScoreMatrix, WilcoxonMode};
use finespan_core::tagcodec::{
    align_subwords, decode_seq, encode_seq, Segmenter, SegmentationTable, Seq2SeqRecord, SpecialTokens, TagScheme,
    TaggedSentence,
};
use finespan_core::weaklabel::{label_counts, FunctionSet, SpanAnnotation};
use finespan_core::{jsonl, Error};

#[derive(Parser)]
#[command(name = "finespan", version, about = "Weakly supervised NER dataset builder and evaluation toolkit")]
struct Cli {
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    /// Seed for the split shuffle, echoed into model files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, filter, describe and split corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Labeling functions.
    #[command(subcommand)]
    Weaklabel(WeaklabelCmd),
    /// Combine labeling-function votes into one tag sequence.
    #[command(subcommand)]
    Aggregate(AggregateCmd),
    /// Tag schemes, BIO and seq2seq formats.
    #[command(subcommand)]
    Tagcodec(TagcodecCmd),
    /// Score predictions against gold tags.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Compare models across test subsets.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Cached end-to-end runs.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
    /// Print the tool version and the fingerprints of scheme and rules.
    Version(Resources),
}

#[derive(Args, Clone, Default)]
struct Resources {
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    gazetteers: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<PathBuf>,
}

impl Resources {
    fn load(&self) -> finespan_core::Result<(TagScheme, FunctionSet)> {
        load_resources(&pipeline::Paths {
            corpus: PathBuf::new(),
            format: None,
            rules: self.rules.clone(),
            gazetteers: self.gazetteers.clone(),
            scheme: self.scheme.clone(),
            output: PathBuf::new(),
        })
    }
}

fn load_scheme(path: &Option<PathBuf>) -> finespan_core::Result<TagScheme> {
    match path {
        Some(p) => TagScheme::load(p),
        None => Ok(TagScheme::financial()),
    }
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Read CSV or JSON-lines and write the normalized JSON-lines corpus.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Drop short and duplicate sentences.
    Filter {
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        min_words: usize,
        #[arg(long)]
        keep_duplicates: bool,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        dropped: Option<PathBuf>,
    },
    /// Word-length statistics as JSON.
    Stats {
        input: PathBuf,
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long, default_value_t = 5)]
        bin_width: usize,
    },
    /// Shuffle and cut train/validation/test.
    Split {
        input: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.2, 0.1])]
        fractions: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum WeaklabelCmd {
    /// Run every labeling function over a corpus.
    Annotate {
        input: PathBuf,
        #[command(flatten)]
        resources: Resources,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the shipped rule file and gazetteers for editing.
    WriteDefaults {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        gazetteers: PathBuf,
    },
}

#[derive(Subcommand)]
enum AggregateCmd {
    /// Fit the HMM on the votes and write the consensus corpus.
    Fit {
        corpus: PathBuf,
        spans: PathBuf,
        #[command(flatten)]
        resources: Resources,
        #[arg(long, default_value = "viterbi")]
        mode: DecodeMode,
        #[arg(long, default_value_t = 50)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Decode a corpus with a fitted model.
    Decode {
        corpus: PathBuf,
        spans: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long, default_value = "viterbi")]
        mode: DecodeMode,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum TagcodecCmd {
    /// Print a tag scheme with its ids.
    Scheme {
        #[arg(long)]
        scheme: Option<PathBuf>,
    },
    /// Export annotated sentences for token classification and generation.
    Encode {
        input: PathBuf,
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Turn generated text (`{"id", "generated"}` lines) back into tags.
    Decode {
        input: PathBuf,
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long)]
        strict: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Propagate tag ids to subwords, -100 on special tokens.
    Align {
        input: PathBuf,
        /// `{"id", "subwords": [[piece, ...], ...]}` lines.
        #[arg(long)]
        segmentation: PathBuf,
        #[arg(long, default_value_t = 1)]
        prefix_specials: usize,
        #[arg(long, default_value_t = 1)]
        suffix_specials: usize,
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct GoldPred {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "label-only")]
    mode: CompareMode,
    #[arg(long)]
    scheme: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCmd {
    /// Token-level precision, recall and F1.
    Prf {
        #[command(flatten)]
        io: GoldPred,
        #[arg(long)]
        markdown: bool,
    },
    /// MUC-5 categories, with optional manual overrides.
    Muc {
        #[command(flatten)]
        io: GoldPred,
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Column name for the verification table.
        #[arg(long, default_value = "model")]
        name: String,
        #[arg(long)]
        verification: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Classify generation errors against the seq2seq targets.
    Triage {
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 4)]
        min_repeat_ngram: usize,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Friedman, Nemenyi and pairwise Wilcoxon tests on a score matrix.
    Compare {
        scores: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        lower_is_better: bool,
        #[arg(long, default_value = "iman-davenport")]
        f_degrees: FDegrees,
        #[arg(long, default_value = "auto")]
        wilcoxon: WilcoxonMode,
        /// Also write the JSON report here.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run every stage from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| path.display().to_string())
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())
}

fn read_corpus(path: &Path) -> finespan_core::Result<Corpus> {
    let format = Format::from_path(path).unwrap_or(Format::Jsonl);
    corpus::ingest(path, format)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Corpus(cmd) => match cmd {
            CorpusCmd::Ingest { input, format, output } => {
                let format = match format.or_else(|| Format::from_path(&input)) {
                    Some(f) => f,
                    None => bail!(Error::Config(format!("cannot infer the format of {}; pass --format", input.display()))),
                };
                let c = corpus::ingest(&input, format)?;
                c.write_jsonl(&output)?;
                eprintln!("{} sentences", c.len());
            }
            CorpusCmd::Filter { input, min_words, keep_duplicates, output, dropped } => {
                let out = corpus::filter(&read_corpus(&input)?, min_words, !keep_duplicates);
                out.kept.write_jsonl(&output)?;
                if let Some(d) = dropped {
                    out.dropped_corpus().write_jsonl(&d)?;
                }
                eprintln!("kept {}, dropped {}", out.kept.len(), out.dropped.len());
            }
            CorpusCmd::Stats { input, group_by, bin_width } => {
                print_json(&corpus::stats(&read_corpus(&input)?, group_by.as_deref(), bin_width)?)?;
            }
            CorpusCmd::Split { input, fractions, out_dir } => {
                let spec = SplitSpec::new(fractions[0], fractions[1], fractions[2], seed.unwrap_or(42))?;
                let out = corpus::split(&read_corpus(&input)?, &spec)?;
                create_dir(&out_dir)?;
                out.train.write_jsonl(&out_dir.join("train.jsonl"))?;
                out.validation.write_jsonl(&out_dir.join("validation.jsonl"))?;
                out.test.write_jsonl(&out_dir.join("test.jsonl"))?;
                jsonl::write(&out_dir.join("split_manifest.jsonl"), out.manifest_lines())?;
                eprintln!("sizes {:?}", out.header.sizes);
            }
        },
        Command::Weaklabel(cmd) => match cmd {
            WeaklabelCmd::Annotate { input, resources, output } => {
                let (_, set) = resources.load()?;
                let spans = set.annotate(&read_corpus(&input)?);
                jsonl::write(&output, &spans)?;
                print_json(&label_counts(&spans))?;
            }
            WeaklabelCmd::WriteDefaults { rules, gazetteers } => FunctionSet::write_defaults(&rules, &gazetteers)?,
        },
        Command::Aggregate(cmd) => match cmd {
            AggregateCmd::Fit { corpus, spans, resources, mode, max_iter, tol, out_dir } => {
                let (scheme, set) = resources.load()?;
                let mut config = AggregateConfig { mode, ..AggregateConfig::default() };
                config.hmm.max_iter = max_iter;
                config.hmm.tol = tol;
                if let Some(s) = seed {
                    config.hmm.seed = s;
                }
                let c = read_corpus(&corpus)?;
                let spans: Vec<SpanAnnotation> = jsonl::read(&spans)?;
                let out = aggregate_corpus(&c, &spans, &set.names(), &scheme, &config)?;
                create_dir(&out_dir)?;
                jsonl::write(&out_dir.join("annotated.jsonl"), &out.annotated)?;
                out.unannotated.write_jsonl(&out_dir.join("unannotated.jsonl"))?;
                write_json(&out_dir.join("model.json"), &out.model)?;
                write_json(&out_dir.join("report.json"), &out.report)?;
                jsonl::write(&out_dir.join("diagnostics.jsonl"), &out.diagnostics)?;
                print_json(&out.report)?;
            }
            AggregateCmd::Decode { corpus, spans, model, scheme, mode, out_dir } => {
                let scheme = load_scheme(&scheme)?;
                let model = AggregationModel::load(&model)?;
                model.validate(&scheme)?;
                let c = read_corpus(&corpus)?;
                let spans: Vec<SpanAnnotation> = jsonl::read(&spans)?;
                let names: Vec<String> = model.functions.iter().chain(&model.dropped_functions).cloned().collect();
                let (matrices, diagnostics) = vote_matrices(&c, &spans, &names, &scheme)?;
                let (annotated, rest) = decode_corpus(&c, &matrices, &model, &scheme, mode)?;
                create_dir(&out_dir)?;
                jsonl::write(&out_dir.join("annotated.jsonl"), &annotated)?;
                rest.write_jsonl(&out_dir.join("unannotated.jsonl"))?;
                jsonl::write(&out_dir.join("diagnostics.jsonl"), &diagnostics)?;
                eprintln!("annotated {}, unannotated {}", annotated.len(), rest.len());
            }
        },
        Command::Tagcodec(cmd) => match cmd {
            TagcodecCmd::Scheme { scheme } => print_json(&load_scheme(&scheme)?)?,
            TagcodecCmd::Encode { input, scheme, out_dir } => {
                let scheme = load_scheme(&scheme)?;
                let rows: Vec<AnnotatedSentence> = jsonl::read(&input)?;
                let mut tagged = Vec::new();
                let mut diagnostics = Vec::new();
                for a in &rows {
                    let (t, d) = a.to_tagged(&scheme)?;
                    tagged.push(t);
                    diagnostics.extend(d);
                }
                let tokens = tagged.iter().map(|t| t.to_token_class_record(&scheme)).collect::<Result<Vec<_>, _>>()?;
                let seq = tagged
                    .iter()
                    .map(|t| {
                        Ok(Seq2SeqRecord {
                            id: t.sentence_id.clone(),
                            input: t.text(),
                            target: encode_seq(t)?.target_text,
                        })
                    })
                    .collect::<finespan_core::Result<Vec<_>>>()?;
                create_dir(&out_dir)?;
                jsonl::write(&out_dir.join("tags.jsonl"), &tagged)?;
                jsonl::write(&out_dir.join("tokens.jsonl"), &tokens)?;
                jsonl::write(&out_dir.join("seq2seq.jsonl"), &seq)?;
                jsonl::write(&out_dir.join("diagnostics.jsonl"), &diagnostics)?;
            }
            TagcodecCmd::Decode { input, scheme, strict, output } => {
                let scheme = load_scheme(&scheme)?;
                let records: Vec<PredictionRecord> = jsonl::read(&input)?;
                let mut out = Vec::new();
                for r in records {
                    match r {
                        PredictionRecord::Generated { id, generated } => {
                            let (t, d) = decode_seq(&id, &generated, &scheme, strict)?;
                            for diag in d {
                                log::warn!("{}: {:?}: {}", diag.sentence_id, diag.kind, diag.message);
                            }
                            out.push(t);
                        }
                        PredictionRecord::Tagged(t) => out.push(t),
                    }
                }
                jsonl::write(&output, &out)?;
            }
            TagcodecCmd::Align { input, segmentation, prefix_specials, suffix_specials, scheme, output } => {
                let scheme = load_scheme(&scheme)?;
                let table = SegmentationTable::load(&segmentation)?;
                let specials = SpecialTokens::counts(prefix_specials, suffix_specials);
                let tagged: Vec<TaggedSentence> = jsonl::read(&input)?;
                let mut lines = Vec::new();
                for t in &tagged {
                    let pieces = table.segment(&t.sentence_id, &t.tokens)?;
                    let a = align_subwords(t, &pieces, &specials, &scheme)?;
                    lines.push(serde_json::json!({ "id": t.sentence_id, "labels": a.label_ids }));
                }
                jsonl::write(&output, lines)?;
            }
        },
        Command::Eval(cmd) => match cmd {
            EvalCmd::Prf { io, markdown } => {
                let scheme = load_scheme(&io.scheme)?;
                let pairs = load_pairs(&io, &scheme)?;
                let report = prf_report(&pairs, &scheme, io.mode)?;
                if markdown {
                    print!("{}", report.to_markdown());
                } else {
                    print_json(&report)?;
                }
            }
            EvalCmd::Muc { io, overrides, name, verification, events } => {
                let scheme = load_scheme(&io.scheme)?;
                let pairs = load_pairs(&io, &scheme)?;
                let evs = corpus_events(&pairs, io.mode);
                let overrides = match overrides {
                    Some(p) => load_overrides(&p)?,
                    None => Vec::new(),
                };
                let outcome = apply_overrides(&evs, &overrides)?;
                if let Some(p) = events {
                    jsonl::write(&p, &evs)?;
                }
                if let Some(p) = verification {
                    let csv = verification_csv(&[(name.as_str(), &outcome)]);
                    std::fs::write(&p, csv).with_context(|| p.display().to_string())?;
                }
                print_json(&serde_json::json!({
                    "outcome": outcome,
                    "raw_metrics": outcome.raw.metrics(),
                    "adjusted_metrics": outcome.adjusted.metrics(),
                }))?;
            }
            EvalCmd::Triage { targets, pred, min_repeat_ngram, bins, output } => {
                let targets: std::collections::HashMap<String, String> = jsonl::read::<Seq2SeqRecord>(&targets)?
                    .into_iter()
                    .map(|r| (r.id, r.target))
                    .collect();
                let config = TriageConfig { min_repeat_ngram };
                let mut triages = Vec::new();
                let mut evaluated = 0;
                for r in jsonl::read::<PredictionRecord>(&pred)? {
                    let PredictionRecord::Generated { id, generated } = r else {
                        bail!(Error::Data("triage needs generated predictions".into()));
                    };
                    let Some(target) = targets.get(&id) else {
                        bail!(Error::Data(format!("no target for sentence `{id}`")));
                    };
                    evaluated += 1;
                    triages.extend(triage_generation(&id, target, &generated, &config));
                }
                if let Some(p) = output {
                    jsonl::write(&p, &triages)?;
                }
                print_json(&triage_summary(&triages, evaluated, bins))?;
            }
        },
        Command::Stats(StatsCmd::Compare { scores, metric, alpha, lower_is_better, f_degrees, wilcoxon, output }) => {
            let m = ScoreMatrix::from_csv(&scores, !lower_is_better)?;
            let config = CompareConfig { alpha, f_degrees, wilcoxon_mode: wilcoxon };
            let report = compare(&metric, &m, &config);
            if let Some(p) = output {
                write_json(&p, &report)?;
            }
            print!("{}", report.to_markdown());
        }
        Command::Pipeline(PipelineCmd::Run { config, force }) => {
            let mut c = PipelineConfig::load(&config)?;
            if let Some(s) = seed {
                c.split.seed = s;
                c.aggregation.hmm.seed = s;
            }
            let report = run_pipeline(&c, RunOptions { force })?;
            for s in &report.stages {
                println!("{:<10} {}", s.stage, s.status);
            }
            println!("manifest: {}", report.manifest_path.display());
        }
        Command::Version(resources) => {
            let (scheme, set) = resources.load()?;
            println!("{}", pipeline::version_and_provenance(&scheme, &set));
        }
    }
    Ok(())
}

fn load_pairs(io: &GoldPred, scheme: &TagScheme) -> anyhow::Result<Vec<finespan_core::nereval::AlignedPair>> {
    let gold: Vec<TaggedSentence> = jsonl::read(&io.gold)?;
    let (pred, diagnostics) = load_predictions(&io.pred, scheme)?;
    for d in diagnostics {
        log::warn!("{}: {:?}: {}", d.sentence_id, d.kind, d.message);
    }
    Ok(pair_sentences(&gold, &pred)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) => e.exit_code() as u8,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).parse_default_env().init();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
