//! End-to-end runs driven by a JSON config: ingest, filter, annotate,
//! aggregate, split, encode, evaluate and stats.
//!
//! Each stage writes into `<output>/stages/<stage>-<key>/`, where `key` hashes
//! the stage name, tool version, parameters and input file hashes. A stage
//! whose directory already holds outputs matching its `stage.json` is reused.
//! `<output>/manifest.json` lists every stage with its inputs and outputs and
//! carries no timestamps or absolute paths, so identical runs produce
//! identical manifests.

mod config;
mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::corpus::PRNG_NAME;
use crate::error::{Error, Result};
use crate::tagcodec::TagScheme;
use crate::weaklabel::FunctionSet;

pub use config::{EvalConfig, FilterConfig, ModelSpec, Paths, PipelineConfig, PATH_ENV_VARS};

pub const TOOL: &str = "finespan";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const STAGES: [&str; 8] = [
    "ingest", "filter", "annotate", "aggregate", "split", "encode", "evaluate", "stats",
];

const STAGE_FILE: &str = "stage.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceReport {
    pub tool: String,
    pub version: String,
    pub scheme_fingerprint: String,
    /// Digest of the rule file and gazetteers in load order.
    pub rules_fingerprint: String,
    pub prng: String,
}

pub fn version_and_provenance(scheme: &TagScheme, functions: &FunctionSet) -> ProvenanceReport {
    ProvenanceReport {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        scheme_fingerprint: scheme.fingerprint(),
        rules_fingerprint: functions.fingerprint(),
        prng: PRNG_NAME.to_string(),
    }
}

impl fmt::Display for ProvenanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.tool, self.version)?;
        writeln!(f, "scheme fingerprint: {}", self.scheme_fingerprint)?;
        writeln!(f, "rules fingerprint:  {}", self.rules_fingerprint)?;
        write!(f, "prng: {}", self.prng)
    }
}

/// Loads the scheme and labeling functions named by the paths, falling back
/// to the shipped ones.
pub fn load_resources(paths: &Paths) -> Result<(TagScheme, FunctionSet)> {
    let scheme = match &paths.scheme {
        Some(p) => TagScheme::load(p)?,
        None => TagScheme::financial(),
    };
    let mut set = FunctionSet::new();
    match &paths.rules {
        Some(p) => set.load_rules(p)?,
        None => set.add_default_rules()?,
    }
    match &paths.gazetteers {
        Some(d) => set.load_gazetteer_dir(d)?,
        None => set.add_default_gazetteers()?,
    }
    set.validate(&scheme)?;
    Ok((scheme, set))
}

/// One manifest entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub key: String,
    pub params: Value,
    /// Input name to sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to sha256.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: ProvenanceReport,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ran,
    Cached,
    Skipped,
}

impl fmt::Display for StageStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
            StageStatus::Skipped => "skipped",
        })
    }
}

#[derive(Debug, Clone)]
pub struct StageRun {
    pub stage: String,
    pub status: StageStatus,
    /// `None` for skipped stages.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub stages: Vec<StageRun>,
}

impl RunReport {
    pub fn dir(&self, stage: &str) -> Option<&Path> {
        self.stages.iter().find(|s| s.stage == stage)?.dir.as_deref()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Recompute every stage even when its outputs are up to date.
    pub force: bool,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_outputs(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if path.is_file() && name != STAGE_FILE {
            out.insert(name, sha256_file(&path)?);
        }
    }
    Ok(out)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Outputs of a finished stage.
pub(crate) struct Done {
    dir: PathBuf,
    record: StageRecord,
}

impl Done {
    pub(crate) fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// `("<stage>/<file>", hash)`, for the inputs of a later stage.
    pub(crate) fn input(&self, file: &str) -> (String, String) {
        let hash = self.record.outputs.get(file).cloned().unwrap_or_default();
        (format!("{}/{file}", self.record.stage), hash)
    }

    pub(crate) fn files(&self) -> impl Iterator<Item = &str> {
        self.record.outputs.keys().map(String::as_str)
    }
}

pub(crate) struct Runner {
    stages_dir: PathBuf,
    force: bool,
    records: Vec<StageRecord>,
    runs: Vec<StageRun>,
}

impl Runner {
    fn new(output: &Path, force: bool) -> Result<Self> {
        let stages_dir = output.join("stages");
        std::fs::create_dir_all(&stages_dir).map_err(|e| Error::io(&stages_dir, e))?;
        Ok(Runner {
            stages_dir,
            force,
            records: Vec::new(),
            runs: Vec::new(),
        })
    }

    fn cached(dir: &Path, key: &str) -> Option<StageRecord> {
        let text = std::fs::read_to_string(dir.join(STAGE_FILE)).ok()?;
        let record: StageRecord = serde_json::from_str(&text).ok()?;
        let intact = record.key == key && hash_outputs(dir).ok()? == record.outputs;
        intact.then_some(record)
    }

    pub(crate) fn stage(
        &mut self,
        name: &str,
        params: Value,
        inputs: BTreeMap<String, String>,
        body: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<Done> {
        let key_src = serde_json::json!({
            "stage": name,
            "tool": TOOL,
            "version": VERSION,
            "params": params,
            "inputs": inputs,
        });
        let key = hex::encode(Sha256::digest(serde_json::to_vec(&key_src)?));
        let dir = self.stages_dir.join(format!("{name}-{}", &key[..12]));
        if !self.force {
            if let Some(record) = Self::cached(&dir, &key) {
                log::info!("{name}: cached ({})", dir.display());
                return Ok(self.finish(dir, record, StageStatus::Cached));
            }
        }
        log::info!("{name}: running");
        let tmp = self.stages_dir.join(format!(".{name}-{}.tmp", &key[..12]));
        let wrap = |e: Error| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
        };
        if tmp.exists() {
            std::fs::remove_dir_all(&tmp).map_err(|e| wrap(Error::io(&tmp, e)))?;
        }
        std::fs::create_dir_all(&tmp).map_err(|e| wrap(Error::io(&tmp, e)))?;
        body(&tmp).map_err(wrap)?;
        let record = StageRecord {
            stage: name.to_string(),
            key,
            params,
            inputs,
            outputs: hash_outputs(&tmp).map_err(wrap)?,
            skipped: None,
        };
        write_json(&tmp.join(STAGE_FILE), &record).map_err(wrap)?;
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| wrap(Error::io(&dir, e)))?;
        }
        std::fs::rename(&tmp, &dir).map_err(|e| wrap(Error::io(&dir, e)))?;
        Ok(self.finish(dir, record, StageStatus::Ran))
    }

    fn finish(&mut self, dir: PathBuf, record: StageRecord, status: StageStatus) -> Done {
        self.records.push(record.clone());
        self.runs.push(StageRun {
            stage: record.stage.clone(),
            status,
            dir: Some(dir.clone()),
        });
        Done { dir, record }
    }

    pub(crate) fn skip(&mut self, name: &str, reason: &str) {
        log::info!("{name}: skipped ({reason})");
        self.records.push(StageRecord {
            stage: name.to_string(),
            key: String::new(),
            params: Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            skipped: Some(reason.to_string()),
        });
        self.runs.push(StageRun {
            stage: name.to_string(),
            status: StageStatus::Skipped,
            dir: None,
        });
    }
}

/// Validates the config and runs every stage in order.
pub fn run_pipeline(config: &PipelineConfig, options: RunOptions) -> Result<RunReport> {
    config.validate()?;
    let (scheme, functions) = load_resources(&config.paths)?;
    let output = config.paths.output.clone();
    let mut runner = Runner::new(&output, options.force)?;
    stages::run_all(&mut runner, config, &scheme, &functions)?;

    let manifest = Manifest {
        provenance: version_and_provenance(&scheme, &functions),
        stages: runner.records,
    };
    let manifest_path = output.join("manifest.json");
    let tmp = output.join(".manifest.json.tmp");
    write_json(&tmp, &manifest)?;
    std::fs::rename(&tmp, &manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(RunReport {
        output,
        manifest_path,
        manifest,
        stages: runner.runs,
    })
}
