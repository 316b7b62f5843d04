use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregateConfig;
use crate::corpus::{Format, SplitSpec};
use crate::error::{Error, Result};
use crate::nereval::{CompareMode, TriageConfig};
use crate::stats::CompareConfig;

/// Environment variables that may replace a configured path. Nothing else
/// can be set from the environment.
pub const PATH_ENV_VARS: [&str; 5] = [
    "FINESPAN_CORPUS",
    "FINESPAN_RULES",
    "FINESPAN_GAZETTEERS",
    "FINESPAN_SCHEME",
    "FINESPAN_OUTPUT",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    /// Inferred from the corpus extension when absent.
    #[serde(default)]
    pub format: Option<Format>,
    /// Rule file; the shipped rules when absent.
    #[serde(default)]
    pub rules: Option<PathBuf>,
    /// Directory of gazetteer files; the shipped gazetteers when absent.
    #[serde(default)]
    pub gazetteers: Option<PathBuf>,
    /// Scheme file; the 23-label financial scheme when absent.
    #[serde(default)]
    pub scheme: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_words: usize,
    pub dedupe: bool,
    /// Metadata key for grouped length statistics.
    pub group_by: Option<String>,
    pub bin_width: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_words: 4,
            dedupe: true,
            group_by: None,
            bin_width: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub predictions: PathBuf,
    #[serde(default)]
    pub overrides: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: CompareMode,
    /// Number of test subsets scored separately for the statistical tests.
    pub subsets: usize,
    pub histogram_bins: usize,
    pub triage: TriageConfig,
    pub models: Vec<ModelSpec>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: CompareMode::LabelOnly,
            subsets: 5,
            histogram_bins: 100,
            triage: TriageConfig::default(),
            models: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub aggregation: AggregateConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub stats: CompareConfig,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses a config; relative paths are taken from the config's directory.
    pub fn from_json(json: &str, base: &Path) -> Result<Self> {
        let mut config: PipelineConfig =
            serde_json::from_str(json).map_err(|e| Error::config(format!("pipeline config: {e}")))?;
        let p = &mut config.paths;
        resolve(base, &mut p.corpus);
        resolve(base, &mut p.output);
        for opt in [&mut p.rules, &mut p.gazetteers, &mut p.scheme] {
            if let Some(path) = opt {
                resolve(base, path);
            }
        }
        for m in &mut config.eval.models {
            resolve(base, &mut m.predictions);
            if let Some(o) = &mut m.overrides {
                resolve(base, o);
            }
        }
        Ok(config)
    }

    /// Reads a config file and applies the path variables of the process
    /// environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = Self::from_json(&text, base)?;
        config.apply_env(|k| std::env::var_os(k).map(PathBuf::from));
        Ok(config)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<PathBuf>) {
        let p = &mut self.paths;
        if let Some(v) = lookup("FINESPAN_CORPUS") {
            p.corpus = v;
        }
        if let Some(v) = lookup("FINESPAN_RULES") {
            p.rules = Some(v);
        }
        if let Some(v) = lookup("FINESPAN_GAZETTEERS") {
            p.gazetteers = Some(v);
        }
        if let Some(v) = lookup("FINESPAN_SCHEME") {
            p.scheme = Some(v);
        }
        if let Some(v) = lookup("FINESPAN_OUTPUT") {
            p.output = v;
        }
    }

    pub fn format(&self) -> Result<Format> {
        match self.paths.format {
            Some(f) => Ok(f),
            None => Format::from_path(&self.paths.corpus).ok_or_else(|| {
                Error::config(format!(
                    "cannot infer the format of {}; set paths.format",
                    self.paths.corpus.display()
                ))
            }),
        }
    }

    /// Checks referenced files, parameters and that the output directory
    /// can be written.
    pub fn validate(&self) -> Result<()> {
        let p = &self.paths;
        require_file("corpus file", &p.corpus)?;
        self.format()?;
        if let Some(r) = &p.rules {
            require_file("rule file", r)?;
        }
        if let Some(g) = &p.gazetteers {
            if !g.is_dir() {
                return Err(Error::config(format!("gazetteer directory {} does not exist", g.display())));
            }
        }
        if let Some(s) = &p.scheme {
            require_file("scheme file", s)?;
        }
        self.split.validate()?;
        if self.filter.bin_width == 0 {
            return Err(Error::config("filter.bin_width must be at least 1"));
        }
        if self.eval.subsets == 0 || self.eval.histogram_bins == 0 {
            return Err(Error::config("eval.subsets and eval.histogram_bins must be at least 1"));
        }
        if !(self.stats.alpha > 0.0 && self.stats.alpha < 1.0) {
            return Err(Error::config(format!("stats.alpha must lie in (0, 1), got {}", self.stats.alpha)));
        }
        let mut names = std::collections::BTreeSet::new();
        for m in &self.eval.models {
            let safe = !m.name.is_empty()
                && m.name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
                && !m.name.starts_with('.');
            if !safe {
                return Err(Error::config(format!(
                    "model name `{}` must be non-empty ASCII letters, digits, `-`, `_` or `.`",
                    m.name
                )));
            }
            if !names.insert(m.name.as_str()) {
                return Err(Error::config(format!("model `{}` is listed twice", m.name)));
            }
            require_file(&format!("predictions of model `{}`", m.name), &m.predictions)?;
            if let Some(o) = &m.overrides {
                require_file(&format!("overrides of model `{}`", m.name), o)?;
            }
        }
        std::fs::create_dir_all(&p.output)
            .map_err(|e| Error::config(format!("output directory {}: {e}", p.output.display())))?;
        let probe = p.output.join(".finespan-write-probe");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| Error::config(format!("output directory {} is not writable: {e}", p.output.display())))
    }
}

fn require_file(what: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(format!("{what} {} does not exist", path.display())))
    }
}
