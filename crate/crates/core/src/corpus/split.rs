use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

/// Identifies the shuffling procedure; written into every split manifest.
///
/// ChaCha8 keyed with the seed as 8 little-endian bytes followed by zeros,
/// Fisher-Yates from the last index down, each draw taken from `next_u64`
/// with rejection of the biased tail.
pub const PRNG_NAME: &str = "chacha8-le64/fisher-yates-rejection/v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            train,
            validation,
            test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train, self.validation, self.test];
        if fr.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::config("split fractions must be finite and non-negative"));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split fractions sum to {sum}, expected 1.0")));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.7,
            validation: 0.2,
            test: 0.1,
            seed: 42,
        }
    }
}

/// Partition sizes for `n` sentences: validation and test get
/// `floor(n * f)`, train takes the remainder.
pub fn partition_sizes(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let validation = ((n as f64) * spec.validation).floor() as usize;
    let test = (((n as f64) * spec.test).floor() as usize).min(n - validation);
    (n - validation - test, validation, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifestHeader {
    pub prng: String,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub sizes: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct SplitOutput {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub header: SplitManifestHeader,
}

impl SplitOutput {
    /// Manifest lines: the header object first, then `{"id", "partition"}` per sentence.
    pub fn manifest_lines(&self) -> Vec<serde_json::Value> {
        let mut lines = vec![serde_json::to_value(&self.header).expect("header serializes")];
        for (part, corpus) in [
            (Partition::Train, &self.train),
            (Partition::Validation, &self.validation),
            (Partition::Test, &self.test),
        ] {
            for s in corpus.sentences() {
                lines.push(serde_json::json!({ "id": s.id, "partition": part }));
            }
        }
        lines
    }
}

fn bounded(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    let limit = u64::MAX - u64::MAX % bound;
    loop {
        let x = rng.next_u64();
        if x < limit {
            return x % bound;
        }
    }
}

pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = bounded(&mut rng, i as u64 + 1) as usize;
        idx.swap(i, j);
    }
    idx
}

/// Shuffles sentences deterministically and cuts train/validation/test.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitOutput> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::data("cannot split an empty corpus"));
    }
    let n = corpus.len();
    let (n_train, n_val, n_test) = partition_sizes(n, spec);
    let order = shuffled_indices(n, spec.seed);
    let pick = |range: std::ops::Range<usize>| {
        let sentences = order[range]
            .iter()
            .map(|&i| corpus.sentences()[i].clone())
            .collect();
        Corpus::from_parts(sentences, corpus.provenance.clone())
    };
    Ok(SplitOutput {
        train: pick(0..n_train),
        validation: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n),
        header: SplitManifestHeader {
            prng: PRNG_NAME.to_string(),
            seed: spec.seed,
            fractions: [spec.train, spec.validation, spec.test],
            sizes: [n_train, n_val, n_test],
        },
    })
}
