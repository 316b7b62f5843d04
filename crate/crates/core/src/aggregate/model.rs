use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::hmm;
use super::votes::{majority_vote, TieBreak, VoteMatrix, ABSTAIN};
use crate::error::{Error, Result};
use crate::tagcodec::{repair_bio, Tag, TagScheme};

// Sentences per E-step work unit. Fixed so the summation order, and hence
// every float in the model file, does not depend on the thread count.
const CHUNK: usize = 256;

const DIAGONAL_MASS: f64 = 0.9;

// Pseudo-count weight of the pooled abstention rate.
const ABSTAIN_PRIOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// Echoed into the model file. Fitting itself draws no random numbers.
    pub seed: u64,
    #[serde(default)]
    pub init_tie_break: TieBreak,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            max_iter: 50,
            tol: 1e-4,
            seed: 42,
            init_tie_break: TieBreak::LabelFrequency,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Viterbi,
    Posterior,
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Viterbi => "viterbi",
            DecodeMode::Posterior => "posterior",
        })
    }
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(DecodeMode::Viterbi),
            "posterior" => Ok(DecodeMode::Posterior),
            other => Err(Error::config(format!("unknown decode mode `{other}`"))),
        }
    }
}

/// Emission table of one labeling function: rows are true states, columns
/// the observed tag, with the last column for abstentions.
///
/// Each row has three parameters: the abstention rate, the probability of
/// voting the true tag, and one probability shared by every other tag.
/// Abstention rates of entity states stay at their majority-vote estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionEmissions {
    pub function: String,
    pub probs: Vec<Vec<f64>>,
}

/// A fitted HMM over BIO states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationModel {
    pub states: Vec<String>,
    pub symbols: Vec<String>,
    pub functions: Vec<String>,
    pub dropped_functions: Vec<String>,
    pub pi: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub emissions: Vec<FunctionEmissions>,
    pub config: HmmConfig,
    pub corpus_fingerprint: String,
    /// Log-likelihood of the training votes under each successive model.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Parameters in flat, row-major form.
#[derive(Debug, Clone)]
struct Params {
    s: usize,
    pi: Vec<f64>,
    a: Vec<f64>,
    e: Vec<Vec<f64>>,
    /// For each entity state, the `I-` state of its label.
    inside: Vec<Option<usize>>,
}

struct LogParams {
    s: usize,
    pi: Vec<f64>,
    a: Vec<f64>,
    e: Vec<Vec<f64>>,
}

impl Params {
    fn logs(&self) -> LogParams {
        let ln = |v: &Vec<f64>| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
        LogParams {
            s: self.s,
            pi: ln(&self.pi),
            a: ln(&self.a),
            e: self.e.iter().map(ln).collect(),
        }
    }
}

impl LogParams {
    /// `T x S` log emission matrix. `rows[k]` is the vote row of model
    /// function `k`.
    fn emissions(&self, rows: &[&[Option<usize>]], t_len: usize) -> Vec<f64> {
        let s = self.s;
        let mut out = vec![0.0; t_len * s];
        for (k, row) in rows.iter().enumerate() {
            let e = &self.e[k];
            for (t, v) in row.iter().enumerate() {
                let sym = v.unwrap_or(s);
                for j in 0..s {
                    out[t * s + j] += e[j * (s + 1) + sym];
                }
            }
        }
        out
    }
}

fn allowed(scheme: &TagScheme, i: usize, j: usize) -> bool {
    !scheme.is_inside_id(j) || (i != 0 && scheme.label_of_id(i) == scheme.label_of_id(j))
}

struct Counts {
    pi: Vec<f64>,
    a: Vec<f64>,
    e: Vec<Vec<f64>>,
    ll: f64,
}

impl Counts {
    fn zero(s: usize, f: usize) -> Self {
        Counts {
            pi: vec![0.0; s],
            a: vec![0.0; s * s],
            e: vec![vec![0.0; s * (s + 1)]; f],
            ll: 0.0,
        }
    }

    fn add(&mut self, other: &Counts) {
        let add = |x: &mut [f64], y: &[f64]| x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        add(&mut self.pi, &other.pi);
        add(&mut self.a, &other.a);
        for (x, y) in self.e.iter_mut().zip(&other.e) {
            add(x, y);
        }
        self.ll += other.ll;
    }
}

fn rows_of<'m>(m: &'m VoteMatrix, idx: &[usize]) -> Vec<&'m [Option<usize>]> {
    idx.iter().map(|&i| m.votes[i].as_slice()).collect()
}

fn e_step(lp: &LogParams, matrices: &[VoteMatrix], idx: &[usize]) -> Counts {
    let s = lp.s;
    let f = idx.len();
    let partial: Vec<Counts> = matrices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut c = Counts::zero(s, f);
            for m in chunk {
                let t_len = m.num_tokens();
                if t_len == 0 {
                    continue;
                }
                let rows = rows_of(m, idx);
                let le = lp.emissions(&rows, t_len);
                let (alpha, ll) = hmm::forward(&lp.pi, &lp.a, &le);
                if !ll.is_finite() {
                    c.ll = f64::NEG_INFINITY;
                    continue;
                }
                let beta = hmm::backward(s, &lp.a, &le);
                c.ll += ll;
                for t in 0..t_len {
                    for j in 0..s {
                        let g = (alpha[t * s + j] + beta[t * s + j] - ll).exp();
                        if g == 0.0 {
                            continue;
                        }
                        if t == 0 {
                            c.pi[j] += g;
                        }
                        for (k, row) in rows.iter().enumerate() {
                            c.e[k][j * (s + 1) + row[t].unwrap_or(s)] += g;
                        }
                    }
                    if t + 1 < t_len {
                        for i in 0..s {
                            let ai = alpha[t * s + i];
                            if ai == f64::NEG_INFINITY {
                                continue;
                            }
                            for j in 0..s {
                                let la = lp.a[i * s + j];
                                if la == f64::NEG_INFINITY {
                                    continue;
                                }
                                c.a[i * s + j] +=
                                    (ai + la + le[(t + 1) * s + j] + beta[(t + 1) * s + j] - ll).exp();
                            }
                        }
                    }
                }
            }
            c
        })
        .collect();
    let mut total = Counts::zero(s, f);
    for c in &partial {
        total.add(c);
    }
    total
}

fn normalize_into(dst: &mut [f64], counts: &[f64]) {
    let z: f64 = counts.iter().sum();
    if z > 0.0 {
        dst.iter_mut().zip(counts).for_each(|(d, c)| *d = c / z);
    }
}

fn m_step(prev: &Params, c: &Counts) -> Params {
    let s = prev.s;
    let mut next = prev.clone();
    normalize_into(&mut next.pi, &c.pi);
    next.a = tie_transitions(&c.a, &prev.inside, &prev.a);
    for (e, ce) in next.e.iter_mut().zip(&c.e) {
        for j in 0..s {
            let row = &ce[j * (s + 1)..(j + 1) * (s + 1)];
            let n: f64 = row.iter().sum();
            if n <= 0.0 {
                continue;
            }
            let out = &mut e[j * (s + 1)..(j + 1) * (s + 1)];
            // Entity states keep their initial abstention rate; only `O`
            // re-estimates it.
            let abstain = if j == 0 { row[s] / n } else { out[s] };
            let voted = n - row[s];
            let (hit, miss) = if voted > 0.0 {
                let hit = row[j] / voted;
                (hit, (1.0 - hit).max(0.0))
            } else {
                let prev = 1.0 - out[s];
                if prev > 0.0 { (out[j] / prev, 1.0 - out[j] / prev) } else { (DIAGONAL_MASS, 1.0 - DIAGONAL_MASS) }
            };
            let mass = 1.0 - abstain;
            out.iter_mut().for_each(|x| *x = mass * miss / (s - 1) as f64);
            out[j] = mass * hit;
            out[s] = abstain;
        }
    }
    next
}

/// Transition estimate in which every entity state has its own probability
/// of continuing the entity but all of them share one distribution over
/// where to go when it ends. Rows without counts keep `prev`.
fn tie_transitions(c: &[f64], inside: &[Option<usize>], prev: &[f64]) -> Vec<f64> {
    let s = inside.len();
    let mut next = prev.to_vec();
    normalize_into(&mut next[..s], &c[..s]);
    let mut leave = vec![0.0; s];
    for i in 1..s {
        for j in (0..s).filter(|&j| Some(j) != inside[i]) {
            leave[j] += c[i * s + j];
        }
    }
    let lz: f64 = leave.iter().sum();
    if lz <= 0.0 {
        return next;
    }
    for i in 1..s {
        let row = &c[i * s..(i + 1) * s];
        let n: f64 = row.iter().sum();
        if n <= 0.0 {
            continue;
        }
        let stay = inside[i].map_or(0.0, |k| row[k] / n);
        for j in 0..s {
            next[i * s + j] = (1.0 - stay) * leave[j] / lz;
        }
        if let Some(k) = inside[i] {
            next[i * s + k] = stay;
        }
    }
    next
}

fn initial_params(
    matrices: &[VoteMatrix],
    idx: &[usize],
    scheme: &TagScheme,
    tie_break: TieBreak,
) -> Params {
    let s = scheme.num_tags();
    // Tags no function ever votes are unreachable: nothing could support
    // them, and left open they end up as copies of `O`.
    let mut voted = vec![false; s];
    voted[0] = true;
    for m in matrices {
        for &i in idx {
            for v in m.votes[i].iter().flatten() {
                voted[*v] = true;
            }
        }
    }
    let mut pi = vec![0.0; s];
    let mut a = vec![0.0; s * s];
    for j in (0..s).filter(|&j| voted[j]) {
        if !scheme.is_inside_id(j) {
            pi[j] = 1.0;
        }
        for i in 0..s {
            if allowed(scheme, i, j) {
                a[i * s + j] = 1.0;
            }
        }
    }
    let mut occupancy = vec![0.0; s];
    let mut abstains = vec![vec![0.0; s]; idx.len()];
    for m in matrices {
        let labels: Vec<usize> = majority_vote(m, scheme, tie_break)
            .iter()
            .map(|t| scheme.id_of(t).unwrap_or(0))
            .collect();
        if let Some(&first) = labels.first() {
            pi[first] += 1.0;
        }
        for w in labels.windows(2) {
            a[w[0] * s + w[1]] += 1.0;
        }
        for (t, &l) in labels.iter().enumerate() {
            occupancy[l] += 1.0;
            for (k, &fi) in idx.iter().enumerate() {
                if m.votes[fi][t].is_none() {
                    abstains[k][l] += 1.0;
                }
            }
        }
    }
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= z);
    let inside = inside_states(scheme);
    let a = tie_transitions(&a, &inside, &vec![0.0; s * s]);
    // Which labels each function ever votes.
    let mut own = vec![vec![false; scheme.labels().len()]; idx.len()];
    for m in matrices {
        for (k, &fi) in idx.iter().enumerate() {
            for v in m.votes[fi].iter().flatten() {
                if let Some(l) = scheme.label_of_id(*v) {
                    own[k][l] = true;
                }
            }
        }
    }
    let off = (1.0 - DIAGONAL_MASS) / (s - 1) as f64;
    let e = abstains
        .iter()
        .zip(&own)
        .map(|(ab, own)| {
            let is_own = |j: usize| scheme.label_of_id(j).is_some_and(|l| own[l]);
            // Pooled abstention rates over entity states of the function's
            // own labels and of all other labels; sparse states are smoothed
            // towards them.
            let pooled = |mine: bool| {
                let (mut n_abs, mut n) = (0.0, 0.0);
                for j in (1..s).filter(|&j| is_own(j) == mine) {
                    n_abs += ab[j];
                    n += occupancy[j];
                }
                (n_abs + 1.0) / (n + 2.0)
            };
            let (own_rate, other_rate) = (pooled(true), pooled(false));
            let mut e = vec![0.0; s * (s + 1)];
            for j in 0..s {
                let prior = match j {
                    0 => 0.5,
                    j if is_own(j) => own_rate,
                    _ => other_rate,
                };
                let rate = (ab[j] + ABSTAIN_PRIOR * prior) / (occupancy[j] + ABSTAIN_PRIOR);
                for v in 0..s {
                    e[j * (s + 1) + v] = (1.0 - rate) * if v == j { DIAGONAL_MASS } else { off };
                }
                e[j * (s + 1) + s] = rate;
            }
            e
        })
        .collect();
    Params { s, pi, a, e, inside }
}

fn inside_states(scheme: &TagScheme) -> Vec<Option<usize>> {
    (0..scheme.num_tags())
        .map(|i| {
            let label = scheme.labels().get(scheme.label_of_id(i)?)?;
            scheme.id_of(&Tag::Inside(label.clone()))
        })
        .collect()
}

fn fingerprint(matrices: &[VoteMatrix]) -> String {
    let mut h = Sha256::new();
    for m in matrices {
        h.update(m.sentence_id.as_bytes());
        h.update([0]);
        for row in &m.votes {
            for v in row {
                h.update(v.map_or(u64::MAX, |x| x as u64).to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Fits the aggregation HMM with Baum-Welch.
///
/// All matrices must list the same functions. Functions that abstain on
/// every token are dropped with a warning.
pub fn fit_hmm(matrices: &[VoteMatrix], scheme: &TagScheme, config: &HmmConfig) -> Result<AggregationModel> {
    let functions = matrices.first().map(|m| m.functions.clone()).unwrap_or_default();
    if let Some(m) = matrices.iter().find(|m| m.functions != functions) {
        return Err(Error::data(format!(
            "vote matrix for `{}` lists different labeling functions",
            m.sentence_id
        )));
    }
    let s = scheme.num_tags();
    for m in matrices {
        if m.votes.iter().any(|r| r.len() != m.num_tokens()) {
            return Err(Error::data(format!("vote matrix for `{}` is ragged", m.sentence_id)));
        }
        if m.votes.iter().flatten().flatten().any(|&v| v >= s) {
            return Err(Error::data(format!("vote matrix for `{}` has a tag outside the scheme", m.sentence_id)));
        }
    }
    let mut idx = Vec::new();
    let mut dropped = Vec::new();
    for (i, name) in functions.iter().enumerate() {
        if matrices.iter().any(|m| m.votes[i].iter().any(Option::is_some)) {
            idx.push(i);
        } else {
            log::warn!("labeling function `{name}` abstains everywhere; dropped");
            dropped.push(name.clone());
        }
    }
    if idx.is_empty() {
        return Err(Error::NothingToAggregate);
    }

    let mut params = initial_params(matrices, &idx, scheme, config.init_tie_break);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let counts = e_step(&params.logs(), matrices, &idx);
        let ll = counts.ll;
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if (ll - prev) / prev.abs().max(f64::MIN_POSITIVE) < config.tol {
                converged = true;
            }
        }
        history.push(ll);
        if converged || iterations >= config.max_iter {
            break;
        }
        params = m_step(&params, &counts);
        iterations += 1;
    }
    log::info!("hmm fitted in {iterations} iterations, log-likelihood {:.4}", history.last().unwrap_or(&0.0));

    let mut symbols = scheme.tags().to_vec();
    symbols.push(ABSTAIN.to_string());
    Ok(AggregationModel {
        states: scheme.tags().to_vec(),
        symbols,
        functions: idx.iter().map(|&i| functions[i].clone()).collect(),
        dropped_functions: dropped,
        pi: params.pi.clone(),
        transitions: params.a.chunks(s).map(<[f64]>::to_vec).collect(),
        emissions: idx
            .iter()
            .zip(&params.e)
            .map(|(&i, e)| FunctionEmissions {
                function: functions[i].clone(),
                probs: e.chunks(s + 1).map(<[f64]>::to_vec).collect(),
            })
            .collect(),
        config: config.clone(),
        corpus_fingerprint: fingerprint(matrices),
        log_likelihood: history,
        iterations,
        converged,
    })
}

/// Decoded tags with one confidence value per token.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tags: Vec<Tag>,
    pub confidence: Vec<f64>,
}

impl AggregationModel {
    fn params(&self) -> Params {
        let s = self.states.len();
        Params {
            s,
            pi: self.pi.clone(),
            a: self.transitions.concat(),
            e: self.emissions.iter().map(|e| e.probs.concat()).collect(),
            inside: Vec::new(),
        }
    }

    /// Checks shapes, stochasticity and that the states match `scheme`.
    pub fn validate(&self, scheme: &TagScheme) -> Result<()> {
        let s = self.states.len();
        if self.states != scheme.tags() {
            return Err(Error::config("model states do not match the tag scheme"));
        }
        let sums_to_one = |row: &[f64]| (row.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        let bad = self.pi.len() != s
            || !sums_to_one(&self.pi)
            || self.transitions.len() != s
            || self.transitions.iter().any(|r| r.len() != s || !sums_to_one(r))
            || self.emissions.len() != self.functions.len()
            || self
                .emissions
                .iter()
                .any(|e| e.probs.len() != s || e.probs.iter().any(|r| r.len() != s + 1 || !sums_to_one(r)));
        if bad {
            return Err(Error::config("model parameters are malformed or not normalized"));
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("model {}: {e}", path.display())))
    }

    fn function_rows(&self, matrix: &VoteMatrix) -> Result<Vec<usize>> {
        for f in &matrix.functions {
            if !self.functions.contains(f) && !self.dropped_functions.contains(f) {
                return Err(Error::data(format!(
                    "sentence `{}`: labeling function `{f}` is unknown to the model",
                    matrix.sentence_id
                )));
            }
        }
        self.functions
            .iter()
            .map(|f| {
                matrix.functions.iter().position(|g| g == f).ok_or_else(|| {
                    Error::data(format!(
                        "sentence `{}`: votes of labeling function `{f}` are missing",
                        matrix.sentence_id
                    ))
                })
            })
            .collect()
    }

    /// Decodes one sentence. Confidence is the posterior probability of the
    /// chosen state at each token.
    pub fn decode(&self, matrix: &VoteMatrix, scheme: &TagScheme, mode: DecodeMode) -> Result<Decoded> {
        let t_len = matrix.num_tokens();
        if t_len == 0 {
            return Ok(Decoded {
                tags: Vec::new(),
                confidence: Vec::new(),
            });
        }
        let idx = self.function_rows(matrix)?;
        let lp = self.params().logs();
        let s = lp.s;
        let le = lp.emissions(&rows_of(matrix, &idx), t_len);
        let (gamma, ll) = hmm::posteriors(&lp.pi, &lp.a, &le);
        if !ll.is_finite() {
            log::warn!(
                "sentence `{}`: votes impossible under the model; falling back to majority vote",
                matrix.sentence_id
            );
            return Ok(Decoded {
                tags: majority_vote(matrix, scheme, self.config.init_tie_break),
                confidence: vec![0.0; t_len],
            });
        }
        let states: Vec<usize> = match mode {
            DecodeMode::Viterbi => hmm::viterbi(&lp.pi, &lp.a, &le).0,
            DecodeMode::Posterior => gamma
                .chunks(s)
                .map(|row| {
                    let mut best = 0;
                    for j in 1..s {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    best
                })
                .collect(),
        };
        let confidence = states.iter().enumerate().map(|(t, &j)| gamma[t * s + j]).collect();
        let mut tags: Vec<Tag> = states.iter().map(|&j| scheme.tag(j).unwrap_or(Tag::Outside)).collect();
        repair_bio(&mut tags);
        Ok(Decoded { tags, confidence })
    }
}
