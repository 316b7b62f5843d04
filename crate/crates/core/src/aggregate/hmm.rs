//! Log-space forward, backward and Viterbi passes over a dense state space.
//!
//! Matrices are row-major: `log_a[i * s + j]` is the transition `i -> j` and
//! `log_e[t * s + j]` the emission of observation `t` in state `j`.

pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    lse(xs.len(), |i| xs[i])
}

/// `log(sum(exp(f(i))))` for `i` in `0..n`, without allocating.
fn lse(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let m = (0..n).map(&f).fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (0..n).map(|i| (f(i) - m).exp()).sum::<f64>().ln()
}

/// Forward variables and the sequence log-likelihood.
pub fn forward(log_pi: &[f64], log_a: &[f64], log_e: &[f64]) -> (Vec<f64>, f64) {
    let s = log_pi.len();
    let t_len = log_e.len() / s;
    let mut alpha = vec![f64::NEG_INFINITY; t_len * s];
    if t_len == 0 {
        return (alpha, 0.0);
    }
    for j in 0..s {
        alpha[j] = log_pi[j] + log_e[j];
    }
    for t in 1..t_len {
        for j in 0..s {
            let into = lse(s, |i| alpha[(t - 1) * s + i] + log_a[i * s + j]);
            alpha[t * s + j] = into + log_e[t * s + j];
        }
    }
    let ll = lse(s, |j| alpha[(t_len - 1) * s + j]);
    (alpha, ll)
}

pub fn backward(s: usize, log_a: &[f64], log_e: &[f64]) -> Vec<f64> {
    let t_len = log_e.len() / s;
    let mut beta = vec![0.0; t_len * s];
    for t in (0..t_len.saturating_sub(1)).rev() {
        for i in 0..s {
            beta[t * s + i] = lse(s, |j| log_a[i * s + j] + log_e[(t + 1) * s + j] + beta[(t + 1) * s + j]);
        }
    }
    beta
}

/// Per-token state marginals in linear space, plus the log-likelihood.
pub fn posteriors(log_pi: &[f64], log_a: &[f64], log_e: &[f64]) -> (Vec<f64>, f64) {
    let s = log_pi.len();
    let (alpha, ll) = forward(log_pi, log_a, log_e);
    let beta = backward(s, log_a, log_e);
    let gamma = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| if ll.is_finite() { (a + b - ll).exp() } else { 0.0 })
        .collect();
    (gamma, ll)
}

/// The most probable state path and its joint log-probability. Ties go to
/// the lowest state index.
pub fn viterbi(log_pi: &[f64], log_a: &[f64], log_e: &[f64]) -> (Vec<usize>, f64) {
    let s = log_pi.len();
    let t_len = log_e.len() / s;
    if t_len == 0 {
        return (Vec::new(), 0.0);
    }
    let mut delta = vec![f64::NEG_INFINITY; t_len * s];
    let mut back = vec![0usize; t_len * s];
    for j in 0..s {
        delta[j] = log_pi[j] + log_e[j];
    }
    for t in 1..t_len {
        for j in 0..s {
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..s {
                let v = delta[(t - 1) * s + i] + log_a[i * s + j];
                if v > best.0 {
                    best = (v, i);
                }
            }
            delta[t * s + j] = best.0 + log_e[t * s + j];
            back[t * s + j] = best.1;
        }
    }
    let last = &delta[(t_len - 1) * s..];
    let mut end = 0;
    for j in 1..s {
        if last[j] > last[end] {
            end = j;
        }
    }
    let score = last[end];
    let mut path = vec![end; t_len];
    for t in (1..t_len).rev() {
        path[t - 1] = back[t * s + path[t]];
    }
    (path, score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path_score(path: &[usize], log_pi: &[f64], log_a: &[f64], log_e: &[f64]) -> f64 {
        let s = log_pi.len();
        let mut v = log_pi[path[0]] + log_e[path[0]];
        for t in 1..path.len() {
            v += log_a[path[t - 1] * s + path[t]] + log_e[t * s + path[t]];
        }
        v
    }

    fn all_paths(s: usize, t: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..t {
            out = out
                .into_iter()
                .flat_map(|p| (0..s).map(move |j| [p.clone(), vec![j]].concat()))
                .collect();
        }
        out
    }

    fn normalize(row: &mut [f64]) {
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x = (*x / z).ln());
    }

    fn model() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (1usize..=5, 1usize..=6).prop_flat_map(|(s, t)| {
            (
                prop::collection::vec(0.01f64..1.0, s),
                prop::collection::vec(0.01f64..1.0, s * s),
                prop::collection::vec(0.01f64..1.0, s * t),
            )
                .prop_map(move |(mut pi, mut a, e)| {
                    normalize(&mut pi);
                    a.chunks_mut(s).for_each(normalize);
                    let e = e.into_iter().map(f64::ln).collect();
                    (pi, a, e)
                })
        })
    }

    #[test]
    fn two_state_chain_by_hand() {
        let pi = [0.6f64.ln(), 0.4f64.ln()];
        let a = [0.7f64.ln(), 0.3f64.ln(), 0.4f64.ln(), 0.6f64.ln()];
        let e: Vec<f64> = [0.5, 0.1, 0.4, 0.3, 0.1, 0.6, 0.5, 0.1].iter().map(|x: &f64| x.ln()).collect();
        let (path, score) = viterbi(&pi, &a, &e);
        let best = all_paths(2, 4)
            .into_iter()
            .max_by(|x, y| path_score(x, &pi, &a, &e).total_cmp(&path_score(y, &pi, &a, &e)))
            .unwrap();
        assert_eq!(path, best);
        assert!((score - path_score(&best, &pi, &a, &e)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn viterbi_matches_enumeration((pi, a, e) in model()) {
            let s = pi.len();
            let (path, score) = viterbi(&pi, &a, &e);
            let best = all_paths(s, e.len() / s)
                .iter()
                .map(|p| path_score(p, &pi, &a, &e))
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((score - best).abs() < 1e-9);
            prop_assert!((path_score(&path, &pi, &a, &e) - best).abs() < 1e-9);
        }

        #[test]
        fn forward_matches_enumeration((pi, a, e) in model()) {
            let s = pi.len();
            let total = log_sum_exp(all_paths(s, e.len() / s).iter().map(|p| path_score(p, &pi, &a, &e)));
            let (_, ll) = forward(&pi, &a, &e);
            prop_assert!((ll - total).abs() < 1e-9);
            let (gamma, _) = posteriors(&pi, &a, &e);
            for row in gamma.chunks(s) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
