//! Ratcliff-Obershelp similarity over characters.
//!
//! The longest matching block is chosen like difflib's `SequenceMatcher`
//! with `autojunk=False`: among blocks of maximal length, the one starting
//! earliest in `a`, then earliest in `b`. The ratio is not symmetric in
//! general because of that tie rule.

/// Longest common block in `a[alo..ahi]` and `b[blo..bhi]` as
/// `(i, j, size)`.
fn longest_block(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
    let width = bhi - blo;
    let mut prev = vec![0usize; width + 1];
    let mut cur = vec![0usize; width + 1];
    let mut best = (alo, blo, 0);
    for i in alo..ahi {
        for j in blo..bhi {
            let k = j - blo + 1;
            cur[k] = if a[i] == b[j] { prev[k - 1] + 1 } else { 0 };
            if cur[k] > best.2 {
                best = (i + 1 - cur[k], j + 1 - cur[k], cur[k]);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Total size of the recursively found matching blocks.
pub fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut total = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (i, j, k) = longest_block(a, b, alo, ahi, blo, bhi);
        if k == 0 {
            continue;
        }
        total += k;
        stack.push((alo, i, blo, j));
        stack.push((i + k, ahi, j + k, bhi));
    }
    total
}

/// `2M/T`, where `M` is the matched character count and `T` the combined
/// length. Two empty strings have ratio 1.
pub fn similarity_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let t = a.len() + b.len();
    if t == 0 {
        return 1.0;
    }
    2.0 * matched_chars(&a, &b) as f64 / t as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerates every block start and extends it, then recurses.
    fn oracle(a: &[char], b: &[char]) -> usize {
        let mut best = (0, 0, 0);
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                if k > best.2 {
                    best = (i, j, k);
                }
            }
        }
        let (i, j, k) = best;
        if k == 0 {
            return 0;
        }
        k + oracle(&a[..i], &b[..j]) + oracle(&a[i + k..], &b[j + k..])
    }

    fn oracle_ratio(a: &str, b: &str) -> f64 {
        let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        2.0 * oracle(&a, &b) as f64 / (a.len() + b.len()) as f64
    }

    #[test]
    fn difflib_values() {
        let cases = [
            ("[R$_824,00|MONEY]", "[R$_8924,00|MONEY]", 0.9714285714285714),
            ("Receita Federal", "receita fixa", 0.5925925925925926),
            ("prejuízo foram [0,08%|PERCENTUAL]", "prejuízo foram [0,88%|PERCENTUAL]", 0.9696969696969697),
            ("abcd", "bcda", 0.75),
            ("private Thread currentThread;", "private volatile Thread currentThread;", 0.8656716417910447),
            ("qabxcd", "abycdf", 0.6666666666666666),
            ("", "", 1.0),
            ("abc", "", 0.0),
            ("aaaa", "aa", 0.6666666666666666),
            ("ação", "acao", 0.5),
            ("abbaa", "baccaab", 0.3333333333333333),
            ("baccaab", "abbaa", 0.5),
        ];
        for (a, b, want) in cases {
            assert_eq!(similarity_ratio(a, b), want, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(similarity_ratio("lucro líquido", "lucro líquido"), 1.0);
        assert_eq!(similarity_ratio("abc", "xyz"), 0.0);
        assert_eq!(similarity_ratio("", "abc"), 0.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(a in "[abcç ]{0,24}", b in "[abcç ]{0,24}") {
            prop_assert_eq!(similarity_ratio(&a, &b), oracle_ratio(&a, &b));
        }

        #[test]
        fn bounded_and_reflexive(a in "\\PC{0,30}", b in "\\PC{0,30}") {
            let r = similarity_ratio(&a, &b);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(similarity_ratio(&a, &a), 1.0);
        }
    }
}
