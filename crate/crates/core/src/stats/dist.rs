//! Tail probabilities used by the tests.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};
use statrs::function::erf::erfc;

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("positive df").sf(x)
}

pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    if x <= 0.0 {
        return 1.0;
    }
    FisherSnedecor::new(d1, d2).expect("positive df").sf(x)
}

pub fn normal_sf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").sf(z)
}

fn phi_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn phi_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

const Z_LIMIT: f64 = 9.0;
const STEPS: usize = 1800;

/// Upper tail of the studentized range of `k` standard normals with
/// infinite degrees of freedom:
/// `1 - k * ∫ φ(z) [Φ(z) - Φ(z - q)]^(k-1) dz`, by composite Simpson.
pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 1.0;
    }
    // φ(z) bounds the integrand, so |z| > 9 contributes below 1e-18.
    let (lo, hi) = (-Z_LIMIT, Z_LIMIT);
    let h = (hi - lo) / STEPS as f64;
    let f = |z: f64| phi_pdf(z) * (phi_cdf(z) - phi_cdf(z - q)).max(0.0).powi(k as i32 - 1);
    let mut sum = f(lo) + f(hi);
    for i in 1..STEPS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(lo + i as f64 * h);
    }
    let cdf = k as f64 * sum * h / 3.0;
    (1.0 - cdf).clamp(0.0, 1.0)
}

/// The `q` with `studentized_range_sf(q, k) = alpha`, by bisection.
pub fn studentized_range_quantile(alpha: f64, k: usize) -> f64 {
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_sf(mid, k) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
