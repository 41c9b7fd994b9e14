//! Kolmogorov-Smirnov statistics used to check shaped observables against
//! their configured distributions and against each other.

use crate::dist::{DistributionSpec, Role};

/// Asymptotic KS coefficient `c(alpha) = sqrt(-ln(alpha / 2) / 2)`;
/// `c(0.01) ≈ 1.628`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// One-sample rejection threshold `c / sqrt(n)`.
pub fn ks_critical_one_sample(c: f64, n: usize) -> f64 {
    c / (n as f64).sqrt()
}

/// Two-sample rejection threshold `c * sqrt((n + m) / (n m))`.
pub fn ks_critical_two_sample(c: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample KS statistic `sup |F_n - F|`.
///
/// `cdf(v) = P(V <= v)` and `cdf_left(v) = P(V < v)`; both are evaluated at
/// every distinct sample value, so discrete and continuous references are
/// handled alike. Returns `NaN` for an empty sample.
pub fn ks_one_sample<F, G>(sample: &[f64], cdf: F, cdf_left: G) -> f64
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if sample.is_empty() {
        return f64::NAN;
    }
    let v = sorted(sample);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let x = v[i];
        let mut j = i;
        while j < v.len() && v[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((at - cdf(x)).abs()).max((below - cdf_left(x)).abs());
        i = j;
    }
    d
}

/// KS statistic of `sample` against a distribution spec in `role`.
pub fn ks_against(sample: &[f64], spec: &DistributionSpec, role: Role) -> f64 {
    ks_one_sample(sample, |v| spec.cdf(role, v), |v| spec.cdf_left(role, v))
}

/// Two-sample KS statistic `sup |F_a - F_b|`. Returns `NaN` if either sample
/// is empty.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

pub fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(sample: &[f64]) -> f64 {
    let m = mean(sample);
    let ss: f64 = sample.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (sample.len() as f64 - 1.0)).sqrt()
}

pub fn median(sample: &[f64]) -> f64 {
    let v = sorted(sample);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
