//! Small numerical helpers shared across the crate: moments, quantiles,
//! robust spread estimates, the standard normal distribution and
//! Kolmogorov-Smirnov statistics.

use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

fn std_normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(|| Normal::new(0.0, 1.0).expect("unit normal"))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Log-density of the standard normal.
pub fn normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (normalized by `n`).
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Sample variance (normalized by `n - 1`).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (the convention where the `q`-quantile of `1..=100` at `q = 0.5` is
/// `50.5`). `q` must lie in `[0, 1]` and `xs` must be non-empty.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    debug_assert!(!xs.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in quantile"));
    quantile_sorted(&sorted, q)
}

/// Same as [`quantile`] but assumes the input is already sorted ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Median absolute deviation about the median (no consistency factor).
pub fn mad(xs: &[f64]) -> f64 {
    let m = median(xs);
    let devs: Vec<f64> = xs.iter().map(|x| (x - m).abs()).collect();
    median(&devs)
}

/// Interquartile range.
pub fn iqr(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in iqr"));
    quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
}

/// Composite Simpson integration of `f` over `[a, b]` with `n` subintervals
/// (`n` must be even and at least 2).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 2 && n.is_multiple_of(2), "simpson needs an even subinterval count");
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Numerically stable log of a sum of exponentials.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// One-sample Kolmogorov-Smirnov statistic against the CDF `f`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], f: F) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite value in ks"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let c = f(*x);
        d = d.max((c - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - c).abs());
    }
    d
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|u, v| u.partial_cmp(v).expect("non-finite value in ks"));
    b.sort_by(|u, v| u.partial_cmp(v).expect("non-finite value in ks"));
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

/// Asymptotic one-sample KS critical value at significance `alpha`.
pub fn ks_critical_one_sample(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Asymptotic two-sample KS critical value at significance `alpha`.
pub fn ks_critical_two_sample(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantile_interpolates() {
        let pool: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_relative_eq!(quantile(&pool, 0.5), 50.5);
        assert_relative_eq!(quantile(&pool, 0.0), 1.0);
        assert_relative_eq!(quantile(&pool, 1.0), 100.0);
    }

    #[test]
    fn quantile_is_monotone_in_q() {
        let xs = [0.3, -1.2, 4.5, 2.2, 0.0, 9.1, -3.3];
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=20 {
            let q = i as f64 / 20.0;
            let v = quantile(&xs, q);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn mad_of_small_pool() {
        // pool (1,2,3,4,100): median 3, abs deviations (2,1,0,1,97), MAD 1
        let pool = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_relative_eq!(mad(&pool), 1.0);
    }

    #[test]
    fn normal_round_trip() {
        for &p in &[0.01, 0.2, 0.5, 0.8, 0.99] {
            assert_relative_eq!(normal_cdf(normal_quantile(p)), p, epsilon = 1e-9);
        }
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [-1.0f64, 0.5, 2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&xs), direct, epsilon = 1e-12);
    }

    #[test]
    fn simpson_integrates_smooth_functions() {
        assert_relative_eq!(simpson(f64::sin, 0.0, std::f64::consts::PI, 1000), 2.0, epsilon = 1e-10);
        // Simpson is exact for cubics.
        assert_relative_eq!(simpson(|x| x * x * x, 0.0, 1.0, 2), 0.25, epsilon = 1e-14);
    }

    #[test]
    fn ks_statistics_detect_shift() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b) > 0.25);
        assert!(ks_one_sample(&a, |x| x.clamp(0.0, 1.0)) < 0.01);
    }
}
