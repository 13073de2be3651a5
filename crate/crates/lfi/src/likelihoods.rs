//! The three likelihood estimators plugged into the MCMC sampler: the ABC
//! indicator-kernel estimate, the Gaussian synthetic likelihood, and the
//! kernel-density-estimate likelihood with optional iid recycling.
//!
//! Each estimator takes a simulation closure and a [`SeedSpec`]; inner
//! simulations draw from deterministic child streams and are reduced in
//! index order, so estimates are identical across thread counts.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::core::SeedSpec;
use crate::exec;
use crate::stats;
use crate::{Error, Result};

/// Half-width of the kernel evaluation window in bandwidth units. Gaussian
/// kernel terms underflow to exactly zero beyond `t^2/2 > 745.2`, i.e.
/// `|t| > 38.61`, so summing only the window reproduces the full sum bit for
/// bit.
const KERNEL_WINDOW: f64 = 39.0;

/// One likelihood evaluation, carrying whatever side information the
/// estimator produces.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodEstimate {
    /// Log of the (unnormalized) likelihood estimate.
    pub log_lik: f64,
    /// The realized data discrepancy, for ABC estimates.
    pub distance: Option<f64>,
    /// The tolerance in force, for ABC estimates.
    pub epsilon: Option<f64>,
    /// Number of simulator calls consumed.
    pub sims: usize,
}

/// ABC indicator-kernel configuration; one mock dataset per evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcConfig {
    /// Acceptance tolerance; positive, may be infinite.
    pub epsilon: f64,
}

/// Synthetic-likelihood configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BslConfig {
    /// Simulated datasets per evaluation.
    pub m: usize,
}

/// Bandwidth rule for the KDE likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `0.9 min(sd, IQR/1.34) N^(-1/5)` on the pooled simulated points.
    Silverman,
    Fixed(f64),
}

/// KDE likelihood configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig {
    /// Simulated datasets per evaluation.
    pub m: usize,
    pub bandwidth: Bandwidth,
    /// Pool all simulated points into one estimator (iid recycling) instead
    /// of averaging per-dataset estimators.
    pub recycle: bool,
}

/// Unbiased indicator-kernel ABC likelihood estimate from a single mock
/// dataset: weight 1 when the realized discrepancy is within tolerance
/// (closed threshold), else 0.
pub fn abc_loglik_estimate<F>(cfg: &AbcConfig, seed: &SeedSpec, sim_distance: F) -> Result<LikelihoodEstimate>
where
    F: FnOnce(&SeedSpec) -> Result<f64>,
{
    if cfg.epsilon <= 0.0 || cfg.epsilon.is_nan() {
        return Err(Error::Config(format!("ABC tolerance must be positive, got {}", cfg.epsilon)));
    }
    let rho = sim_distance(seed)?;
    let log_lik = if rho <= cfg.epsilon { 0.0 } else { f64::NEG_INFINITY };
    Ok(LikelihoodEstimate {
        log_lik,
        distance: Some(rho),
        epsilon: Some(cfg.epsilon),
        sims: 1,
    })
}

/// Gaussian synthetic log-likelihood of the observed summary `eta_y` under
/// the mean and covariance of `m` simulated summaries.
pub fn bsl_loglik<F>(eta_y: &[f64], cfg: &BslConfig, seed: &SeedSpec, sim_summary: F) -> Result<LikelihoodEstimate>
where
    F: Fn(&SeedSpec) -> Result<Vec<f64>> + Sync + Send,
{
    let d = eta_y.len();
    if cfg.m < d + 2 {
        return Err(Error::Config(format!(
            "synthetic likelihood needs m >= d + 2 simulations, got m = {} for d = {d}",
            cfg.m
        )));
    }
    let sims = exec::par_map_indexed(cfg.m, |i| sim_summary(&seed.child(i as u64)));
    let mut etas = Vec::with_capacity(cfg.m);
    for sim in sims {
        etas.push(sim?);
    }
    let log_lik = bsl_loglik_from_summaries(eta_y, &etas)?;
    Ok(LikelihoodEstimate {
        log_lik,
        distance: None,
        epsilon: None,
        sims: cfg.m,
    })
}

/// The synthetic-likelihood density given already-simulated summaries. The
/// covariance uses the 1/m normalization.
pub fn bsl_loglik_from_summaries(eta_y: &[f64], etas: &[Vec<f64>]) -> Result<f64> {
    let d = eta_y.len();
    let m = etas.len();
    for eta in etas {
        if eta.len() != d {
            return Err(Error::LengthMismatch { left: d, right: eta.len() });
        }
    }
    let mut mean = vec![0.0; d];
    for eta in etas {
        for (acc, v) in mean.iter_mut().zip(eta) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut cov = DMatrix::zeros(d, d);
    for eta in etas {
        for p in 0..d {
            let dp = eta[p] - mean[p];
            for q in p..d {
                cov[(p, q)] += dp * (eta[q] - mean[q]);
            }
        }
    }
    for p in 0..d {
        for q in p..d {
            cov[(p, q)] /= m as f64;
            cov[(q, p)] = cov[(p, q)];
        }
    }
    let chol = Cholesky::new(cov).ok_or(Error::SingularCovariance)?;
    let ln_det: f64 = chol.l().diagonal().iter().map(|x: &f64| x.ln()).sum::<f64>() * 2.0;
    let resid = DVector::from_iterator(d, eta_y.iter().zip(&mean).map(|(y, m)| y - m));
    let solved = chol.solve(&resid);
    let quad = resid.dot(&solved);
    Ok(-0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + ln_det + quad))
}

/// KDE log-likelihood of `y` under `m` simulated datasets: the sum over
/// observations of the log of the averaged kernel density estimate. In
/// recycle mode the pool is one estimator over all simulated points; without
/// recycling each dataset keeps its own estimator and densities are averaged
/// (both share one bandwidth computed from the pooled points).
pub fn kde_loglik<F>(y: &[f64], cfg: &KdeConfig, seed: &SeedSpec, sim_data: F) -> Result<LikelihoodEstimate>
where
    F: Fn(&SeedSpec) -> Result<Vec<f64>> + Sync + Send,
{
    if cfg.m == 0 {
        return Err(Error::Config("KDE likelihood needs at least one simulated dataset".into()));
    }
    let sims = exec::par_map_indexed(cfg.m, |i| sim_data(&seed.child(i as u64)));
    let mut datasets = Vec::with_capacity(cfg.m);
    for sim in sims {
        datasets.push(sim?);
    }
    let log_lik = kde_loglik_from_datasets(y, cfg, &datasets)?;
    Ok(LikelihoodEstimate {
        log_lik,
        distance: None,
        epsilon: None,
        sims: cfg.m,
    })
}

/// The KDE log-likelihood given already-simulated datasets.
pub fn kde_loglik_from_datasets(y: &[f64], cfg: &KdeConfig, datasets: &[Vec<f64>]) -> Result<f64> {
    let m = datasets.len();
    let total: usize = datasets.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(Error::DegenerateSample("no simulated points for the KDE likelihood".into()));
    }
    let mut pool = Vec::with_capacity(total);
    for data in datasets {
        if data.is_empty() {
            return Err(Error::DegenerateSample("a simulated dataset is empty".into()));
        }
        let weight = if cfg.recycle {
            1.0 / total as f64
        } else {
            1.0 / (m * data.len()) as f64
        };
        for &z in data {
            if !z.is_finite() {
                return Err(Error::DegenerateSample(format!("non-finite simulated point {z}")));
            }
            pool.push((z, weight));
        }
    }
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));

    let delta = match cfg.bandwidth {
        Bandwidth::Fixed(d) if d > 0.0 && d.is_finite() => d,
        Bandwidth::Fixed(d) => {
            return Err(Error::Config(format!("fixed KDE bandwidth must be positive, got {d}")));
        }
        Bandwidth::Silverman => {
            let values: Vec<f64> = pool.iter().map(|p| p.0).collect();
            let spread = stats::sample_sd(&values).min(stats::iqr(&values) / 1.34);
            let d = 0.9 * spread * (total as f64).powf(-0.2);
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::DegenerateSample(
                    "simulated pool has no spread; Silverman bandwidth is zero".into(),
                ));
            }
            d
        }
    };

    let half_width = KERNEL_WINDOW * delta;
    let ln_norm = delta.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut log_lik = 0.0;
    for &yi in y {
        let lo = pool.partition_point(|p| p.0 < yi - half_width);
        let hi = pool.partition_point(|p| p.0 <= yi + half_width);
        let mut acc = 0.0;
        for &(z, w) in &pool[lo..hi] {
            let t = (yi - z) / delta;
            acc += w * (-0.5 * t * t).exp();
        }
        if acc == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_lik += acc.ln() - ln_norm;
    }
    Ok(log_lik)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    #[test]
    fn abc_accepts_on_the_closed_threshold() {
        let cfg = AbcConfig { epsilon: 0.25 };
        let est = abc_loglik_estimate(&cfg, &SeedSpec::new(1), |_| Ok(0.25)).unwrap();
        assert_eq!(est.log_lik, 0.0);
        assert_eq!(est.distance, Some(0.25));
        let est = abc_loglik_estimate(&cfg, &SeedSpec::new(1), |_| Ok(0.2500001)).unwrap();
        assert_eq!(est.log_lik, f64::NEG_INFINITY);
    }

    #[test]
    fn abc_with_infinite_tolerance_always_accepts() {
        let cfg = AbcConfig { epsilon: f64::INFINITY };
        for i in 0..100 {
            let est = abc_loglik_estimate(&cfg, &SeedSpec::new(i), |s| {
                let z: f64 = StandardNormal.sample(&mut s.rng());
                Ok(z.abs() * 100.0)
            })
            .unwrap();
            assert_eq!(est.log_lik, 0.0);
        }
    }

    #[test]
    fn abc_rejects_invalid_tolerance() {
        for eps in [0.0, -1.0, f64::NAN] {
            let cfg = AbcConfig { epsilon: eps };
            assert!(abc_loglik_estimate(&cfg, &SeedSpec::new(1), |_| Ok(1.0)).is_err());
        }
    }

    #[test]
    fn abc_weight_is_deterministic_in_the_seed() {
        let cfg = AbcConfig { epsilon: 1.0 };
        let sim = |s: &SeedSpec| {
            let z: f64 = StandardNormal.sample(&mut s.rng());
            Ok(z.abs())
        };
        let a = abc_loglik_estimate(&cfg, &SeedSpec::new(5).with_proposal(3), sim).unwrap();
        let b = abc_loglik_estimate(&cfg, &SeedSpec::new(5).with_proposal(3), sim).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn abc_mean_weight_matches_an_independent_pool() {
        let cfg = AbcConfig { epsilon: 1.0 };
        let sim = |s: &SeedSpec| {
            let z: f64 = StandardNormal.sample(&mut s.rng());
            Ok(z.abs())
        };
        let reps = 10_000;
        let mut accepted = 0usize;
        for i in 0..reps {
            let est = abc_loglik_estimate(&cfg, &SeedSpec::new(40).with_proposal(i), sim).unwrap();
            if est.log_lik == 0.0 {
                accepted += 1;
            }
        }
        let mean_weight = accepted as f64 / reps as f64;

        let mut rng = SeedSpec::new(41).rng();
        let pool = 100_000;
        let mut hits = 0usize;
        for _ in 0..pool {
            let z: f64 = StandardNormal.sample(&mut rng);
            if z.abs() <= 1.0 {
                hits += 1;
            }
        }
        let p = hits as f64 / pool as f64;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        assert!(
            (mean_weight - p).abs() < 3.0 * se,
            "mean weight {mean_weight} vs pool rate {p} (se {se})"
        );
    }

    #[test]
    fn bsl_hand_example() {
        let ll = bsl_loglik_from_summaries(&[0.0], &[vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]]).unwrap();
        assert_relative_eq!(ll, -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
    }

    #[test]
    fn bsl_identical_summaries_are_singular() {
        let etas = vec![vec![2.0, 1.0]; 10];
        assert!(matches!(
            bsl_loglik_from_summaries(&[2.0, 1.0], &etas),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn bsl_requires_enough_simulations() {
        let cfg = BslConfig { m: 3 };
        let r = bsl_loglik(&[0.0, 0.0], &cfg, &SeedSpec::new(1), |_| Ok(vec![0.0, 0.0]));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn bsl_is_order_invariant() {
        let mut rng = SeedSpec::new(42).rng();
        let mut etas: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                (0..3)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    })
                    .collect()
            })
            .collect();
        let y = [0.1, -0.2, 0.3];
        let a = bsl_loglik_from_summaries(&y, &etas).unwrap();
        etas.reverse();
        etas.swap(3, 17);
        let b = bsl_loglik_from_summaries(&y, &etas).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-10 * a.abs());
    }

    #[test]
    fn bsl_density_peaks_at_the_simulated_mean() {
        let mut rng = SeedSpec::new(43).rng();
        let etas: Vec<Vec<f64>> = (0..50)
            .map(|_| {
                (0..2)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        2.0 + z
                    })
                    .collect()
            })
            .collect();
        let d = etas[0].len();
        let mut mean = vec![0.0; d];
        for eta in &etas {
            for (m, v) in mean.iter_mut().zip(eta) {
                *m += v / etas.len() as f64;
            }
        }
        let at_mean = bsl_loglik_from_summaries(&mean, &etas).unwrap();
        for i in 0..20 {
            let off: Vec<f64> = mean.iter().enumerate().map(|(j, m)| m + 0.3 * ((i + j) as f64).sin()).collect();
            assert!(bsl_loglik_from_summaries(&off, &etas).unwrap() <= at_mean + 1e-12);
        }
    }

    #[test]
    fn bsl_matches_the_exact_gaussian_oracle() {
        let eta_y = [0.3];
        let theta = 0.0;
        let cfg = BslConfig { m: 10_000 };
        let est = bsl_loglik(&eta_y, &cfg, &SeedSpec::new(44), |s| {
            let z: f64 = StandardNormal.sample(&mut s.rng());
            Ok(vec![theta + z])
        })
        .unwrap();
        let exact = stats::normal_ln_pdf(0.3);
        assert!(
            (est.log_lik - exact).abs() < 0.05,
            "BSL {} vs exact {exact}",
            est.log_lik
        );
        assert_eq!(est.sims, 10_000);
    }

    #[test]
    fn kde_single_point_at_zero_offset() {
        let cfg = KdeConfig {
            m: 1,
            bandwidth: Bandwidth::Fixed(0.2),
            recycle: true,
        };
        let ll = kde_loglik_from_datasets(&[1.7], &cfg, &[vec![1.7]]).unwrap();
        let expect = -(0.2f64.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln());
        assert_relative_eq!(ll, expect, epsilon = 1e-12);
    }

    #[test]
    fn kde_recycle_equals_per_dataset_average_at_m_equal_one() {
        let mut rng = SeedSpec::new(45).rng();
        let data: Vec<f64> = (0..200)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let y: Vec<f64> = (0..50)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let base = KdeConfig {
            m: 1,
            bandwidth: Bandwidth::Silverman,
            recycle: true,
        };
        let pooled = kde_loglik_from_datasets(&y, &base, std::slice::from_ref(&data)).unwrap();
        let averaged = kde_loglik_from_datasets(
            &y,
            &KdeConfig { recycle: false, ..base },
            &[data],
        )
        .unwrap();
        assert_eq!(pooled.to_bits(), averaged.to_bits());
    }

    #[test]
    fn kde_windowed_sum_equals_the_full_sum() {
        let mut rng = SeedSpec::new(46).rng();
        let data: Vec<f64> = (0..500)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                10.0 * z
            })
            .collect();
        let y = [-3.0, 0.0, 0.4, 8.0];
        let delta = 0.05;
        let cfg = KdeConfig {
            m: 1,
            bandwidth: Bandwidth::Fixed(delta),
            recycle: true,
        };
        let windowed = kde_loglik_from_datasets(&y, &cfg, std::slice::from_ref(&data)).unwrap();

        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mut full = 0.0;
        for yi in y {
            let mut acc = 0.0;
            for &z in &sorted {
                let t = (yi - z) / delta;
                acc += (1.0 / n) * (-0.5 * t * t).exp();
            }
            full += acc.ln() - delta.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        assert_eq!(windowed.to_bits(), full.to_bits());
    }

    #[test]
    fn kde_zero_density_gives_negative_infinity() {
        let cfg = KdeConfig {
            m: 1,
            bandwidth: Bandwidth::Fixed(0.01),
            recycle: true,
        };
        let ll = kde_loglik_from_datasets(&[100.0], &cfg, &[vec![0.0, 0.1, 0.2]]).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
    }

    #[test]
    fn kde_is_continuous_in_the_bandwidth() {
        let mut rng = SeedSpec::new(47).rng();
        let data: Vec<f64> = (0..300)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let y: Vec<f64> = (0..20)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        let ll_at = |delta: f64| {
            let cfg = KdeConfig {
                m: 1,
                bandwidth: Bandwidth::Fixed(delta),
                recycle: true,
            };
            kde_loglik_from_datasets(&y, &cfg, std::slice::from_ref(&data)).unwrap()
        };
        for i in 0..=60 {
            let delta = 0.05 + 0.005 * i as f64;
            let a = ll_at(delta);
            let b = ll_at(delta * (1.0 + 1e-9));
            assert!((a - b).abs() < 1e-6, "window edge discontinuity {} at delta {delta}", a - b);
        }
    }

    #[test]
    fn kde_converges_to_the_exponential_density() {
        let y: Vec<f64> = (0..50).map(|i| 0.3 + 1.7 * i as f64 / 49.0).collect();
        let exact: f64 = y.iter().map(|v| -v).sum();
        let cfg = KdeConfig {
            m: 1000,
            bandwidth: Bandwidth::Silverman,
            recycle: true,
        };
        let est = kde_loglik(&y, &cfg, &SeedSpec::new(48), |s| {
            let mut rng = s.rng();
            Ok((0..50)
                .map(|_| {
                    let e: f64 = Exp1.sample(&mut rng);
                    e
                })
                .collect())
        })
        .unwrap();
        assert!(
            (est.log_lik - exact).abs() < 0.5,
            "KDE {} vs exact {exact}",
            est.log_lik
        );
    }

    #[test]
    fn kde_rejects_empty_inputs() {
        let cfg = KdeConfig {
            m: 1,
            bandwidth: Bandwidth::Silverman,
            recycle: true,
        };
        assert!(kde_loglik_from_datasets(&[1.0], &cfg, &[vec![]]).is_err());
        let constant = KdeConfig {
            m: 1,
            bandwidth: Bandwidth::Silverman,
            recycle: true,
        };
        assert!(kde_loglik_from_datasets(&[1.0], &constant, &[vec![2.0; 30]]).is_err());
    }
}
