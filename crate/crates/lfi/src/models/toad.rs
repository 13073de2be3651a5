//! Amphibian movement model: nightly symmetric alpha-stable foraging steps
//! with probabilistic returns to previously used refuge sites, plus the
//! displacement summaries used for inference.

use std::fmt::Write as _;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::core::SeedSpec;
use crate::stats;
use crate::{Error, Result};

/// Displacement lags (in days) summarised for inference.
pub const TOAD_LAGS: [usize; 4] = [1, 2, 4, 8];

/// Displacements strictly below this many metres count as returns.
pub const TOAD_RETURN_THRESHOLD: f64 = 10.0;

/// Parameters: stable index and scale of the nightly step, and the refuge
/// return probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToadParams {
    /// Stable index in (0, 2].
    pub alpha: f64,
    /// Stable scale in metres; must be positive.
    pub scale: f64,
    /// Probability of returning to a previous refuge, in [0, 1].
    pub p0: f64,
}

impl ToadParams {
    pub fn new(alpha: f64, scale: f64, p0: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::InvalidParameter(format!("stable index alpha = {alpha} must lie in (0, 2]")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("stable scale = {scale} must be positive")));
        }
        if !(0.0..=1.0).contains(&p0) {
            return Err(Error::InvalidParameter(format!("return probability p0 = {p0} must lie in [0, 1]")));
        }
        Ok(Self { alpha, scale, p0 })
    }
}

/// One symmetric alpha-stable draw via the Chambers-Mallows-Stuck
/// construction, scaled by `scale`.
pub fn stable_draw<R: Rng + ?Sized>(alpha: f64, scale: f64, rng: &mut R) -> f64 {
    let v = FRAC_PI_2 * (2.0 * rng.random::<f64>() - 1.0);
    let w: f64 = Exp1.sample(&mut *rng);
    let x = (alpha * v).sin() / v.cos().powf(1.0 / alpha)
        * ((v - alpha * v).cos() / w).powf((1.0 - alpha) / alpha);
    scale * x
}

/// Validated single-draw wrapper around [`stable_draw`].
pub fn stable_sample(alpha: f64, scale: f64, seed: &SeedSpec) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::InvalidParameter(format!("stable index alpha = {alpha} must lie in (0, 2]")));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidParameter(format!("stable scale = {scale} must be positive")));
    }
    Ok(stable_draw(alpha, scale, &mut seed.rng()))
}

/// A matrix of end-of-day toad locations, days by toads; missing entries are
/// stored as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ToadData {
    n_days: usize,
    n_toads: usize,
    values: Vec<f64>,
}

impl ToadData {
    /// Builds a matrix from day-major rows; entries may be NaN for missing.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_days = rows.len();
        let n_toads = rows.first().map_or(0, Vec::len);
        if n_days == 0 || n_toads == 0 {
            return Err(Error::DegenerateSample("toad location matrix is empty".into()));
        }
        let mut values = Vec::with_capacity(n_days * n_toads);
        for row in &rows {
            if row.len() != n_toads {
                return Err(Error::LengthMismatch { left: n_toads, right: row.len() });
            }
            values.extend_from_slice(row);
        }
        Ok(Self { n_days, n_toads, values })
    }

    pub fn n_days(&self) -> usize {
        self.n_days
    }

    pub fn n_toads(&self) -> usize {
        self.n_toads
    }

    /// The recorded location, or None where the observation is missing.
    pub fn get(&self, day: usize, toad: usize) -> Option<f64> {
        let v = self.values[day * self.n_toads + toad];
        v.is_finite().then_some(v)
    }

    /// Reads a whitespace-delimited matrix, one day per row, `NA` for
    /// missing entries.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            message,
        };
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in line.split_whitespace() {
                if field == "NA" {
                    row.push(f64::NAN);
                } else {
                    let v: f64 = field.parse().map_err(|_| {
                        parse_err(format!("line {}: expected a number or NA, got {field:?}", lineno + 1))
                    })?;
                    row.push(v);
                }
            }
            rows.push(row);
        }
        Self::from_rows(rows).map_err(|e| parse_err(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for day in 0..self.n_days {
            for toad in 0..self.n_toads {
                if toad > 0 {
                    out.push('\t');
                }
                let v = self.values[day * self.n_toads + toad];
                if v.is_finite() {
                    write!(out, "{v}").expect("write to string");
                } else {
                    out.push_str("NA");
                }
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Simulates `n_toads` independent toads over `n_days` nights.
///
/// Each toad starts at position 0 (its first refuge). Every night a stable
/// step is drawn from the current position; with probability `p0` the toad
/// instead ends the day at a previous refuge chosen proportionally to its
/// visit count, otherwise the stepped-to position becomes a new refuge. The
/// matrix records end-of-day positions.
pub fn toad_simulate(theta: &ToadParams, n_toads: usize, n_days: usize, seed: &SeedSpec) -> Result<ToadData> {
    if n_toads == 0 || n_days == 0 {
        return Err(Error::Config("toad simulation needs at least one toad and one day".into()));
    }
    let mut rng = seed.rng();
    let mut values = vec![0.0; n_days * n_toads];
    for toad in 0..n_toads {
        let mut refuges: Vec<(f64, u64)> = vec![(0.0, 1)];
        let mut pos = 0.0;
        for day in 0..n_days {
            let wander = pos + stable_draw(theta.alpha, theta.scale, &mut rng);
            if rng.random::<f64>() < theta.p0 {
                // Visit counts across refuges always sum to day + 1.
                let mut pick = rng.random_range(0..=day as u64);
                let chosen = refuges
                    .iter_mut()
                    .find(|(_, visits)| {
                        if pick < *visits {
                            true
                        } else {
                            pick -= *visits;
                            false
                        }
                    })
                    .expect("visit counts sum to day + 1");
                chosen.1 += 1;
                pos = chosen.0;
            } else {
                refuges.push((wander, 1));
                pos = wander;
            }
            values[day * n_toads + toad] = pos;
        }
    }
    Ok(ToadData {
        n_days,
        n_toads,
        values,
    })
}

/// Absolute displacements at one lag, split into returns (below the 10 m
/// threshold) and non-returns.
#[derive(Debug, Clone, PartialEq)]
pub struct LagSummary {
    pub lag: usize,
    pub returns: u64,
    pub non_returns: Vec<f64>,
}

/// Displacement summaries at each of the four standard lags.
#[derive(Debug, Clone, PartialEq)]
pub struct ToadSummary {
    pub lags: Vec<LagSummary>,
}

/// Splits per-toad absolute displacements at lags 1, 2, 4 and 8 days into
/// return counts and non-return distances; pairs with a missing endpoint are
/// skipped.
pub fn toad_summarize(data: &ToadData) -> ToadSummary {
    let lags = TOAD_LAGS
        .iter()
        .map(|&lag| {
            let mut returns = 0;
            let mut non_returns = Vec::new();
            for day in lag..data.n_days() {
                for toad in 0..data.n_toads() {
                    let (Some(from), Some(to)) = (data.get(day - lag, toad), data.get(day, toad)) else {
                        continue;
                    };
                    let d = (to - from).abs();
                    if d < TOAD_RETURN_THRESHOLD {
                        returns += 1;
                    } else {
                        non_returns.push(d);
                    }
                }
            }
            LagSummary { lag, returns, non_returns }
        })
        .collect();
    ToadSummary { lags }
}

/// Condenses a [`ToadSummary`] into the 48-dimensional statistic: per lag,
/// the log-differences of the 11 deciles of the non-return distances, their
/// median, and the return count.
pub fn toad_quantile_summaries(summary: &ToadSummary) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(12 * summary.lags.len());
    for lag in &summary.lags {
        if lag.non_returns.len() < 11 {
            return Err(Error::SummaryFailure(format!(
                "lag {} has {} non-return displacements, need at least 11",
                lag.lag,
                lag.non_returns.len()
            )));
        }
        let mut sorted = lag.non_returns.clone();
        sorted.sort_by(f64::total_cmp);
        let quantiles: Vec<f64> = (0..=10).map(|i| stats::quantile_sorted(&sorted, i as f64 / 10.0)).collect();
        for w in quantiles.windows(2) {
            let diff = w[1] - w[0];
            if diff <= 0.0 || diff.is_nan() {
                return Err(Error::SummaryFailure(format!(
                    "lag {} has tied non-return quantiles", lag.lag
                )));
            }
            out.push(diff.ln());
        }
        out.push(stats::quantile_sorted(&sorted, 0.5));
        out.push(lag.returns as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn params_are_validated() {
        assert!(ToadParams::new(1.7, 35.0, 0.6).is_ok());
        assert!(ToadParams::new(0.0, 35.0, 0.6).is_err());
        assert!(ToadParams::new(2.1, 35.0, 0.6).is_err());
        assert!(ToadParams::new(1.7, 0.0, 0.6).is_err());
        assert!(ToadParams::new(1.7, 35.0, 1.1).is_err());
    }

    #[test]
    fn stable_index_two_is_gaussian() {
        let scale = 1.5;
        let mut rng = SeedSpec::new(31).rng();
        let draws: Vec<f64> = (0..100_000).map(|_| stable_draw(2.0, scale, &mut rng)).collect();
        let sd = scale * 2.0f64.sqrt();
        let ks = stats::ks_one_sample(&draws, |x| stats::normal_cdf(x / sd));
        let crit = stats::ks_critical_one_sample(draws.len(), 0.01);
        assert!(ks < crit, "KS {ks} vs critical {crit}");
    }

    #[test]
    fn stable_index_one_is_cauchy() {
        let scale = 2.0;
        let mut rng = SeedSpec::new(32).rng();
        let mut draws: Vec<f64> = (0..100_000).map(|_| stable_draw(1.0, scale, &mut rng)).collect();
        draws.sort_by(f64::total_cmp);
        assert!(stats::quantile_sorted(&draws, 0.5).abs() < 0.05);
        let iqr = stats::quantile_sorted(&draws, 0.75) - stats::quantile_sorted(&draws, 0.25);
        assert!((iqr - 2.0 * scale).abs() < 0.05 * 2.0 * scale, "IQR {iqr}");
    }

    #[test]
    fn stable_draws_are_symmetric() {
        let mut rng = SeedSpec::new(33).rng();
        let n = 100_000;
        let signs: f64 = (0..n).map(|_| stable_draw(1.4, 1.0, &mut rng).signum()).sum();
        assert!((signs / n as f64).abs() < 0.01);
    }

    #[test]
    fn stable_sample_validates_arguments() {
        assert!(stable_sample(1.5, 10.0, &SeedSpec::new(1)).is_ok());
        assert!(stable_sample(0.0, 10.0, &SeedSpec::new(1)).is_err());
        assert!(stable_sample(1.5, -1.0, &SeedSpec::new(1)).is_err());
    }

    #[test]
    fn certain_return_pins_every_toad_to_the_start() {
        let th = ToadParams::new(1.7, 35.0, 1.0).unwrap();
        let data = toad_simulate(&th, 5, 20, &SeedSpec::new(34)).unwrap();
        for day in 0..20 {
            for toad in 0..5 {
                assert_eq!(data.get(day, toad), Some(0.0));
            }
        }
        let summary = toad_summarize(&data);
        for lag in &summary.lags {
            assert!(lag.non_returns.is_empty());
            assert!(lag.returns > 0);
        }
    }

    #[test]
    fn never_returning_gives_iid_stable_lag_one_steps() {
        let th = ToadParams::new(1.7, 35.0, 0.0).unwrap();
        let data = toad_simulate(&th, 66, 63, &SeedSpec::new(35)).unwrap();
        let mut steps = Vec::new();
        for toad in 0..66 {
            for day in 1..63 {
                steps.push(data.get(day, toad).unwrap() - data.get(day - 1, toad).unwrap());
            }
        }
        let mut rng = SeedSpec::new(36).rng();
        let pool: Vec<f64> = (0..10_000).map(|_| stable_draw(1.7, 35.0, &mut rng)).collect();
        let ks = stats::ks_two_sample(&steps, &pool);
        let crit = stats::ks_critical_two_sample(steps.len(), pool.len(), 0.01);
        assert!(ks < crit, "KS {ks} vs critical {crit}");
    }

    #[test]
    fn gaussian_steps_scale_variance_linearly_in_lag() {
        let th = ToadParams::new(2.0, 1.0, 0.0).unwrap();
        let data = toad_simulate(&th, 10_000, 9, &SeedSpec::new(37)).unwrap();
        let var_at = |lag: usize| {
            let mut diffs = Vec::new();
            for toad in 0..data.n_toads() {
                for day in lag..data.n_days() {
                    diffs.push(data.get(day, toad).unwrap() - data.get(day - lag, toad).unwrap());
                }
            }
            stats::population_variance(&diffs)
        };
        let base = var_at(1);
        for lag in [2usize, 4, 8] {
            let ratio = var_at(lag) / base;
            assert!(
                (ratio - lag as f64).abs() < 0.1 * lag as f64,
                "lag {lag}: variance ratio {ratio}"
            );
        }
    }

    #[test]
    fn summaries_on_a_hand_worked_trajectory() {
        let data = ToadData::from_rows(vec![vec![0.0], vec![1.0], vec![100.0]]).unwrap();
        let s = toad_summarize(&data);
        assert_eq!(s.lags[0].returns, 1);
        assert_eq!(s.lags[0].non_returns, vec![99.0]);
        assert_eq!(s.lags[1].returns, 0);
        assert_eq!(s.lags[1].non_returns, vec![100.0]);
        assert!(s.lags[2].non_returns.is_empty() && s.lags[2].returns == 0);
        assert!(s.lags[3].non_returns.is_empty() && s.lags[3].returns == 0);
    }

    #[test]
    fn threshold_displacement_counts_as_non_return() {
        let data = ToadData::from_rows(vec![vec![0.0], vec![10.0]]).unwrap();
        let s = toad_summarize(&data);
        assert_eq!(s.lags[0].returns, 0);
        assert_eq!(s.lags[0].non_returns, vec![10.0]);
    }

    #[test]
    fn missing_endpoints_are_skipped() {
        let data = ToadData::from_rows(vec![vec![0.0, 0.0], vec![f64::NAN, 50.0], vec![30.0, 60.0]]).unwrap();
        let s = toad_summarize(&data);
        // Toad 0 contributes only the lag-2 pair; toad 1 contributes both
        // lag-1 pairs and one lag-2 pair.
        assert_eq!(s.lags[0].non_returns, vec![50.0, 10.0]);
        assert_eq!(s.lags[1].non_returns, vec![30.0, 60.0]);
    }

    #[test]
    fn quantile_summaries_on_an_even_grid() {
        let non_returns: Vec<f64> = (1..=11).map(|i| 10.0 * i as f64).collect();
        let summary = ToadSummary {
            lags: vec![LagSummary { lag: 1, returns: 7, non_returns }],
        };
        let stats48 = toad_quantile_summaries(&summary).unwrap();
        assert_eq!(stats48.len(), 12);
        for d in &stats48[..10] {
            assert_relative_eq!(*d, 10.0f64.ln(), epsilon = 1e-9);
        }
        assert_relative_eq!(stats48[10], 60.0, epsilon = 1e-9);
        assert_eq!(stats48[11], 7.0);
    }

    #[test]
    fn shifting_non_returns_moves_only_the_median() {
        let base: Vec<f64> = (0..40).map(|i| 12.0 + (i as f64).sqrt() * 3.0).collect();
        let shifted: Vec<f64> = base.iter().map(|x| x + 25.0).collect();
        let wrap = |v: Vec<f64>| ToadSummary {
            lags: vec![LagSummary { lag: 1, returns: 2, non_returns: v }],
        };
        let a = toad_quantile_summaries(&wrap(base)).unwrap();
        let b = toad_quantile_summaries(&wrap(shifted)).unwrap();
        for i in 0..10 {
            assert_relative_eq!(a[i], b[i], epsilon = 1e-9);
        }
        assert_relative_eq!(b[10] - a[10], 25.0, epsilon = 1e-9);
        assert_eq!(a[11], b[11]);
    }

    #[test]
    fn insufficient_non_returns_fail_the_summary() {
        let summary = ToadSummary {
            lags: vec![LagSummary { lag: 1, returns: 100, non_returns: vec![15.0; 10] }],
        };
        assert!(matches!(
            toad_quantile_summaries(&summary),
            Err(Error::SummaryFailure(_))
        ));
    }

    #[test]
    fn realistic_simulation_produces_the_full_statistic() {
        let th = ToadParams::new(1.7, 35.0, 0.6).unwrap();
        let data = toad_simulate(&th, 66, 63, &SeedSpec::new(38)).unwrap();
        let stats48 = toad_quantile_summaries(&toad_summarize(&data)).unwrap();
        assert_eq!(stats48.len(), 48);
        assert!(stats48.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn matrix_file_round_trips_with_missing_entries() {
        let th = ToadParams::new(1.7, 35.0, 0.6).unwrap();
        let mut data = toad_simulate(&th, 6, 8, &SeedSpec::new(39)).unwrap();
        data.values[3] = f64::NAN;
        data.values[17] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toad.txt");
        data.write(&path).unwrap();
        let back = ToadData::read(&path).unwrap();
        assert_eq!(back.n_days(), 8);
        assert_eq!(back.n_toads(), 6);
        for day in 0..8 {
            for toad in 0..6 {
                assert_eq!(back.get(day, toad), data.get(day, toad));
            }
        }
    }

    #[test]
    fn ragged_matrix_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.txt");
        std::fs::write(&path, "1.0 2.0\n3.0\n").unwrap();
        assert!(matches!(ToadData::read(&path), Err(Error::Parse { .. })));
    }
}
