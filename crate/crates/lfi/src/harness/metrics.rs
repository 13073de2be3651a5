//! Bias, posterior-sd, and coverage tables over replicate posteriors.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Equal-tailed credible interval at one nominal level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    /// Nominal coverage in (0, 1), e.g. 0.8.
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Nominal coverage levels reported in the metric tables.
pub const COVERAGE_LEVELS: [f64; 3] = [0.8, 0.9, 0.95];

/// Posterior summaries of one replicate, in the reporting parameterization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub post_mean: Vec<f64>,
    pub post_median: Vec<f64>,
    pub post_sd: Vec<f64>,
    /// Per parameter, one interval per entry of [`COVERAGE_LEVELS`].
    pub intervals: Vec<Vec<CredibleInterval>>,
    pub acceptance_rate: f64,
    pub error_rejections: usize,
    pub sim_count: usize,
    /// Effective sample size per parameter; absent when the retained chain
    /// is too short to estimate it.
    pub ess: Vec<Option<f64>>,
    /// Auxiliary-model component count actually used, for score methods.
    pub gmm_components: Option<usize>,
}

/// One row of the final table: all metrics for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub parameter: String,
    pub bias_mean: f64,
    pub bias_median: f64,
    pub avg_sd: f64,
    pub cov80: f64,
    pub cov90: f64,
    pub cov95: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    pub replicates: usize,
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,bias_mean,bias_median,avg_sd,cov80,cov90,cov95\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.parameter, r.bias_mean, r.bias_median, r.avg_sd, r.cov80, r.cov90, r.cov95
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Bias of the posterior mean and median, average posterior standard
/// deviation, and equal-tailed coverage percentages against the generating
/// value, aggregated over replicates. Order-invariant in `results`.
pub fn compute_metrics(results: &[ReplicateResult], truth: &[f64], names: &[String]) -> Result<MetricsTable> {
    if results.is_empty() {
        return Err(Error::Config("no replicate results to aggregate".into()));
    }
    if truth.len() != names.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: names.len(),
        });
    }
    let d = names.len();
    let r = results.len() as f64;
    for res in results {
        if res.post_mean.len() != d || res.post_median.len() != d || res.intervals.len() != d {
            return Err(Error::Config(format!(
                "replicate {} summaries do not match the parameter dimension {d}",
                res.replicate
            )));
        }
    }
    let mut rows = Vec::with_capacity(d);
    for j in 0..d {
        let bias_mean = results.iter().map(|x| x.post_mean[j] - truth[j]).sum::<f64>() / r;
        let bias_median = results.iter().map(|x| x.post_median[j] - truth[j]).sum::<f64>() / r;
        let avg_sd = results.iter().map(|x| x.post_sd[j]).sum::<f64>() / r;
        let mut cov = [0.0; 3];
        for res in results {
            for (c, iv) in cov.iter_mut().zip(&res.intervals[j]) {
                if iv.lower <= truth[j] && truth[j] <= iv.upper {
                    *c += 100.0 / r;
                }
            }
        }
        rows.push(MetricsRow {
            parameter: names[j].clone(),
            bias_mean,
            bias_median,
            avg_sd,
            cov80: cov[0],
            cov90: cov[1],
            cov95: cov[2],
        });
    }
    Ok(MetricsTable {
        rows,
        replicates: results.len(),
    })
}
