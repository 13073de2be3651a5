//! Experiment configuration: the TOML-backed description of one
//! repeated-simulation study, with model/method compatibility checks.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    GandK,
    Mg1,
    Stereo,
    Toad,
}

impl ModelId {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::GandK => "gand-k",
            ModelId::Mg1 => "mg1",
            ModelId::Stereo => "stereo",
            ModelId::Toad => "toad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    /// ABC with the Cramer-von Mises distance on the full data.
    Cvm,
    /// ABC with the Wasserstein-1 distance.
    Wasserstein,
    /// ABC with the squared maximum mean discrepancy.
    Mmd,
    /// ABC with the energy distance.
    Energy,
    /// ABC with the nearest-neighbour Kullback-Leibler estimate.
    Kl,
    /// Kernel density estimate of the likelihood.
    Kde,
    /// Gaussian synthetic likelihood on summary statistics.
    Bsl,
    /// ABC on the auxiliary-model score with Mahalanobis weighting.
    SummaryAbc,
}

impl MethodId {
    /// Full-data distance ABC, as opposed to the summary/likelihood methods.
    pub fn is_full_data(&self) -> bool {
        matches!(
            self,
            MethodId::Cvm | MethodId::Wasserstein | MethodId::Mmd | MethodId::Energy | MethodId::Kl
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::Cvm => "cvm",
            MethodId::Wasserstein => "wasserstein",
            MethodId::Mmd => "mmd",
            MethodId::Energy => "energy",
            MethodId::Kl => "kl",
            MethodId::Kde => "kde",
            MethodId::Bsl => "bsl",
            MethodId::SummaryAbc => "summary-abc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    Raw,
    Log,
}

/// One component of a prior override in the sampling parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorComponent {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

fn default_abc_quantile() -> f64 {
    0.05
}

fn default_pool_size() -> usize {
    10_000
}

fn default_kde_m() -> usize {
    100
}

fn default_true() -> bool {
    true
}

fn default_energy_p() -> u32 {
    1
}

fn default_gmm_components() -> usize {
    3
}

fn default_burn_in() -> f64 {
    0.2
}

fn default_tuning_grid() -> Vec<usize> {
    vec![50, 100, 250, 500]
}

/// Description of one experiment: a model, a method, and the study scale.
/// Every random quantity in the run derives from `master_seed`, so a config
/// replays bit-identically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelId,
    pub method: MethodId,
    /// Applied to observed and simulated data before full-data distances,
    /// KDE likelihoods, and auxiliary-model fits.
    #[serde(default)]
    pub transform: Transform,
    /// Number of independent replicate datasets.
    pub replicates: usize,
    /// Observations per dataset (g-and-k and M/G/1 only).
    #[serde(default)]
    pub n: Option<usize>,
    /// Generating parameter for simulated studies, in the reporting
    /// parameterization.
    #[serde(default)]
    pub true_theta: Option<Vec<f64>>,
    /// Observed dataset path for real-data studies.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// MCMC iterations per replicate.
    pub iterations: usize,
    pub master_seed: u64,
    /// Tolerance quantile for ABC methods.
    #[serde(default = "default_abc_quantile")]
    pub abc_quantile: f64,
    /// Discrepancy pool size used to calibrate the tolerance.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    /// Simulated datasets per synthetic-likelihood evaluation; tuned on a
    /// grid when absent.
    #[serde(default)]
    pub bsl_m: Option<usize>,
    /// Candidate grid for the log-likelihood standard-deviation tuning rule.
    #[serde(default = "default_tuning_grid")]
    pub bsl_tuning_grid: Vec<usize>,
    /// Simulated datasets per KDE likelihood evaluation.
    #[serde(default = "default_kde_m")]
    pub kde_m: usize,
    /// Fixed KDE bandwidth; Silverman's rule when absent.
    #[serde(default)]
    pub kde_bandwidth: Option<f64>,
    #[serde(default = "default_true")]
    pub kde_recycle: bool,
    /// Gaussian kernel bandwidth for the MMD; median pairwise distance of
    /// the reference dataset when absent.
    #[serde(default)]
    pub mmd_bandwidth: Option<f64>,
    /// Use the cross-term sum that skips matched pairs.
    #[serde(default)]
    pub mmd_exclude_matched: bool,
    #[serde(default = "default_energy_p")]
    pub energy_p: u32,
    #[serde(default = "default_gmm_components")]
    pub gmm_components: usize,
    /// Calibrate composite-distance weights with the median absolute
    /// deviation instead of the standard deviation.
    #[serde(default)]
    pub robust_weights: bool,
    /// Fraction of each chain discarded before posterior summaries.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Prior override in the sampling parameterization; model default when
    /// absent. Not available for M/G/1, whose prior depends on the data.
    #[serde(default)]
    pub prior: Option<Vec<PriorComponent>>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config serializes")
    }

    /// Number of parameters in the sampling (and reporting) space.
    pub fn dim(&self) -> usize {
        match self.model {
            ModelId::GandK => 4,
            ModelId::Mg1 | ModelId::Stereo | ModelId::Toad => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if !(self.abc_quantile > 0.0 && self.abc_quantile <= 1.0) {
            return fail(format!("abc_quantile must lie in (0, 1], got {}", self.abc_quantile));
        }
        if self.pool_size < 2 {
            return fail("pool_size must be at least 2".into());
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return fail(format!("burn_in must lie in [0, 1), got {}", self.burn_in));
        }
        if self.kde_m == 0 {
            return fail("kde_m must be at least 1".into());
        }
        if let Some(b) = self.kde_bandwidth {
            if b <= 0.0 || !b.is_finite() {
                return fail(format!("kde_bandwidth must be positive, got {b}"));
            }
        }
        if let Some(b) = self.mmd_bandwidth {
            if b <= 0.0 || !b.is_finite() {
                return fail(format!("mmd_bandwidth must be positive, got {b}"));
            }
        }
        if self.energy_p < 1 {
            return fail("energy_p must be at least 1".into());
        }
        if self.gmm_components == 0 {
            return fail("gmm_components must be at least 1".into());
        }
        match (&self.true_theta, &self.dataset) {
            (Some(_), Some(_)) => {
                return fail("set exactly one of true_theta and dataset, not both".into());
            }
            (None, None) => {
                return fail("set true_theta (simulated study) or dataset (real study)".into());
            }
            (Some(theta), None) => {
                if theta.len() != self.dim() {
                    return fail(format!(
                        "true_theta has {} entries, model {} needs {}",
                        theta.len(),
                        self.model.as_str(),
                        self.dim()
                    ));
                }
            }
            (None, Some(_)) => {
                if self.replicates != 1 {
                    return fail("real-data studies run a single replicate".into());
                }
            }
        }
        match self.model {
            ModelId::GandK | ModelId::Mg1 => {
                if self.dataset.is_some() {
                    if self.n.is_some() {
                        return fail("the dataset fixes the sample size; drop n".into());
                    }
                } else {
                    let n = self.n.ok_or_else(|| {
                        Error::Config(format!("model {} needs n", self.model.as_str()))
                    })?;
                    if n < 2 {
                        return fail("n must be at least 2".into());
                    }
                }
            }
            ModelId::Stereo | ModelId::Toad => {
                if self.n.is_some() {
                    return fail(format!(
                        "model {} has a fixed data shape; drop n",
                        self.model.as_str()
                    ));
                }
            }
        }
        if self.prior.is_some() && self.model == ModelId::Mg1 {
            return fail("the M/G/1 prior is data-dependent and cannot be overridden".into());
        }
        if let Some(prior) = &self.prior {
            if prior.len() != self.dim() {
                return fail(format!(
                    "prior override has {} components, model {} needs {}",
                    prior.len(),
                    self.model.as_str(),
                    self.dim()
                ));
            }
        }
        self.check_compatibility()
    }

    /// The supported (model, method) pairs. Full-data distances need
    /// equal-length scalar datasets, which rules out the stereological
    /// model's random-size data; the toad model exposes them through fixed
    /// per-lag displacement piles instead. The KDE likelihood has no toad
    /// form, and the summary methods need either scalar data for the
    /// auxiliary fit or the toad's dedicated summary vector.
    fn check_compatibility(&self) -> Result<()> {
        let ok = match self.model {
            ModelId::GandK | ModelId::Mg1 => true,
            ModelId::Stereo => matches!(self.method, MethodId::Kde),
            ModelId::Toad => matches!(
                self.method,
                MethodId::Cvm | MethodId::Wasserstein | MethodId::Mmd | MethodId::Energy | MethodId::Bsl
            ),
        };
        if !ok {
            return Err(Error::Config(format!(
                "method {} is not supported for model {}",
                self.method.as_str(),
                self.model.as_str()
            )));
        }
        if self.model == ModelId::Toad && self.method.is_full_data() && self.dataset.is_some() {
            return Err(Error::Config(
                "full-data toad methods need complete simulated matrices; use bsl for real data".into(),
            ));
        }
        if self.transform == Transform::Log && matches!(self.model, ModelId::Stereo | ModelId::Toad) {
            return Err(Error::Config(format!(
                "the log transform applies to scalar datasets, not model {}",
                self.model.as_str()
            )));
        }
        Ok(())
    }
}
