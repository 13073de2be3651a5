//! Experiment orchestration: dataset generation, method calibration,
//! replicate chains, and the run manifest that makes a study replayable.
//!
//! Seed layout: replicate stream 0 is reserved for calibration (reference
//! dataset, discrepancy pool, m tuning); replicate r uses stream r + 1 with
//! child 10 for its dataset, child 11 for the auxiliary-model fit, and chain
//! stream 1 for the sampler.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::core::{BoxPrior, ParamVector, Sample, SeedSpec};
use crate::distances::{self, BaseDistance, CompositeDistance, CrossTerm, MmdKernel};
use crate::exec;
use crate::harness::calibrate::{epsilon_from_pool, tune_bsl_m, BSL_TUNING_REPEATS};
use crate::harness::config::{ExperimentConfig, MethodId, ModelId, Transform};
use crate::harness::metrics::{
    compute_metrics, CredibleInterval, MetricsTable, ReplicateResult, COVERAGE_LEVELS,
};
use crate::likelihoods::{
    abc_loglik_estimate, bsl_loglik, kde_loglik, kde_loglik_from_datasets, AbcConfig, Bandwidth,
    BslConfig, KdeConfig, LikelihoodEstimate,
};
use crate::models::{
    gandk_simulate, mg1_simulate, read_scalar_dataset, stereo_simulate, toad_quantile_summaries,
    toad_simulate, toad_summarize, GandKParams, Mg1Params, StereoData, StereoParams, ToadData,
    ToadParams, TOAD_LAGS,
};
use crate::sampler::{ess, run_mh, write_chain, Backend, Chain, MhConfig};
use crate::stats;
use crate::summaries::ScoreSummary;
use crate::{Error, Result};

/// Toad trials observe 66 toads over 63 days.
const TOAD_N_TOADS: usize = 66;
const TOAD_N_DAYS: usize = 63;

/// One observed or simulated dataset, in whichever shape the model emits.
#[derive(Debug, Clone)]
enum Observed {
    Scalar(Sample),
    Stereo(StereoData),
    Toad(ToadData),
}

/// Calibration products recorded in the manifest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Calibration {
    /// ABC tolerance, for the distance-based methods.
    pub epsilon: Option<f64>,
    /// Gaussian MMD kernel bandwidth actually used.
    pub mmd_bandwidth: Option<f64>,
    /// Composite-distance weights (toad full-data methods).
    pub composite_weights: Option<Vec<f64>>,
    /// Synthetic-likelihood simulation count actually used.
    pub bsl_m: Option<usize>,
    /// Log-likelihood standard deviation observed at the tuned m.
    pub bsl_loglik_sd: Option<f64>,
    /// Size of the discrepancy pool behind `epsilon`.
    pub pool_size: Option<usize>,
}

/// A replicate dropped from the study, with the error that excluded it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateExclusion {
    pub replicate: usize,
    pub error: String,
}

/// Everything needed to audit or replay a run: the config echo, calibrated
/// quantities, per-replicate summaries, and the chain file listing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub calibration: Calibration,
    pub report_names: Vec<String>,
    pub results: Vec<ReplicateResult>,
    pub exclusions: Vec<ReplicateExclusion>,
    /// Simulator calls over all chains, pilots and calibration included.
    pub total_sims: usize,
    /// Chain files relative to the run directory, aligned with `results`.
    pub chain_files: Vec<String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Parameter names of the reporting parameterization.
pub fn report_names(model: ModelId) -> Vec<String> {
    let names: &[&str] = match model {
        ModelId::GandK => &["a", "b", "g", "k"],
        ModelId::Mg1 => &["theta1", "theta2", "theta3"],
        ModelId::Stereo => &["lambda", "scale", "shape"],
        ModelId::Toad => &["alpha", "scale", "p0"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// Maps a point of the sampling space to the reporting space. The M/G/1
/// chain samples `(theta1, theta2 - theta1, theta3)` so its box prior can
/// express `theta1 < theta2`; reports use `(theta1, theta2, theta3)`.
pub fn to_report(model: ModelId, sampled: &[f64]) -> Vec<f64> {
    match model {
        ModelId::Mg1 => vec![sampled[0], sampled[0] + sampled[1], sampled[2]],
        _ => sampled.to_vec(),
    }
}

fn from_report(model: ModelId, report: &[f64]) -> Vec<f64> {
    match model {
        ModelId::Mg1 => vec![report[0], report[1] - report[0], report[2]],
        _ => report.to_vec(),
    }
}

/// The sampling-space prior. The M/G/1 service lower bound is capped by the
/// smallest observed inter-departure time, so the prior is frozen per
/// dataset.
fn sampling_prior(cfg: &ExperimentConfig, observed: &Observed) -> Result<BoxPrior> {
    if let Some(components) = &cfg.prior {
        let parts: Vec<(&str, f64, f64)> = components
            .iter()
            .map(|c| (c.name.as_str(), c.lower, c.upper))
            .collect();
        return BoxPrior::new(&parts);
    }
    match cfg.model {
        ModelId::GandK => BoxPrior::new(&[
            ("a", 0.0, 5.0),
            ("b", 0.0, 5.0),
            ("g", 0.0, 10.0),
            ("k", 0.0, 1.0),
        ]),
        ModelId::Mg1 => {
            let Observed::Scalar(sample) = observed else {
                return Err(Error::Config("M/G/1 needs scalar data".into()));
            };
            let min_y = sample.values().iter().copied().fold(f64::INFINITY, f64::min);
            BoxPrior::new(&[
                ("theta1", 0.0, min_y),
                ("theta2_minus_theta1", 0.0, 10.0),
                ("theta3", 0.0, 0.5),
            ])
        }
        ModelId::Stereo => BoxPrior::new(&[
            ("lambda", 30.0, 200.0),
            ("scale", 0.0, 15.0),
            ("shape", -3.0, 3.0),
        ]),
        ModelId::Toad => BoxPrior::new(&[
            ("alpha", 1.0, 2.0),
            ("scale", 0.0, 100.0),
            ("p0", 0.0, 0.9),
        ]),
    }
}

fn simulate_sampling(cfg: &ExperimentConfig, sampled: &[f64], seed: &SeedSpec) -> Result<Observed> {
    match cfg.model {
        ModelId::GandK => {
            let theta = GandKParams::new(sampled[0], sampled[1], sampled[2], sampled[3])?;
            Ok(Observed::Scalar(gandk_simulate(cfg.n.expect("validated"), &theta, seed)?))
        }
        ModelId::Mg1 => {
            let theta = Mg1Params::new(sampled[0], sampled[0] + sampled[1], sampled[2])?;
            Ok(Observed::Scalar(mg1_simulate(cfg.n.expect("validated") + 1, &theta, seed)?))
        }
        ModelId::Stereo => {
            let theta = StereoParams::new(sampled[0], sampled[1], sampled[2])?;
            Ok(Observed::Stereo(stereo_simulate(&theta, seed)?))
        }
        ModelId::Toad => {
            let theta = ToadParams::new(sampled[0], sampled[1], sampled[2])?;
            Ok(Observed::Toad(toad_simulate(&theta, TOAD_N_TOADS, TOAD_N_DAYS, seed)?))
        }
    }
}

fn simulate_report(cfg: &ExperimentConfig, report: &[f64], seed: &SeedSpec) -> Result<Observed> {
    simulate_sampling(cfg, &from_report(cfg.model, report), seed)
}

fn load_dataset(cfg: &ExperimentConfig, path: &Path) -> Result<Observed> {
    match cfg.model {
        ModelId::GandK | ModelId::Mg1 => Ok(Observed::Scalar(read_scalar_dataset(path)?)),
        ModelId::Stereo => Ok(Observed::Stereo(StereoData::read(path)?)),
        ModelId::Toad => Ok(Observed::Toad(ToadData::read(path)?)),
    }
}

/// Fills in `n` from a loaded dataset so simulated draws match its size.
fn resolve_n(cfg: &ExperimentConfig, observed: &Observed) -> Result<ExperimentConfig> {
    let mut resolved = cfg.clone();
    if let (None, Observed::Scalar(sample)) = (cfg.n, observed) {
        if sample.len() < 2 {
            return Err(Error::Config("dataset needs at least 2 observations".into()));
        }
        resolved.n = Some(sample.len());
    }
    Ok(resolved)
}

fn transform_values(values: &[f64], transform: Transform) -> Result<Vec<f64>> {
    match transform {
        Transform::Raw => Ok(values.to_vec()),
        Transform::Log => Sample::new(values.to_vec())?.ln().map(Sample::into_values),
    }
}

fn scalar_transformed(cfg: &ExperimentConfig, observed: &Observed) -> Result<Vec<f64>> {
    let Observed::Scalar(sample) = observed else {
        return Err(Error::Config(format!(
            "model {} does not produce scalar data",
            cfg.model.as_str()
        )));
    };
    transform_values(sample.values(), cfg.transform)
}

/// Absolute displacements per lag over all toads, missing endpoints skipped.
/// For complete matrices every pile has a fixed length, so equal-length
/// distances apply.
fn toad_piles(data: &ToadData) -> Vec<Vec<f64>> {
    TOAD_LAGS
        .iter()
        .map(|&lag| {
            let mut pile = Vec::new();
            for toad in 0..data.n_toads() {
                for day in 0..data.n_days().saturating_sub(lag) {
                    if let (Some(a), Some(b)) = (data.get(day, toad), data.get(day + lag, toad)) {
                        pile.push((b - a).abs());
                    }
                }
            }
            pile
        })
        .collect()
}

/// The dataset pieces a full-data distance compares.
fn distance_pieces(cfg: &ExperimentConfig, observed: &Observed) -> Result<Vec<Vec<f64>>> {
    match observed {
        Observed::Scalar(_) => Ok(vec![scalar_transformed(cfg, observed)?]),
        Observed::Toad(data) => Ok(toad_piles(data)),
        Observed::Stereo(_) => Err(Error::Config(
            "full-data distances do not apply to stereological data".into(),
        )),
    }
}

fn base_distance(cfg: &ExperimentConfig, piece: &[f64]) -> Result<BaseDistance> {
    Ok(match cfg.method {
        MethodId::Cvm => BaseDistance::CramerVonMises,
        MethodId::Wasserstein => BaseDistance::Wasserstein1,
        MethodId::Energy => BaseDistance::Energy { p: cfg.energy_p },
        MethodId::Kl => BaseDistance::Kl1nn,
        MethodId::Mmd => {
            let bandwidth = match cfg.mmd_bandwidth {
                Some(b) => b,
                None => distances::median_pairwise_distance(piece)?,
            };
            BaseDistance::Mmd {
                kernel: MmdKernel::Gaussian { bandwidth },
                cross: if cfg.mmd_exclude_matched {
                    CrossTerm::ExcludeMatched
                } else {
                    CrossTerm::AllPairs
                },
            }
        }
        _ => return Err(Error::Config("not a full-data method".into())),
    })
}

/// Discrete density of an integer count under Gaussian smoothing of the
/// simulated counts, with the kernel renormalized over the integers. A zero
/// spread degenerates to the empirical frequency.
fn count_log_density(counts: &[usize], at: usize) -> f64 {
    let m = counts.len() as f64;
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let spread = stats::sample_sd(&values).min(stats::iqr(&values) / 1.34);
    let h = 0.9 * spread * m.powf(-0.2);
    if h <= 0.0 || h.is_nan() {
        let hits = counts.iter().filter(|&&c| c == at).count();
        return if hits == 0 { f64::NEG_INFINITY } else { ((hits as f64) / m).ln() };
    }
    let reach = (39.0 * h).ceil() as i64;
    let z: f64 = (-reach..=reach).map(|j| (-0.5 * (j as f64 / h).powi(2)).exp()).sum();
    let mass: f64 = values
        .iter()
        .map(|&c| {
            let t = (at as f64 - c) / h;
            (-0.5 * t * t).exp()
        })
        .sum::<f64>()
        / (m * z);
    if mass == 0.0 {
        f64::NEG_INFINITY
    } else {
        mass.ln()
    }
}

/// Calibrated, dataset-independent method state shared by every replicate.
#[derive(Debug, Clone)]
enum MethodContext {
    FullData {
        distances: Vec<BaseDistance>,
        weights: Vec<f64>,
        epsilon: f64,
    },
    Kde,
    Bsl {
        m: usize,
    },
    SummaryAbc {
        epsilon: f64,
    },
}

fn needs_score_summary(cfg: &ExperimentConfig) -> bool {
    matches!(cfg.method, MethodId::SummaryAbc)
        || (cfg.method == MethodId::Bsl && matches!(cfg.model, ModelId::GandK | ModelId::Mg1))
}

fn fit_score_summary(cfg: &ExperimentConfig, observed: &Observed, seed: &SeedSpec) -> Result<ScoreSummary> {
    let y = Sample::new(scalar_transformed(cfg, observed)?)?;
    ScoreSummary::new(&y, cfg.gmm_components, seed)
}

/// The observed summary vector and the summary simulator for BSL.
fn bsl_eta(
    cfg: &ExperimentConfig,
    observed: &Observed,
    score: Option<&ScoreSummary>,
) -> Result<Vec<f64>> {
    match (cfg.model, observed) {
        (ModelId::Toad, Observed::Toad(data)) => toad_quantile_summaries(&toad_summarize(data)),
        _ => {
            let score = score.expect("scalar BSL fits an auxiliary model");
            let z = Sample::new(scalar_transformed(cfg, observed)?)?;
            Ok(score.score(&z).values().to_vec())
        }
    }
}

struct CalibrationInputs {
    /// Config with `n` resolved against the loaded dataset.
    cfg: ExperimentConfig,
    /// Observed data for real studies, a dataset drawn at the generating
    /// parameter otherwise.
    reference: Observed,
    /// Central parameter (sampling space) the pilot pool simulates at.
    central: Vec<f64>,
    seed: SeedSpec,
}

fn calibration_inputs(cfg: &ExperimentConfig) -> Result<CalibrationInputs> {
    let seed = SeedSpec::new(cfg.master_seed).with_replicate(0);
    let reference = match (&cfg.true_theta, &cfg.dataset) {
        (Some(theta), None) => simulate_report(cfg, theta, &seed.child(10))?,
        (None, Some(path)) => load_dataset(cfg, path)?,
        _ => unreachable!("config validation enforces exactly one study kind"),
    };
    let cfg = resolve_n(cfg, &reference)?;
    let central = match &cfg.true_theta {
        Some(theta) => from_report(cfg.model, theta),
        None => {
            let prior = sampling_prior(&cfg, &reference)?;
            prior.midpoint().values().to_vec()
        }
    };
    Ok(CalibrationInputs {
        cfg,
        reference,
        central,
        seed,
    })
}

fn calibrate(cfg: &ExperimentConfig) -> Result<(MethodContext, Calibration)> {
    let inputs = calibration_inputs(cfg)?;
    let cfg = &inputs.cfg;
    let mut record = Calibration::default();
    let context = match cfg.method {
        MethodId::Kde => MethodContext::Kde,
        MethodId::Cvm | MethodId::Wasserstein | MethodId::Mmd | MethodId::Energy | MethodId::Kl => {
            let y_pieces = distance_pieces(cfg, &inputs.reference)?;
            let dists: Vec<BaseDistance> = y_pieces
                .iter()
                .map(|piece| base_distance(cfg, piece))
                .collect::<Result<_>>()?;
            if let Some(BaseDistance::Mmd {
                kernel: MmdKernel::Gaussian { bandwidth },
                ..
            }) = dists.first()
            {
                record.mmd_bandwidth = Some(*bandwidth);
            }

            let pool_seed = inputs.seed.child(20);
            let pools = pilot_part_pools(cfg, &inputs, &y_pieces, &dists, &pool_seed)?;
            let weights = if pools.len() == 1 {
                vec![1.0]
            } else {
                let w = distances::calibrate_weights(&pools, cfg.robust_weights)?;
                record.composite_weights = Some(w.clone());
                w
            };
            let composite: Vec<f64> = (0..cfg.pool_size)
                .map(|i| pools.iter().zip(&weights).map(|(pool, w)| w * pool[i]).sum())
                .collect();
            let epsilon = epsilon_from_pool(&composite, cfg.abc_quantile)?;
            record.epsilon = Some(epsilon);
            record.pool_size = Some(cfg.pool_size);
            MethodContext::FullData {
                distances: dists,
                weights,
                epsilon,
            }
        }
        MethodId::SummaryAbc => {
            let score = fit_score_summary(cfg, &inputs.reference, &inputs.seed.child(11))?;
            let pool_seed = inputs.seed.child(20);
            let pool = exec::par_map_indexed(cfg.pool_size, |i| {
                let z = simulate_sampling(cfg, &inputs.central, &pool_seed.child(i as u64))?;
                let z = Sample::new(scalar_transformed(cfg, &z)?)?;
                Ok::<f64, Error>(score.discrepancy(&z))
            })
            .into_iter()
            .collect::<Result<Vec<f64>>>()?;
            let epsilon = epsilon_from_pool(&pool, cfg.abc_quantile)?;
            record.epsilon = Some(epsilon);
            record.pool_size = Some(cfg.pool_size);
            MethodContext::SummaryAbc { epsilon }
        }
        MethodId::Bsl => {
            let m = match cfg.bsl_m {
                Some(m) => m,
                None => {
                    let score = needs_score_summary(cfg)
                        .then(|| fit_score_summary(cfg, &inputs.reference, &inputs.seed.child(11)))
                        .transpose()?;
                    let eta_y = bsl_eta(cfg, &inputs.reference, score.as_ref())?;
                    let d = eta_y.len();
                    let grid: Vec<usize> = cfg
                        .bsl_tuning_grid
                        .iter()
                        .copied()
                        .filter(|&m| m >= d + 2)
                        .collect();
                    if grid.is_empty() {
                        return Err(Error::Config(format!(
                            "no tuning grid entry reaches m >= {} for {d} summaries",
                            d + 2
                        )));
                    }
                    let tune_seed = inputs.seed.child(30);
                    let (m, sd) = tune_bsl_m(&grid, BSL_TUNING_REPEATS, |m, r| {
                        let seed = tune_seed.child(m as u64).child(r as u64);
                        let est = bsl_loglik(&eta_y, &BslConfig { m }, &seed, |s| {
                            let z = simulate_sampling(cfg, &inputs.central, s)?;
                            bsl_eta(cfg, &z, score.as_ref())
                        })?;
                        Ok(est.log_lik)
                    })?;
                    record.bsl_loglik_sd = Some(sd);
                    m
                }
            };
            record.bsl_m = Some(m);
            MethodContext::Bsl { m }
        }
    };
    Ok((context, record))
}

fn pilot_part_pools(
    cfg: &ExperimentConfig,
    inputs: &CalibrationInputs,
    y_pieces: &[Vec<f64>],
    dists: &[BaseDistance],
    pool_seed: &SeedSpec,
) -> Result<Vec<Vec<f64>>> {
    let rows = exec::par_map_indexed(cfg.pool_size, |i| {
        let z = simulate_sampling(cfg, &inputs.central, &pool_seed.child(i as u64))?;
        let z_pieces = distance_pieces(cfg, &z)?;
        y_pieces
            .iter()
            .zip(dists)
            .zip(&z_pieces)
            .map(|((y, dist), z)| dist.eval(y, z))
            .collect::<Result<Vec<f64>>>()
    });
    let mut pools = vec![Vec::with_capacity(cfg.pool_size); y_pieces.len()];
    for row in rows {
        for (pool, rho) in pools.iter_mut().zip(row?) {
            pool.push(rho);
        }
    }
    Ok(pools)
}

fn build_backend<'a>(
    cfg: &'a ExperimentConfig,
    context: &'a MethodContext,
    observed: &'a Observed,
    score: Option<&'a ScoreSummary>,
) -> Result<Box<dyn Backend + 'a>> {
    match context {
        MethodContext::FullData {
            distances: dists,
            weights,
            epsilon,
        } => {
            let y_pieces = distance_pieces(cfg, observed)?;
            let composite = CompositeDistance::new(
                dists.iter().cloned().zip(weights.iter().copied()).collect(),
            )?;
            let abc = AbcConfig { epsilon: *epsilon };
            Ok(Box::new(move |theta: &ParamVector, seed: &SeedSpec| {
                abc_loglik_estimate(&abc, seed, |s| {
                    let z = simulate_sampling(cfg, theta.values(), s)?;
                    let z_pieces = distance_pieces(cfg, &z)?;
                    let y_refs: Vec<&[f64]> = y_pieces.iter().map(Vec::as_slice).collect();
                    let z_refs: Vec<&[f64]> = z_pieces.iter().map(Vec::as_slice).collect();
                    composite.eval(&y_refs, &z_refs)
                })
            }))
        }
        MethodContext::SummaryAbc { epsilon } => {
            let score = score.expect("summary ABC fits an auxiliary model");
            let abc = AbcConfig { epsilon: *epsilon };
            Ok(Box::new(move |theta: &ParamVector, seed: &SeedSpec| {
                abc_loglik_estimate(&abc, seed, |s| {
                    let z = simulate_sampling(cfg, theta.values(), s)?;
                    let z = Sample::new(scalar_transformed(cfg, &z)?)?;
                    Ok(score.discrepancy(&z))
                })
            }))
        }
        MethodContext::Bsl { m } => {
            let eta_y = bsl_eta(cfg, observed, score)?;
            let bsl = BslConfig { m: *m };
            Ok(Box::new(move |theta: &ParamVector, seed: &SeedSpec| {
                bsl_loglik(&eta_y, &bsl, seed, |s| {
                    let z = simulate_sampling(cfg, theta.values(), s)?;
                    bsl_eta(cfg, &z, score)
                })
            }))
        }
        MethodContext::Kde => {
            let bandwidth = match cfg.kde_bandwidth {
                Some(b) => Bandwidth::Fixed(b),
                None => Bandwidth::Silverman,
            };
            if cfg.model == ModelId::Stereo {
                let Observed::Stereo(data) = observed else {
                    return Err(Error::Config("stereological KDE needs stereological data".into()));
                };
                let obs_sizes = data.sizes().to_vec();
                let obs_count = data.count();
                let kde = KdeConfig {
                    m: cfg.kde_m,
                    bandwidth,
                    recycle: true,
                };
                Ok(Box::new(move |theta: &ParamVector, seed: &SeedSpec| {
                    let sims = exec::par_map_indexed(kde.m, |i| {
                        let sampled = theta.values();
                        let params = StereoParams::new(sampled[0], sampled[1], sampled[2])?;
                        stereo_simulate(&params, &seed.child(i as u64))
                    });
                    let mut counts = Vec::with_capacity(kde.m);
                    let mut size_sets = Vec::with_capacity(kde.m);
                    for sim in sims {
                        let sim = sim?;
                        counts.push(sim.count());
                        size_sets.push(sim.sizes().to_vec());
                    }
                    let count_ll = count_log_density(&counts, obs_count);
                    let sizes_ll = kde_loglik_from_datasets(&obs_sizes, &kde, &size_sets)?;
                    Ok(LikelihoodEstimate {
                        log_lik: count_ll + sizes_ll,
                        distance: None,
                        epsilon: None,
                        sims: kde.m,
                    })
                }))
            } else {
                let y = scalar_transformed(cfg, observed)?;
                let kde = KdeConfig {
                    m: cfg.kde_m,
                    bandwidth,
                    recycle: cfg.kde_recycle,
                };
                Ok(Box::new(move |theta: &ParamVector, seed: &SeedSpec| {
                    kde_loglik(&y, &kde, seed, |s| {
                        let z = simulate_sampling(cfg, theta.values(), s)?;
                        scalar_transformed(cfg, &z)
                    })
                }))
            }
        }
    }
}

struct ChainSummary {
    post_mean: Vec<f64>,
    post_median: Vec<f64>,
    post_sd: Vec<f64>,
    intervals: Vec<Vec<CredibleInterval>>,
    ess: Vec<Option<f64>>,
}

/// Posterior summaries of a burned-in chain, mapped to the reporting space.
fn summarize_chain(model: ModelId, kept: &Chain) -> ChainSummary {
    let names = report_names(model);
    let d = names.len();
    let n = kept.len();
    let mut columns = vec![Vec::with_capacity(n); d];
    for i in 0..n {
        let report = to_report(model, kept.row(i));
        for (col, v) in columns.iter_mut().zip(report) {
            col.push(v);
        }
    }
    let mut post_mean = Vec::with_capacity(d);
    let mut post_median = Vec::with_capacity(d);
    let mut post_sd = Vec::with_capacity(d);
    let mut intervals = Vec::with_capacity(d);
    let mut ess_values = Vec::with_capacity(d);
    for col in &columns {
        post_mean.push(col.iter().sum::<f64>() / n as f64);
        post_sd.push(stats::sample_sd(col));
        ess_values.push(ess(col).ok());
        let mut sorted = col.clone();
        sorted.sort_by(f64::total_cmp);
        post_median.push(stats::quantile_sorted(&sorted, 0.5));
        intervals.push(
            COVERAGE_LEVELS
                .iter()
                .map(|&level| {
                    let tail = (1.0 - level) / 2.0;
                    CredibleInterval {
                        level,
                        lower: stats::quantile_sorted(&sorted, tail),
                        upper: stats::quantile_sorted(&sorted, 1.0 - tail),
                    }
                })
                .collect(),
        );
    }
    ChainSummary {
        post_mean,
        post_median,
        post_sd,
        intervals,
        ess: ess_values,
    }
}

struct ReplicateOutput {
    result: ReplicateResult,
    chain: Chain,
}

fn run_replicate(cfg: &ExperimentConfig, context: &MethodContext, r: usize) -> Result<ReplicateOutput> {
    let rep_seed = SeedSpec::new(cfg.master_seed).with_replicate(r as u64 + 1);
    let observed = match (&cfg.true_theta, &cfg.dataset) {
        (Some(theta), None) => simulate_report(cfg, theta, &rep_seed.child(10))?,
        (None, Some(path)) => load_dataset(cfg, path)?,
        _ => unreachable!("config validation enforces exactly one study kind"),
    };
    let cfg = &resolve_n(cfg, &observed)?;
    let prior = sampling_prior(cfg, &observed)?;
    let score = needs_score_summary(cfg)
        .then(|| fit_score_summary(cfg, &observed, &rep_seed.child(11)))
        .transpose()?;
    let backend = build_backend(cfg, context, &observed, score.as_ref())?;
    let mut mh = MhConfig::new(cfg.iterations, rep_seed.with_chain(1));
    // Chains start where calibration centered the study: the generating
    // parameter when it is known, the prior midpoint otherwise.
    mh.start = Some(match &cfg.true_theta {
        Some(theta) => prior.param(from_report(cfg.model, theta)),
        None => prior.midpoint(),
    });
    let chain = run_mh(&mh, &prior, backend.as_ref())?;
    let kept = chain.discard_burn_in(cfg.burn_in);
    let summary = summarize_chain(cfg.model, &kept);
    Ok(ReplicateOutput {
        result: ReplicateResult {
            replicate: r,
            post_mean: summary.post_mean,
            post_median: summary.post_median,
            post_sd: summary.post_sd,
            intervals: summary.intervals,
            acceptance_rate: chain.acceptance_rate(),
            error_rejections: chain.error_rejections,
            sim_count: chain.sim_count,
            ess: summary.ess,
            gmm_components: score.as_ref().map(ScoreSummary::components),
        },
        chain,
    })
}

/// Runs the full study described by `cfg`: calibration, one chain per
/// replicate (replicates run in parallel over disjoint seed streams), chain
/// persistence, the metrics table for simulated studies, and the manifest.
/// A failed replicate is excluded and recorded; a failed calibration aborts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let chains_dir = cfg.out_dir.join("chains");
    std::fs::create_dir_all(&chains_dir)?;

    let (context, calibration) = calibrate(cfg)?;
    let outcomes = exec::par_map_indexed(cfg.replicates, |r| run_replicate(cfg, &context, r));

    let mut results = Vec::new();
    let mut exclusions = Vec::new();
    let mut chain_files = Vec::new();
    let mut total_sims = 0usize;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(output) => {
                let file = format!("chains/replicate_{r:03}.csv");
                write_chain(&cfg.out_dir.join(&file), &output.chain)?;
                total_sims += output.result.sim_count;
                results.push(output.result);
                chain_files.push(file);
            }
            Err(e) => exclusions.push(ReplicateExclusion {
                replicate: r,
                error: e.to_string(),
            }),
        }
    }

    if let Some(truth) = &cfg.true_theta {
        if !results.is_empty() {
            let table = compute_metrics(&results, truth, &report_names(cfg.model))?;
            table.write_csv(&cfg.out_dir.join("metrics.csv"))?;
        }
    }

    let manifest = RunManifest {
        config: cfg.clone(),
        calibration,
        report_names: report_names(cfg.model),
        results,
        exclusions,
        total_sims,
        chain_files,
    };
    manifest.write(&cfg.out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Recomputes the metrics table of a finished run from its persisted chains
/// and manifest. Real-data studies have no generating value, hence no
/// metrics.
pub fn metrics_from_dir(dir: &Path) -> Result<MetricsTable> {
    let manifest = RunManifest::read(&dir.join("manifest.json"))?;
    let truth = manifest.config.true_theta.as_ref().ok_or_else(|| {
        Error::Config("metrics need a simulated study; this run used a real dataset".into())
    })?;
    let mut results = Vec::with_capacity(manifest.results.len());
    for (recorded, file) in manifest.results.iter().zip(&manifest.chain_files) {
        let chain = crate::sampler::read_chain(&dir.join(file))?;
        let kept = chain.discard_burn_in(manifest.config.burn_in);
        let summary = summarize_chain(manifest.config.model, &kept);
        results.push(ReplicateResult {
            replicate: recorded.replicate,
            post_mean: summary.post_mean,
            post_median: summary.post_median,
            post_sd: summary.post_sd,
            intervals: summary.intervals,
            acceptance_rate: chain.acceptance_rate(),
            error_rejections: recorded.error_rejections,
            sim_count: recorded.sim_count,
            ess: summary.ess,
            gmm_components: recorded.gmm_components,
        });
    }
    compute_metrics(&results, truth, &manifest.report_names)
}

/// Simulates one dataset at a reporting-space parameter and writes it in the
/// model's file format.
pub fn simulate_to_file(
    model: ModelId,
    theta: &[f64],
    n: Option<usize>,
    master_seed: u64,
    path: &Path,
) -> Result<()> {
    let expected = report_names(model).len();
    if theta.len() != expected {
        return Err(Error::Config(format!(
            "model {} takes {expected} parameters, got {}",
            model.as_str(),
            theta.len()
        )));
    }
    let cfg_n = match model {
        ModelId::GandK | ModelId::Mg1 => {
            let n = n.ok_or_else(|| Error::Config(format!("model {} needs n", model.as_str())))?;
            if n < 2 {
                return Err(Error::Config("n must be at least 2".into()));
            }
            Some(n)
        }
        _ => {
            if n.is_some() {
                return Err(Error::Config(format!(
                    "model {} has a fixed data shape; drop n",
                    model.as_str()
                )));
            }
            None
        }
    };
    let probe = ExperimentConfig {
        model,
        method: MethodId::Cvm,
        transform: Transform::Raw,
        replicates: 1,
        n: cfg_n,
        true_theta: Some(theta.to_vec()),
        dataset: None,
        iterations: 1,
        master_seed,
        abc_quantile: 0.05,
        pool_size: 2,
        bsl_m: None,
        bsl_tuning_grid: vec![50],
        kde_m: 1,
        kde_bandwidth: None,
        kde_recycle: true,
        mmd_bandwidth: None,
        mmd_exclude_matched: false,
        energy_p: 1,
        gmm_components: 1,
        robust_weights: false,
        burn_in: 0.0,
        prior: None,
        out_dir: PathBuf::new(),
    };
    let seed = SeedSpec::new(master_seed).with_replicate(1).child(10);
    match simulate_report(&probe, theta, &seed)? {
        Observed::Scalar(sample) => crate::models::write_scalar_dataset(path, &sample),
        Observed::Stereo(data) => data.write(path),
        Observed::Toad(data) => data.write(path),
    }
}

/// Runs only the calibration stage and returns its products.
pub fn calibrate_experiment(cfg: &ExperimentConfig) -> Result<Calibration> {
    cfg.validate()?;
    calibrate(cfg).map(|(_, record)| record)
}
