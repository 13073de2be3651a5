//! Random-walk Metropolis-Hastings on the unbounded reparameterized space,
//! pseudo-marginal over the likelihood estimates supplied by a [`Backend`].
//!
//! The chain lives on the componentwise logit transform of the prior box, so
//! every visited state maps strictly inside the box and the acceptance ratio
//! carries the transform Jacobian. The current state's likelihood estimate is
//! retained, never refreshed: for the ABC indicator kernel this is exactly
//! the pseudo-marginal construction, and for synthetic-likelihood and KDE
//! backends it is the standard plug-in chain.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::Write as _;
use std::path::Path;

use crate::core::{BoxPrior, ParamVector, SeedSpec};
use crate::likelihoods::LikelihoodEstimate;
use crate::{Error, Result};

/// Scaling rule for the tuned proposal covariance.
const PROPOSAL_SCALE: f64 = 2.38 * 2.38;
/// Fraction of each run discarded before the pilot covariance is estimated.
const PILOT_BURN_IN: f64 = 0.2;
/// Floor on pilot length so the covariance estimate has some support.
const PILOT_MIN_ITERS: usize = 50;
/// Step standard deviations probed before the pilot, largest first.
const PROBE_SCALES: [f64; 5] = [1.0, 0.3, 0.1, 0.03, 0.01];
/// Length of each probe chain.
const PROBE_ITERS: usize = 100;
/// Accepted moves a probe needs for its scale to be adopted outright.
const PROBE_MIN_ACCEPTS: usize = 3;

/// A likelihood estimator bound to the observed data. Implementations draw
/// all randomness from the provided [`SeedSpec`], which the sampler varies
/// per proposal.
pub trait Backend: Sync {
    fn estimate(&self, theta: &ParamVector, seed: &SeedSpec) -> Result<LikelihoodEstimate>;
}

impl<F> Backend for F
where
    F: Fn(&ParamVector, &SeedSpec) -> Result<LikelihoodEstimate> + Sync,
{
    fn estimate(&self, theta: &ParamVector, seed: &SeedSpec) -> Result<LikelihoodEstimate> {
        self(theta, seed)
    }
}

/// Metropolis-Hastings run configuration.
///
/// The sampler owns the seed it is given: it derives the proposal kernel
/// stream, the tuning stage (probes and pilot chain), and the starting draw
/// from `seed.child(0..=2)`, and hands `seed.with_proposal(i)` to the backend
/// at iteration `i`. Callers must not reuse the same seed for anything else.
#[derive(Debug, Clone)]
pub struct MhConfig {
    pub iterations: usize,
    pub seed: SeedSpec,
    /// Proposal covariance on the unbounded space. When absent, short probe
    /// chains pick a workable isotropic step scale, a pilot run of
    /// `pilot_fraction` of the budget at that scale follows, and the tuned
    /// covariance is `2.38^2/d` times the pilot posterior covariance.
    pub proposal_cov: Option<DMatrix<f64>>,
    pub pilot_fraction: f64,
    /// Starting point in the original space; defaults to a prior draw.
    pub start: Option<ParamVector>,
}

impl MhConfig {
    pub fn new(iterations: usize, seed: SeedSpec) -> Self {
        Self {
            iterations,
            seed,
            proposal_cov: None,
            pilot_fraction: 0.1,
            start: None,
        }
    }
}

/// A completed chain: per-iteration states in the original parameter space
/// with the retained log-likelihood estimate and the accept flag.
#[derive(Debug, Clone)]
pub struct Chain {
    names: Vec<String>,
    draws: Vec<f64>,
    log_liks: Vec<f64>,
    accepts: Vec<bool>,
    /// Proposal covariance actually used (empty for chains read from disk).
    pub proposal_cov: DMatrix<f64>,
    /// Proposals rejected because the backend reported a recoverable error.
    pub error_rejections: usize,
    /// Total simulator calls consumed, pilot included.
    pub sim_count: usize,
}

impl Chain {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of stored iterations.
    pub fn len(&self) -> usize {
        self.accepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// State after iteration `i`, in the original space.
    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.draws[i * d..(i + 1) * d]
    }

    /// The trace of one parameter component.
    pub fn component(&self, j: usize) -> Vec<f64> {
        let d = self.dim();
        self.draws.iter().skip(j).step_by(d).copied().collect()
    }

    pub fn log_liks(&self) -> &[f64] {
        &self.log_liks
    }

    pub fn accepts(&self) -> &[bool] {
        &self.accepts
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepts.is_empty() {
            return 0.0;
        }
        self.accepts.iter().filter(|a| **a).count() as f64 / self.accepts.len() as f64
    }

    /// Drops the first `fraction` of iterations.
    pub fn discard_burn_in(&self, fraction: f64) -> Chain {
        assert!((0.0..1.0).contains(&fraction), "burn-in fraction out of range");
        let skip = (self.len() as f64 * fraction).floor() as usize;
        let d = self.dim();
        Chain {
            names: self.names.clone(),
            draws: self.draws[skip * d..].to_vec(),
            log_liks: self.log_liks[skip..].to_vec(),
            accepts: self.accepts[skip..].to_vec(),
            proposal_cov: self.proposal_cov.clone(),
            error_rejections: self.error_rejections,
            sim_count: self.sim_count,
        }
    }
}

fn is_recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter(_)
            | Error::DegenerateSample(_)
            | Error::DegenerateDistances(_)
            | Error::DegeneratePool(_)
            | Error::FitFailure(_)
            | Error::IllConditionedFit
            | Error::SingularCovariance
            | Error::SummaryFailure(_)
            | Error::TuningFailure(_)
    )
}

struct CoreRun {
    draws: Vec<f64>,
    unbounded: Vec<f64>,
    log_liks: Vec<f64>,
    accepts: Vec<bool>,
    final_x: Vec<f64>,
    sims: usize,
    error_rejections: usize,
}

fn mh_core<B: Backend + ?Sized>(
    iterations: usize,
    seed: &SeedSpec,
    prior: &BoxPrior,
    backend: &B,
    chol: &Cholesky<f64, nalgebra::Dyn>,
    start_x: &[f64],
) -> Result<CoreRun> {
    let d = prior.dim();
    let mut kernel = seed.child(0).rng();
    let mut x = start_x.to_vec();
    let mut theta = prior.from_unbounded(&x);
    let mut target = prior.log_density(&theta) + prior.log_jacobian(&x);
    let mut sims = 0usize;
    let mut error_rejections = 0usize;
    let mut cur_loglik = match backend.estimate(&theta, &seed.with_proposal(0)) {
        Ok(est) => {
            sims += est.sims;
            est.log_lik
        }
        Err(e) if is_recoverable(&e) => {
            error_rejections += 1;
            f64::NEG_INFINITY
        }
        Err(e) => return Err(e),
    };

    let mut draws = Vec::with_capacity(iterations * d);
    let mut unbounded = Vec::with_capacity(iterations * d);
    let mut log_liks = Vec::with_capacity(iterations);
    let mut accepts = Vec::with_capacity(iterations);
    for iter in 1..=iterations {
        let step = chol.l()
            * DVector::from_iterator(
                d,
                (0..d).map(|_| {
                    let z: f64 = StandardNormal.sample(&mut kernel);
                    z
                }),
            );
        let z: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let theta_prop = prior.from_unbounded(&z);
        let target_prop = prior.log_density(&theta_prop) + prior.log_jacobian(&z);
        let loglik_prop = match backend.estimate(&theta_prop, &seed.with_proposal(iter as u64)) {
            Ok(est) => {
                sims += est.sims;
                est.log_lik
            }
            Err(e) if is_recoverable(&e) => {
                error_rejections += 1;
                f64::NEG_INFINITY
            }
            Err(e) => return Err(e),
        };

        let u: f64 = kernel.random();
        let numer = target_prop + loglik_prop;
        let denom = target + cur_loglik;
        let accept = if numer == f64::NEG_INFINITY {
            false
        } else if denom == f64::NEG_INFINITY {
            true
        } else {
            u.ln() < numer - denom
        };
        if accept {
            x = z;
            theta = theta_prop;
            target = target_prop;
            cur_loglik = loglik_prop;
        }
        draws.extend_from_slice(theta.values());
        unbounded.extend_from_slice(&x);
        log_liks.push(cur_loglik);
        accepts.push(accept);
    }
    Ok(CoreRun {
        draws,
        unbounded,
        log_liks,
        accepts,
        final_x: x,
        sims,
        error_rejections,
    })
}

/// Variance floor below which a pilot component counts as never having
/// moved; rounding noise on a constant trace sits around 1e-28.
const PILOT_VARIANCE_FLOOR: f64 = 1e-12;

/// Sample covariance (rows = observations) scaled by `2.38^2/d`; identity at
/// variance `fallback_sd^2`, scaled the same way, when the estimate is not
/// positive definite or any component barely moved.
fn scaled_covariance(rows: &[f64], d: usize, fallback_sd: f64) -> DMatrix<f64> {
    let scale = PROPOSAL_SCALE / d as f64;
    let n = rows.len() / d;
    let fallback = DMatrix::identity(d, d) * (scale * fallback_sd * fallback_sd);
    if n < 2 {
        return fallback;
    }
    let mut mean = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v / n as f64;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for row in rows.chunks_exact(d) {
        for p in 0..d {
            let dp = row[p] - mean[p];
            for q in p..d {
                cov[(p, q)] += dp * (row[q] - mean[q]);
            }
        }
    }
    for p in 0..d {
        for q in p..d {
            cov[(p, q)] /= (n - 1) as f64;
            cov[(q, p)] = cov[(p, q)];
        }
    }
    if (0..d).any(|p| cov[(p, p)] < PILOT_VARIANCE_FLOOR) {
        return fallback;
    }
    let cov = cov * scale;
    if Cholesky::new(cov.clone()).is_some() {
        cov
    } else {
        fallback
    }
}

/// Runs the Metropolis-Hastings chain. Recoverable backend failures at a
/// proposal reject it and are counted; configuration-level errors abort.
pub fn run_mh<B: Backend + ?Sized>(cfg: &MhConfig, prior: &BoxPrior, backend: &B) -> Result<Chain> {
    if cfg.iterations == 0 {
        return Err(Error::Config("MCMC needs at least one iteration".into()));
    }
    if !(cfg.pilot_fraction > 0.0 && cfg.pilot_fraction < 1.0) {
        return Err(Error::Config(format!(
            "pilot fraction must lie in (0, 1), got {}",
            cfg.pilot_fraction
        )));
    }
    let d = prior.dim();
    let start = match &cfg.start {
        Some(theta) => theta.clone(),
        None => prior.sample(&cfg.seed.child(2)),
    };
    let (mut start_x, _) = prior.to_unbounded(&start)?;

    let mut sims = 0usize;
    let mut error_rejections = 0usize;
    let proposal_cov = match &cfg.proposal_cov {
        Some(cov) => {
            if cov.nrows() != d || cov.ncols() != d {
                return Err(Error::Config(format!(
                    "proposal covariance is {}x{}, prior dimension is {d}",
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            if Cholesky::new(cov.clone()).is_none() {
                return Err(Error::Config(
                    "proposal covariance is not symmetric positive definite".into(),
                ));
            }
            cov.clone()
        }
        None => {
            let pilot_iters =
                PILOT_MIN_ITERS.max((cfg.pilot_fraction * cfg.iterations as f64).ceil() as usize);
            let tune_seed = cfg.seed.child(1);

            // Targets like tight ABC acceptance balls reject nearly every
            // unit-scale move, which starves the pilot of accepted states and
            // degenerates its covariance. Probe a ladder of isotropic scales
            // and pilot at the largest one that still moves; when nothing
            // moves, prefer whichever probe moved most, then the largest
            // scale, whose wide steps at least search the space.
            let mut scale = PROBE_SCALES[0];
            let mut best_accepts = 0usize;
            for (k, s) in PROBE_SCALES.iter().enumerate() {
                let probe_chol = Cholesky::new(DMatrix::identity(d, d) * (s * s)).unwrap();
                let probe = mh_core(
                    PROBE_ITERS,
                    &tune_seed.child(k as u64 + 1),
                    prior,
                    backend,
                    &probe_chol,
                    &start_x,
                )?;
                sims += probe.sims;
                error_rejections += probe.error_rejections;
                let accepts = probe.accepts.iter().filter(|a| **a).count();
                if accepts >= PROBE_MIN_ACCEPTS {
                    scale = *s;
                    break;
                }
                if accepts > best_accepts {
                    best_accepts = accepts;
                    scale = *s;
                }
            }

            let pilot_chol = Cholesky::new(DMatrix::identity(d, d) * (scale * scale)).unwrap();
            let pilot = mh_core(
                pilot_iters,
                &tune_seed.child(0),
                prior,
                backend,
                &pilot_chol,
                &start_x,
            )?;
            sims += pilot.sims;
            error_rejections += pilot.error_rejections;
            start_x = pilot.final_x.clone();
            let skip = (pilot_iters as f64 * PILOT_BURN_IN).floor() as usize * d;
            scaled_covariance(&pilot.unbounded[skip..], d, scale)
        }
    };
    let chol = Cholesky::new(proposal_cov.clone())
        .expect("covariance was just validated or constructed positive definite");

    let run = mh_core(cfg.iterations, &cfg.seed, prior, backend, &chol, &start_x)?;
    Ok(Chain {
        names: prior.names().to_vec(),
        draws: run.draws,
        log_liks: run.log_liks,
        accepts: run.accepts,
        proposal_cov,
        error_rejections: error_rejections + run.error_rejections,
        sim_count: sims + run.sims,
    })
}

/// Effective sample size `N / (1 + 2 sum rho_k)`, truncating the
/// autocorrelation sum at the first non-positive pairwise term
/// (initial-positive-sequence rule). A constant trace has ESS 1.
pub fn ess(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 100 {
        return Err(Error::Config(format!(
            "effective sample size needs at least 100 draws, got {n}"
        )));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return Ok(1.0);
    }
    let rho = |k: usize| {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut paired_sum = 0.0;
    let mut m = 0usize;
    while 2 * m + 1 < n {
        let gamma = rho(2 * m) + rho(2 * m + 1);
        if gamma <= 0.0 {
            break;
        }
        paired_sum += gamma;
        m += 1;
    }
    let tau = (2.0 * paired_sum - 1.0).max(1e-8);
    Ok((n as f64 / tau).max(1.0))
}

/// Writes a chain as delimited text: a header of parameter names plus
/// `log_lik` and `accept`, then one row per iteration. Floats use the
/// shortest exact decimal form, so a read-back is bit-identical.
pub fn write_chain(path: &Path, chain: &Chain) -> Result<()> {
    let mut out = String::new();
    for name in chain.names() {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("log_lik,accept\n");
    for i in 0..chain.len() {
        for v in chain.row(i) {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{}", chain.log_liks[i], u8::from(chain.accepts[i]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a chain written by [`write_chain`]. Only the per-iteration record
/// is persisted, so the proposal covariance and the simulation counters come
/// back empty.
pub fn read_chain(path: &Path) -> Result<Chain> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        message: format!("line {line}: {message}"),
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty chain file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[columns.len() - 2..] != ["log_lik", "accept"] {
        return Err(parse_err(
            1,
            "header must end with log_lik,accept after at least one parameter".into(),
        ));
    }
    let names: Vec<String> = columns[..columns.len() - 2]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let d = names.len();

    let mut draws = Vec::new();
    let mut log_liks = Vec::new();
    let mut accepts = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(parse_err(
                idx + 1,
                format!("expected {} fields, found {}", d + 2, fields.len()),
            ));
        }
        for field in &fields[..=d] {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad number {field:?}")))?;
            draws.push(v);
        }
        log_liks.push(draws.pop().expect("just pushed d+1 values"));
        match fields[d + 1] {
            "0" => accepts.push(false),
            "1" => accepts.push(true),
            other => return Err(parse_err(idx + 1, format!("bad accept flag {other:?}"))),
        }
    }
    Ok(Chain {
        names,
        draws,
        log_liks,
        accepts,
        proposal_cov: DMatrix::zeros(0, 0),
        error_rejections: 0,
        sim_count: 0,
    })
}
