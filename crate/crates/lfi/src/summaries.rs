//! Gaussian-mixture auxiliary model for indirect-inference summaries: EM
//! fitting, analytic score and observed information in an unconstrained
//! parameterization, and the Mahalanobis discrepancy built from them.
//!
//! The unconstrained parameter vector is `phi = (a, mu, log v)` where the
//! mixing weights are stick-breaking transforms of the logits `a`, giving
//! `3K - 1` free coordinates for `K` components. Scores therefore live in a
//! plain Euclidean space and can feed unconstrained discrepancies directly.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::index;

use crate::core::{Sample, SeedSpec};
use crate::stats;
use crate::{Error, Result};

const EM_MAX_ITERS: usize = 500;
const EM_REL_TOL: f64 = 1e-10;
const EM_RESTARTS: u64 = 10;

/// A univariate Gaussian mixture with strictly positive weights and
/// variances.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::InvalidParameter(
                "mixture component lists must be non-empty and of equal length".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {sum}, expected 1")));
        }
        for (&w, (&m, &v)) in weights.iter().zip(means.iter().zip(variances.iter())) {
            if w <= 0.0 || w.is_nan() || !m.is_finite() || v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "invalid mixture component (weight {w}, mean {m}, variance {v})"
                )));
            }
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(Self { weights, means, variances })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Number of unconstrained parameters, `3K - 1`.
    pub fn dim_phi(&self) -> usize {
        3 * self.k() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.k()).map(|k| self.ln_weighted_component(x, k)).collect();
        stats::log_sum_exp(&terms)
    }

    pub fn log_likelihood(&self, zs: &[f64]) -> f64 {
        zs.iter().map(|&z| self.log_density(z)).sum()
    }

    fn ln_weighted_component(&self, x: f64, k: usize) -> f64 {
        let d = x - self.means[k];
        self.weights[k].ln() - 0.5 * (d * d / self.variances[k] + self.variances[k].ln() + LN_TWO_PI)
    }

    /// Stick-breaking fractions `s_j = pi_j / sum_{k >= j} pi_k` for
    /// `j < K - 1`.
    fn sticks(&self) -> Vec<f64> {
        let mut tail: f64 = self.weights.iter().sum();
        let mut s = Vec::with_capacity(self.k().saturating_sub(1));
        for j in 0..self.k() - 1 {
            s.push(self.weights[j] / tail);
            tail -= self.weights[j];
        }
        s
    }

    /// Maps to the unconstrained vector `(a, mu, log v)`.
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let kk = self.k();
        let mut phi = Vec::with_capacity(3 * kk - 1);
        for s in self.sticks() {
            phi.push((s / (1.0 - s)).ln());
        }
        phi.extend_from_slice(&self.means);
        phi.extend(self.variances.iter().map(|v| v.ln()));
        phi
    }

    /// Inverse of [`Self::to_unconstrained`]; `phi` must have length `3k - 1`.
    pub fn from_unconstrained(phi: &[f64], k: usize) -> Self {
        assert_eq!(phi.len(), 3 * k - 1, "unconstrained mixture vector has the wrong length");
        let mut weights = Vec::with_capacity(k);
        let mut rem = 1.0;
        for &p in &phi[..k - 1] {
            let s = sigmoid(p);
            weights.push(s * rem);
            rem *= 1.0 - s;
        }
        weights.push(rem);
        let means = phi[k - 1..2 * k - 1].to_vec();
        let variances = phi[2 * k - 1..].iter().map(|l| l.exp()).collect();
        Self { weights, means, variances }
    }

    /// Reorders components by ascending mean.
    fn canonicalized(mut self) -> Self {
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&i, &j| self.means[i].total_cmp(&self.means[j]));
        self.weights = order.iter().map(|&i| self.weights[i]).collect();
        self.means = order.iter().map(|&i| self.means[i]).collect();
        self.variances = order.iter().map(|&i| self.variances[i]).collect();
        self
    }
}

const LN_TWO_PI: f64 = 1.8378770664093453;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The indirect-inference summary: gradient of the mixture log-likelihood in
/// the unconstrained parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreStatistic(pub Vec<f64>);

impl ScoreStatistic {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Accumulates the score and (optionally) the Hessian of the mixture
/// log-likelihood over `zs`, in the unconstrained parameterization.
fn score_hessian(zs: &[f64], gm: &GaussianMixture, with_hessian: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
    let kk = gm.k();
    let d = gm.dim_phi();
    let s = gm.sticks();
    let mu = gm.means();
    let v = gm.variances();
    let imu = |k: usize| kk - 1 + k;
    let il = |k: usize| 2 * kk - 1 + k;

    // d ln pi_k / d a_j for the stick-breaking map.
    let c = |j: usize, k: usize| -> f64 {
        if j < k {
            -s[j]
        } else if j == k {
            1.0 - s[j]
        } else {
            0.0
        }
    };

    let mut score = vec![0.0; d];
    let mut hess = with_hessian.then(|| DMatrix::zeros(d, d));
    let mut g = vec![0.0; d];
    let mut gamma = vec![0.0; kk];
    let mut dk = vec![0.0; kk];
    let mut hk = vec![0.0; kk];
    let mut lnw = vec![0.0; kk];

    for &z in zs {
        for (k, slot) in lnw.iter_mut().enumerate() {
            *slot = gm.ln_weighted_component(z, k);
        }
        let lnf = stats::log_sum_exp(&lnw);
        for k in 0..kk {
            gamma[k] = (lnw[k] - lnf).exp();
            let diff = z - mu[k];
            dk[k] = diff / v[k];
            hk[k] = 0.5 * (diff * diff / v[k] - 1.0);
        }
        for j in 0..kk - 1 {
            let tail: f64 = gamma[j + 1..].iter().sum();
            g[j] = (1.0 - s[j]) * gamma[j] - s[j] * tail;
        }
        for k in 0..kk {
            g[imu(k)] = gamma[k] * dk[k];
            g[il(k)] = gamma[k] * hk[k];
        }
        for (acc, gi) in score.iter_mut().zip(&g) {
            *acc += gi;
        }

        let Some(h) = hess.as_mut() else { continue };
        // Blocks of (1/f) d2f, then subtract the outer product of the
        // per-observation gradient.
        for j in 0..kk - 1 {
            for l in j..kk - 1 {
                let tail: f64 = gamma[l + 1..].iter().sum();
                let val = if j == l {
                    s[j] * (2.0 * s[j] - 1.0) * tail + (1.0 - s[j]) * (1.0 - 2.0 * s[j]) * gamma[j]
                } else {
                    s[j] * s[l] * tail - s[j] * (1.0 - s[l]) * gamma[l]
                };
                h[(j, l)] += val;
                if j != l {
                    h[(l, j)] += val;
                }
            }
            for k in 0..kk {
                let cjk = c(j, k);
                if cjk != 0.0 {
                    let vm = cjk * gamma[k] * dk[k];
                    let vl = cjk * gamma[k] * hk[k];
                    h[(j, imu(k))] += vm;
                    h[(imu(k), j)] += vm;
                    h[(j, il(k))] += vl;
                    h[(il(k), j)] += vl;
                }
            }
        }
        for k in 0..kk {
            h[(imu(k), imu(k))] += gamma[k] * (dk[k] * dk[k] - 1.0 / v[k]);
            let cross = gamma[k] * dk[k] * (hk[k] - 1.0);
            h[(imu(k), il(k))] += cross;
            h[(il(k), imu(k))] += cross;
            h[(il(k), il(k))] += gamma[k] * (hk[k] * hk[k] - hk[k] - 0.5);
        }
        for p in 0..d {
            for q in 0..d {
                h[(p, q)] -= g[p] * g[q];
            }
        }
    }
    (score, hess)
}

/// Evaluates the score statistic `S(z, phi*)` of a dataset under a fitted
/// auxiliary model.
pub fn score_at(z: &Sample, fitted: &GaussianMixture) -> ScoreStatistic {
    let (score, _) = score_hessian(z.values(), fitted, false);
    ScoreStatistic(score)
}

/// Observed information: the negative Hessian of the mixture log-likelihood
/// at the fitted parameters, symmetrized and checked for positive
/// definiteness.
pub fn observed_information(y: &Sample, fitted: &GaussianMixture) -> Result<DMatrix<f64>> {
    let (_, hess) = score_hessian(y.values(), fitted, true);
    let mut j = -hess.expect("hessian requested");
    if j.iter().any(|v| !v.is_finite()) {
        // Finite-difference fallback on the analytic score.
        j = fd_information(y.values(), fitted);
    }
    let j = (&j + j.transpose()) * 0.5;
    if Cholesky::new(j.clone()).is_none() {
        return Err(Error::IllConditionedFit);
    }
    Ok(j)
}

/// Central finite differences of the analytic score.
fn fd_information(zs: &[f64], fitted: &GaussianMixture) -> DMatrix<f64> {
    let kk = fitted.k();
    let phi = fitted.to_unconstrained();
    let d = phi.len();
    let mut j = DMatrix::zeros(d, d);
    for q in 0..d {
        let h = 1e-5 * (1.0 + phi[q].abs());
        let mut hi = phi.clone();
        hi[q] += h;
        let mut lo = phi.clone();
        lo[q] -= h;
        let (s_hi, _) = score_hessian(zs, &GaussianMixture::from_unconstrained(&hi, kk), false);
        let (s_lo, _) = score_hessian(zs, &GaussianMixture::from_unconstrained(&lo, kk), false);
        for p in 0..d {
            j[(p, q)] = -(s_hi[p] - s_lo[p]) / (2.0 * h);
        }
    }
    j
}

/// Mahalanobis discrepancy `sqrt(s' J^{-1} s)` with the observed information
/// as the weighting matrix.
pub fn mahalanobis(s: &ScoreStatistic, j: &DMatrix<f64>) -> Result<f64> {
    let chol = Cholesky::new(j.clone()).ok_or(Error::IllConditionedFit)?;
    let sv = DVector::from_column_slice(s.values());
    let solved = chol.solve(&sv);
    Ok(sv.dot(&solved).max(0.0).sqrt())
}

/// One E+M sweep; returns the log-likelihood of the input mixture and the
/// updated mixture, failing when a component degenerates.
fn em_step(zs: &[f64], gm: &GaussianMixture, var_floor: f64) -> Result<(f64, GaussianMixture)> {
    let kk = gm.k();
    let n = zs.len();
    let mut loglik = 0.0;
    let mut n_k = vec![0.0; kk];
    let mut sum_z = vec![0.0; kk];
    let mut resp = vec![0.0; kk * n];
    let mut lnw = vec![0.0; kk];
    for (i, &z) in zs.iter().enumerate() {
        for (k, slot) in lnw.iter_mut().enumerate() {
            *slot = gm.ln_weighted_component(z, k);
        }
        let lnf = stats::log_sum_exp(&lnw);
        loglik += lnf;
        for k in 0..kk {
            let g = (lnw[k] - lnf).exp();
            resp[k * n + i] = g;
            n_k[k] += g;
            sum_z[k] += g * z;
        }
    }
    let mut weights = Vec::with_capacity(kk);
    let mut means = Vec::with_capacity(kk);
    let mut variances = Vec::with_capacity(kk);
    for k in 0..kk {
        if n_k[k] / (n as f64) < 1e-12 {
            return Err(Error::FitFailure(format!("mixture component {k} lost all weight")));
        }
        let mean = sum_z[k] / n_k[k];
        let mut ss = 0.0;
        for (i, &z) in zs.iter().enumerate() {
            let d = z - mean;
            ss += resp[k * n + i] * d * d;
        }
        let var = ss / n_k[k];
        if var < var_floor {
            return Err(Error::FitFailure(format!("mixture component {k} variance collapsed to {var}")));
        }
        weights.push(n_k[k] / n as f64);
        means.push(mean);
        variances.push(var);
    }
    Ok((loglik, GaussianMixture { weights, means, variances }))
}

fn em_run(zs: &[f64], k: usize, pop_var: f64, seed: &SeedSpec) -> Result<(f64, GaussianMixture)> {
    let mut rng = seed.rng();
    let picks = index::sample(&mut rng, zs.len(), k);
    let means: Vec<f64> = picks.iter().map(|i| zs[i]).collect();
    let mut gm = GaussianMixture {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![pop_var; k],
    };
    let var_floor = 1e-12 * pop_var;
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let (ll, next) = em_step(zs, &gm, var_floor)?;
        gm = next;
        if prev.is_finite() && (ll - prev).abs() <= EM_REL_TOL * (1.0 + ll.abs()) {
            break;
        }
        prev = ll;
    }
    Ok((gm.log_likelihood(zs), gm))
}

/// Newton ascent on the unconstrained parameters using the analytic score
/// and information, with backtracking; stops at machine-level scores or when
/// no uphill step exists.
fn newton_polish(zs: &[f64], gm: GaussianMixture) -> GaussianMixture {
    let kk = gm.k();
    let mut phi = gm.to_unconstrained();
    let mut fitted = gm;
    let mut ll = fitted.log_likelihood(zs);
    for _ in 0..60 {
        let (score, hess) = score_hessian(zs, &fitted, true);
        if score.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-9 {
            break;
        }
        let info = -hess.expect("hessian requested");
        let Some(chol) = Cholesky::new(info) else { break };
        let delta = chol.solve(&DVector::from_column_slice(&score));
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = phi.iter().zip(delta.iter()).map(|(p, d)| p + t * d).collect();
            let cand_gm = GaussianMixture::from_unconstrained(&cand, kk);
            let cand_ll = cand_gm.log_likelihood(zs);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 {
                phi = cand;
                fitted = cand_gm;
                ll = cand_ll;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    fitted
}

/// Fits a `K`-component mixture by EM from `EM_RESTARTS` seeded restarts,
/// keeping the best log-likelihood, then polishing with Newton steps.
/// Components are ordered by ascending mean.
pub fn fit_gmm(y: &Sample, k: usize, seed: &SeedSpec) -> Result<GaussianMixture> {
    let zs = y.values();
    if k == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    if zs.len() <= 3 * k {
        return Err(Error::Config(format!(
            "mixture fit needs n > 3K observations, got n = {} for K = {k}",
            zs.len()
        )));
    }
    let pop_var = stats::population_variance(zs);
    if pop_var <= 0.0 || pop_var.is_nan() {
        return Err(Error::FitFailure("data are constant; every variance estimate is zero".into()));
    }
    let mut best: Option<(f64, GaussianMixture)> = None;
    let mut last_err = None;
    for r in 0..EM_RESTARTS {
        match em_run(zs, k, pop_var, &seed.child(r)) {
            Ok((ll, gm)) => {
                if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                    best = Some((ll, gm));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (_, gm) = best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::FitFailure("every restart failed".into()))
    })?;
    Ok(newton_polish(zs, gm).canonicalized())
}

/// Fits with `K` components, dropping to `K - 1` (and so on, down to one
/// component) whenever the fit degenerates. Returns the mixture and the
/// component count actually used.
pub fn fit_gmm_with_fallback(y: &Sample, k: usize, seed: &SeedSpec) -> Result<(GaussianMixture, usize)> {
    let mut kk = k;
    loop {
        match fit_gmm(y, kk, seed) {
            Ok(gm) => return Ok((gm, kk)),
            Err(e @ Error::FitFailure(_)) if kk > 1 => {
                let _ = e;
                kk -= 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Observed-side machinery for score-based summaries: the auxiliary fit, its
/// observed information, and the cached Cholesky factor used to evaluate
/// Mahalanobis discrepancies of simulated datasets.
pub struct ScoreSummary {
    fitted: GaussianMixture,
    components: usize,
    information: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl ScoreSummary {
    pub fn new(y: &Sample, k: usize, seed: &SeedSpec) -> Result<Self> {
        let (fitted, components) = fit_gmm_with_fallback(y, k, seed)?;
        let information = observed_information(y, &fitted)?;
        let chol = Cholesky::new(information.clone()).ok_or(Error::IllConditionedFit)?;
        Ok(Self { fitted, components, information, chol })
    }

    pub fn fitted(&self) -> &GaussianMixture {
        &self.fitted
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.information
    }

    /// The raw score vector of a simulated dataset under the observed-data
    /// fit.
    pub fn score(&self, z: &Sample) -> ScoreStatistic {
        score_at(z, &self.fitted)
    }

    /// Mahalanobis discrepancy of a simulated dataset from the observed fit.
    pub fn discrepancy(&self, z: &Sample) -> f64 {
        let s = self.score(z);
        let sv = DVector::from_column_slice(s.values());
        let solved = self.chol.solve(&sv);
        sv.dot(&solved).max(0.0).sqrt()
    }
}
