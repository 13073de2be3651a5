//! Full-data discrepancies between two equal-length univariate samples,
//! plus weighted composites over dataset pieces.
//!
//! All distances here compare raw datasets rather than summary statistics.
//! Inputs must be non-empty, finite and of equal length; unequal lengths
//! are rejected rather than silently reweighted. The quadratic-cost
//! estimators (energy distance, MMD) fan their row sums out through
//! [`crate::exec::par_map_indexed`] for large inputs; reductions are in
//! fixed index order, so results are identical in parallel and sequential
//! builds.

use crate::error::{Error, Result};
use crate::exec::par_map_indexed;
use crate::stats;

/// Inputs at or above this length use parallel row sums for the
/// quadratic-cost estimators.
const PAR_MIN: usize = 2048;

fn validate_pair(y: &[f64], z: &[f64]) -> Result<()> {
    validate_one(y)?;
    validate_one(z)?;
    if y.len() != z.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: z.len(),
        });
    }
    Ok(())
}

fn validate_one(xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::DegenerateSample("empty sample".into()));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("non-finite observation".into()));
    }
    Ok(())
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    v
}

/// 1-d Wasserstein distance of order one between equal-length samples:
/// the mean absolute difference of sorted observations, which attains the
/// minimum-cost assignment between the two point sets.
pub fn wasserstein1(y: &[f64], z: &[f64]) -> Result<f64> {
    validate_pair(y, z)?;
    let (ys, zs) = (sorted(y), sorted(z));
    let total: f64 = ys.iter().zip(&zs).map(|(a, b)| (a - b).abs()).sum();
    Ok(total / y.len() as f64)
}

/// Two-sample Cramér-von Mises statistic.
///
/// Computed from pooled ranks, which is algebraically identical to the
/// ECDF-integral definition `(n/2) * integral (F - G)^2 dH` with `H` the
/// pooled ECDF. Exact ties across samples are broken observed-sample-first
/// (`y` before `z`), deterministically. Because the statistic depends on
/// the data only through ranks, it is invariant under strictly increasing
/// transformations, bit for bit.
pub fn cvm_distance(y: &[f64], z: &[f64]) -> Result<f64> {
    validate_pair(y, z)?;
    let n = y.len();
    let mut pooled: Vec<(f64, u8)> = Vec::with_capacity(2 * n);
    pooled.extend(y.iter().map(|&v| (v, 0u8)));
    pooled.extend(z.iter().map(|&v| (v, 1u8)));
    // Stable sort on (value, source): ties place y-entries first.
    pooled.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("validated finite")
            .then(a.1.cmp(&b.1))
    });

    // Ranks of each sample's order statistics in the pooled ordering.
    let (mut sum_y, mut sum_z) = (0u128, 0u128);
    let (mut iy, mut iz) = (0u64, 0u64);
    for (pos, &(_, source)) in pooled.iter().enumerate() {
        let rank = pos as u64 + 1;
        if source == 0 {
            iy += 1;
            let d = rank.abs_diff(iy) as u128;
            sum_y += d * d;
        } else {
            iz += 1;
            let d = rank.abs_diff(iz) as u128;
            sum_z += d * d;
        }
    }

    let nf = n as f64;
    let u = (sum_y + sum_z) as f64;
    Ok(u / (2.0 * nf * nf) - (4.0 * nf * nf - 1.0) / (12.0 * nf))
}

/// Energy distance of order `p >= 1` between equal-length samples, as a
/// V-statistic:
///
/// `2/n^2 sum |y_i - z_j|^p - 1/n^2 sum |z_i - z_j|^p - 1/n^2 sum |y_i - y_j|^p`.
pub fn energy_distance(y: &[f64], z: &[f64], p: u32) -> Result<f64> {
    validate_pair(y, z)?;
    if p < 1 {
        return Err(Error::Config("energy order p must be at least 1".into()));
    }
    let n = y.len();
    let pow = p as i32;
    let cross = double_sum(n, |i, j| (y[i] - z[j]).abs().powi(pow));
    let within_z = double_sum(n, |i, j| (z[i] - z[j]).abs().powi(pow));
    let within_y = double_sum(n, |i, j| (y[i] - y[j]).abs().powi(pow));
    let n2 = (n * n) as f64;
    Ok(2.0 * cross / n2 - within_z / n2 - within_y / n2)
}

/// Kernels for the MMD estimator. The Gaussian kernel is
/// `exp(-(a-b)^2 / (2 * bandwidth))` and the Laplace kernel
/// `exp(-|a-b| / bandwidth)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MmdKernel {
    Gaussian { bandwidth: f64 },
    Laplace { bandwidth: f64 },
}

impl MmdKernel {
    fn validate(&self) -> Result<()> {
        let bw = match self {
            MmdKernel::Gaussian { bandwidth } | MmdKernel::Laplace { bandwidth } => *bandwidth,
        };
        if !(bw.is_finite() && bw > 0.0) {
            return Err(Error::Config(format!(
                "kernel bandwidth must be positive and finite, got {bw}"
            )));
        }
        Ok(())
    }

    #[inline]
    fn eval(&self, a: f64, b: f64) -> f64 {
        match *self {
            MmdKernel::Gaussian { bandwidth } => {
                let d = a - b;
                (-d * d / (2.0 * bandwidth)).exp()
            }
            MmdKernel::Laplace { bandwidth } => (-(a - b).abs() / bandwidth).exp(),
        }
    }
}

/// Index pairs included in the MMD cross term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CrossTerm {
    /// Sum `k(y_i, z_j)` over all `(i, j)` pairs (the standard estimator).
    #[default]
    AllPairs,
    /// Drop the matched-index pairs `j = i` from the cross term while
    /// keeping the `2/n^2` normalization.
    ExcludeMatched,
}

/// Squared maximum mean discrepancy with unbiased within-sample terms:
///
/// `1/(n(n-1)) sum_{j != i} k(y_i, y_j) + 1/(n(n-1)) sum_{j != i} k(z_i, z_j)
///  - 2/n^2 sum k(y_i, z_j)`
///
/// with the cross term over all index pairs. Use [`mmd2_with`] to drop the
/// matched-index cross pairs instead.
pub fn mmd2(y: &[f64], z: &[f64], kernel: &MmdKernel) -> Result<f64> {
    mmd2_with(y, z, kernel, CrossTerm::AllPairs)
}

/// [`mmd2`] with an explicit cross-term convention.
pub fn mmd2_with(y: &[f64], z: &[f64], kernel: &MmdKernel, cross: CrossTerm) -> Result<f64> {
    validate_pair(y, z)?;
    kernel.validate()?;
    let n = y.len();
    if n < 2 {
        return Err(Error::DegenerateSample(
            "mmd2 needs at least two observations per sample".into(),
        ));
    }
    let within_y = double_sum_offdiag(n, |i, j| kernel.eval(y[i], y[j]));
    let within_z = double_sum_offdiag(n, |i, j| kernel.eval(z[i], z[j]));
    let cross_sum = match cross {
        CrossTerm::AllPairs => double_sum(n, |i, j| kernel.eval(y[i], z[j])),
        CrossTerm::ExcludeMatched => double_sum_offdiag(n, |i, j| kernel.eval(y[i], z[j])),
    };
    let nf = n as f64;
    Ok(within_y / (nf * (nf - 1.0)) + within_z / (nf * (nf - 1.0))
        - 2.0 * cross_sum / (nf * nf))
}

/// Nearest-neighbour estimate of the Kullback-Leibler divergence of the
/// distribution of `z` from the distribution of `y`:
///
/// `1/n sum_i ln( min_j |z_i - y_j| / min_{j != i} |z_i - z_j| ) + ln(n/(n-1))`.
///
/// Any zero nearest-neighbour distance (duplicate points within `z`, or a
/// `z` point coinciding with a `y` point) makes the estimate undefined and
/// is reported as an error.
pub fn kl_1nn(y: &[f64], z: &[f64]) -> Result<f64> {
    validate_pair(y, z)?;
    let n = z.len();
    if n < 2 {
        return Err(Error::DegenerateSample(
            "kl_1nn needs at least two observations per sample".into(),
        ));
    }
    let ys = sorted(y);
    let zs = sorted(z);

    let mut total = 0.0;
    for (s, &zi) in zs.iter().enumerate() {
        let self_nn = {
            let left = if s > 0 { zi - zs[s - 1] } else { f64::INFINITY };
            let right = if s + 1 < n {
                zs[s + 1] - zi
            } else {
                f64::INFINITY
            };
            left.min(right)
        };
        let other_nn = nearest(&ys, zi);
        if self_nn == 0.0 || other_nn == 0.0 {
            return Err(Error::DegenerateDistances(
                "zero nearest-neighbour distance".into(),
            ));
        }
        total += (other_nn / self_nn).ln();
    }
    Ok(total / n as f64 + (n as f64 / (n as f64 - 1.0)).ln())
}

fn nearest(sorted_xs: &[f64], v: f64) -> f64 {
    let k = sorted_xs.partition_point(|&x| x < v);
    let right = sorted_xs.get(k).map_or(f64::INFINITY, |x| (x - v).abs());
    let left = if k > 0 {
        (v - sorted_xs[k - 1]).abs()
    } else {
        f64::INFINITY
    };
    left.min(right)
}

fn double_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let row = |i: usize| (0..n).map(|j| f(i, j)).sum::<f64>();
    if n >= PAR_MIN {
        par_map_indexed(n, row).into_iter().sum()
    } else {
        (0..n).map(row).sum()
    }
}

fn double_sum_offdiag<F>(n: usize, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let row = |i: usize| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| f(i, j))
            .sum::<f64>()
    };
    if n >= PAR_MIN {
        par_map_indexed(n, row).into_iter().sum()
    } else {
        (0..n).map(row).sum()
    }
}

/// Median of all pairwise absolute differences within a sample; the default
/// MMD kernel bandwidth.
pub fn median_pairwise_distance(xs: &[f64]) -> Result<f64> {
    validate_one(xs)?;
    if xs.len() < 2 {
        return Err(Error::DegenerateSample(
            "pairwise distances need at least two observations".into(),
        ));
    }
    let mut dists = Vec::with_capacity(xs.len() * (xs.len() - 1) / 2);
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            dists.push((xs[i] - xs[j]).abs());
        }
    }
    let med = stats::median(&dists);
    if med <= 0.0 {
        return Err(Error::DegeneratePool(
            "median pairwise distance is zero".into(),
        ));
    }
    Ok(med)
}

/// A single discrepancy usable as a piece of a composite distance.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseDistance {
    Wasserstein1,
    CramerVonMises,
    Energy { p: u32 },
    Mmd { kernel: MmdKernel, cross: CrossTerm },
    Kl1nn,
}

impl BaseDistance {
    pub fn eval(&self, y: &[f64], z: &[f64]) -> Result<f64> {
        match self {
            BaseDistance::Wasserstein1 => wasserstein1(y, z),
            BaseDistance::CramerVonMises => cvm_distance(y, z),
            BaseDistance::Energy { p } => energy_distance(y, z, *p),
            BaseDistance::Mmd { kernel, cross } => mmd2_with(y, z, kernel, *cross),
            BaseDistance::Kl1nn => kl_1nn(y, z),
        }
    }
}

/// A weighted sum of base distances applied to aligned dataset pieces.
#[derive(Clone, Debug)]
pub struct CompositeDistance {
    parts: Vec<(BaseDistance, f64)>,
}

impl CompositeDistance {
    /// `parts` pairs each piece's distance with a strictly positive weight.
    pub fn new(parts: Vec<(BaseDistance, f64)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Config("composite distance has no parts".into()));
        }
        if parts.iter().any(|(_, w)| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config(
                "composite weights must be positive and finite".into(),
            ));
        }
        Ok(Self { parts })
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.parts.iter().map(|(_, w)| *w).collect()
    }

    /// Evaluates `sum_k w_k rho_k(y_k, z_k)` over aligned piece lists.
    pub fn eval(&self, y_pieces: &[&[f64]], z_pieces: &[&[f64]]) -> Result<f64> {
        if y_pieces.len() != self.parts.len() || z_pieces.len() != self.parts.len() {
            return Err(Error::LengthMismatch {
                left: y_pieces.len().max(z_pieces.len()),
                right: self.parts.len(),
            });
        }
        let mut total = 0.0;
        for (k, (dist, w)) in self.parts.iter().enumerate() {
            total += w * dist.eval(y_pieces[k], z_pieces[k])?;
        }
        Ok(total)
    }
}

/// Calibrates composite weights from pilot pools of per-piece distances
/// simulated at a central parameter value. With `robust = false` the weight
/// is `1 / sd(pool)`; with `robust = true` it is `1 / (1.4826 * MAD(pool))`.
/// A pool whose spread is zero cannot be normalized and is an error.
pub fn calibrate_weights(pools: &[Vec<f64>], robust: bool) -> Result<Vec<f64>> {
    if pools.is_empty() {
        return Err(Error::DegeneratePool("no pilot pools".into()));
    }
    pools
        .iter()
        .enumerate()
        .map(|(k, pool)| {
            if pool.len() < 2 || pool.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegeneratePool(format!(
                    "piece {k}: need at least two finite pilot distances"
                )));
            }
            let spread = if robust {
                1.4826 * stats::mad(pool)
            } else {
                stats::sample_sd(pool)
            };
            if !(spread.is_finite() && spread > 0.0) {
                return Err(Error::DegeneratePool(format!(
                    "piece {k}: zero spread in pilot pool"
                )));
            }
            Ok(1.0 / spread)
        })
        .collect()
}
