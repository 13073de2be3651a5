//! Parameter vectors, box priors, the bounded/unbounded reparameterization
//! used by the sampler, and deterministic seed derivation.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A univariate dataset: at least one observation, all values finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateSample("empty sample".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateSample("non-finite observation".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// Elementwise natural log, for analyses on log-transformed data.
    /// Fails if any observation is not strictly positive.
    pub fn ln(&self) -> Result<Self> {
        if self.0.iter().any(|&v| v <= 0.0) {
            return Err(Error::DegenerateSample(
                "log transform requires strictly positive data".into(),
            ));
        }
        Sample::new(self.0.iter().map(|v| v.ln()).collect())
    }
}

/// A point in parameter space with named components.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    names: Arc<[String]>,
    values: Vec<f64>,
}

impl ParamVector {
    /// Builds a vector from `(name, value)` pairs.
    pub fn new(pairs: &[(&str, f64)]) -> Self {
        let names: Arc<[String]> = pairs.iter().map(|(n, _)| n.to_string()).collect();
        let values = pairs.iter().map(|(_, v)| *v).collect();
        Self { names, values }
    }

    pub(crate) fn from_parts(names: Arc<[String]>, values: Vec<f64>) -> Self {
        debug_assert_eq!(names.len(), values.len());
        Self { names, values }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

/// Independent uniform prior on a finite box, one `(name, lower, upper)`
/// component per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxPrior {
    names: Arc<[String]>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxPrior {
    pub fn new(components: &[(&str, f64, f64)]) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("prior has no components".into()));
        }
        for (name, lo, hi) in components {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Config(format!(
                    "prior component {name:?} needs finite bounds with lower < upper, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Self {
            names: components.iter().map(|(n, _, _)| n.to_string()).collect(),
            lower: components.iter().map(|(_, lo, _)| *lo).collect(),
            upper: components.iter().map(|(_, _, hi)| *hi).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.lower[i], self.upper[i])
    }

    /// Builds a [`ParamVector`] over this prior's components.
    pub fn param(&self, values: Vec<f64>) -> ParamVector {
        assert_eq!(values.len(), self.dim(), "parameter dimension mismatch");
        ParamVector::from_parts(self.names.clone(), values)
    }

    /// Midpoint of the box.
    pub fn midpoint(&self) -> ParamVector {
        let values = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect();
        self.param(values)
    }

    /// Log prior density: constant inside the box, `-inf` outside.
    pub fn log_density(&self, theta: &ParamVector) -> f64 {
        let inside = theta
            .values()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| v > lo && v < hi);
        if inside {
            -self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(lo, hi)| (hi - lo).ln())
                .sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Draws a parameter vector uniformly from the box.
    pub fn sample(&self, seed: &SeedSpec) -> ParamVector {
        let mut rng = seed.rng();
        self.sample_rng(&mut rng)
    }

    pub fn sample_rng<R: Rng>(&self, rng: &mut R) -> ParamVector {
        let values = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| rng.random_range(*lo..*hi))
            .collect();
        self.param(values)
    }

    /// Maps a point strictly inside the box to the unbounded sampling space
    /// via a componentwise logit. Returns the transformed point together
    /// with the log-Jacobian of the *inverse* map evaluated there, so that
    /// a Metropolis-Hastings chain on the unbounded space targets the
    /// bounded-space posterior.
    pub fn to_unbounded(&self, theta: &ParamVector) -> Result<(Vec<f64>, f64)> {
        if theta.len() != self.dim() {
            return Err(Error::LengthMismatch {
                left: theta.len(),
                right: self.dim(),
            });
        }
        let mut x = Vec::with_capacity(self.dim());
        for (i, &v) in theta.values().iter().enumerate() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(v > lo && v < hi) {
                return Err(Error::OutOfBounds {
                    name: self.names[i].clone(),
                    value: v,
                    lower: lo,
                    upper: hi,
                });
            }
            x.push((v - lo).ln() - (hi - v).ln());
        }
        let jac = self.log_jacobian(&x);
        Ok((x, jac))
    }

    /// Inverse of [`BoxPrior::to_unbounded`]: maps any point of the
    /// unbounded space to a point strictly inside the box.
    pub fn from_unbounded(&self, x: &[f64]) -> ParamVector {
        assert_eq!(x.len(), self.dim(), "parameter dimension mismatch");
        let values = x
            .iter()
            .enumerate()
            .map(|(i, &xi)| {
                let (lo, hi) = (self.lower[i], self.upper[i]);
                let v = lo + (hi - lo) * sigmoid(xi);
                // The sigmoid saturates in floating point; nudge strictly
                // inside so bound invariants hold for all finite x.
                if v <= lo {
                    lo.next_up()
                } else if v >= hi {
                    hi.next_down()
                } else {
                    v
                }
            })
            .collect();
        self.param(values)
    }

    /// Log-Jacobian of [`BoxPrior::from_unbounded`] at `x`:
    /// `sum_i log(hi_i - lo_i) + log sigmoid(x_i) + log sigmoid(-x_i)`.
    pub fn log_jacobian(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "parameter dimension mismatch");
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                (self.upper[i] - self.lower[i]).ln() - softplus(xi) - softplus(-xi)
            })
            .sum()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Deterministic seeding: a master seed plus a `(replicate, chain,
/// proposal)` stream id. Every random stream in the pipeline is keyed by a
/// `SeedSpec`, so runs replay bit-identically from the master seed alone,
/// independently of thread scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master: u64,
    pub replicate: u64,
    pub chain: u64,
    pub proposal: u64,
}

impl SeedSpec {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            replicate: 0,
            chain: 0,
            proposal: 0,
        }
    }

    pub fn with_replicate(mut self, replicate: u64) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn with_chain(mut self, chain: u64) -> Self {
        self.chain = chain;
        self
    }

    pub fn with_proposal(mut self, proposal: u64) -> Self {
        self.proposal = proposal;
        self
    }

    /// Derives an independent child stream, used to fan out inner
    /// simulation batches below the proposal level.
    pub fn child(&self, index: u64) -> SeedSpec {
        let words = squeeze(&[
            self.master,
            self.replicate,
            self.chain,
            self.proposal,
            0x6368696c64, // tag distinguishing child derivation from rng()
            index,
        ]);
        SeedSpec::new(words[0])
    }

    /// Counter-based RNG for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let words = squeeze(&[self.master, self.replicate, self.chain, self.proposal]);
        let mut key = [0u8; 32];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn squeeze(parts: &[u64]) -> [u64; 4] {
    // Chain the full avalanche through every field so that distinct
    // (master, replicate, chain, proposal) tuples cannot collide by linear
    // cancellation across positions.
    let mut state: u64 = 0xA076_1D64_78BD_642F;
    for &p in parts {
        let mut s = state ^ p;
        state = splitmix64(&mut s);
    }
    let mut out = [0u64; 4];
    for w in &mut out {
        *w = splitmix64(&mut state);
    }
    out
}
