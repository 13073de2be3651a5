//! Stereological extremes: a Poisson number of inclusions whose sizes are
//! threshold exceedances from a generalised Pareto distribution.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::core::SeedSpec;
use crate::{Error, Result};

/// Inclusion-size detection threshold in microns; sizes are reported as
/// `v0 + exceedance`.
pub const STEREO_V0: f64 = 5.0;

/// Parameters: Poisson rate of the inclusion count and the generalised
/// Pareto scale/shape of the size exceedances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoParams {
    /// Poisson rate of the inclusion count; must be positive.
    pub lambda: f64,
    /// Generalised Pareto scale; must be positive.
    pub scale: f64,
    /// Generalised Pareto shape.
    pub shape: f64,
}

impl StereoParams {
    pub fn new(lambda: f64, scale: f64, shape: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("scale", scale), ("shape", shape)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("stereological {name} = {v} is not finite")));
            }
        }
        if lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!("inclusion rate lambda = {lambda} must be positive")));
        }
        if scale <= 0.0 {
            return Err(Error::InvalidParameter(format!("size scale = {scale} must be positive")));
        }
        Ok(Self { lambda, scale, shape })
    }
}

/// A dataset of inclusion sizes; the count is part of the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoData {
    sizes: Vec<f64>,
}

impl StereoData {
    /// Validates that every size is finite and exceeds the detection
    /// threshold.
    pub fn new(sizes: Vec<f64>) -> Result<Self> {
        for &s in &sizes {
            if !s.is_finite() || s <= STEREO_V0 {
                return Err(Error::DegenerateSample(format!(
                    "inclusion size {s} must be finite and exceed the threshold {STEREO_V0}"
                )));
            }
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Reads the count-header format: first line the count, then one size
    /// per line.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            message,
        };
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let count: usize = lines
            .next()
            .ok_or_else(|| parse_err("empty file".into()))?
            .parse()
            .map_err(|_| parse_err("first line must be the inclusion count".into()))?;
        let mut sizes = Vec::with_capacity(count);
        for line in lines {
            let v: f64 = line
                .parse()
                .map_err(|_| parse_err(format!("expected a size, got {line:?}")))?;
            sizes.push(v);
        }
        if sizes.len() != count {
            return Err(parse_err(format!(
                "count header says {count} but {} sizes follow",
                sizes.len()
            )));
        }
        Self::new(sizes)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "{}", self.sizes.len()).expect("write to string");
        for s in &self.sizes {
            writeln!(out, "{s}").expect("write to string");
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// One generalised Pareto exceedance via inverse transform:
/// `scale * (u^(-shape) - 1) / shape`, with the exponential limit at
/// `shape = 0`.
pub fn gpd_sample<R: Rng + ?Sized>(scale: f64, shape: f64, rng: &mut R) -> f64 {
    let u = loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            break v;
        }
    };
    if shape == 0.0 {
        -scale * u.ln()
    } else {
        scale / shape * (-shape * u.ln()).exp_m1()
    }
}

/// Draws an inclusion count from Poisson(`lambda`) and that many sizes
/// `v0 + GPD(scale, shape)`.
pub fn stereo_simulate(theta: &StereoParams, seed: &SeedSpec) -> Result<StereoData> {
    let mut rng = seed.rng();
    let count_dist = Poisson::new(theta.lambda).expect("positive rate");
    let count = count_dist.sample(&mut rng) as usize;
    let sizes = (0..count)
        .map(|_| STEREO_V0 + gpd_sample(theta.scale, theta.shape, &mut rng))
        .collect();
    StereoData::new(sizes)
}
