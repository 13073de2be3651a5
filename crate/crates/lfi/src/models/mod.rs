//! The four benchmark generative models and their dataset file formats.
//!
//! Every simulator is a pure, deterministic function of its parameters and a
//! [`SeedSpec`](crate::core::SeedSpec): replicate- and proposal-level
//! parallelism is owned by callers, never by the simulators themselves.
//!
//! Dataset files are plain text. Scalar datasets (g-and-k draws, M/G/1
//! inter-departure times) store one observation per line. Inclusion-size
//! datasets ([`StereoData`]) store the count on the first line followed by
//! one size per line. Toad location matrices ([`ToadData`]) store one row
//! per day, whitespace-delimited, with `NA` marking a missing entry. Floats
//! are written in shortest round-trip form, so write-then-read is lossless.

pub mod gandk;
pub mod mg1;
pub mod stereo;
pub mod toad;

pub use gandk::{gandk_logpdf, gandk_loglik, gandk_quantile, gandk_simulate, GandKParams, GANDK_C};
pub use mg1::{mg1_simulate, Mg1Params};
pub use stereo::{gpd_sample, stereo_simulate, StereoData, StereoParams, STEREO_V0};
pub use toad::{
    stable_draw, stable_sample, toad_quantile_summaries, toad_simulate, toad_summarize, LagSummary,
    ToadData, ToadParams, ToadSummary, TOAD_LAGS, TOAD_RETURN_THRESHOLD,
};

use std::fmt::Write as _;
use std::path::Path;

use crate::core::Sample;
use crate::{Error, Result};

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads a scalar dataset: one finite observation per line, blank lines
/// ignored.
pub fn read_scalar_dataset(path: &Path) -> Result<Sample> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| parse_err(path, format!("line {}: expected a number, got {line:?}", lineno + 1)))?;
        values.push(v);
    }
    Sample::new(values)
}

/// Writes a scalar dataset in the format read by [`read_scalar_dataset`].
pub fn write_scalar_dataset(path: &Path, sample: &Sample) -> Result<()> {
    let mut out = String::new();
    for v in sample.values() {
        writeln!(out, "{v}").expect("write to string");
    }
    std::fs::write(path, out)?;
    Ok(())
}
