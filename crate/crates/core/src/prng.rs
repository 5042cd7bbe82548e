//! Deterministic encoder weights from the ZX81 linear congruential generator.
//!
//! The stream is `x_{t+1} = (75 x_t + 74) mod 65537` with `x_0 = 0`. Encoder
//! `k` draws `d * q` consecutive values starting after stream index `k`
//! (or `k * d * q` in [`SeedMode::Disjoint`]), fills `W` column-major,
//! standardizes all entries to zero mean and unit population variance, and
//! orthonormalizes the columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LCG_MULTIPLIER: u64 = 75;
pub const LCG_INCREMENT: u64 = 74;
pub const LCG_MODULUS: u64 = (1 << 16) + 1;
/// Cycle length of the stream starting from 0. The remaining residue,
/// 65536, is a fixed point of the map and is never visited.
pub const LCG_PERIOD: u64 = 1 << 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrngError {
    #[error("encoder shape must be positive (d = {d}, q = {q})")]
    EmptyShape { d: usize, q: usize },
    #[error("q = {q} hidden units exceeds input dimension d = {d}")]
    TooManyUnits { d: usize, q: usize },
    #[error("degenerate draw for seed {seed}: all {count} values are equal")]
    ZeroVariance { seed: u64, count: usize },
    #[error("degenerate draw for seed {seed}: columns are linearly dependent")]
    RankDeficient { seed: u64 },
}

/// Generator state; yields `x_1, x_2, ...` when started from `x_0 = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Lcg {
    x: u64,
}

impl Lcg {
    pub fn from_state(x: u64) -> Self {
        assert!(x < LCG_MODULUS, "LCG state {x} out of range");
        Self { x }
    }

    /// State after `index` steps from `x_0 = 0`, i.e. `x_index`.
    pub fn at_index(index: u64) -> Self {
        let mut g = Self::default();
        for _ in 0..index % LCG_PERIOD {
            g.step();
        }
        g
    }

    pub fn state(&self) -> u64 {
        self.x
    }

    pub fn step(&mut self) -> u64 {
        self.x = (LCG_MULTIPLIER * self.x + LCG_INCREMENT) % LCG_MODULUS;
        self.x
    }
}

impl Iterator for Lcg {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        Some(self.step())
    }
}

/// `x_{start+1}, ..., x_{start+count}` of the stream from `x_0 = 0`.
pub fn lcg_stream(start: u64, count: usize) -> Vec<u64> {
    Lcg::at_index(start).take(count).collect()
}

/// Where encoder `k` starts reading the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedMode {
    /// Start at stream index `k`; consecutive encoders share most draws.
    #[default]
    Literal,
    /// Start at stream index `k * d * q`; segments do not overlap.
    Disjoint,
}

impl SeedMode {
    pub fn start_index(self, seed: u64, d: usize, q: usize) -> u64 {
        match self {
            SeedMode::Literal => seed,
            SeedMode::Disjoint => seed * (d * q) as u64,
        }
    }
}

impl std::str::FromStr for SeedMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(SeedMode::Literal),
            "disjoint" => Ok(SeedMode::Disjoint),
            other => Err(format!("unknown seed mode {other:?} (expected literal or disjoint)")),
        }
    }
}

/// Fixed random projection `W_k` (`d x q`) of one randomized autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub seed: u64,
    pub weights: DMatrix<f64>,
}

impl EncoderWeights {
    /// Wraps an explicit matrix, e.g. for tests or externally supplied weights.
    pub fn from_matrix(seed: u64, weights: DMatrix<f64>) -> Self {
        Self { seed, weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.weights.ncols()
    }

    /// The single projection direction when `q = 1`.
    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.weights.as_slice()[j * d..(j + 1) * d]
    }
}

pub fn synthesize_encoder(seed: u64, d: usize, q: usize) -> Result<EncoderWeights, PrngError> {
    synthesize_encoder_with(seed, d, q, SeedMode::Literal)
}

pub fn synthesize_encoder_with(seed: u64, d: usize, q: usize, mode: SeedMode) -> Result<EncoderWeights, PrngError> {
    if d == 0 || q == 0 {
        return Err(PrngError::EmptyShape { d, q });
    }
    if q > d {
        return Err(PrngError::TooManyUnits { d, q });
    }
    let raw: Vec<f64> = lcg_stream(mode.start_index(seed, d, q), d * q)
        .into_iter()
        .map(|x| x as f64)
        .collect();
    let values = standardize(&raw).ok_or(PrngError::ZeroVariance { seed, count: d * q })?;
    let w = DMatrix::from_vec(d, q, values);
    let weights = orthonormalize(w).ok_or(PrngError::RankDeficient { seed })?;
    Ok(EncoderWeights { seed, weights })
}

/// Zero mean, unit population variance. `None` when all values are equal.
pub fn standardize(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return None;
    }
    let std = var.sqrt();
    Some(values.iter().map(|v| (v - mean) / std).collect())
}

/// Unit-norm column for `q = 1`; otherwise the thin-QR orthonormal factor,
/// with column signs chosen so that the diagonal of `R` is positive.
fn orthonormalize(w: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if w.ncols() == 1 {
        let norm = w.norm();
        return (norm > 0.0).then(|| w / norm);
    }
    let tol = w.nrows() as f64 * f64::EPSILON * w.norm();
    let qr = w.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        let rjj = r[(j, j)];
        if rjj.abs() <= tol {
            return None;
        }
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Some(q)
}
