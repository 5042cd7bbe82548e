//! Randomized autoencoders over aggregated tokens and the encoder soup.
//!
//! Each RAE projects every token row of `chi` through a fixed LCG encoder,
//! `g = sigmoid(chi W)`, and fits the decoder `f` that best reconstructs
//! `chi` from `g` in the least-squares sense. The decoder weights are the
//! image representation; summing `m` of them gives the VORTEX descriptor.
//!
//! With a single hidden unit and more than one token, `g g^T` is rank one,
//! so the decoder is computed as the Moore-Penrose solution `f = g^+ chi`,
//! which is `(g^T g)^{-1} g^T chi` whenever `g` has full column rank.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{aggregate, AggregatedTokens, AggregationError};
use crate::interchange::EmbeddingRecord;
use crate::prng::{synthesize_encoder_with, EncoderWeights, PrngError, SeedMode};

#[derive(Debug, Error)]
pub enum RaeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("soup size m must be at least 1")]
    EmptySoup,
    #[error("ridge penalty must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Prng(#[from] PrngError),
}

/// Encoder settings. The defaults are `m = 16`, one hidden unit, literal
/// seeds and no ridge term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VortexConfig {
    pub m: usize,
    pub hidden: usize,
    pub seed_mode: SeedMode,
    pub ridge: f64,
}

impl Default for VortexConfig {
    fn default() -> Self {
        Self {
            m: 16,
            hidden: 1,
            seed_mode: SeedMode::Literal,
            ridge: 0.0,
        }
    }
}

impl VortexConfig {
    pub fn with_m(m: usize) -> Self {
        Self { m, ..Self::default() }
    }

    fn check(&self) -> Result<(), RaeError> {
        if self.m == 0 {
            return Err(RaeError::EmptySoup);
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(RaeError::InvalidRidge(self.ridge));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Hidden activations `g = sigmoid(chi W)`, an `l*n x q` matrix.
pub fn encode_forward(chi: &AggregatedTokens, encoder: &EncoderWeights) -> Result<DMatrix<f64>, RaeError> {
    if chi.dim != encoder.dim() {
        return Err(RaeError::Dimension(format!(
            "tokens have d = {}, encoder expects d = {}",
            chi.dim,
            encoder.dim()
        )));
    }
    let q = encoder.hidden();
    let mut g = DMatrix::zeros(chi.rows(), q);
    for j in 0..q {
        let w = encoder.column(j);
        for r in 0..chi.rows() {
            let z: f64 = chi.row(r).iter().zip(w).map(|(a, b)| a * b).sum();
            g[(r, j)] = sigmoid(z);
        }
    }
    Ok(g)
}

/// Learned decoder `f` (`q x d`) of one RAE.
#[derive(Debug, Clone, PartialEq)]
pub struct RaeDecoder {
    pub seed: u64,
    pub weights: DMatrix<f64>,
    /// Numerical rank of `g` under the singular-value cutoff.
    pub rank: usize,
    pub cutoff: f64,
}

impl RaeDecoder {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.weights.nrows()
    }

    /// Row-major flattening; for `q = 1` this is `(nu_1, ..., nu_d)`.
    pub fn flattened(&self) -> Vec<f64> {
        self.weights.transpose().as_slice().to_vec()
    }
}

/// Singular values at or below `max(rows, d) * eps * sigma_max` are treated as zero.
pub fn singular_value_cutoff(rows: usize, dim: usize, sigma_max: f64) -> f64 {
    rows.max(dim) as f64 * f64::EPSILON * sigma_max
}

/// Minimum-norm least-squares decoder `f = g^+ chi`.
pub fn solve_decoder(g: &DMatrix<f64>, chi: &AggregatedTokens) -> Result<RaeDecoder, RaeError> {
    solve_decoder_ridge(g, chi, 0.0)
}

/// Least-squares decoder with an optional ridge penalty `lambda * ||f||^2`.
/// `lambda = 0` gives the pseudo-inverse solution.
pub fn solve_decoder_ridge(g: &DMatrix<f64>, chi: &AggregatedTokens, lambda: f64) -> Result<RaeDecoder, RaeError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RaeError::InvalidRidge(lambda));
    }
    let rows = chi.rows();
    let q = g.ncols();
    if g.nrows() != rows {
        return Err(RaeError::Dimension(format!(
            "g has {} rows, tokens have {rows}",
            g.nrows()
        )));
    }
    if q == 0 || rows < q {
        return Err(RaeError::Dimension(format!(
            "need at least q = {q} >= 1 token rows, got {rows}"
        )));
    }
    let decoder = if q == 1 {
        solve_single_unit(g.as_slice(), chi, lambda)
    } else {
        solve_svd(g, chi, lambda)
    };
    if decoder.is_rank_deficient() {
        log::warn!(
            "rank-deficient hidden activations (rank {} < q = {q}); using pseudo-inverse with cutoff {:.3e}",
            decoder.rank,
            decoder.cutoff
        );
    }
    Ok(decoder)
}

fn solve_single_unit(g: &[f64], chi: &AggregatedTokens, lambda: f64) -> RaeDecoder {
    let d = chi.dim;
    let gram: f64 = g.iter().map(|v| v * v).sum();
    let sigma = gram.sqrt();
    let cutoff = singular_value_cutoff(chi.rows(), d, sigma);
    let mut f = vec![0.0f64; d];
    let rank = if sigma > cutoff { 1 } else { 0 };
    if rank == 1 {
        for (r, &gr) in g.iter().enumerate() {
            for (fj, &x) in f.iter_mut().zip(chi.row(r)) {
                *fj += gr * x;
            }
        }
        let denom = gram + lambda;
        for fj in &mut f {
            *fj /= denom;
        }
    }
    RaeDecoder {
        seed: 0,
        weights: DMatrix::from_vec(1, d, f),
        rank,
        cutoff,
    }
}

fn solve_svd(g: &DMatrix<f64>, chi: &AggregatedTokens, lambda: f64) -> RaeDecoder {
    let rows = chi.rows();
    let d = chi.dim;
    let x = DMatrix::from_row_slice(rows, d, chi.as_slice());
    let svd = g.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let sigma_max = svd.singular_values.max();
    let cutoff = singular_value_cutoff(rows, d, sigma_max);
    let mut rank = 0;
    // f = V diag(s / (s^2 + lambda)) U^T chi
    let ut_x = u.transpose() * &x;
    let mut scaled = DMatrix::zeros(ut_x.nrows(), d);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            rank += 1;
            let k = s / (s * s + lambda);
            scaled.row_mut(i).copy_from(&(ut_x.row(i) * k));
        }
    }
    RaeDecoder {
        seed: 0,
        weights: v_t.transpose() * scaled,
        rank,
        cutoff,
    }
}

/// The final image representation: the sum of `m` decoder weight vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexDescriptor {
    pub m: usize,
    pub features: Vec<f64>,
}

/// Encodes one record with `m` RAEs (seeds `1..=m`) and default settings.
pub fn vortex_encode(record: &EmbeddingRecord, m: usize) -> Result<VortexDescriptor, RaeError> {
    vortex_encode_with(record, &VortexConfig::with_m(m))
}

pub fn vortex_encode_with(record: &EmbeddingRecord, config: &VortexConfig) -> Result<VortexDescriptor, RaeError> {
    config.check()?;
    let chi = aggregate(record)?;
    let terms = soup_terms(&chi, config)?;
    Ok(VortexDescriptor {
        m: config.m,
        features: soup(&terms),
    })
}

/// Decoders `f_1, ..., f_m` for seeds `1..=m`.
pub fn soup_terms(chi: &AggregatedTokens, config: &VortexConfig) -> Result<Vec<RaeDecoder>, RaeError> {
    config.check()?;
    (1..=config.m as u64)
        .map(|k| {
            let encoder = synthesize_encoder_with(k, chi.dim, config.hidden, config.seed_mode)?;
            let g = encode_forward(chi, &encoder)?;
            let mut f = solve_decoder_ridge(&g, chi, config.ridge)?;
            f.seed = k;
            Ok(f)
        })
        .collect()
}

/// Sums decoder weights in seed order.
pub fn soup(terms: &[RaeDecoder]) -> Vec<f64> {
    let mut acc: Option<Vec<f64>> = None;
    for t in terms {
        let f = t.flattened();
        match acc.as_mut() {
            None => acc = Some(f),
            Some(a) => a.iter_mut().zip(&f).for_each(|(a, v)| *a += v),
        }
    }
    acc.unwrap_or_default()
}

/// Descriptors for several soup sizes from one pass over `max(m_values)`
/// encoders. Entry `i` equals `vortex_encode` with `m = m_values[i]`.
pub fn soup_prefixes(
    record: &EmbeddingRecord,
    config: &VortexConfig,
    m_values: &[usize],
) -> Result<Vec<VortexDescriptor>, RaeError> {
    let max_m = m_values.iter().copied().max().ok_or(RaeError::EmptySoup)?;
    if m_values.contains(&0) {
        return Err(RaeError::EmptySoup);
    }
    let chi = aggregate(record)?;
    let terms = soup_terms(&chi, &VortexConfig { m: max_m, ..*config })?;
    let mut running = Vec::with_capacity(max_m);
    let mut acc: Vec<f64> = Vec::new();
    for t in &terms {
        let f = t.flattened();
        if acc.is_empty() {
            acc = f;
        } else {
            acc.iter_mut().zip(&f).for_each(|(a, v)| *a += v);
        }
        running.push(acc.clone());
    }
    Ok(m_values
        .iter()
        .map(|&m| VortexDescriptor {
            m,
            features: running[m - 1].clone(),
        })
        .collect())
}
