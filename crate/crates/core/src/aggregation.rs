//! Multi-depth token aggregation and the CLS / GAP baseline descriptors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interchange::{EmbeddingRecord, InterchangeError};

#[derive(Debug, Error)]
pub enum AggregationError {
    #[error(transparent)]
    InvalidRecord(#[from] InterchangeError),
    #[error("record {image_id:?}: layer {layer} out of range (record has {layers} layers)")]
    InvalidLayer {
        image_id: String,
        layer: usize,
        layers: usize,
    },
    #[error("record {image_id:?} carries no CLS token; re-extract with CLS enabled")]
    ClsAbsent { image_id: String },
}

/// Column-l2-normalized stack of every layer's spatial tokens (`l*n x d`).
///
/// Rows `i*n .. (i+1)*n` come from layer `i` (0-based). Stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedTokens {
    pub layers: usize,
    pub tokens: usize,
    pub dim: usize,
    data: Vec<f64>,
}

impl AggregatedTokens {
    /// Normalizes an arbitrary row-major `rows x dim` matrix. Zero columns stay zero.
    pub fn from_rows(layers: usize, tokens: usize, dim: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), layers * tokens * dim, "row-major payload size");
        let mut sq = vec![0.0f64; dim];
        for row in data.chunks_exact(dim) {
            for (s, v) in sq.iter_mut().zip(row) {
                *s += v * v;
            }
        }
        let inv: Vec<f64> = sq
            .iter()
            .map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 0.0 })
            .collect();
        for row in data.chunks_exact_mut(dim) {
            for (v, k) in row.iter_mut().zip(&inv) {
                *v *= k;
            }
        }
        Self {
            layers,
            tokens,
            dim,
            data,
        }
    }

    /// Wraps a row-major matrix verbatim, without normalizing it.
    pub fn from_raw(layers: usize, tokens: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), layers * tokens * dim, "row-major payload size");
        Self {
            layers,
            tokens,
            dim,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.layers * self.tokens
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn column_norm(&self, col: usize) -> f64 {
        (0..self.rows()).map(|r| self.get(r, col).powi(2)).sum::<f64>().sqrt()
    }
}

/// Stacks `X_1; ...; X_l` and l2-normalizes each of the `d` columns.
pub fn aggregate(record: &EmbeddingRecord) -> Result<AggregatedTokens, AggregationError> {
    record.validate()?;
    let data: Vec<f64> = record.data.iter().map(|&v| v as f64).collect();
    Ok(AggregatedTokens::from_rows(record.layers, record.tokens, record.dim, data))
}

/// Which layer(s) a GAP descriptor averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapLayer {
    #[default]
    Last,
    /// 0-based layer index.
    Index(usize),
    /// Mean over the tokens of every layer.
    All,
}

impl std::str::FromStr for GapLayer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "last" => Ok(GapLayer::Last),
            "all" => Ok(GapLayer::All),
            idx => idx
                .parse()
                .map(GapLayer::Index)
                .map_err(|_| format!("GAP layer must be `last`, `all` or an index, got {idx:?}")),
        }
    }
}

/// Global average pooling of the spatial tokens of the selected layer(s).
pub fn gap_descriptor(record: &EmbeddingRecord, layer: GapLayer) -> Result<Vec<f64>, AggregationError> {
    record.validate()?;
    let layers = match layer {
        GapLayer::Last => record.layers - 1..record.layers,
        GapLayer::Index(i) if i < record.layers => i..i + 1,
        GapLayer::Index(i) => {
            return Err(AggregationError::InvalidLayer {
                image_id: record.image_id.clone(),
                layer: i,
                layers: record.layers,
            })
        }
        GapLayer::All => 0..record.layers,
    };
    let count = (layers.len() * record.tokens) as f64;
    let mut sum = vec![0.0f64; record.dim];
    for l in layers {
        for token in record.layer(l).chunks_exact(record.dim) {
            for (s, &v) in sum.iter_mut().zip(token) {
                *s += v as f64;
            }
        }
    }
    Ok(sum.into_iter().map(|s| s / count).collect())
}

/// The final-layer CLS token kept by the extractor.
pub fn cls_descriptor(record: &EmbeddingRecord) -> Result<Vec<f64>, AggregationError> {
    record.validate()?;
    record
        .cls
        .as_ref()
        .map(|cls| cls.iter().map(|&v| v as f64).collect())
        .ok_or_else(|| AggregationError::ClsAbsent {
            image_id: record.image_id.clone(),
        })
}
