//! Image-level descriptor strategies over an [`EmbeddingRecord`].
//!
//! * `vortex`: the randomized-autoencoder soup over all layers' tokens.
//! * `cls`: the final-layer CLS token kept by the extractor.
//! * `gap`: global average pooling of spatial tokens (last layer by default).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{cls_descriptor, gap_descriptor, AggregationError, GapLayer};
use crate::interchange::EmbeddingRecord;
use crate::rae::{vortex_encode_with, RaeError, VortexConfig};
use crate::registry::Registry;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Rae(#[from] RaeError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
}

impl ExtractError {
    pub fn is_cls_absent(&self) -> bool {
        matches!(self, ExtractError::Aggregation(AggregationError::ClsAbsent { .. }))
    }
}

pub trait Extractor: Send + Sync {
    /// Registry key, e.g. `vortex`.
    fn name(&self) -> &'static str;
    /// Name with parameters, e.g. `vortex(m=16)`.
    fn label(&self) -> String {
        self.name().to_string()
    }
    fn describe(&self, record: &EmbeddingRecord) -> Result<Vec<f64>, ExtractError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub vortex: VortexConfig,
    pub gap_layer: GapLayer,
}

#[derive(Debug, Clone, Copy)]
pub struct VortexExtractor(pub VortexConfig);

impl Extractor for VortexExtractor {
    fn name(&self) -> &'static str {
        "vortex"
    }

    fn label(&self) -> String {
        format!("vortex(m={})", self.0.m)
    }

    fn describe(&self, record: &EmbeddingRecord) -> Result<Vec<f64>, ExtractError> {
        Ok(vortex_encode_with(record, &self.0)?.features)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClsExtractor;

impl Extractor for ClsExtractor {
    fn name(&self) -> &'static str {
        "cls"
    }

    fn describe(&self, record: &EmbeddingRecord) -> Result<Vec<f64>, ExtractError> {
        Ok(cls_descriptor(record)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GapExtractor(pub GapLayer);

impl Extractor for GapExtractor {
    fn name(&self) -> &'static str {
        "gap"
    }

    fn label(&self) -> String {
        match self.0 {
            GapLayer::Last => "gap".into(),
            GapLayer::All => "gap(all)".into(),
            GapLayer::Index(i) => format!("gap(layer={i})"),
        }
    }

    fn describe(&self, record: &EmbeddingRecord) -> Result<Vec<f64>, ExtractError> {
        Ok(gap_descriptor(record, self.0)?)
    }
}

pub type ExtractorRegistry = Registry<ExtractorConfig, dyn Extractor>;

pub fn extractor_registry() -> ExtractorRegistry {
    let mut r = ExtractorRegistry::new("extractor");
    r.register("vortex", |c: &ExtractorConfig| Box::new(VortexExtractor(c.vortex)));
    r.register("cls", |_| Box::new(ClsExtractor));
    r.register("gap", |c: &ExtractorConfig| Box::new(GapExtractor(c.gap_layer)));
    r
}
