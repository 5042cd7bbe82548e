//! VORTEX: orderless, randomized encodings of multi-depth vision-transformer
//! token embeddings for texture recognition.
//!
//! The pipeline reads per-layer spatial tokens from a VTE file
//! ([`interchange`]), stacks and column-normalizes them ([`aggregation`]),
//! fits `m` randomized autoencoders with fixed LCG encoders ([`prng`],
//! [`rae`]) and sums their decoder weights into one `d`-dimensional
//! descriptor. Descriptors are classified with 1-NN, shrinkage LDA or a
//! linear SVM ([`classifiers`]) under dataset split protocols ([`bench`]).
//!
//! Descriptor strategies and classifiers are selected by name through
//! [`extractors::extractor_registry`] and [`classifiers::classifier_registry`].

pub mod aggregation;
pub mod bench;
pub mod classifiers;
pub mod extractors;
pub mod interchange;
pub mod prng;
pub mod rae;
pub mod registry;

pub use aggregation::{aggregate, cls_descriptor, gap_descriptor, AggregatedTokens, GapLayer};
pub use interchange::{DescriptorRecord, EmbeddingRecord, SplitManifest};
pub use prng::{lcg_stream, synthesize_encoder, EncoderWeights, SeedMode};
pub use rae::{encode_forward, solve_decoder, vortex_encode, vortex_encode_with, RaeDecoder, VortexConfig, VortexDescriptor};
