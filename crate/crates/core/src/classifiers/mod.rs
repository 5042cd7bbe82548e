//! Linear classifiers trained on image descriptors.
//!
//! Every classifier implements [`Classifier`]; fitting yields a boxed
//! [`Model`]. [`classifier_registry`] exposes them by name (`knn`, `lda`,
//! `svm`) so the evaluation harness and the CLI can select one at run time.

mod knn;
mod lda;
mod persist;
mod svm;

pub use knn::{KnnClassifier, NearestNeighborModel};
pub use lda::{ledoit_wolf, LdaClassifier, LdaModel};
pub use persist::{load_model, read_model, save_model, write_model, SavedModel, VTM_MAGIC, VTM_VERSION};
pub use svm::{primal_objective, solve_binary, BinarySvm, LinearSvmClassifier, LinearSvmModel, MulticlassScheme, SvmConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::Registry;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("feature dimension must be positive")]
    ZeroDimension,
    #[error("{0}")]
    Shape(String),
    #[error("non-finite feature in sample {0}")]
    NonFinite(usize),
    #[error("SVM for {problem} did not converge in {iterations} epochs (relative duality gap {gap:.3e})")]
    NotConverged {
        problem: String,
        iterations: usize,
        gap: f64,
    },
    #[error("covariance estimate is not positive definite")]
    NotPositiveDefinite,
    #[error("model file: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-major `N x d` feature matrix with one class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledSet {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self, ClassifierError> {
        if dim == 0 {
            return Err(ClassifierError::ZeroDimension);
        }
        if features.len() != dim * labels.len() {
            return Err(ClassifierError::Shape(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite(pos / dim));
        }
        Ok(Self { dim, features, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self, ClassifierError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(ClassifierError::Shape(format!(
                "sample {bad} has {} features, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(dim, rows.concat(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Distinct labels present, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn map_features(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let features = self.rows().flat_map(f).collect();
        Self {
            dim: self.dim,
            features,
            labels: self.labels.clone(),
        }
    }
}

/// A fitted, immutable classifier.
pub trait Model: Send + Sync {
    /// Predicted class index for one feature vector.
    fn predict(&self, x: &[f64]) -> usize;
    fn dim(&self) -> usize;
    /// Serializable snapshot of the model.
    fn snapshot(&self) -> SavedModel;
}

/// A classification strategy.
pub trait Classifier: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, train: &LabeledSet) -> Result<Box<dyn Model>, ClassifierError>;
}

/// Fraction of `test` samples whose predicted class matches the label.
pub fn accuracy(model: &dyn Model, test: &LabeledSet) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    let correct = test
        .rows()
        .zip(test.labels())
        .filter(|(x, &y)| model.predict(x) == y)
        .count();
    correct as f64 / test.len() as f64
}

/// Per-feature z-scoring with statistics from the training set. Constant
/// features keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &LabeledSet) -> Self {
        let n = train.len().max(1) as f64;
        let d = train.dim();
        let mut mean = vec![0.0; d];
        for row in train.rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in train.rows() {
            var.iter_mut()
                .zip(row.iter().zip(&mean))
                .for_each(|(s, (v, m))| *s += (v - m) * (v - m));
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Settings shared by every classifier factory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub svm: SvmConfig,
}

pub type ClassifierRegistry = Registry<ClassifierConfig, dyn Classifier>;

/// `knn` (1-NN), `lda` (Ledoit-Wolf shrinkage) and `svm` (linear, C = 1).
pub fn classifier_registry() -> ClassifierRegistry {
    let mut r = ClassifierRegistry::new("classifier");
    r.register("knn", |_| Box::new(KnnClassifier));
    r.register("lda", |_| Box::new(LdaClassifier));
    r.register("svm", |c: &ClassifierConfig| Box::new(LinearSvmClassifier::new(c.svm.clone())));
    r
}

pub(crate) fn check_fit(train: &LabeledSet, min_classes: usize) -> Result<Vec<usize>, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let classes = train.classes();
    if classes.len() < min_classes {
        return Err(ClassifierError::TooFewClasses(classes.len()));
    }
    Ok(classes)
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}
