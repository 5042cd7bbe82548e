use super::{check_fit, Classifier, ClassifierError, LabeledSet, Model, SavedModel};

/// 1-nearest-neighbor under the Euclidean distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct KnnClassifier;

/// The training set, stored verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestNeighborModel {
    pub train: LabeledSet,
}

impl NearestNeighborModel {
    pub fn fit(train: &LabeledSet) -> Result<Self, ClassifierError> {
        check_fit(train, 1)?;
        Ok(Self { train: train.clone() })
    }

    /// Index of the closest training sample; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, row) in self.train.rows().enumerate() {
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best.0
    }
}

impl Model for NearestNeighborModel {
    fn predict(&self, x: &[f64]) -> usize {
        self.train.labels()[self.nearest(x)]
    }

    fn dim(&self) -> usize {
        self.train.dim()
    }

    fn snapshot(&self) -> SavedModel {
        SavedModel::Knn(self.clone())
    }
}

impl Classifier for KnnClassifier {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn fit(&self, train: &LabeledSet) -> Result<Box<dyn Model>, ClassifierError> {
        Ok(Box::new(NearestNeighborModel::fit(train)?))
    }
}
