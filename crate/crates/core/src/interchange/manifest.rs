//! Dataset split manifests.
//!
//! A manifest is a JSON document:
//!
//! ```json
//! {
//!   "dataset_name": "Outex13",
//!   "class_names": ["c000", "c001"],
//!   "labels": { "img_0001": "c000", "img_0002": "c001" },
//!   "protocol": { "kind": "random-k-fold", "k": 10, "seed": 7 },
//!   "folds": [ { "fold_id": 0, "train_ids": ["img_0001"], "test_ids": ["img_0002"] } ]
//! }
//! ```
//!
//! `protocol.kind` is one of `single-split`, `k-fold` (with `k`) or
//! `random-k-fold` (with `k` and the `seed` used to draw the folds). Folds are
//! always stored explicitly, so evaluation never re-randomizes them.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed manifest: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("fold {fold_id}: id {id:?} is in both train and test")]
    Overlap { fold_id: usize, id: String },
    #[error("id {id:?} references unknown class {class:?}")]
    UnknownClass { id: String, class: String },
    #[error("fold {fold_id}: id {id:?} has no class label")]
    Unlabeled { fold_id: usize, id: String },
    #[error("fold {fold_id}: id {id:?} is listed twice")]
    Duplicate { fold_id: usize, id: String },
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Protocol {
    SingleSplit,
    KFold { k: usize },
    RandomKFold { k: usize, seed: u64 },
}

impl Protocol {
    pub fn expected_folds(&self) -> usize {
        match *self {
            Protocol::SingleSplit => 1,
            Protocol::KFold { k } | Protocol::RandomKFold { k, .. } => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub fold_id: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl Fold {
    /// Short content hash of the fold membership, used to show that several
    /// runs evaluated the same split.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (tag, ids) in [("train", &self.train_ids), ("test", &self.test_ids)] {
            h.update(tag.as_bytes());
            for id in ids {
                h.update((id.len() as u32).to_le_bytes());
                h.update(id.as_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Serialize, Deserialize)]
struct RawManifest {
    dataset_name: String,
    class_names: Vec<String>,
    labels: BTreeMap<String, String>,
    protocol: Protocol,
    folds: Vec<Fold>,
}

/// A validated manifest: class indices are resolved and folds are disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub dataset_name: String,
    pub class_names: Vec<String>,
    /// image id -> class index into `class_names`
    pub labels: BTreeMap<String, usize>,
    pub protocol: Protocol,
    pub folds: Vec<Fold>,
}

impl SplitManifest {
    pub fn new(
        dataset_name: impl Into<String>,
        class_names: Vec<String>,
        labels: BTreeMap<String, usize>,
        protocol: Protocol,
        folds: Vec<Fold>,
    ) -> Result<Self, ManifestError> {
        let m = Self {
            dataset_name: dataset_name.into(),
            class_names,
            labels,
            protocol,
            folds,
        };
        m.validate()?;
        Ok(m)
    }

    /// Stratified random k-fold split, materialized once from `seed`.
    ///
    /// Ids of each class are sorted, shuffled with a ChaCha8 stream seeded by
    /// `seed`, and dealt round-robin over the folds (continuing the deal
    /// across classes so fold sizes differ by at most one).
    pub fn random_k_fold(
        dataset_name: impl Into<String>,
        class_names: Vec<String>,
        labels: BTreeMap<String, usize>,
        k: usize,
        seed: u64,
    ) -> Result<Self, ManifestError> {
        if k < 2 {
            return Err(ManifestError::Invalid(format!("k-fold needs k >= 2, got {k}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buckets: Vec<Vec<String>> = vec![Vec::new(); k];
        let mut dealt = 0usize;
        for class in 0..class_names.len() {
            // BTreeMap iteration is already sorted by id.
            let mut ids: Vec<&String> = labels.iter().filter(|(_, &c)| c == class).map(|(id, _)| id).collect();
            ids.shuffle(&mut rng);
            for id in ids {
                buckets[dealt % k].push(id.clone());
                dealt += 1;
            }
        }
        let folds = (0..k)
            .map(|f| Fold {
                fold_id: f,
                train_ids: (0..k).filter(|&o| o != f).flat_map(|o| buckets[o].iter().cloned()).collect(),
                test_ids: buckets[f].clone(),
            })
            .collect();
        Self::new(dataset_name, class_names, labels, Protocol::RandomKFold { k, seed }, folds)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.class_names.is_empty() {
            return Err(ManifestError::Invalid("no classes".into()));
        }
        let mut names = HashSet::new();
        for name in &self.class_names {
            if !names.insert(name) {
                return Err(ManifestError::Invalid(format!("class {name:?} is listed twice")));
            }
        }
        for (id, &class) in &self.labels {
            if class >= self.class_names.len() {
                return Err(ManifestError::UnknownClass {
                    id: id.clone(),
                    class: class.to_string(),
                });
            }
        }
        if self.folds.len() != self.protocol.expected_folds() {
            return Err(ManifestError::Invalid(format!(
                "protocol {:?} expects {} folds, manifest has {}",
                self.protocol,
                self.protocol.expected_folds(),
                self.folds.len()
            )));
        }
        for fold in &self.folds {
            if fold.train_ids.is_empty() || fold.test_ids.is_empty() {
                return Err(ManifestError::Invalid(format!(
                    "fold {} has an empty train or test list",
                    fold.fold_id
                )));
            }
            let mut train = HashSet::with_capacity(fold.train_ids.len());
            for id in &fold.train_ids {
                self.check_labeled(fold.fold_id, id)?;
                if !train.insert(id.as_str()) {
                    return Err(ManifestError::Duplicate {
                        fold_id: fold.fold_id,
                        id: id.clone(),
                    });
                }
            }
            let mut test = HashSet::with_capacity(fold.test_ids.len());
            for id in &fold.test_ids {
                self.check_labeled(fold.fold_id, id)?;
                if train.contains(id.as_str()) {
                    return Err(ManifestError::Overlap {
                        fold_id: fold.fold_id,
                        id: id.clone(),
                    });
                }
                if !test.insert(id.as_str()) {
                    return Err(ManifestError::Duplicate {
                        fold_id: fold.fold_id,
                        id: id.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_labeled(&self, fold_id: usize, id: &str) -> Result<(), ManifestError> {
        if self.labels.contains_key(id) {
            Ok(())
        } else {
            Err(ManifestError::Unlabeled {
                fold_id,
                id: id.to_string(),
            })
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn label(&self, id: &str) -> Option<usize> {
        self.labels.get(id).copied()
    }

    /// Every id referenced by any fold, sorted and deduplicated.
    pub fn referenced_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .folds
            .iter()
            .flat_map(|f| f.train_ids.iter().chain(&f.test_ids).cloned())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        let raw: RawManifest = serde_json::from_str(text)?;
        let index: BTreeMap<&str, usize> = raw
            .class_names
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut labels = BTreeMap::new();
        for (id, class) in &raw.labels {
            let &c = index.get(class.as_str()).ok_or_else(|| ManifestError::UnknownClass {
                id: id.clone(),
                class: class.clone(),
            })?;
            labels.insert(id.clone(), c);
        }
        Self::new(raw.dataset_name, raw.class_names, labels, raw.protocol, raw.folds)
    }

    pub fn to_json(&self) -> String {
        let raw = RawManifest {
            dataset_name: self.dataset_name.clone(),
            class_names: self.class_names.clone(),
            labels: self
                .labels
                .iter()
                .map(|(id, &c)| (id.clone(), self.class_names[c].clone()))
                .collect(),
            protocol: self.protocol,
            folds: self.folds.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serializes")
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<SplitManifest, ManifestError> {
    SplitManifest::from_json(&fs::read_to_string(path)?)
}

pub fn save_manifest(manifest: &SplitManifest, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    fs::write(path, manifest.to_json())?;
    Ok(())
}
