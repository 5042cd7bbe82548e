//! Evaluation protocols: encode every image once, then fit and score a
//! classifier on each fold of a split manifest.

mod report;
mod synthetic;

pub use report::{mean_std, reports_to_csv, ComponentScore, ConfigEcho, RunReport, CSV_HEADER};
pub use synthetic::{generate_synthetic, SyntheticTextureSpec};

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::{
    accuracy, classifier_registry, Classifier, ClassifierConfig, ClassifierError, LabeledSet, Standardizer,
};
use crate::extractors::{extractor_registry, ExtractError, Extractor, ExtractorConfig};
use crate::interchange::{DescriptorRecord, InterchangeError, ManifestError, SplitManifest, VteIndex};
use crate::rae::{soup_prefixes, RaeError};
use crate::registry::UnknownStrategy;

/// Classifiers averaged by the soup-size ablation.
pub const ABLATION_CLASSIFIERS: [&str; 3] = ["knn", "lda", "svm"];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Interchange(#[from] InterchangeError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{count} manifest ids have no embedding record: {}", .shown.join(", "))]
    MissingRecords { count: usize, shown: Vec<String> },
    #[error("encoding {image_id:?}: {source}")]
    Extract {
        image_id: String,
        #[source]
        source: ExtractError,
    },
    #[error("fold {fold_id}: {source}")]
    Classifier {
        fold_id: usize,
        #[source]
        source: ClassifierError,
    },
    #[error(transparent)]
    UnknownStrategy(#[from] UnknownStrategy),
    #[error("{0}")]
    InvalidArgument(String),
}

/// Everything a protocol run needs besides the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub extractor: ExtractorConfig,
    pub classifier: ClassifierConfig,
    /// z-score features with training-fold statistics before fitting.
    pub standardize: bool,
}

impl BenchConfig {
    fn echo(&self, m: Option<usize>) -> ConfigEcho {
        ConfigEcho {
            m,
            hidden: self.extractor.vortex.hidden,
            seed_mode: self.extractor.vortex.seed_mode,
            ridge: self.extractor.vortex.ridge,
            gap_layer: self.extractor.gap_layer,
            svm_c: self.classifier.svm.c,
            svm_seed: self.classifier.svm.seed,
            standardize: self.standardize,
        }
    }
}

/// Descriptors keyed by image id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptorTable {
    map: HashMap<String, Vec<f64>>,
}

impl DescriptorTable {
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.map.get(id).map(Vec::as_slice)
    }

    pub fn insert(&mut self, id: String, features: Vec<f64>) {
        self.map.insert(id, features);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn from_records(records: impl IntoIterator<Item = DescriptorRecord>) -> Self {
        Self {
            map: records.into_iter().map(|r| (r.image_id, r.features)).collect(),
        }
    }
}

fn locate(index: &VteIndex, ids: &[String]) -> Result<Vec<usize>, BenchError> {
    let positions: HashMap<&str, usize> = index
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.image_id.as_str(), i))
        .collect();
    let mut missing = Vec::new();
    let found: Vec<usize> = ids
        .iter()
        .filter_map(|id| {
            let p = positions.get(id.as_str()).copied();
            if p.is_none() {
                missing.push(id.clone());
            }
            p
        })
        .collect();
    if !missing.is_empty() {
        let count = missing.len();
        missing.truncate(20);
        return Err(BenchError::MissingRecords { count, shown: missing });
    }
    Ok(found)
}

/// Encodes the records named by `ids` in parallel.
pub fn encode_ids(index: &VteIndex, ids: &[String], extractor: &dyn Extractor) -> Result<DescriptorTable, BenchError> {
    let positions = locate(index, ids)?;
    let encoded: Vec<(String, Vec<f64>)> = positions
        .par_iter()
        .map(|&p| {
            let record = index.read(p)?;
            let features = extractor.describe(&record).map_err(|source| BenchError::Extract {
                image_id: record.image_id.clone(),
                source,
            })?;
            Ok((record.image_id, features))
        })
        .collect::<Result<_, BenchError>>()?;
    Ok(DescriptorTable {
        map: encoded.into_iter().collect(),
    })
}

fn labeled(table: &DescriptorTable, manifest: &SplitManifest, ids: &[String]) -> Result<LabeledSet, ClassifierError> {
    let dim = ids.first().and_then(|id| table.get(id)).map_or(0, <[f64]>::len);
    let mut features = Vec::with_capacity(ids.len() * dim);
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        let f = table.get(id).ok_or_else(|| ClassifierError::Shape(format!("no descriptor for {id:?}")))?;
        features.extend_from_slice(f);
        labels.push(manifest.label(id).expect("validated manifest"));
    }
    LabeledSet::new(dim, features, labels)
}

/// Fits on each fold's training ids and scores its test ids.
pub fn evaluate_folds(
    table: &DescriptorTable,
    manifest: &SplitManifest,
    classifier: &dyn Classifier,
    standardize: bool,
) -> Result<Vec<f64>, BenchError> {
    manifest
        .folds
        .iter()
        .map(|fold| {
            let wrap = |source| BenchError::Classifier {
                fold_id: fold.fold_id,
                source,
            };
            let mut train = labeled(table, manifest, &fold.train_ids).map_err(wrap)?;
            let mut test = labeled(table, manifest, &fold.test_ids).map_err(wrap)?;
            if standardize {
                let s = Standardizer::fit(&train);
                train = train.map_features(|x| s.apply(x));
                test = test.map_features(|x| s.apply(x));
            }
            let model = classifier.fit(&train).map_err(wrap)?;
            Ok(accuracy(model.as_ref(), &test))
        })
        .collect()
}

fn build_report(
    manifest: &SplitManifest,
    extractor: String,
    classifier: String,
    fold_accuracies: Vec<f64>,
    started: Instant,
    config: ConfigEcho,
) -> RunReport {
    let (mean, std) = mean_std(&fold_accuracies);
    RunReport {
        dataset: manifest.dataset_name.clone(),
        extractor,
        classifier,
        fold_hashes: manifest.folds.iter().map(|f| f.hash()).collect(),
        fold_accuracies,
        mean,
        std,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        config,
        components: Vec::new(),
    }
}

/// Scores precomputed descriptors (e.g. from a VTD file) under `manifest`.
pub fn run_protocol_on_table(
    table: &DescriptorTable,
    manifest: &SplitManifest,
    extractor_label: &str,
    classifier: &str,
    config: &BenchConfig,
) -> Result<RunReport, BenchError> {
    let started = Instant::now();
    let clf = classifier_registry().build(classifier, &config.classifier)?;
    let missing: Vec<String> = manifest
        .referenced_ids()
        .into_iter()
        .filter(|id| table.get(id).is_none())
        .collect();
    if !missing.is_empty() {
        let count = missing.len();
        return Err(BenchError::MissingRecords {
            count,
            shown: missing.into_iter().take(20).collect(),
        });
    }
    let accs = evaluate_folds(table, manifest, clf.as_ref(), config.standardize)?;
    let m = extractor_label.starts_with("vortex").then_some(config.extractor.vortex.m);
    Ok(build_report(
        manifest,
        extractor_label.to_string(),
        clf.name().to_string(),
        accs,
        started,
        config.echo(m),
    ))
}

/// Encode with `extractor`, then fit and score `classifier` on every fold.
pub fn run_protocol(
    vte_path: impl AsRef<Path>,
    manifest: &SplitManifest,
    extractor: &str,
    classifier: &str,
    config: &BenchConfig,
) -> Result<RunReport, BenchError> {
    let started = Instant::now();
    let ext = extractor_registry().build(extractor, &config.extractor)?;
    let clf = classifier_registry().build(classifier, &config.classifier)?;
    let index = VteIndex::build(vte_path)?;
    let table = encode_ids(&index, &manifest.referenced_ids(), ext.as_ref())?;
    let accs = evaluate_folds(&table, manifest, clf.as_ref(), config.standardize)?;
    let m = (ext.name() == "vortex").then_some(config.extractor.vortex.m);
    Ok(build_report(
        manifest,
        ext.label(),
        clf.name().to_string(),
        accs,
        started,
        config.echo(m),
    ))
}

/// One report per soup size, each the unweighted mean of KNN, LDA and SVM
/// accuracies (per fold). Encoders are shared across soup sizes: the
/// descriptor for `m` is the running sum of the first `m` decoders.
pub fn soup_ablation(
    vte_path: impl AsRef<Path>,
    manifest: &SplitManifest,
    m_values: &[usize],
    config: &BenchConfig,
) -> Result<Vec<RunReport>, BenchError> {
    if m_values.is_empty() || m_values.contains(&0) {
        return Err(BenchError::InvalidArgument("m values must be a non-empty list of positive integers".into()));
    }
    let started = Instant::now();
    let index = VteIndex::build(vte_path)?;
    let ids = manifest.referenced_ids();
    let positions = locate(&index, &ids)?;
    let vortex = config.extractor.vortex;
    let per_image: Vec<(String, Vec<Vec<f64>>)> = positions
        .par_iter()
        .map(|&p| {
            let record = index.read(p)?;
            let descriptors = soup_prefixes(&record, &vortex, m_values).map_err(|e: RaeError| BenchError::Extract {
                image_id: record.image_id.clone(),
                source: e.into(),
            })?;
            Ok((record.image_id, descriptors.into_iter().map(|d| d.features).collect()))
        })
        .collect::<Result<_, BenchError>>()?;

    let registry = classifier_registry();
    let mut reports = Vec::with_capacity(m_values.len());
    for (slot, &m) in m_values.iter().enumerate() {
        let table = DescriptorTable {
            map: per_image.iter().map(|(id, ds)| (id.clone(), ds[slot].clone())).collect(),
        };
        let mut components = Vec::with_capacity(ABLATION_CLASSIFIERS.len());
        for name in ABLATION_CLASSIFIERS {
            let clf = registry.build(name, &config.classifier)?;
            let accs = evaluate_folds(&table, manifest, clf.as_ref(), config.standardize)?;
            components.push(ComponentScore {
                classifier: name.to_string(),
                mean: mean_std(&accs).0,
                fold_accuracies: accs,
            });
        }
        let folds = manifest.folds.len();
        let averaged: Vec<f64> = (0..folds)
            .map(|f| components.iter().map(|c| c.fold_accuracies[f]).sum::<f64>() / components.len() as f64)
            .collect();
        let mut report = build_report(
            manifest,
            format!("vortex(m={m})"),
            format!("mean({})", ABLATION_CLASSIFIERS.join(",")),
            averaged,
            started,
            config.echo(Some(m)),
        );
        report.components = components;
        reports.push(report);
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonEntry {
    pub extractor: String,
    pub report: Option<RunReport>,
    /// Why the report is absent.
    pub note: Option<String>,
}

/// VORTEX, CLS and GAP scored with one classifier on identical folds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorComparison {
    pub classifier: String,
    pub entries: Vec<ComparisonEntry>,
}

impl ExtractorComparison {
    pub fn get(&self, extractor: &str) -> Option<&RunReport> {
        self.entries
            .iter()
            .find(|e| e.extractor == extractor)
            .and_then(|e| e.report.as_ref())
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12} {:<10} {:>10}  folds\n", "extractor", "classifier", "accuracy");
        for e in &self.entries {
            match &e.report {
                Some(r) => out.push_str(&format!(
                    "{:<12} {:<10} {:>10}  {}\n",
                    e.extractor,
                    self.classifier,
                    r.summary(),
                    r.fold_hashes.join(",")
                )),
                None => out.push_str(&format!(
                    "{:<12} {:<10} {:>10}  {}\n",
                    e.extractor,
                    self.classifier,
                    "-",
                    e.note.as_deref().unwrap_or("")
                )),
            }
        }
        out
    }
}

pub fn compare_extractors(
    vte_path: impl AsRef<Path>,
    manifest: &SplitManifest,
    classifier: &str,
    config: &BenchConfig,
) -> Result<ExtractorComparison, BenchError> {
    let vte_path = vte_path.as_ref();
    let mut entries = Vec::new();
    for extractor in ["vortex", "cls", "gap"] {
        match run_protocol(vte_path, manifest, extractor, classifier, config) {
            Ok(report) => entries.push(ComparisonEntry {
                extractor: extractor.into(),
                report: Some(report),
                note: None,
            }),
            Err(BenchError::Extract { ref source, ref image_id }) if source.is_cls_absent() => {
                entries.push(ComparisonEntry {
                    extractor: extractor.into(),
                    report: None,
                    note: Some(format!("CLS not stored (first missing: {image_id})")),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ExtractorComparison {
        classifier: classifier.to_string(),
        entries,
    })
}
