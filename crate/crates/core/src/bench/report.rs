//! Run reports.
//!
//! A report serializes to pretty JSON with the fields of [`RunReport`].
//! Tables for plotting are CSV with the fixed header
//! `dataset,extractor,m,classifier,mean_accuracy,std_accuracy`; `m` and
//! `std_accuracy` are empty when not applicable.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregation::GapLayer;
use crate::prng::SeedMode;

pub const CSV_HEADER: &str = "dataset,extractor,m,classifier,mean_accuracy,std_accuracy";

/// The settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub m: Option<usize>,
    pub hidden: usize,
    pub seed_mode: SeedMode,
    pub ridge: f64,
    pub gap_layer: GapLayer,
    pub svm_c: f64,
    pub svm_seed: u64,
    pub standardize: bool,
}

/// Per-classifier scores folded into an averaged report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub classifier: String,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub extractor: String,
    pub classifier: String,
    pub fold_accuracies: Vec<f64>,
    pub fold_hashes: Vec<String>,
    pub mean: f64,
    /// Population standard deviation over folds; absent for a single split.
    pub std: Option<f64>,
    pub wall_clock_secs: f64,
    pub config: ConfigEcho,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<ComponentScore>,
}

/// `(mean, population std)`; the std is `None` for fewer than two values.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, Some(var.sqrt()))
}

impl RunReport {
    /// True when `mean` and `std` agree with the per-fold list within `tol`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let (mean, std) = mean_std(&self.fold_accuracies);
        let std_ok = match (std, self.std) {
            (None, None) => true,
            (Some(a), Some(b)) => (a - b).abs() <= tol,
            _ => false,
        };
        (mean - self.mean).abs() <= tol && std_ok
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// `mean±std` in percent, e.g. `84.2±0.6`, or just the mean.
    pub fn summary(&self) -> String {
        match self.std {
            Some(s) => format!("{:.1}±{:.1}", self.mean * 100.0, s * 100.0),
            None => format!("{:.1}", self.mean * 100.0),
        }
    }

    pub fn csv_row(&self) -> String {
        let m = self.config.m.map(|m| m.to_string()).unwrap_or_default();
        let std = self.std.map(|s| format!("{s:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{:.6},{}",
            csv_field(&self.dataset),
            csv_field(&self.extractor),
            m,
            csv_field(&self.classifier),
            self.mean,
            std
        )
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn reports_to_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(folds: Vec<f64>) -> RunReport {
        let (mean, std) = mean_std(&folds);
        RunReport {
            dataset: "fmd".into(),
            extractor: "vortex(m=16)".into(),
            classifier: "svm".into(),
            fold_hashes: vec![String::new(); folds.len()],
            fold_accuracies: folds,
            mean,
            std,
            wall_clock_secs: 0.0,
            config: ConfigEcho {
                m: Some(16),
                hidden: 1,
                seed_mode: SeedMode::Literal,
                ridge: 0.0,
                gap_layer: GapLayer::Last,
                svm_c: 1.0,
                svm_seed: 0,
                standardize: false,
            },
            components: Vec::new(),
        }
    }

    #[test]
    fn single_split_has_no_std() {
        let r = report(vec![0.95]);
        assert_eq!(r.std, None);
        assert_eq!(r.summary(), "95.0");
        assert!(r.is_consistent(1e-12));
    }

    #[test]
    fn population_std_and_summary() {
        let r = report(vec![0.8, 0.84, 0.88]);
        assert!((r.mean - 0.84).abs() < 1e-12);
        let expected = ((0.04f64 * 0.04 * 2.0) / 3.0).sqrt();
        assert!((r.std.unwrap() - expected).abs() < 1e-12);
        assert_eq!(r.summary(), "84.0±3.3");
    }

    #[test]
    fn tampered_report_is_inconsistent() {
        let mut r = report(vec![0.8, 0.9]);
        r.mean += 0.01;
        assert!(!r.is_consistent(1e-12));
    }

    #[test]
    fn json_and_csv() {
        let r = report(vec![0.8, 0.9]);
        assert_eq!(RunReport::from_json(&r.to_json()).unwrap(), r);
        let csv = reports_to_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        assert_eq!(lines.next(), Some("fmd,vortex(m=16),16,svm,0.850000,0.050000"));
    }
}
