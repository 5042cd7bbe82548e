//! Linear SVM (L2-regularized, standard hinge loss) trained by dual
//! coordinate descent, combined into a multiclass model one-vs-rest (or
//! one-vs-one).
//!
//! The bias is learned as the weight of an extra constant feature equal to
//! one, so it is regularized together with `w`. Each binary problem is
//!
//! ```text
//! min_w  0.5 ||w||^2 + C sum_i max(0, 1 - y_i w^T x_i)
//! ```
//!
//! and stops once the relative duality gap `(P - D) / P` drops below the
//! configured tolerance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_fit, Classifier, ClassifierError, LabeledSet, Model, SavedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MulticlassScheme {
    #[default]
    OneVsRest,
    OneVsOne,
}

impl std::str::FromStr for MulticlassScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ovr" | "one-vs-rest" => Ok(Self::OneVsRest),
            "ovo" | "one-vs-one" => Ok(Self::OneVsOne),
            other => Err(format!("unknown multiclass scheme {other:?} (expected ovr or ovo)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Penalty `C`.
    pub c: f64,
    /// Relative duality gap at which a binary problem counts as solved.
    pub tolerance: f64,
    pub max_epochs: usize,
    pub scheme: MulticlassScheme,
    /// Seed of the per-epoch coordinate order; problem `i` uses `seed + i`.
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-4,
            max_epochs: 20_000,
            scheme: MulticlassScheme::OneVsRest,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSvmClassifier {
    pub config: SvmConfig,
}

impl LinearSvmClassifier {
    pub fn new(config: SvmConfig) -> Self {
        Self { config }
    }
}

impl Default for LinearSvmClassifier {
    fn default() -> Self {
        Self::new(SvmConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub scheme: MulticlassScheme,
    pub classes: Vec<usize>,
    /// One hyperplane per binary problem: a class for one-vs-rest, a pair of
    /// class slots `(positive, negative)` for one-vs-one.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub c: f64,
    /// Final relative duality gap of each binary problem.
    pub gaps: Vec<f64>,
}

/// Solution of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub epochs: usize,
}

impl BinarySvm {
    pub fn relative_gap(&self) -> f64 {
        (self.primal - self.dual) / self.primal.abs().max(f64::MIN_POSITIVE)
    }
}

/// Primal objective with the bias treated as an extra regularized weight.
pub fn primal_objective(weights: &[f64], bias: f64, rows: &[&[f64]], y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * (weights.iter().map(|w| w * w).sum::<f64>() + bias * bias);
    let loss: f64 = rows
        .iter()
        .zip(y)
        .map(|(x, &yi)| {
            let m = yi * (dot(weights, x) + bias);
            (1.0 - m).max(0.0)
        })
        .sum();
    reg + c * loss
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dual coordinate descent with shrinking for one binary problem.
pub fn solve_binary(rows: &[&[f64]], y: &[f64], config: &SvmConfig, seed: u64) -> Result<BinarySvm, (f64, usize)> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let c = config.c;
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    let mut alpha = vec![0.0f64; n];
    let qd: Vec<f64> = rows.iter().map(|x| dot(x, x) + 1.0).collect();
    let mut index: Vec<usize> = (0..n).collect();
    let mut active = n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pg_eps = 0.1f64;
    let (mut pg_max_old, mut pg_min_old) = (f64::INFINITY, f64::NEG_INFINITY);

    let objectives = |w: &[f64], b: f64, alpha: &[f64]| {
        let primal = primal_objective(w, b, rows, y, c);
        let norm = dot(w, w) + b * b;
        let dual = alpha.iter().sum::<f64>() - 0.5 * norm;
        (primal, dual)
    };

    let mut epoch = 0;
    while epoch < config.max_epochs {
        epoch += 1;
        index[..active].shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut s = 0;
        while s < active {
            let i = index[s];
            let yi = y[i];
            let g = yi * (dot(&w, rows[i]) + b) - 1.0;
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] == c {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * yi;
                w.iter_mut().zip(rows[i]).for_each(|(wj, xj)| *wj += step * xj);
                b += step;
            }
            s += 1;
        }

        if pg_max - pg_min <= pg_eps {
            if active == n {
                let (primal, dual) = objectives(&w, b, &alpha);
                if (primal - dual) / primal <= config.tolerance {
                    return Ok(BinarySvm {
                        weights: w,
                        bias: b,
                        alpha,
                        primal,
                        dual,
                        epochs: epoch,
                    });
                }
                pg_eps *= 0.1;
            }
            active = n;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }
    let (primal, dual) = objectives(&w, b, &alpha);
    Err(((primal - dual) / primal, epoch))
}

impl LinearSvmModel {
    pub fn fit(train: &LabeledSet, config: &SvmConfig) -> Result<Self, ClassifierError> {
        let classes = check_fit(train, 2)?;
        let slot: Vec<usize> = train
            .labels()
            .iter()
            .map(|y| classes.binary_search(y).expect("label present"))
            .collect();
        let all_rows: Vec<&[f64]> = train.rows().collect();

        // (positive slot, negative slot or None for "rest")
        let problems: Vec<(usize, Option<usize>)> = match config.scheme {
            MulticlassScheme::OneVsRest => (0..classes.len()).map(|c| (c, None)).collect(),
            MulticlassScheme::OneVsOne => (0..classes.len())
                .flat_map(|a| (a + 1..classes.len()).map(move |b| (a, Some(b))))
                .collect(),
        };

        let solved: Vec<Result<BinarySvm, ClassifierError>> = problems
            .par_iter()
            .enumerate()
            .map(|(p, &(pos, neg))| {
                let (rows, y): (Vec<&[f64]>, Vec<f64>) = all_rows
                    .iter()
                    .zip(&slot)
                    .filter(|(_, &s)| neg.is_none_or(|n| s == pos || s == n))
                    .map(|(r, &s)| (*r, if s == pos { 1.0 } else { -1.0 }))
                    .unzip();
                solve_binary(&rows, &y, config, config.seed.wrapping_add(p as u64)).map_err(|(gap, iterations)| {
                    ClassifierError::NotConverged {
                        problem: match neg {
                            None => format!("class {} vs rest", classes[pos]),
                            Some(n) => format!("class {} vs {}", classes[pos], classes[n]),
                        },
                        iterations,
                        gap,
                    }
                })
            })
            .collect();

        let mut model = Self {
            scheme: config.scheme,
            classes: classes.clone(),
            weights: Vec::with_capacity(problems.len()),
            biases: Vec::with_capacity(problems.len()),
            pairs: Vec::new(),
            c: config.c,
            gaps: Vec::with_capacity(problems.len()),
        };
        for (res, &(pos, neg)) in solved.into_iter().zip(&problems) {
            let sol = res?;
            model.gaps.push(sol.relative_gap());
            model.weights.push(sol.weights);
            model.biases.push(sol.bias);
            if let Some(n) = neg {
                model.pairs.push((pos, n));
            }
        }
        Ok(model)
    }

    /// Raw decision value of every binary problem.
    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }
}

impl Model for LinearSvmModel {
    fn predict(&self, x: &[f64]) -> usize {
        let scores = self.decision(x);
        let slot = match self.scheme {
            MulticlassScheme::OneVsRest => argmax(scores),
            MulticlassScheme::OneVsOne => {
                let mut votes = vec![0.0; self.classes.len()];
                for (&(a, b), s) in self.pairs.iter().zip(&scores) {
                    votes[if *s > 0.0 { a } else { b }] += 1.0;
                }
                argmax(votes)
            }
        };
        self.classes[slot]
    }

    fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    fn snapshot(&self) -> SavedModel {
        SavedModel::Svm(self.clone())
    }
}

impl Classifier for LinearSvmClassifier {
    fn name(&self) -> &'static str {
        "svm"
    }

    fn fit(&self, train: &LabeledSet) -> Result<Box<dyn Model>, ClassifierError> {
        Ok(Box::new(LinearSvmModel::fit(train, &self.config)?))
    }
}

#[cfg(test)]
mod tests {
    use super::super::accuracy;
    use super::*;

    fn blobs() -> LabeledSet {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let t = i as f64 * 0.3;
            rows.push(vec![-3.0 + t.cos() * 0.5, t.sin() * 0.5]);
            labels.push(0);
            rows.push(vec![3.0 + t.sin() * 0.5, t.cos() * 0.5]);
            labels.push(1);
        }
        LabeledSet::from_rows(&rows, labels).unwrap()
    }

    #[test]
    fn separable_blobs_are_fit_exactly() {
        let set = blobs();
        let m = LinearSvmModel::fit(&set, &SvmConfig::default()).unwrap();
        assert_eq!(accuracy(&m, &set), 1.0);
        assert!(m.gaps.iter().all(|&g| g <= 1e-4));
    }

    #[test]
    fn contradictory_points_converge() {
        let rows = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let set = LabeledSet::from_rows(&rows, vec![0, 1, 0, 1]).unwrap();
        let m = LinearSvmModel::fit(&set, &SvmConfig::default()).unwrap();
        assert!(accuracy(&m, &set) <= 0.5);
    }

    #[test]
    fn one_vs_one_agrees_on_easy_data() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [[0.0, 5.0], [5.0, 0.0], [-5.0, -5.0]].iter().enumerate() {
            for k in 0..6 {
                let t = k as f64;
                rows.push(vec![center[0] + 0.3 * t.sin(), center[1] + 0.3 * t.cos()]);
                labels.push(c);
            }
        }
        let set = LabeledSet::from_rows(&rows, labels).unwrap();
        let cfg = SvmConfig {
            scheme: MulticlassScheme::OneVsOne,
            ..SvmConfig::default()
        };
        let m = LinearSvmModel::fit(&set, &cfg).unwrap();
        assert_eq!(m.pairs.len(), 3);
        assert_eq!(accuracy(&m, &set), 1.0);
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let set = blobs();
        let cfg = SvmConfig {
            max_epochs: 1,
            tolerance: 1e-12,
            ..SvmConfig::default()
        };
        match LinearSvmModel::fit(&set, &cfg) {
            Err(ClassifierError::NotConverged { iterations, gap, .. }) => {
                assert_eq!(iterations, 1);
                assert!(gap > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let set = blobs();
        let a = LinearSvmModel::fit(&set, &SvmConfig::default()).unwrap();
        let b = LinearSvmModel::fit(&set, &SvmConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
