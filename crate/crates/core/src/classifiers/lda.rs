use nalgebra::DMatrix;

use super::{argmax, check_fit, Classifier, ClassifierError, LabeledSet, Model, SavedModel};

/// Linear discriminant analysis with a Ledoit-Wolf shrunk pooled covariance.
#[derive(Debug, Clone, Copy, Default)]
pub struct LdaClassifier;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// Label of each internal class slot, ascending.
    pub classes: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    /// Ledoit-Wolf intensity used for the pooled covariance.
    pub shrinkage: f64,
    /// `Sigma^-1 mu_c` for each class.
    pub coef: Vec<Vec<f64>>,
    /// `-mu_c^T Sigma^-1 mu_c / 2 + ln(prior_c)`.
    pub intercept: Vec<f64>,
    /// Shrunk covariance; only kept on freshly fitted models.
    pub covariance: Option<DMatrix<f64>>,
}

/// Ledoit-Wolf shrinkage of the covariance of already-centered rows.
///
/// Returns `((1 - g) S + g (tr S / p) I, g)` with `S = X^T X / n` and the
/// intensity `g` in `[0, 1]`.
pub fn ledoit_wolf(centered: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = centered.nrows() as f64;
    let p = centered.ncols();
    let emp = centered.tr_mul(centered) / n;
    let mu = emp.trace() / p as f64;
    // sum_k ||x_k||^4, the entry sum of (X∘X)^T (X∘X)
    let fourth: f64 = centered
        .row_iter()
        .map(|r| {
            let s = r.norm_squared();
            s * s
        })
        .sum();
    let frob = emp.norm_squared();
    let beta = (fourth / n - frob) / (p as f64 * n);
    let delta = (frob - 2.0 * mu * emp.trace() + p as f64 * mu * mu) / p as f64;
    let beta = beta.min(delta);
    let shrinkage = if beta <= 0.0 || delta <= 0.0 { 0.0 } else { beta / delta };
    let mut shrunk = emp * (1.0 - shrinkage);
    for i in 0..p {
        shrunk[(i, i)] += shrinkage * mu;
    }
    (shrunk, shrinkage)
}

impl LdaModel {
    pub fn fit(train: &LabeledSet) -> Result<Self, ClassifierError> {
        let classes = check_fit(train, 2)?;
        let d = train.dim();
        let n = train.len();
        let slot = |label: usize| classes.binary_search(&label).expect("label present");

        let mut means = vec![vec![0.0; d]; classes.len()];
        let mut counts = vec![0usize; classes.len()];
        for (row, &y) in train.rows().zip(train.labels()) {
            let c = slot(y);
            counts[c] += 1;
            means[c].iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        for (m, &k) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= k as f64);
        }
        let priors: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();

        let mut centered = DMatrix::zeros(n, d);
        for (i, (row, &y)) in train.rows().zip(train.labels()).enumerate() {
            let mean = &means[slot(y)];
            for j in 0..d {
                centered[(i, j)] = row[j] - mean[j];
            }
        }
        let (covariance, shrinkage) = ledoit_wolf(&centered);
        let chol = spd_factor(&covariance)?;

        let mean_mat = DMatrix::from_fn(d, classes.len(), |j, c| means[c][j]);
        let solved = chol.solve(&mean_mat);
        let coef: Vec<Vec<f64>> = (0..classes.len())
            .map(|c| solved.column(c).iter().copied().collect())
            .collect();
        let intercept = (0..classes.len())
            .map(|c| {
                let quad: f64 = coef[c].iter().zip(&means[c]).map(|(a, b)| a * b).sum();
                -0.5 * quad + priors[c].ln()
            })
            .collect();
        Ok(Self {
            classes,
            means,
            priors,
            shrinkage,
            coef,
            intercept,
            covariance: Some(covariance),
        })
    }

    pub fn decision(&self, x: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }
}

/// Cholesky factor of the covariance. An all-zero covariance (every sample
/// equal to its class mean) is replaced by the identity; a singular one gets
/// the smallest diagonal jitter, relative to its mean variance, that makes it
/// positive definite.
fn spd_factor(cov: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, ClassifierError> {
    let d = cov.nrows();
    let mu = cov.trace() / d as f64;
    if mu <= 0.0 {
        return Ok(DMatrix::<f64>::identity(d, d).cholesky().expect("identity is SPD"));
    }
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c);
    }
    let mut jitter = mu * 1e-12;
    while jitter <= mu {
        let mut m = cov.clone();
        for i in 0..d {
            m[(i, i)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            log::warn!("LDA covariance needed diagonal jitter {jitter:.3e}");
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(ClassifierError::NotPositiveDefinite)
}

impl Model for LdaModel {
    fn predict(&self, x: &[f64]) -> usize {
        self.classes[argmax(self.decision(x))]
    }

    fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn snapshot(&self) -> SavedModel {
        SavedModel::Lda(LdaModel {
            covariance: None,
            ..self.clone()
        })
    }
}

impl Classifier for LdaClassifier {
    fn name(&self) -> &'static str {
        "lda"
    }

    fn fit(&self, train: &LabeledSet) -> Result<Box<dyn Model>, ClassifierError> {
        Ok(Box::new(LdaModel::fit(train)?))
    }
}
