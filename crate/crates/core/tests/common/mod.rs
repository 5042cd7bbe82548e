//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vortex::bench::{generate_synthetic, SyntheticTextureSpec};
use vortex::interchange::write_vte;
use vortex::{EmbeddingRecord, SplitManifest};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_record(rng: &mut ChaCha8Rng, id: &str, layers: usize, tokens: usize, dim: usize) -> EmbeddingRecord {
    let data = (0..layers * tokens * dim).map(|_| normal(rng) as f32).collect();
    EmbeddingRecord::new(id, layers, tokens, dim, data).unwrap()
}

/// Shuffles all `l·n` token rows of a record (across layers too).
pub fn permute_tokens(record: &EmbeddingRecord, rng: &mut ChaCha8Rng) -> EmbeddingRecord {
    use rand::seq::SliceRandom;
    let d = record.dim;
    let mut rows: Vec<&[f32]> = record.data.chunks_exact(d).collect();
    rows.shuffle(rng);
    let data = rows.concat();
    EmbeddingRecord::new(record.image_id.clone(), record.layers, record.tokens, d, data).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn relative_norm(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let base: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / base.max(f64::MIN_POSITIVE)
}

/// `(gᵀg)⁻¹ gᵀ χ` through an explicit inverse of the normal matrix.
pub fn normal_equations(g: &DMatrix<f64>, chi: &DMatrix<f64>) -> DMatrix<f64> {
    let gtg = g.transpose() * g;
    let inv = gtg.try_inverse().expect("full column rank");
    inv * g.transpose() * chi
}

/// Subgradient descent on `½(‖w‖² + b²) + C Σ max(0, 1 − yᵢ(w·xᵢ + b))`.
/// The objective is 1-strongly convex, so steps `1/t` converge; the best
/// iterate is returned.
pub fn subgradient_svm(rows: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> (Vec<f64>, f64, f64) {
    let d = rows[0].len();
    let objective = |v: &[f64]| {
        let reg = 0.5 * v.iter().map(|a| a * a).sum::<f64>();
        let loss: f64 = rows
            .iter()
            .zip(y)
            .map(|(x, &yi)| {
                let s: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + v[d];
                (1.0 - yi * s).max(0.0)
            })
            .sum();
        reg + c * loss
    };
    let mut v = vec![0.0f64; d + 1];
    let mut best = (v.clone(), objective(&v));
    for t in 1..=iterations {
        let mut grad = v.clone();
        for (x, &yi) in rows.iter().zip(y) {
            let s: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
            if yi * s < 1.0 {
                for j in 0..d {
                    grad[j] -= c * yi * x[j];
                }
                grad[d] -= c * yi;
            }
        }
        let eta = 1.0 / t as f64;
        v.iter_mut().zip(&grad).for_each(|(a, g)| *a -= eta * g);
        let obj = objective(&v);
        if obj < best.1 {
            best = (v.clone(), obj);
        }
    }
    let (v, obj) = best;
    (v[..d].to_vec(), v[d], obj)
}

/// Ledoit–Wolf shrinkage intensity by the defining sums, O(N·p²) memory-free.
///
/// `β̄² = min(1/N² Σₖ ‖xₖxₖᵀ − S‖²_F, δ²)`, `δ² = ‖S − μI‖²_F`, `γ = β̄²/δ²`.
pub fn ledoit_wolf_bruteforce(centered: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (n, p) = centered.shape();
    let s = centered.transpose() * centered / n as f64;
    let mu = s.trace() / p as f64;
    let target = DMatrix::<f64>::identity(p, p) * mu;
    let delta2 = (&s - &target).norm_squared();
    let mut beta_sum = 0.0;
    for k in 0..n {
        let x = centered.row(k).transpose();
        beta_sum += (&x * x.transpose() - &s).norm_squared();
    }
    let beta2 = (beta_sum / (n * n) as f64).min(delta2);
    let gamma = if delta2 == 0.0 { 0.0 } else { beta2 / delta2 };
    (&s * (1.0 - gamma) + target * gamma, gamma)
}

pub fn synthetic(spec: &SyntheticTextureSpec) -> (Vec<EmbeddingRecord>, SplitManifest) {
    generate_synthetic(spec).unwrap()
}

pub fn write_synthetic(dir: &Path, spec: &SyntheticTextureSpec) -> (std::path::PathBuf, SplitManifest) {
    let (records, manifest) = synthetic(spec);
    let path = dir.join(format!("{}.vte", spec.dataset_name));
    write_vte(&records, &path).unwrap();
    (path, manifest)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}
