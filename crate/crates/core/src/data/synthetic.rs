//! Synthetic two-task data whose labels are aligned or opposed by a chosen
//! angle between the tasks.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::nn::{streams, DenseMatrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub variance: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mean: 0.01,
            variance: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_total: usize,
    pub n_train: usize,
    pub n_features: usize,
    pub n_sparse: usize,
    /// Cosine of the angle between the tasks; negative means conflict.
    pub cos_theta: f64,
    /// `None` generates noise-free labels.
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
    pub user_id_column: bool,
    /// Embedding buckets for each sparse column.
    pub sparse_buckets: usize,
    /// Distinct user ids when `user_id_column` is on.
    pub user_vocab: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_total: 110_000,
            n_train: 100_000,
            n_features: 32,
            n_sparse: 6,
            cos_theta: -0.6,
            noise: Some(NoiseSpec::default()),
            seed: 0,
            user_id_column: false,
            sparse_buckets: 1000,
            user_vocab: 1000,
        }
    }
}

impl SyntheticSpec {
    pub fn n_dense(&self) -> usize {
        self.n_features - self.n_sparse
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_train >= self.n_total {
            return Err(Error::config(format!(
                "need 0 < n_train < n_total, got {} and {}",
                self.n_train, self.n_total
            )));
        }
        if self.n_sparse > self.n_features || self.n_features == 0 {
            return Err(Error::config("n_sparse must not exceed n_features"));
        }
        if !self.cos_theta.is_finite() || self.cos_theta == 0.0 || self.cos_theta.abs() >= 1.0 {
            return Err(Error::config(format!(
                "cos_theta must lie in (-1, 0) or (0, 1), got {}",
                self.cos_theta
            )));
        }
        if let Some(n) = self.noise {
            if !(n.mean.is_finite() && n.variance.is_finite() && n.variance >= 0.0) {
                return Err(Error::config("noise needs a finite mean and non-negative variance"));
            }
        }
        if self.sparse_buckets == 0 || (self.user_id_column && self.user_vocab == 0) {
            return Err(Error::config("bucket counts must be positive"));
        }
        Ok(())
    }
}

/// `e^(r1 * k1) + (r2 * k2)^(i / 2 + 1)` for the `i`-th sparse feature.
pub fn sparse_feature_value(i: usize, r1: f64, k1: u32, r2: f64, k2: u32) -> f64 {
    libm::exp(r1 * f64::from(k1)) + libm::pow(r2 * f64::from(k2), i as f64 / 2.0 + 1.0)
}

/// Draws the `i`-th sparse feature: `r ~ U[0, 1)`, `k ~ U{1, ..., i + 2}`.
pub fn gen_sparse_feature<R: Rng + ?Sized>(i: usize, rng: &mut R) -> f64 {
    let hi = i as u32 + 2;
    let r1 = rng.random::<f64>();
    let k1 = rng.random_range(1..=hi);
    let r2 = rng.random::<f64>();
    let k2 = rng.random_range(1..=hi);
    sparse_feature_value(i, r1, k1, r2, k2)
}

/// Noise-free primary label of one sample:
/// `10 * (mean_j(4 x_j^2 / |x^2| + 5 e^(x_j / |x|) + 6 sin x_j) + noise)`.
pub fn primary_label(x: &[f64], noise: f64) -> f64 {
    let sq_norm = libm::sqrt(x.iter().map(|v| v.powi(4)).sum::<f64>());
    let norm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
    let safe = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let total: f64 = x
        .iter()
        .map(|&v| 4.0 * safe(v * v, sq_norm) + 5.0 * libm::exp(safe(v, norm)) + 6.0 * libm::sin(v))
        .sum();
    10.0 * (total / x.len() as f64 + noise)
}

/// Thresholds raw values at the median of `train`; the same threshold is
/// applied to every slice in `others`.
pub fn binarize_labels(train: &[f64], others: &[&[f64]]) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted = train.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let threshold = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let apply = |v: &[f64]| -> Vec<f64> { v.iter().map(|&r| f64::from(u8::from(r > threshold))).collect() };
    let labels = apply(train);
    let positives = labels.iter().filter(|&&l| l == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateLabels(format!(
            "median threshold {threshold} leaves a single class"
        )));
    }
    Ok((threshold, labels, others.iter().map(|o| apply(o)).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Binarization threshold per task, taken from the train split.
    pub thresholds: [f64; 2],
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let n = spec.n_total;
    let n_dense = spec.n_dense();
    let mut rng = SeededRng::new(spec.seed, streams::SYNTHETIC);
    let noise = match spec.noise {
        Some(ns) => Some(Normal::new(ns.mean, ns.variance.sqrt()).map_err(|e| Error::config(e.to_string()))?),
        None => None,
    };

    let mut dense = Vec::with_capacity(n * n_dense);
    let mut sparse = vec![Vec::with_capacity(n); spec.n_sparse];
    let mut user = spec.user_id_column.then(|| Vec::with_capacity(n));
    let mut raw1 = Vec::with_capacity(n);
    let mut raw2 = Vec::with_capacity(n);
    let mut x = vec![0.0; spec.n_features];
    for _ in 0..n {
        for v in x.iter_mut().take(n_dense) {
            *v = StandardNormal.sample(&mut rng);
        }
        dense.extend_from_slice(&x[..n_dense]);
        for (i, col) in sparse.iter_mut().enumerate() {
            let v = gen_sparse_feature(i, &mut rng);
            x[n_dense + i] = v;
            col.push(v.floor() as u64);
        }
        let mut draw = || noise.map_or(0.0, |d| d.sample(&mut rng));
        let (e1, e2) = (draw(), draw());
        let l1 = primary_label(&x, e1);
        raw1.push(l1);
        raw2.push(spec.cos_theta * l1 + e2);
        if let Some(u) = user.as_mut() {
            u.push(rng.random_range(0..spec.user_vocab as u64));
        }
    }

    let nt = spec.n_train;
    let (t1, b1, rest1) = binarize_labels(&raw1[..nt], &[&raw1[nt..]])?;
    let (t2, b2, rest2) = binarize_labels(&raw2[..nt], &[&raw2[nt..]])?;
    let [test1, test2] = [rest1, rest2].map(|mut r| r.pop().unwrap());

    let dense = DenseMatrix::from_vec(n, n_dense, dense)?;
    let split = |split: Split, rows: std::ops::Range<usize>, labels: [Vec<f64>; 2]| -> LabeledDataset {
        let idx: Vec<usize> = rows.clone().collect();
        LabeledDataset {
            split,
            dense: dense.select_rows(&idx),
            sparse: sparse.iter().map(|c| c[rows.clone()].to_vec()).collect(),
            sparse_vocab: vec![spec.sparse_buckets; spec.n_sparse],
            user: user.as_ref().map(|u| u[rows.clone()].to_vec()),
            user_vocab: spec.user_id_column.then_some(spec.user_vocab),
            labels,
            raw_labels: Some([raw1[rows.clone()].to_vec(), raw2[rows].to_vec()]),
        }
    };
    Ok(SyntheticData {
        train: split(Split::Train, 0..nt, [b1, b2]),
        test: split(Split::Test, nt..n, [test1, test2]),
        thresholds: [t1, t2],
    })
}
