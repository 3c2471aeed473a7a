//! Linear-probe node classification.

use rayon::prelude::*;

use super::metrics::{mean_std, Metrics};
use crate::error::{Error, Result};
use crate::graph::{split_labels, NodeSplit, SplitProtocol};
use crate::linalg::{dot, DenseMatrix};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    /// Coefficient of `0.5 * |W|^2` (the bias is not penalized).
    pub l2: f64,
    pub iters: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { l2: 1e-4, iters: 300 }
    }
}

/// Multinomial logistic regression on standardized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticProbe {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// `(d + 1) x classes`; the last row is the bias.
    weights: DenseMatrix,
}

/// Column means and standard deviations of `x`; zero deviations become 1.
fn column_stats(x: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows().max(1) as f64;
    let mean: Vec<f64> = x.column_sums().iter().map(|s| s / n).collect();
    let mut var = vec![0.0; x.cols()];
    for row in x.row_iter() {
        for ((v, &a), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (a - m) * (a - m);
        }
    }
    let scale = var
        .iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Standardized rows with a trailing constant 1.
fn design(x: &DenseMatrix, mean: &[f64], scale: &[f64]) -> DenseMatrix {
    let d = x.cols();
    DenseMatrix::from_fn(x.rows(), d + 1, |i, j| if j == d { 1.0 } else { (x.get(i, j) - mean[j]) / scale[j] })
}

/// Largest eigenvalue of `aᵀa / n` by power iteration.
fn gram_top_eigenvalue(a: &DenseMatrix) -> f64 {
    let n = a.rows().max(1) as f64;
    let mut v = vec![1.0 / (a.cols() as f64).sqrt(); a.cols()];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let av: Vec<f64> = a.row_iter().map(|r| dot(r, &v)).collect();
        let mut w = vec![0.0; a.cols()];
        for (r, &s) in a.row_iter().zip(&av) {
            for (wi, &ri) in w.iter_mut().zip(r) {
                *wi += ri * s / n;
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = dot(&v, &w);
        w.iter_mut().for_each(|x| *x /= norm);
        v = w;
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

fn softmax_rows(logits: &mut DenseMatrix) {
    let cols = logits.cols().max(1);
    for row in logits.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
}

impl LogisticProbe {
    /// Full-batch gradient descent with step `1/L`, where `L` bounds the
    /// curvature of the mean cross-entropy plus the penalty.
    pub fn fit(x: &DenseMatrix, y: &[usize], classes: usize, cfg: &ProbeConfig) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims("LogisticProbe::fit", format!("{} rows, {} labels", x.rows(), y.len())));
        }
        if x.rows() == 0 || classes == 0 {
            return Err(Error::DegenerateSplit("no training nodes".into()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::dims("LogisticProbe::fit", format!("label {bad} >= {classes} classes")));
        }
        let (mean, scale) = column_stats(x);
        let a = design(x, &mean, &scale);
        let n = a.rows() as f64;
        let lipschitz = 0.5 * gram_top_eigenvalue(&a) * 1.01 + cfg.l2;
        let step = 1.0 / lipschitz;
        let d1 = a.cols();
        let mut w = DenseMatrix::zeros(d1, classes);
        for _ in 0..cfg.iters {
            let mut p = a.matmul(&w)?;
            softmax_rows(&mut p);
            for (i, &c) in y.iter().enumerate() {
                let v = p.get(i, c);
                p.set(i, c, v - 1.0);
            }
            let mut grad = a.t_matmul(&p)?;
            grad.scale(1.0 / n);
            for r in 0..d1 - 1 {
                for c in 0..classes {
                    let g = grad.get(r, c) + cfg.l2 * w.get(r, c);
                    grad.set(r, c, g);
                }
            }
            grad.scale(-step);
            w.add_assign(&grad)?;
        }
        Ok(LogisticProbe { mean, scale, weights: w })
    }

    /// Most probable class per row; ties go to the lower class index.
    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<usize>> {
        if x.cols() + 1 != self.weights.rows() {
            return Err(Error::dims(
                "LogisticProbe::predict",
                format!("{} features, probe expects {}", x.cols(), self.weights.rows() - 1),
            ));
        }
        let logits = design(x, &self.mean, &self.scale).matmul(&self.weights)?;
        Ok(logits
            .row_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (c, &v)| if v > b.1 { (c, v) } else { b })
                    .0
            })
            .collect())
    }
}

/// Maps labels to dense class indices `0..C` in sorted label order. Negative
/// labels stay unmapped.
pub fn class_index(labels: &[i64]) -> (Vec<Option<usize>>, usize) {
    let mut classes: Vec<i64> = labels.iter().copied().filter(|&l| l >= 0).collect();
    classes.sort_unstable();
    classes.dedup();
    let idx = labels
        .iter()
        .map(|l| classes.binary_search(l).ok().filter(|_| *l >= 0))
        .collect();
    (idx, classes.len())
}

/// Test accuracy of a probe trained on `split.train`.
pub fn probe_accuracy(h: &DenseMatrix, labels: &[i64], split: &NodeSplit, cfg: &ProbeConfig) -> Result<f64> {
    if h.rows() != labels.len() {
        return Err(Error::dims("probe_accuracy", format!("{} embeddings, {} labels", h.rows(), labels.len())));
    }
    if split.test.is_empty() {
        return Err(Error::DegenerateSplit("empty test set".into()));
    }
    let (idx, classes) = class_index(labels);
    let target = |nodes: &[usize]| -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|&i| {
                idx.get(i)
                    .copied()
                    .flatten()
                    .ok_or_else(|| Error::DegenerateSplit(format!("node {i} is unlabeled or out of range")))
            })
            .collect()
    };
    let y_train = target(&split.train)?;
    let y_test = target(&split.test)?;
    let probe = LogisticProbe::fit(&h.select_rows(&split.train), &y_train, classes, cfg)?;
    let pred = probe.predict(&h.select_rows(&split.test))?;
    let hits = pred.iter().zip(&y_test).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_test.len() as f64)
}

/// Mean and standard deviation of test accuracy over `runs` random splits.
pub fn node_classify(
    h: &DenseMatrix,
    labels: &[i64],
    protocol: SplitProtocol,
    runs: usize,
    seed: u64,
    cfg: &ProbeConfig,
) -> Result<Metrics> {
    if runs == 0 {
        return Err(Error::param("runs", "must be at least 1"));
    }
    let accs = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let split = split_labels(labels, protocol, rng::derive(seed, &[tag::PROBE, run]))?;
            probe_accuracy(h, labels, &split, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&accs);
    Ok(Metrics::new("node_classification", runs, seed)
        .with("accuracy_mean", mean)
        .with("accuracy_std", std)
        .with_runs("accuracy", accs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn labels(classes: usize, per: usize) -> Vec<i64> {
        (0..classes * per).map(|i| (i % classes) as i64).collect()
    }

    #[test]
    fn one_hot_labels_are_classified_perfectly() {
        let y = labels(4, 80);
        let h = DenseMatrix::from_fn(y.len(), 4, |i, j| f64::from(y[i] == j as i64));
        for protocol in [
            SplitProtocol::Citation {
                per_class: 20,
                test_size: 100,
            },
            SplitProtocol::co_purchase(),
        ] {
            let m = node_classify(&h, &y, protocol, 3, 5, &ProbeConfig::default()).unwrap();
            assert_eq!(m.values["accuracy_mean"], 1.0);
            assert_eq!(m.values["accuracy_std"], 0.0);
        }
    }

    #[test]
    fn random_embeddings_score_near_chance() {
        let classes = 4;
        let y = labels(classes, 300);
        let mut r = rng::stream(12, &[]);
        let h = DenseMatrix::from_fn(y.len(), 16, |_, _| r.sample(StandardNormal));
        let m = node_classify(
            &h,
            &y,
            SplitProtocol::Citation {
                per_class: 20,
                test_size: 1000,
            },
            10,
            1,
            &ProbeConfig::default(),
        )
        .unwrap();
        let acc = m.values["accuracy_mean"];
        assert!((acc - 1.0 / classes as f64).abs() < 0.05, "{acc}");
    }

    #[test]
    fn separable_blobs_are_learned() {
        let y = labels(3, 50);
        let mut r = rng::stream(3, &[]);
        let h = DenseMatrix::from_fn(y.len(), 5, |i, j| {
            let center = if j == y[i] as usize { 3.0 } else { 0.0 };
            center + 0.3 * r.random_range(-1.0..1.0)
        });
        let split = split_labels(&y, SplitProtocol::Citation { per_class: 10, test_size: 60 }, 0).unwrap();
        assert_eq!(probe_accuracy(&h, &y, &split, &ProbeConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn step_size_bound_is_tight_enough_to_decrease_loss() {
        let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let mut r = rng::stream(4, &[]);
        let x = DenseMatrix::from_fn(40, 3, |i, j| if j == 0 { y[i] as f64 } else { 0.0 } + r.random_range(-1.0..1.0));
        let loss = |w: &DenseMatrix, mean: &[f64], scale: &[f64]| {
            let mut p = design(&x, mean, scale).matmul(w).unwrap();
            softmax_rows(&mut p);
            y.iter().enumerate().map(|(i, &c)| -p.get(i, c).ln()).sum::<f64>() / 40.0
        };
        let mut prev = f64::INFINITY;
        for iters in [0, 1, 5, 20, 100] {
            let probe = LogisticProbe::fit(&x, &y, 2, &ProbeConfig { l2: 0.0, iters }).unwrap();
            let l = loss(&probe.weights, &probe.mean, &probe.scale);
            assert!(l <= prev + 1e-12, "{iters}: {l} > {prev}");
            prev = l;
        }
    }

    #[test]
    fn power_iteration_matches_known_spectrum() {
        // aᵀa / n for a = diag(3, 1) repeated twice is diag(4.5, 0.5).
        let a = DenseMatrix::from_rows(&[[3.0, 0.0], [0.0, 1.0], [3.0, 0.0], [0.0, 1.0]]);
        assert!((gram_top_eigenvalue(&a) - 4.5).abs() < 1e-9);
    }

    #[test]
    fn unlabeled_nodes_are_skipped_by_class_index() {
        let (idx, c) = class_index(&[5, -1, 2, 5]);
        assert_eq!(c, 2);
        assert_eq!(idx, vec![Some(1), None, Some(0), Some(1)]);
    }
}
