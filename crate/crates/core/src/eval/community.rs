//! Community detection scores: clustering accuracy, NMI and ARI.

use pathfinding::prelude::{kuhn_munkres, Matrix};

use super::metrics::Metrics;
use crate::cluster::{kmeans_fit, KMeansParams};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::{self, tag};

use super::probe::class_index;

/// Counts `table[a][b]` of items with label `a` in the first partition and
/// `b` in the second, after compacting both label sets to `0..k`.
fn contingency(a: &[usize], b: &[usize]) -> Result<Vec<Vec<u64>>> {
    if a.len() != b.len() {
        return Err(Error::dims("contingency", format!("{} vs {} labels", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::DegenerateSplit("empty partition".into()));
    }
    let compact = |v: &[usize]| {
        let mut u = v.to_vec();
        u.sort_unstable();
        u.dedup();
        let ids: Vec<usize> = v.iter().map(|x| u.binary_search(x).expect("present")).collect();
        (ids, u.len())
    };
    let (ia, ka) = compact(a);
    let (ib, kb) = compact(b);
    let mut t = vec![vec![0u64; kb]; ka];
    for (&x, &y) in ia.iter().zip(&ib) {
        t[x][y] += 1;
    }
    Ok(t)
}

/// Fraction of items on the best one-to-one matching between predicted
/// clusters and classes (Hungarian algorithm).
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = contingency(pred, truth)?;
    let size = t.len().max(t[0].len());
    let weights = Matrix::from_fn(size, size, |(i, j)| {
        t.get(i).and_then(|row| row.get(j)).map_or(0i64, |&c| c as i64)
    });
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / pred.len() as f64)
}

fn entropy(counts: impl Iterator<Item = u64>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies
/// (natural logs). Two single-cluster partitions score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let n = a.len() as f64;
    let rows: Vec<u64> = t.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let ha = entropy(rows.iter().copied(), n);
    let hb = entropy(cols.iter().copied(), n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (n * c / (rows[i] as f64 * cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (ha + hb))).clamp(0.0, 1.0))
}

fn choose2(x: u64) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Identical trivial partitions score 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let n = a.len() as u64;
    let index: f64 = t.iter().flatten().map(|&c| choose2(c)).sum();
    let sum_a: f64 = t.iter().map(|r| choose2(r.iter().sum())).sum();
    let sum_b: f64 = (0..t[0].len()).map(|j| choose2(t.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Restarts used by the community-detection k-means.
pub const COMMUNITY_RESTARTS: usize = 10;

/// k-means on the labeled rows of `h` with one cluster per class, scored by
/// ACC, NMI and ARI against the labels.
pub fn community_detect(h: &DenseMatrix, labels: &[i64], seed: u64) -> Result<Metrics> {
    if h.rows() != labels.len() {
        return Err(Error::dims("community_detect", format!("{} embeddings, {} labels", h.rows(), labels.len())));
    }
    let (idx, k) = class_index(labels);
    let (nodes, truth): (Vec<usize>, Vec<usize>) = idx.iter().enumerate().filter_map(|(i, c)| c.map(|c| (i, c))).unzip();
    if k == 0 {
        return Err(Error::DegenerateSplit("no labeled nodes".into()));
    }
    let params = KMeansParams {
        restarts: COMMUNITY_RESTARTS,
        ..KMeansParams::default()
    };
    let fit = kmeans_fit(&h.select_rows(&nodes), k, &mut rng::stream(seed, &[tag::COMMUNITY]), &params)?;
    let pred = &fit.assignments;
    Ok(Metrics::new("community_detection", 1, seed)
        .with("acc", clustering_accuracy(pred, &truth)?)
        .with("nmi", nmi(pred, &truth)?)
        .with("ari", ari(pred, &truth)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng as _;

    /// Mutual information and entropies straight from their sums over
    /// label values, without a contingency table.
    fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len() as f64;
        let max_a = *a.iter().max().unwrap();
        let max_b = *b.iter().max().unwrap();
        let p = |f: &dyn Fn(usize) -> bool| (0..a.len()).filter(|&i| f(i)).count() as f64 / n;
        let mut ha = 0.0;
        for x in 0..=max_a {
            let px = p(&|i| a[i] == x);
            if px > 0.0 {
                ha -= px * px.ln();
            }
        }
        let mut hb = 0.0;
        for y in 0..=max_b {
            let py = p(&|i| b[i] == y);
            if py > 0.0 {
                hb -= py * py.ln();
            }
        }
        let mut mi = 0.0;
        for x in 0..=max_a {
            for y in 0..=max_b {
                let pxy = p(&|i| a[i] == x && b[i] == y);
                if pxy > 0.0 {
                    mi += pxy * (pxy / (p(&|i| a[i] == x) * p(&|i| b[i] == y))).ln();
                }
            }
        }
        if ha == 0.0 && hb == 0.0 {
            1.0
        } else {
            mi / ((ha + hb) / 2.0)
        }
    }

    /// ARI from the four pair counts over all item pairs.
    fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
        let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => ss += 1.0,
                    (true, false) => sd += 1.0,
                    (false, true) => ds += 1.0,
                    (false, false) => dd += 1.0,
                }
            }
        }
        let denom = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
        if denom == 0.0 {
            1.0
        } else {
            2.0 * (ss * dd - sd * ds) / denom
        }
    }

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(k - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, k - 1);
                out.push(q);
            }
        }
        out
    }

    /// Best accuracy over every relabeling of the predicted clusters.
    fn acc_oracle(pred: &[usize], truth: &[usize]) -> f64 {
        let k = pred.iter().chain(truth).max().unwrap() + 1;
        permutations(k)
            .iter()
            .map(|perm| pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count())
            .max()
            .unwrap() as f64
            / pred.len() as f64
    }

    #[test]
    fn matches_oracles_on_random_partitions() {
        let mut r = rng::stream(21, &[]);
        for _ in 0..200 {
            let n = r.random_range(2..30);
            let ka = r.random_range(1..6);
            let kb = r.random_range(1..6);
            let a: Vec<usize> = (0..n).map(|_| r.random_range(0..ka)).collect();
            let b: Vec<usize> = (0..n).map(|_| r.random_range(0..kb)).collect();
            assert!((nmi(&a, &b).unwrap() - nmi_oracle(&a, &b)).abs() < 1e-10);
            assert!((ari(&a, &b).unwrap() - ari_oracle(&a, &b)).abs() < 1e-10);
            assert!((clustering_accuracy(&a, &b).unwrap() - acc_oracle(&a, &b)).abs() < 1e-10);
        }
    }

    #[test]
    fn relabeled_partition_scores_one() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let pred = [2, 2, 0, 0, 1, 1, 1];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 1.0);
        assert!((nmi(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
        assert!((ari(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_has_no_information() {
        let truth = [0, 1, 0, 1, 2];
        let pred = [0; 5];
        assert_eq!(nmi(&pred, &truth).unwrap(), 0.0);
        assert_eq!(ari(&pred, &truth).unwrap(), 0.0);
    }

    #[test]
    fn unequal_cluster_counts() {
        // Three clusters against two classes: one cluster stays unmatched.
        let pred = [0, 0, 1, 2, 2];
        let truth = [0, 0, 0, 1, 1];
        assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 0.8);
    }

    #[test]
    fn community_detect_recovers_blobs() {
        let labels: Vec<i64> = (0..60).map(|i| (i % 3) as i64).collect();
        let mut r = rng::stream(2, &[]);
        let h = DenseMatrix::from_fn(60, 3, |i, j| f64::from(labels[i] == j as i64) * 5.0 + r.random_range(-0.5..0.5));
        let m = community_detect(&h, &labels, 0).unwrap();
        for key in ["acc", "nmi", "ari"] {
            assert!((m.values[key] - 1.0).abs() < 1e-12, "{key}");
        }
    }

    proptest! {
        #[test]
        fn scores_ignore_relabeling(
            a in prop::collection::vec(0usize..4, 2..25),
            seed in any::<u64>(),
        ) {
            let mut r = rng::stream(seed, &[]);
            let b: Vec<usize> = a.iter().map(|&x| (x + r.random_range(0..2)) % 4).collect();
            let mut perm: Vec<usize> = (0..4).collect();
            perm.shuffle(&mut r);
            let pa: Vec<usize> = a.iter().map(|&x| perm[x] + 10).collect();
            prop_assert!((nmi(&a, &b).unwrap() - nmi(&pa, &b).unwrap()).abs() < 1e-12);
            prop_assert!((ari(&a, &b).unwrap() - ari(&pa, &b).unwrap()).abs() < 1e-12);
            prop_assert!((clustering_accuracy(&a, &b).unwrap() - clustering_accuracy(&pa, &b).unwrap()).abs() < 1e-12);
            prop_assert!((nmi(&b, &a).unwrap() - nmi(&b, &pa).unwrap()).abs() < 1e-12);
        }
    }
}
