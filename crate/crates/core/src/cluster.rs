//! k-means prototypes, multi-clustering and the asynchronous memory bank.

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, DenseMatrix};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Lloyd stops once no centroid moves farther than this (Euclidean).
    pub tol: f64,
    /// Independent seedings; the fit with the lowest inertia wins.
    pub restarts: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            max_iters: 100,
            tol: 1e-6,
            restarts: 20,
        }
    }
}

/// A fitted partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// `k x dim` centroids.
    pub prototypes: DenseMatrix,
    /// Cluster index of every point.
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
}

impl ClusterState {
    pub fn k(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k()];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

/// Nearest centroid, ties to the lowest index.
fn nearest(point: &[f64], centroids: &DenseMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.row_iter().enumerate() {
        let d = squared_distance(point, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(data: &DenseMatrix, centroids: &DenseMatrix, out: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in data.row_iter().enumerate() {
        let (c, d) = nearest(p, centroids);
        out[i] = c;
        dist[i] = d;
        inertia += d;
    }
    inertia
}

fn kmeans_pp(data: &DenseMatrix, k: usize, rng: &mut Rng) -> DenseMatrix {
    let n = data.rows();
    let mut centroids = DenseMatrix::zeros(k, data.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = data.row_iter().map(|p| squared_distance(p, data.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Rounding can exhaust `target` without a pick; fall back to the
            // last point with positive weight.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(data.row(pick));
        for (i, p) in data.row_iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, data.row(pick)));
        }
    }
    centroids
}

/// Moves each empty cluster's centroid onto the point farthest from its own
/// centroid. Returns whether anything moved.
fn reseed_empty(data: &DenseMatrix, centroids: &mut DenseMatrix, assignments: &mut [usize], dist: &mut [f64]) -> bool {
    let k = centroids.rows();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    let mut moved = false;
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        // Only take points from clusters that keep at least one member.
        let donor = (0..data.rows())
            .filter(|&i| sizes[assignments[i]] > 1 && dist[i] > 0.0)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
        let Some(i) = donor else { break };
        sizes[assignments[i]] -= 1;
        sizes[c] = 1;
        assignments[i] = c;
        dist[i] = 0.0;
        centroids.row_mut(c).copy_from_slice(data.row(i));
        moved = true;
    }
    moved
}

/// Single-point refinement: moves a point to another cluster whenever that
/// strictly lowers the inertia once both means are updated. Any fixed point
/// of this pass is also a fixed point of Lloyd's step, and it escapes many of
/// Lloyd's poorer local minima.
fn hartigan(data: &DenseMatrix, assignments: &mut [usize], k: usize) {
    let d = data.cols();
    let mut sums = DenseMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &a) in data.row_iter().zip(assignments.iter()) {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(p) {
            *s += v;
        }
    }
    // Squared distance from `p` to the mean of cluster `c`.
    let dist_to_mean = |sums: &DenseMatrix, counts: &[usize], p: &[f64], c: usize| {
        let inv = 1.0 / counts[c] as f64;
        p.iter().zip(sums.row(c)).map(|(x, s)| (x - s * inv).powi(2)).sum::<f64>()
    };
    // Each accepted move strictly lowers the inertia, so this terminates; the
    // cap only guards against rounding ping-pong.
    for _ in 0..100 * data.rows().max(1) {
        let mut moved = false;
        for (i, p) in data.row_iter().enumerate() {
            let from = assignments[i];
            let n_from = counts[from] as f64;
            if counts[from] <= 1 {
                continue;
            }
            let leave_gain = n_from / (n_from - 1.0) * dist_to_mean(&sums, &counts, p, from);
            let mut best: Option<(usize, f64)> = None;
            for to in (0..k).filter(|&c| c != from && counts[c] > 0) {
                let n_to = counts[to] as f64;
                let join_cost = n_to / (n_to + 1.0) * dist_to_mean(&sums, &counts, p, to);
                let delta = join_cost - leave_gain;
                if delta < -1e-12 * leave_gain.max(1e-300) && best.is_none_or(|(_, b)| delta < b) {
                    best = Some((to, delta));
                }
            }
            if let Some((to, _)) = best {
                for (j, &v) in p.iter().enumerate() {
                    sums.set(from, j, sums.get(from, j) - v);
                    sums.set(to, j, sums.get(to, j) + v);
                }
                counts[from] -= 1;
                counts[to] += 1;
                assignments[i] = to;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

fn update_centroids(data: &DenseMatrix, assignments: &[usize], centroids: &mut DenseMatrix) -> f64 {
    let (k, d) = centroids.shape();
    let mut sums = DenseMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (p, &a) in data.row_iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut shift = 0.0f64;
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        let row = sums.row_mut(c);
        row.iter_mut().for_each(|v| *v *= inv);
        shift = shift.max(squared_distance(row, centroids.row(c)).sqrt());
        centroids.row_mut(c).copy_from_slice(row);
    }
    shift
}

/// k-means with k-means++ seeding, Lloyd iterations and a single-point
/// refinement pass, repeated
/// `params.restarts` times; the lowest-inertia fit is returned (the earliest
/// one on ties).
///
/// Empty clusters are reseeded to the point farthest from its centroid.
/// When the data holds at least `k` distinct points the result has no empty
/// cluster and every point sits in its nearest cluster (ties go to the lower
/// index).
pub fn kmeans_fit(data: &DenseMatrix, k: usize, rng: &mut Rng, params: &KMeansParams) -> Result<ClusterState> {
    let n = data.rows();
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if n < k {
        return Err(Error::TooFewPoints { n, k });
    }
    if !data.is_finite() {
        return Err(Error::NonFinite {
            context: "k-means input".into(),
        });
    }
    if params.restarts == 0 {
        return Err(Error::param("restarts", "must be at least 1"));
    }
    let mut best = lloyd(data, k, rng, params);
    for _ in 1..params.restarts {
        let next = lloyd(data, k, rng, params);
        if next.inertia < best.inertia {
            best = next;
        }
    }
    Ok(best)
}

fn lloyd(data: &DenseMatrix, k: usize, rng: &mut Rng, params: &KMeansParams) -> ClusterState {
    let n = data.rows();
    let mut centroids = kmeans_pp(data, k, rng);
    let mut assignments = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let mut inertia = assign(data, &centroids, &mut assignments, &mut dist);

    for _ in 0..params.max_iters {
        reseed_empty(data, &mut centroids, &mut assignments, &mut dist);
        let before: f64 = dist.iter().sum();
        let shift = update_centroids(data, &assignments, &mut centroids);
        let after = assign(data, &centroids, &mut assignments, &mut dist);
        assert!(
            after <= before + 1e-9 * before.max(1.0),
            "Lloyd step increased inertia from {before} to {after}"
        );
        inertia = after;
        if shift < params.tol {
            break;
        }
    }

    hartigan(data, &mut assignments, k);

    // Settle: centroids are the means of their members, every point is in its
    // nearest cluster, no cluster is empty.
    for _ in 0..params.max_iters.max(1) {
        let moved = reseed_empty(data, &mut centroids, &mut assignments, &mut dist);
        let shift = update_centroids(data, &assignments, &mut centroids);
        let prev = assignments.clone();
        inertia = assign(data, &centroids, &mut assignments, &mut dist);
        if !moved && shift == 0.0 && prev == assignments {
            break;
        }
    }

    ClusterState {
        prototypes: centroids,
        assignments,
        inertia,
    }
}

/// Prototypes and assignments for both views from one clustering run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPair {
    pub v: ClusterState,
    pub u: ClusterState,
}

/// `h` independent clustering runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiClusterSet {
    pub runs: Vec<ClusterPair>,
}

impl MultiClusterSet {
    pub fn h(&self) -> usize {
        self.runs.len()
    }
}

/// Spherical variant used for prototypes: rows are L2-normalized, k-means is
/// fitted, and the centroids are re-normalized.
pub fn fit_prototypes(reps: &DenseMatrix, k: usize, rng: &mut Rng, params: &KMeansParams) -> Result<ClusterState> {
    let unit = reps.l2_normalize_rows();
    let mut state = kmeans_fit(&unit, k, rng, params)?;
    state.prototypes = state.prototypes.l2_normalize_rows();
    Ok(state)
}

/// Fits `h` prototype sets per view. Each (run, view) pair gets its own
/// stream derived from one draw of `rng`.
pub fn multi_cluster(
    z_v: &DenseMatrix,
    z_u: &DenseMatrix,
    k: usize,
    h: usize,
    rng: &mut Rng,
    params: &KMeansParams,
) -> Result<MultiClusterSet> {
    if h == 0 {
        return Err(Error::param("h", "must be at least 1"));
    }
    let base: u64 = rng.random();
    // One job per (run, view); results come back in job order.
    let fits = (0..2 * h as u64)
        .into_par_iter()
        .map(|job| {
            let (run, view) = (job / 2, job % 2);
            let (reps, tag) = if view == 0 { (z_v, rng::tag::KMEANS_V) } else { (z_u, rng::tag::KMEANS_U) };
            fit_prototypes(reps, k, &mut rng::stream(base, &[run, tag]), params)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = fits.into_iter();
    let runs = (0..h)
        .map(|_| ClusterPair {
            v: it.next().expect("two fits per run"),
            u: it.next().expect("two fits per run"),
        })
        .collect();
    Ok(MultiClusterSet { runs })
}

/// Which representations the prototypes are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMode {
    /// Previous epoch's representations, read from the memory bank.
    Async,
    /// The current epoch's representations.
    Sync,
}

impl std::str::FromStr for ClusterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "async" => Ok(ClusterMode::Async),
            "sync" => Ok(ClusterMode::Sync),
            other => Err(Error::param("mode", format!("expected async or sync, got `{other}`"))),
        }
    }
}

impl std::fmt::Display for ClusterMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClusterMode::Async => "async",
            ClusterMode::Sync => "sync",
        })
    }
}

/// Last stored representations of both views.
#[derive(Debug, Clone, Default)]
pub struct MemoryBank {
    slots: Option<(DenseMatrix, DenseMatrix)>,
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_initialized(&self) -> bool {
        self.slots.is_some()
    }

    /// Stores `(z_v, z_u)`. After the first store the shapes are fixed.
    pub fn store(&mut self, z_v: DenseMatrix, z_u: DenseMatrix) -> Result<()> {
        if let Some((a, b)) = &self.slots {
            if a.shape() != z_v.shape() || b.shape() != z_u.shape() {
                return Err(Error::dims(
                    "MemoryBank::store",
                    format!("bank holds {:?}/{:?}, got {:?}/{:?}", a.shape(), b.shape(), z_v.shape(), z_u.shape()),
                ));
            }
        }
        self.slots = Some((z_v, z_u));
        Ok(())
    }

    pub fn contents(&self) -> Option<(&DenseMatrix, &DenseMatrix)> {
        self.slots.as_ref().map(|(a, b)| (a, b))
    }
}

/// The matrices to cluster: the bank in async mode, the current ones in sync mode.
pub fn bank_source<'a>(
    mode: ClusterMode,
    bank: &'a MemoryBank,
    z_v: &'a DenseMatrix,
    z_u: &'a DenseMatrix,
) -> Result<(&'a DenseMatrix, &'a DenseMatrix)> {
    match mode {
        ClusterMode::Sync => Ok((z_v, z_u)),
        ClusterMode::Async => bank.contents().ok_or(Error::BankUninitialized),
    }
}


#[cfg(test)]
mod oracle_tests {
    use super::*;

    /// Minimum inertia over all 2^n labelings with both clusters non-empty.
    fn brute_force_two_means(data: &DenseMatrix) -> f64 {
        let n = data.rows();
        let d = data.cols();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) - 1 {
            let mut cost = 0.0;
            for side in [0u32, 1] {
                let members: Vec<usize> = (0..n).filter(|&i| (mask >> i) & 1 == side).collect();
                let mut mean = vec![0.0; d];
                for &i in &members {
                    for (m, v) in mean.iter_mut().zip(data.row(i)) {
                        *m += v / members.len() as f64;
                    }
                }
                for &i in &members {
                    cost += squared_distance(data.row(i), &mean);
                }
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn eight_points_two_means_hits_brute_force_optimum() {
        let mut misses = 0;
        let params = KMeansParams::default();
        for trial in 0..100u64 {
            let mut r = rng::stream(trial, &[99]);
            let data = DenseMatrix::from_fn(8, 2, |_, _| r.random_range(-1.0..1.0));
            let s = kmeans_fit(&data, 2, &mut r, &params).unwrap();
            let opt = brute_force_two_means(&data);
            if (s.inertia - opt).abs() > 1e-9 {
                misses += 1;
                eprintln!("trial {trial}: {} vs {opt}", s.inertia);
            }
        }
        assert_eq!(misses, 0);
    }
}
