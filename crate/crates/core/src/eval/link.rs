//! Link prediction: held-out edge splits, scores, AUC and average precision.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::metrics::{mean_std, Metrics};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{dot, DenseMatrix};
use crate::rng::{self, tag, Rng};

/// Held-out positives and sampled negatives. Pairs are `(lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSplit {
    /// The input graph without the held-out edges.
    pub train_graph: Graph,
    pub val_pos: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

/// Holds out `round(val_frac * m)` and `round(test_frac * m)` random edges and
/// draws as many distinct non-edges of `g` for each set.
pub fn make_link_split(g: &Graph, val_frac: f64, test_frac: f64, rng: &mut Rng) -> Result<LinkSplit> {
    for (name, f) in [("val_frac", val_frac), ("test_frac", test_frac)] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::param(name, format!("{f} is outside [0, 1)")));
        }
    }
    let m = g.num_edges();
    let n_val = (val_frac * m as f64).round() as usize;
    let n_test = (test_frac * m as f64).round() as usize;
    if n_test == 0 || n_val + n_test >= m {
        return Err(Error::NotEnoughEdges {
            available: m,
            required: (n_val + n_test + 1).max(2),
        });
    }
    let n = g.n();
    let pairs = n * (n - 1) / 2;
    let needed_neg = n_val + n_test;
    if pairs - m < needed_neg {
        return Err(Error::DegenerateSplit(format!(
            "{needed_neg} negatives requested but only {} non-edges exist",
            pairs - m
        )));
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    let edges = g.edges();
    let mut held: Vec<usize> = order[..n_val + n_test].to_vec();
    let test_pos: Vec<_> = held[n_val..].iter().map(|&e| edges[e]).collect();
    let val_pos: Vec<_> = held[..n_val].iter().map(|&e| edges[e]).collect();
    held.sort_unstable();
    let mut keep = Vec::with_capacity(m - held.len());
    let mut h = held.iter().peekable();
    for (e, &pair) in edges.iter().enumerate() {
        if h.peek() == Some(&&e) {
            h.next();
        } else {
            keep.push(pair);
        }
    }

    // Rejection sampling of distinct non-edges of the original graph.
    let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(needed_neg);
    let mut negatives = Vec::with_capacity(needed_neg);
    while negatives.len() < needed_neg {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let pair = (a.min(b), a.max(b));
        if g.has_edge(pair.0, pair.1) || !seen.insert(pair) {
            continue;
        }
        negatives.push(pair);
    }
    let test_neg = negatives.split_off(n_val);
    Ok(LinkSplit {
        train_graph: g.with_edge_subset(keep),
        val_pos,
        val_neg: negatives,
        test_pos,
        test_neg,
    })
}

/// `h_i · h_j`, the logit of the link probability.
pub fn link_logit(h: &DenseMatrix, i: usize, j: usize) -> f64 {
    dot(h.row(i), h.row(j))
}

/// `sigmoid(h_i · h_j)`.
pub fn link_score(h: &DenseMatrix, i: usize, j: usize) -> f64 {
    1.0 / (1.0 + (-link_logit(h, i, j)).exp())
}

fn check_scores(pos: &[f64], neg: &[f64]) -> Result<()> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateSplit("need at least one positive and one negative".into()));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::NonFinite { context: "link scores".into() });
    }
    Ok(())
}

/// Scores in descending order, each tagged with whether it is positive.
fn ranked(pos: &[f64], neg: &[f64]) -> Vec<(f64, bool)> {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    all
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let all = ranked(pos, neg);
    // Walk tie groups from the top: every positive beats the negatives below
    // its group and half-beats those inside it.
    let mut wins = 0.0;
    let mut neg_below = neg.len() as f64;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut p, mut q) = (0.0, 0.0);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                p += 1.0;
            } else {
                q += 1.0;
            }
            j += 1;
        }
        neg_below -= q;
        wins += p * (neg_below + 0.5 * q);
        i = j;
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

/// Area under the precision-recall curve with step interpolation: the sum
/// over distinct thresholds of (recall gain) x (precision at that threshold).
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    check_scores(pos, neg)?;
    let all = ranked(pos, neg);
    let total_pos = pos.len() as f64;
    let (mut tp, mut fp, mut ap) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut gained = 0.0;
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1.0;
                gained += 1.0;
            } else {
                fp += 1.0;
            }
            j += 1;
        }
        ap += gained / total_pos * (tp / (tp + fp));
        i = j;
    }
    Ok(ap)
}

/// AUC and AP of `h` on the given positives and negatives. Both metrics are
/// rank-based, so they are computed on the logits: identical in exact
/// arithmetic to using the sigmoid scores, without saturation ties.
pub fn link_metrics(h: &DenseMatrix, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<(f64, f64)> {
    let score = |pairs: &[(usize, usize)]| -> Result<Vec<f64>> {
        pairs
            .iter()
            .map(|&(a, b)| {
                if a >= h.rows() || b >= h.rows() {
                    Err(Error::dims("link_metrics", format!("pair ({a}, {b}) with {} embeddings", h.rows())))
                } else {
                    Ok(link_logit(h, a, b))
                }
            })
            .collect()
    };
    let (p, n) = (score(pos)?, score(neg)?);
    Ok((roc_auc(&p, &n)?, average_precision(&p, &n)?))
}

pub const VAL_FRAC: f64 = 0.05;
pub const TEST_FRAC: f64 = 0.10;

/// Test AUC/AP over `runs` random link splits. `embed` must produce
/// embeddings from the training graph it is given; it is called once per run.
pub fn link_predict(
    g: &Graph,
    runs: usize,
    seed: u64,
    mut embed: impl FnMut(&Graph, usize) -> Result<DenseMatrix>,
) -> Result<Metrics> {
    if runs == 0 {
        return Err(Error::param("runs", "must be at least 1"));
    }
    let mut aucs = Vec::with_capacity(runs);
    let mut aps = Vec::with_capacity(runs);
    for run in 0..runs {
        let split = make_link_split(g, VAL_FRAC, TEST_FRAC, &mut rng::stream(seed, &[tag::LINK_SPLIT, run as u64]))?;
        let h = embed(&split.train_graph, run)?;
        if h.rows() != g.n() {
            return Err(Error::dims("link_predict", format!("{} embeddings for {} nodes", h.rows(), g.n())));
        }
        let (auc, ap) = link_metrics(&h, &split.test_pos, &split.test_neg)?;
        aucs.push(auc);
        aps.push(ap);
    }
    let (auc_mean, auc_std) = mean_std(&aucs);
    let (ap_mean, ap_std) = mean_std(&aps);
    Ok(Metrics::new("link_prediction", runs, seed)
        .with("auc_mean", auc_mean)
        .with("auc_std", auc_std)
        .with("ap_mean", ap_mean)
        .with("ap_std", ap_std)
        .with_runs("auc", aucs)
        .with_runs("ap", aps))
}
