//! Attributed undirected graphs and the symmetric GCN normalization.

mod io;
mod split;

use std::sync::Arc;

pub use io::{load_dir, load_graph, write_graph, EDGES_FILE, FEATURES_FILE, LABELS_FILE};
pub use split::{split_labels, split_nodes, NodeSplit, SplitProtocol};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};

/// An attributed graph. Edges are unordered pairs stored as `(lo, hi)` with
/// `lo < hi`, sorted and unique. Self-loops are never stored.
///
/// The attribute matrix sits behind an `Arc`; graphs produced by edge
/// removal share it with their source.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    x: Arc<DenseMatrix>,
    labels: Option<Vec<i64>>,
}

impl Graph {
    /// Builds a graph from an attribute matrix and an edge list in any
    /// orientation. Self-loops are dropped and `(i, j)` / `(j, i)` collapse
    /// into one undirected edge.
    pub fn new(
        x: DenseMatrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        Self::with_shared_features(Arc::new(x), edges, labels)
    }

    pub fn with_shared_features(
        x: Arc<DenseMatrix>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<i64>>,
    ) -> Result<Self> {
        let n = x.rows();
        if x.cols() == 0 {
            return Err(Error::param("features", "attribute dimension must be at least 1"));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::dims(
                    "Graph::new",
                    format!("{} labels for {n} nodes", l.len()),
                ));
            }
        }
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::dims(
                    "Graph::new",
                    format!("edge ({a}, {b}) references a node >= {n}"),
                ));
            }
            if a != b {
                canon.push((a.min(b), a.max(b)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Graph {
            n,
            edges: canon,
            x,
            labels,
        })
    }

    /// Same nodes, attributes and labels; a subset of the edges. The caller
    /// guarantees `edges` is canonical (sorted, unique, `lo < hi`).
    pub(crate) fn with_edge_subset(&self, edges: Vec<(usize, usize)>) -> Graph {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        Graph {
            n: self.n,
            edges,
            x: Arc::clone(&self.x),
            labels: self.labels.clone(),
        }
    }

    /// Replaces the edge set, keeping nodes, attributes and labels.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Graph> {
        Graph::with_shared_features(Arc::clone(&self.x), edges, self.labels.clone())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_features(&self) -> usize {
        self.x.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn shared_features(&self) -> Arc<DenseMatrix> {
        Arc::clone(&self.x)
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Number of distinct non-negative labels.
    pub fn num_classes(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| {
            let mut c: Vec<i64> = l.iter().copied().filter(|&v| v >= 0).collect();
            c.sort_unstable();
            c.dedup();
            c.len()
        })
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Degrees without self-loops.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` where `D̃` holds the degrees of `A + I`.
pub fn sym_normalize(g: &Graph) -> SparseMatrix {
    let deg: Vec<f64> = g.degrees().iter().map(|&d| (d + 1) as f64).collect();
    let weight = |i: usize, j: usize| 1.0 / (deg[i] * deg[j]).sqrt();
    let mut t = Vec::with_capacity(g.n() + 2 * g.num_edges());
    for i in 0..g.n() {
        t.push((i, i, weight(i, i)));
    }
    for &(a, b) in g.edges() {
        let w = weight(a, b);
        t.push((a, b, w));
        t.push((b, a, w));
    }
    SparseMatrix::from_triplets(g.n(), g.n(), t).expect("normalized adjacency entries are in range")
}
