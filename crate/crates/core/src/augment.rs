//! Graph augmentations and the two view transforms.
//!
//! The first view mixes node attributes through the personalized-PageRank
//! diffusion matrix, the second through the normalized adjacency of a graph
//! with randomly removed edges. Both views independently zero a random subset
//! of attribute columns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{sym_normalize, Graph};
use crate::linalg::{spmm, DenseMatrix, SparseMatrix};
use crate::rng::Rng;

/// Largest node count for which diffusion uses the exact dense inverse.
pub const DENSE_SOLVE_LIMIT: usize = 5000;

/// Truncation tolerance of the power series used above [`DENSE_SOLVE_LIMIT`]:
/// the series stops at the first `K` with `(1 - alpha)^(K+1) < SERIES_TOL`.
pub const SERIES_TOL: f64 = 1e-4;

/// Default sparsification threshold for graphs above [`DENSE_SOLVE_LIMIT`].
pub const LARGE_GRAPH_EPS: f64 = 1e-4;

/// An `n x n` node-mixing operator.
#[derive(Debug, Clone, PartialEq)]
pub enum MixMatrix {
    Sparse(SparseMatrix),
    Dense(DenseMatrix),
}

impl MixMatrix {
    pub fn n(&self) -> usize {
        match self {
            MixMatrix::Sparse(s) => s.n_rows(),
            MixMatrix::Dense(d) => d.rows(),
        }
    }

    /// `mix · b`
    pub fn apply(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            MixMatrix::Sparse(s) => spmm(s, b),
            MixMatrix::Dense(d) => d.matmul(b),
        }
    }

    /// `mixᵀ · b`
    pub fn apply_t(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            MixMatrix::Sparse(s) => spmm(&s.transpose(), b),
            MixMatrix::Dense(d) => d.t_matmul(b),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            MixMatrix::Sparse(s) => s.to_dense(),
            MixMatrix::Dense(d) => d.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            MixMatrix::Sparse(s) => s.values().iter().all(|v| v.is_finite()),
            MixMatrix::Dense(d) => d.is_finite(),
        }
    }
}

impl From<SparseMatrix> for MixMatrix {
    fn from(s: SparseMatrix) -> Self {
        MixMatrix::Sparse(s)
    }
}

/// An augmented graph: a mixing matrix and a masked attribute matrix.
#[derive(Debug, Clone)]
pub struct View {
    pub mix: Arc<MixMatrix>,
    pub x_masked: DenseMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugParams {
    /// Edge-removal probability of the second view.
    pub p_re: f64,
    /// Attribute-mask ratio of the first (diffusion) view.
    pub p_mnf_1: f64,
    /// Attribute-mask ratio of the second (edge-removal) view.
    pub p_mnf_2: f64,
    /// PageRank teleport probability.
    pub alpha: f64,
    /// Diffusion entries below this magnitude are dropped.
    pub eps: f64,
}

impl Default for AugParams {
    fn default() -> Self {
        AugParams {
            p_re: 0.2,
            p_mnf_1: 0.3,
            p_mnf_2: 0.4,
            alpha: 0.05,
            eps: 0.0,
        }
    }
}

impl AugParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("{v} is outside [0, 1]")))
            }
        };
        unit("p_re", self.p_re)?;
        unit("p_mnf_1", self.p_mnf_1)?;
        unit("p_mnf_2", self.p_mnf_2)?;
        check_alpha(self.alpha)?;
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::param("eps", format!("{} must be finite and >= 0", self.eps)));
        }
        Ok(())
    }

    /// The eps default for a graph with `n` nodes: off up to
    /// [`DENSE_SOLVE_LIMIT`], [`LARGE_GRAPH_EPS`] above it.
    pub fn default_eps(n: usize) -> f64 {
        if n > DENSE_SOLVE_LIMIT {
            LARGE_GRAPH_EPS
        } else {
            0.0
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} is outside (0, 1)")))
    }
}

/// How the diffusion matrix is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PprMethod {
    /// `alpha (I - (1-alpha) T)^{-1}` through a dense Cholesky factorization.
    Exact,
    /// `alpha Σ_k (1-alpha)^k T^k`, truncated once `(1-alpha)^(K+1) < tol`.
    Series { tol: f64 },
}

impl PprMethod {
    pub fn auto(n: usize) -> Self {
        if n <= DENSE_SOLVE_LIMIT {
            PprMethod::Exact
        } else {
            PprMethod::Series { tol: SERIES_TOL }
        }
    }
}

/// Personalized-PageRank diffusion of `g` with teleport probability `alpha`.
/// With `eps > 0`, entries below `eps` are dropped and each row is rescaled
/// back to its original sum; the result is then sparse.
pub fn ppr_diffusion(g: &Graph, alpha: f64, eps: f64) -> Result<MixMatrix> {
    ppr_diffusion_with(g, alpha, eps, PprMethod::auto(g.n()))
}

pub fn ppr_diffusion_with(g: &Graph, alpha: f64, eps: f64, method: PprMethod) -> Result<MixMatrix> {
    check_alpha(alpha)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::param("eps", format!("{eps} must be finite and >= 0")));
    }
    let t = sym_normalize(g);
    let s = match method {
        PprMethod::Exact => ppr_exact(&t, alpha),
        PprMethod::Series { tol } => {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::param("tol", format!("{tol} is outside (0, 1)")));
            }
            if eps > 0.0 {
                return Ok(MixMatrix::Sparse(ppr_series_sparse(&t, alpha, tol, eps)));
            }
            ppr_series(&t, alpha, tol)
        }
    };
    if eps > 0.0 {
        Ok(MixMatrix::Sparse(sparsify_rows(&s, eps)))
    } else {
        Ok(MixMatrix::Dense(s))
    }
}

/// Number of series terms beyond the constant one: the smallest `K` with
/// `(1 - alpha)^(K+1) < tol`.
pub fn series_terms(alpha: f64, tol: f64) -> usize {
    let mut k = 0usize;
    let mut r = 1.0 - alpha;
    while r >= tol {
        r *= 1.0 - alpha;
        k += 1;
    }
    k
}

/// `alpha (I - (1-alpha) t)^{-1}` for a symmetric `t` with spectral radius
/// at most one. The system matrix is symmetric positive definite, so it is
/// inverted through its Cholesky factor `L`: `M^{-1} = L^{-T} L^{-1}`.
pub fn ppr_exact(t: &SparseMatrix, alpha: f64) -> DenseMatrix {
    let n = t.n_rows();
    let beta = 1.0 - alpha;
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        m.set(i, i, 1.0);
        let (cols, vals) = t.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let cur = m.get(i, j);
            m.set(i, j, cur - beta * v);
        }
    }
    let l = cholesky_lower(m);
    let linv = lower_inverse(&l);
    drop(l);
    let mut s = gram_of_lower(&linv);
    s.scale(alpha);
    s
}

/// In-place Cholesky factorization; returns the lower factor (upper triangle
/// zeroed). Panics if the matrix is not positive definite, which cannot
/// happen for the diffusion system.
fn cholesky_lower(mut a: DenseMatrix) -> DenseMatrix {
    let n = a.rows();
    let data = a.data_mut();
    for j in 0..n {
        let (head, tail) = data.split_at_mut(j * n);
        let row_j = &mut tail[..n];
        // Row j of L, left of the diagonal.
        for k in 0..j {
            let row_k = &head[k * n..k * n + k + 1];
            let s: f64 = row_j[..k].iter().zip(&row_k[..k]).map(|(a, b)| a * b).sum();
            row_j[k] = (row_j[k] - s) / row_k[k];
        }
        let s: f64 = row_j[..j].iter().map(|v| v * v).sum();
        let d = row_j[j] - s;
        assert!(d > 0.0, "diffusion system is not positive definite");
        row_j[j] = d.sqrt();
        row_j[j + 1..].iter_mut().for_each(|v| *v = 0.0);
    }
    a
}

/// Inverse of a lower-triangular matrix, built row by row.
fn lower_inverse(l: &DenseMatrix) -> DenseMatrix {
    let n = l.rows();
    let mut inv = DenseMatrix::zeros(n, n);
    let data = inv.data_mut();
    for i in 0..n {
        let (done, rest) = data.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        let lrow = l.row(i);
        row_i[i] = 1.0;
        for k in 0..i {
            let c = lrow[k];
            if c != 0.0 {
                let row_k = &done[k * n..k * n + k + 1];
                for (dst, src) in row_i[..=k].iter_mut().zip(row_k) {
                    *dst -= c * src;
                }
            }
        }
        let d = lrow[i];
        row_i[..=i].iter_mut().for_each(|v| *v /= d);
    }
    inv
}

/// `Lᵀ L` for lower-triangular `L`, mirrored so the result is exactly symmetric.
fn gram_of_lower(l: &DenseMatrix) -> DenseMatrix {
    let n = l.rows();
    let mut out = DenseMatrix::zeros(n, n);
    // out[a][b] = Σ_{k >= max(a,b)} L[k][a] L[k][b]; accumulate the lower half.
    out.data_mut()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(a, out_row)| {
            for k in a..n {
                let lk = l.row(k);
                let c = lk[a];
                if c != 0.0 {
                    for (dst, src) in out_row[..=a].iter_mut().zip(&lk[..=a]) {
                        *dst += c * src;
                    }
                }
            }
        });
    for a in 0..n {
        for b in 0..a {
            let v = out.get(a, b);
            out.set(b, a, v);
        }
    }
    out
}

/// One row of the truncated series, `alpha Σ_{k<=K} (1-alpha)^k e_iᵀ T^k`,
/// evaluated with a dense work vector.
fn series_row(t: &SparseMatrix, i: usize, alpha: f64, terms: usize) -> Vec<f64> {
    let n = t.n_rows();
    let beta = 1.0 - alpha;
    let mut acc = vec![0.0; n];
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    cur[i] = 1.0;
    acc[i] = alpha;
    let mut coef = alpha;
    for _ in 0..terms {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (l, &r) in cur.iter().enumerate() {
            if r != 0.0 {
                let (cols, vals) = t.row(l);
                for (&j, &v) in cols.iter().zip(vals) {
                    next[j] += r * v;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        coef *= beta;
        for (a, c) in acc.iter_mut().zip(&cur) {
            *a += coef * c;
        }
    }
    acc
}

/// Dense truncated series. `t` must be symmetric (row `i` of `T^k` is then
/// `e_iᵀ T^k`).
pub fn ppr_series(t: &SparseMatrix, alpha: f64, tol: f64) -> DenseMatrix {
    let n = t.n_rows();
    let terms = series_terms(alpha, tol);
    let mut out = DenseMatrix::zeros(n, n);
    out.data_mut()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, row)| row.copy_from_slice(&series_row(t, i, alpha, terms)));
    out
}

fn ppr_series_sparse(t: &SparseMatrix, alpha: f64, tol: f64, eps: f64) -> SparseMatrix {
    let n = t.n_rows();
    let terms = series_terms(alpha, tol);
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| sparsify_row(&series_row(t, i, alpha, terms), eps))
        .collect();
    assemble_rows(n, rows)
}

/// Drops entries with magnitude below `eps` and rescales the survivors so the
/// row keeps its pre-drop sum. If nothing survives, the largest entry is kept.
fn sparsify_row(row: &[f64], eps: f64) -> (Vec<usize>, Vec<f64>) {
    let total: f64 = row.iter().sum();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for (j, &v) in row.iter().enumerate() {
        if v != 0.0 && v.abs() >= eps {
            cols.push(j);
            vals.push(v);
        }
    }
    if cols.is_empty() {
        if let Some((j, &v)) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .filter(|(_, v)| **v != 0.0)
        {
            cols.push(j);
            vals.push(v);
        }
    }
    let kept: f64 = vals.iter().sum();
    if kept != 0.0 {
        let scale = total / kept;
        vals.iter_mut().for_each(|v| *v *= scale);
    }
    (cols, vals)
}

fn assemble_rows(n: usize, rows: Vec<(Vec<usize>, Vec<f64>)>) -> SparseMatrix {
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    offsets.push(0);
    for (c, v) in rows {
        indices.extend(c);
        values.extend(v);
        offsets.push(indices.len());
    }
    SparseMatrix::from_csr(n, n, offsets, indices, values).expect("rows are built sorted")
}

/// Threshold-then-rescale sparsification of a dense diffusion matrix.
pub fn sparsify_rows(s: &DenseMatrix, eps: f64) -> SparseMatrix {
    let rows = s.row_iter().map(|r| sparsify_row(r, eps)).collect();
    assemble_rows(s.rows(), rows)
}

/// Removes each undirected edge independently with probability `p_re`.
pub fn remove_edges(g: &Graph, p_re: f64, rng: &mut Rng) -> Graph {
    let kept = g
        .edges()
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() >= p_re)
        .collect();
    g.with_edge_subset(kept)
}

/// Number of masked columns for ratio `p` over `f` columns: `floor(p * f)`.
/// A `1e-9` guard absorbs binary representation error in `p * f`.
pub fn masked_count(p: f64, f: usize) -> usize {
    (((p * f as f64) + 1e-9).floor() as usize).min(f)
}

/// Draws `floor(p * f)` distinct columns uniformly without replacement.
pub fn mask_columns(f: usize, p: f64, rng: &mut Rng) -> Vec<usize> {
    let m = masked_count(p, f);
    let mut cols = index::sample(rng, f, m).into_vec();
    cols.sort_unstable();
    cols
}

/// Zeroes a random `floor(p_mnf * F)` subset of attribute columns across all
/// nodes. Other columns are copied unchanged.
pub fn mask_node_features(x: &DenseMatrix, p_mnf: f64, rng: &mut Rng) -> DenseMatrix {
    let cols = mask_columns(x.cols(), p_mnf, rng);
    let mut out = x.clone();
    if cols.is_empty() {
        return out;
    }
    let f = x.cols();
    for row in out.data_mut().chunks_mut(f) {
        for &c in &cols {
            row[c] = 0.0;
        }
    }
    out
}

/// Samples augmented view pairs for one graph. The diffusion matrix is
/// computed once on construction; edge removal and masks are redrawn on
/// every call to [`ViewSampler::sample`].
#[derive(Debug, Clone)]
pub struct ViewSampler {
    graph: Graph,
    params: AugParams,
    diffusion: Option<Arc<MixMatrix>>,
}

impl ViewSampler {
    pub fn new(graph: Graph, params: AugParams) -> Result<Self> {
        params.validate()?;
        let diffusion = Arc::new(ppr_diffusion(&graph, params.alpha, params.eps)?);
        Ok(ViewSampler {
            graph,
            params,
            diffusion: Some(diffusion),
        })
    }

    /// Uses a precomputed diffusion matrix, e.g. one read from a cache file.
    pub fn with_diffusion(graph: Graph, params: AugParams, diffusion: Arc<MixMatrix>) -> Result<Self> {
        params.validate()?;
        if diffusion.n() != graph.n() {
            return Err(Error::dims(
                "ViewSampler::with_diffusion",
                format!("diffusion is {0}x{0}, graph has {1} nodes", diffusion.n(), graph.n()),
            ));
        }
        Ok(ViewSampler {
            graph,
            params,
            diffusion: Some(diffusion),
        })
    }

    /// Replaces the diffusion view with a second edge-removal view.
    pub fn without_diffusion(graph: Graph, params: AugParams) -> Result<Self> {
        params.validate()?;
        Ok(ViewSampler {
            graph,
            params,
            diffusion: None,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn params(&self) -> &AugParams {
        &self.params
    }

    pub fn diffusion(&self) -> Option<&Arc<MixMatrix>> {
        self.diffusion.as_ref()
    }

    /// Draws `(view1, view2)` from two independent streams.
    pub fn sample(&self, rng1: &mut Rng, rng2: &mut Rng) -> (View, View) {
        let x = self.graph.features();
        let mix1 = match &self.diffusion {
            Some(d) => Arc::clone(d),
            None => Arc::new(sym_normalize(&remove_edges(&self.graph, self.params.p_re, rng1)).into()),
        };
        let view1 = View {
            mix: mix1,
            x_masked: mask_node_features(x, self.params.p_mnf_1, rng1),
        };
        let view2 = View {
            mix: Arc::new(sym_normalize(&remove_edges(&self.graph, self.params.p_re, rng2)).into()),
            x_masked: mask_node_features(x, self.params.p_mnf_2, rng2),
        };
        (view1, view2)
    }
}

/// Builds both views from scratch with one random stream.
pub fn make_views(g: &Graph, params: &AugParams, rng: &mut Rng) -> Result<(View, View)> {
    params.validate()?;
    let diffusion = ppr_diffusion(g, params.alpha, params.eps)?;
    let view1 = View {
        mix: Arc::new(diffusion),
        x_masked: mask_node_features(g.features(), params.p_mnf_1, rng),
    };
    let view2 = View {
        mix: Arc::new(sym_normalize(&remove_edges(g, params.p_re, rng)).into()),
        x_masked: mask_node_features(g.features(), params.p_mnf_2, rng),
    };
    Ok((view1, view2))
}

const DIFFUSION_MAGIC: &[u8; 4] = b"GRPD";
const DIFFUSION_VERSION: u32 = 1;

/// Writes a diffusion matrix as: magic `GRPD`, version `u32`, `n` `u64`,
/// `n` per-row entry counts (`u64`), column indices (`u64`), values (`f64`).
/// All little-endian. Dense matrices are written with every entry.
pub fn write_diffusion_cache(path: &Path, s: &MixMatrix) -> Result<()> {
    let sparse;
    let s = match s {
        MixMatrix::Sparse(s) => s,
        MixMatrix::Dense(d) => {
            sparse = dense_as_full_csr(d);
            &sparse
        }
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DIFFUSION_MAGIC)?;
    w.write_all(&DIFFUSION_VERSION.to_le_bytes())?;
    w.write_all(&(s.n_rows() as u64).to_le_bytes())?;
    for win in s.offsets().windows(2) {
        w.write_all(&((win[1] - win[0]) as u64).to_le_bytes())?;
    }
    for &j in s.indices() {
        w.write_all(&(j as u64).to_le_bytes())?;
    }
    for &v in s.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn dense_as_full_csr(d: &DenseMatrix) -> SparseMatrix {
    let (r, c) = d.shape();
    let offsets = (0..=r).map(|i| i * c).collect();
    let indices = (0..r).flat_map(|_| 0..c).collect();
    SparseMatrix::from_csr(r, c, offsets, indices, d.data().to_vec()).expect("full layout is valid")
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a file written by [`write_diffusion_cache`]. A matrix stored with
/// every entry comes back dense.
pub fn read_diffusion_cache(path: &Path) -> Result<MixMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DIFFUSION_MAGIC {
        return Err(Error::Format(format!("{}: not a diffusion cache", path.display())));
    }
    let mut v = [0u8; 4];
    r.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != DIFFUSION_VERSION {
        return Err(Error::Format(format!("diffusion cache version {version} unsupported")));
    }
    let n = read_u64(&mut r)? as usize;
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0usize);
    for _ in 0..n {
        let c = read_u64(&mut r)? as usize;
        if c > n {
            return Err(Error::Format("row entry count exceeds n".into()));
        }
        offsets.push(offsets.last().unwrap() + c);
    }
    let nnz = *offsets.last().unwrap();
    let mut indices = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        indices.push(read_u64(&mut r)? as usize);
    }
    let mut values = Vec::with_capacity(nnz);
    let mut b = [0u8; 8];
    for _ in 0..nnz {
        r.read_exact(&mut b)?;
        values.push(f64::from_le_bytes(b));
    }
    if r.read(&mut b)? != 0 {
        return Err(Error::Format("trailing bytes after diffusion matrix".into()));
    }
    let s = SparseMatrix::from_csr(n, n, offsets, indices, values)?;
    if n > 0 && s.nnz() == n * n {
        Ok(MixMatrix::Dense(s.to_dense()))
    } else {
        Ok(MixMatrix::Sparse(s))
    }
}
