//! Swapped cluster-assignment loss and its gradient.
//!
//! Each node's representation in one view is scored against the other
//! view's prototypes (cosine similarity over a temperature, then softmax), and
//! the loss is the negative log-likelihood of the other view's assignment.
//! Prototypes and assignments are constants here.

use rayon::prelude::*;

use crate::cluster::{ClusterPair, MultiClusterSet};
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix, NORM_FLOOR};

/// Probabilities below this are clamped inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-30;

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::param("tau", format!("temperature must be positive, got {tau}")))
    }
}

/// Softmax of `z · cᵀ / tau` over the prototype rows, on normalized rows.
pub fn predict_distribution(z_row: &[f64], prototypes: &DenseMatrix, tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    if z_row.len() != prototypes.cols() {
        return Err(Error::dims(
            "predict_distribution",
            format!("row of length {} against {} prototype columns", z_row.len(), prototypes.cols()),
        ));
    }
    let zn = dot(z_row, z_row).sqrt().max(NORM_FLOOR);
    let logits: Vec<f64> = prototypes
        .row_iter()
        .map(|c| dot(z_row, c) / (zn * dot(c, c).sqrt().max(NORM_FLOOR) * tau))
        .collect();
    Ok(softmax(&logits))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// `-ln p[q]`, with `p[q]` clamped at [`PROB_FLOOR`]. The flag is set when
/// the clamp was needed.
pub fn pair_loss(q: usize, p: &[f64]) -> Result<(f64, bool)> {
    let &pq = p
        .get(q)
        .ok_or_else(|| Error::dims("pair_loss", format!("cluster {q} out of {} probabilities", p.len())))?;
    let clamped = pq < PROB_FLOOR;
    Ok((-pq.max(PROB_FLOOR).ln(), clamped))
}

/// Loss and gradients for one clustering run.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLoss {
    pub loss: f64,
    pub grad_z_v: DenseMatrix,
    pub grad_z_u: DenseMatrix,
    /// Number of terms whose probability hit the clamp.
    pub collapsed: usize,
}

/// One direction: rows of `z` scored against `protos`, targets `targets`.
/// Writes `d(sum of terms)/dz` into `grad` and returns (sum, clamp count).
fn directed_term(
    z: &DenseMatrix,
    protos: &DenseMatrix,
    targets: &[usize],
    tau: f64,
    grad: &mut DenseMatrix,
) -> (f64, usize) {
    let unit_protos = protos.l2_normalize_rows();
    let k = protos.rows();
    let per_row: Vec<(f64, bool)> = z
        .data()
        .par_chunks(z.cols())
        .zip(grad.data_mut().par_chunks_mut(z.cols()))
        .zip(targets.par_iter())
        .map(|((row, g), &q)| {
            let norm = dot(row, row).sqrt().max(NORM_FLOOR);
            let logits: Vec<f64> = unit_protos.row_iter().map(|c| dot(row, c) / (norm * tau)).collect();
            let (top, max) = logits
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, s)| if s > b.1 { (i, s) } else { b });
            // ln(sum exp(s - max)) as ln_1p of the non-maximal terms, so a
            // near-zero loss keeps its relative precision.
            let rest: f64 = logits
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != top)
                .map(|(_, s)| (s - max).exp())
                .sum();
            let shift = rest.ln_1p();
            let nll = (max - logits[q]) + shift;
            let cap = -PROB_FLOOR.ln();
            if nll > cap {
                // Clamped: the term is locally constant.
                return (cap, true);
            }
            // d nll / d unit(z) = (p - onehot(q)) · C / tau
            let mut gu = vec![0.0; row.len()];
            for (c, (proto, s)) in unit_protos.row_iter().zip(&logits).enumerate().take(k) {
                let w = ((s - max - shift).exp() - f64::from(c == q)) / tau;
                for (a, b) in gu.iter_mut().zip(proto) {
                    *a += w * b;
                }
            }
            // Back through row / max(|row|, floor).
            if dot(row, row).sqrt() > NORM_FLOOR {
                let radial: f64 = row.iter().zip(&gu).map(|(x, y)| x * y).sum::<f64>() / (norm * norm);
                for ((gi, &ui), &xi) in g.iter_mut().zip(&gu).zip(row) {
                    *gi = (ui - xi * radial) / norm;
                }
            } else {
                for (gi, &ui) in g.iter_mut().zip(&gu) {
                    *gi = ui / norm;
                }
            }
            (nll, false)
        })
        .collect();
    per_row
        .iter()
        .fold((0.0, 0), |(s, c), &(l, flag)| (s + l, c + usize::from(flag)))
}

/// Mean over nodes of the two swapped terms: view-u rows against view-v
/// prototypes with view-v assignments, and the mirror image.
pub fn contrastive_loss(z_v: &DenseMatrix, z_u: &DenseMatrix, pair: &ClusterPair, tau: f64) -> Result<PairLoss> {
    check_tau(tau)?;
    let n = z_v.rows();
    let d = z_v.cols();
    if z_u.shape() != (n, d) {
        return Err(Error::dims("contrastive_loss", format!("{:?} vs {:?}", z_v.shape(), z_u.shape())));
    }
    for (state, view) in [(&pair.v, "v"), (&pair.u, "u")] {
        if state.prototypes.cols() != d || state.assignments.len() != n {
            return Err(Error::dims(
                "contrastive_loss",
                format!(
                    "view {view}: prototypes {:?} and {} assignments for {n} x {d} representations",
                    state.prototypes.shape(),
                    state.assignments.len()
                ),
            ));
        }
        if let Some(&bad) = state.assignments.iter().find(|&&a| a >= state.k()) {
            return Err(Error::dims("contrastive_loss", format!("assignment {bad} >= k = {}", state.k())));
        }
    }
    if n == 0 {
        return Err(Error::param("z", "no nodes"));
    }
    let mut grad_z_u = DenseMatrix::zeros(n, d);
    let mut grad_z_v = DenseMatrix::zeros(n, d);
    let (lu, cu) = directed_term(z_u, &pair.v.prototypes, &pair.v.assignments, tau, &mut grad_z_u);
    let (lv, cv) = directed_term(z_v, &pair.u.prototypes, &pair.u.assignments, tau, &mut grad_z_v);
    let inv_n = 1.0 / n as f64;
    grad_z_u.scale(inv_n);
    grad_z_v.scale(inv_n);
    Ok(PairLoss {
        loss: (lu + lv) * inv_n,
        grad_z_v,
        grad_z_u,
        collapsed: cu + cv,
    })
}

/// Aggregate over `h` clustering runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean of `per_run`.
    pub total: f64,
    pub per_run: Vec<f64>,
    pub grad_z_v: DenseMatrix,
    pub grad_z_u: DenseMatrix,
    /// Clamped log terms summed over runs.
    pub collapse_warnings: usize,
}

/// Averages [`contrastive_loss`] and its gradients over every run in `set`.
pub fn multi_loss(z_v: &DenseMatrix, z_u: &DenseMatrix, set: &MultiClusterSet, tau: f64) -> Result<LossReport> {
    if set.runs.is_empty() {
        return Err(Error::param("h", "at least one clustering run is required"));
    }
    let runs = set
        .runs
        .par_iter()
        .map(|pair| contrastive_loss(z_v, z_u, pair, tau))
        .collect::<Result<Vec<_>>>()?;
    let inv_h = 1.0 / runs.len() as f64;
    let mut grad_z_v = DenseMatrix::zeros(z_v.rows(), z_v.cols());
    let mut grad_z_u = DenseMatrix::zeros(z_u.rows(), z_u.cols());
    let mut per_run = Vec::with_capacity(runs.len());
    let mut collapse_warnings = 0;
    for r in &runs {
        grad_z_v.add_assign(&r.grad_z_v)?;
        grad_z_u.add_assign(&r.grad_z_u)?;
        per_run.push(r.loss);
        collapse_warnings += r.collapsed;
    }
    grad_z_v.scale(inv_h);
    grad_z_u.scale(inv_h);
    let total = per_run.iter().sum::<f64>() * inv_h;
    if !total.is_finite() {
        return Err(Error::NonFinite { context: "contrastive loss".into() });
    }
    Ok(LossReport {
        total,
        per_run,
        grad_z_v,
        grad_z_u,
        collapse_warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterState;
    use crate::rng;
    use rand::Rng as _;

    fn state(protos: DenseMatrix, assignments: Vec<usize>) -> ClusterState {
        ClusterState {
            prototypes: protos,
            assignments,
            inertia: 0.0,
        }
    }

    fn random_instance(n: usize, d: usize, k: usize, seed: u64) -> (DenseMatrix, DenseMatrix, ClusterPair) {
        let mut r = rng::stream(seed, &[]);
        let mut m = |rows| DenseMatrix::from_fn(rows, d, |_, _| r.random_range(-1.0..1.0));
        let (zv, zu, cv, cu) = (m(n), m(n), m(k), m(k));
        let mut r = rng::stream(seed, &[1]);
        let qv = (0..n).map(|_| r.random_range(0..k)).collect();
        let qu = (0..n).map(|_| r.random_range(0..k)).collect();
        (zv, zu, ClusterPair { v: state(cv, qv), u: state(cu, qu) })
    }

    /// Straight-line evaluation with explicit cosines and an unshifted softmax.
    fn oracle(zv: &DenseMatrix, zu: &DenseMatrix, pair: &ClusterPair, tau: f64) -> f64 {
        let cos = |a: &[f64], b: &[f64]| {
            let mut ab = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            for i in 0..a.len() {
                ab += a[i] * b[i];
                aa += a[i] * a[i];
                bb += b[i] * b[i];
            }
            ab / (aa.sqrt() * bb.sqrt())
        };
        let term = |z: &[f64], c: &DenseMatrix, q: usize| {
            let mut denom = 0.0;
            for j in 0..c.rows() {
                denom += (cos(z, c.row(j)) / tau).exp();
            }
            -((cos(z, c.row(q)) / tau).exp() / denom).ln()
        };
        let n = zv.rows();
        let mut total = 0.0;
        for i in 0..n {
            total += term(zu.row(i), &pair.v.prototypes, pair.v.assignments[i]);
            total += term(zv.row(i), &pair.u.prototypes, pair.u.assignments[i]);
        }
        total / n as f64
    }

    #[test]
    fn equal_scores_give_uniform() {
        let c = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]);
        let p = predict_distribution(&[0.3, 0.4], &c, 0.1).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_prototype_distribution() {
        let c = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let p = predict_distribution(&[1.0, 0.0], &c, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let sharp = predict_distribution(&[1.0, 0.0], &c, 0.05).unwrap();
        assert!(sharp[0] > 0.999);
        assert!(predict_distribution(&[1.0, 0.0], &c, 0.0).is_err());
        assert!(predict_distribution(&[1.0, 0.0], &c, -1.0).is_err());
    }

    #[test]
    fn temperature_homogeneity() {
        let mut r = rng::stream(11, &[]);
        let c = DenseMatrix::from_fn(4, 3, |_, _| r.random_range(-1.0..1.0));
        let z = [0.2, -0.7, 0.4];
        let a = predict_distribution(&z, &c, 0.1).unwrap();
        let mut scaled = c.clone();
        scaled.scale(3.0);
        // Scaling prototypes does not change cosines, so compare logits
        // scaled by c against tau scaled by c through the softmax directly.
        let logits: Vec<f64> = a.iter().map(|p| p.ln()).collect();
        let b = softmax(&logits.iter().map(|s| s * 2.5).collect::<Vec<_>>());
        let direct = predict_distribution(&z, &scaled, 0.1 / 2.5).unwrap();
        for (x, y) in b.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_loss_cases() {
        let (l, f) = pair_loss(1, &[0.25; 4]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15 && !f);
        assert_eq!(pair_loss(0, &[1.0, 0.0]).unwrap(), (0.0, false));
        let (l, _) = pair_loss(0, &[0.7311, 0.2689]).unwrap();
        assert!((l - 0.3133).abs() < 1e-4);
        let (l, f) = pair_loss(1, &[1.0, 0.0]).unwrap();
        assert!(f && (l - 1e30f64.ln()).abs() < 1e-12);
        assert!(pair_loss(2, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn aligned_single_node() {
        let c = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
        let z = DenseMatrix::from_rows(&[[1.0, 0.0]]);
        let pair = ClusterPair {
            v: state(c.clone(), vec![0]),
            u: state(c, vec![0]),
        };
        let out = contrastive_loss(&z, &z, &pair, 0.05).unwrap();
        // 2 * -ln(1 / (1 + e^-20)), evaluated without cancellation.
        let expected = 2.0 * (-20f64).exp().ln_1p();
        assert!((out.loss - expected).abs() < 1e-12 * expected, "{}", out.loss);
        assert!((out.loss - 4.1e-9).abs() < 1e-10);
    }

    #[test]
    fn identical_prototypes_give_two_ln_k() {
        let (zv, zu, mut pair) = random_instance(5, 3, 4, 2);
        let same = DenseMatrix::from_fn(4, 3, |_, j| [0.3, -0.2, 0.9][j]);
        pair.v.prototypes = same.clone();
        pair.u.prototypes = same;
        let out = contrastive_loss(&zv, &zu, &pair, 0.1).unwrap();
        assert!((out.loss - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_and_finite_differences() {
        for seed in 0..20 {
            let (zv, zu, pair) = random_instance(8, 4, 3, seed);
            let tau = 0.5;
            let out = contrastive_loss(&zv, &zu, &pair, tau).unwrap();
            assert!((out.loss - oracle(&zv, &zu, &pair, tau)).abs() < 1e-10);
            assert!(out.loss >= 0.0);
            let h = 1e-6;
            for (which, grad) in [(0, &out.grad_z_v), (1, &out.grad_z_u)] {
                for idx in 0..zv.data().len() {
                    let bump = |delta: f64| {
                        let (mut a, mut b) = (zv.clone(), zu.clone());
                        let m = if which == 0 { &mut a } else { &mut b };
                        m.data_mut()[idx] += delta;
                        oracle(&a, &b, &pair, tau)
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    let an = grad.data()[idx];
                    let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
                    assert!(rel < 1e-4, "seed {seed} view {which} idx {idx}: {an} vs {fd}");
                }
            }
        }
    }

    #[test]
    fn multi_loss_averages_runs() {
        let (zv, zu, a) = random_instance(6, 3, 2, 3);
        let (_, _, b) = random_instance(6, 3, 2, 4);
        let la = contrastive_loss(&zv, &zu, &a, 0.2).unwrap();
        let lb = contrastive_loss(&zv, &zu, &b, 0.2).unwrap();
        let one = multi_loss(&zv, &zu, &MultiClusterSet { runs: vec![a.clone()] }, 0.2).unwrap();
        assert_eq!(one.total, la.loss);
        assert_eq!(one.grad_z_v, la.grad_z_v);
        let twin = multi_loss(&zv, &zu, &MultiClusterSet { runs: vec![a.clone(), a.clone()] }, 0.2).unwrap();
        assert!((twin.total - la.loss).abs() < 1e-15);
        let mixed = multi_loss(&zv, &zu, &MultiClusterSet { runs: vec![a, b] }, 0.2).unwrap();
        assert!((mixed.total - (la.loss + lb.loss) / 2.0).abs() < 1e-12);
        assert_eq!(mixed.per_run, vec![la.loss, lb.loss]);
        assert!(multi_loss(&zv, &zu, &MultiClusterSet { runs: vec![] }, 0.2).is_err());
    }

    #[test]
    fn collapse_is_counted() {
        let c = DenseMatrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]);
        let z = DenseMatrix::from_rows(&[[1.0, 0.0]]);
        let pair = ClusterPair {
            v: state(c.clone(), vec![1]),
            u: state(c, vec![1]),
        };
        let out = contrastive_loss(&z, &z, &pair, 0.01).unwrap();
        assert_eq!(out.collapsed, 2);
        assert!(out.loss.is_finite());
    }
}
