//! Finite-difference check of the full training loss: two augmented views,
//! shared encoder and projector, row normalization and the swapped-prediction
//! loss against fixed k-means prototypes.

use std::sync::Arc;

use grcca::augment::{mask_node_features, ppr_diffusion, remove_edges};
use grcca::cluster::multi_cluster;
use grcca::contrastive::multi_loss;
use grcca::neuro::{backward, forward};
use grcca::rng::{self, Rng};
use grcca::{sym_normalize, Activation, DenseMatrix, Graph, KMeansParams, ModelConfig, ModelParams, MultiClusterSet, View};
use rand::Rng as _;

pub struct Instance {
    pub v1: View,
    pub v2: View,
    pub params: ModelParams,
    pub set: MultiClusterSet,
    pub tau: f64,
}

fn random_graph(n: usize, f: usize, r: &mut Rng) -> Graph {
    let x = DenseMatrix::from_fn(n, f, |_, _| if r.random_bool(0.3) { 0.0 } else { r.random_range(-1.0..1.0) });
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if r.random_bool(0.5) {
                edges.push((a, b));
            }
        }
    }
    Graph::new(x, edges, None).unwrap()
}

/// A random `n`-node instance. `tweak` adjusts the architecture switches.
pub fn random_instance(n: usize, seed: u64, tweak: impl FnOnce(&mut ModelConfig)) -> Instance {
    let mut r = rng::stream(seed, &[]);
    let f = r.random_range(2..6);
    let dim = r.random_range(2..5);
    let g = random_graph(n, f, &mut r);
    let act = if r.random_bool(0.5) { Activation::Relu } else { Activation::Prelu };
    let mut config = ModelConfig::new(f, dim, act);
    tweak(&mut config);
    let mut params = ModelParams::init(config, &mut r).unwrap();
    // Move away from the initialization (zero biases, unit scales) to a
    // generic point.
    for p in params.tensors_mut() {
        for v in &mut p.value {
            *v += r.random_range(-0.5..0.5);
        }
    }
    let alpha = r.random_range(0.05..0.5);
    let v1 = View {
        mix: Arc::new(ppr_diffusion(&g, alpha, 0.0).unwrap()),
        x_masked: mask_node_features(g.features(), 0.3, &mut r),
    };
    let v2 = View {
        mix: Arc::new(sym_normalize(&remove_edges(&g, 0.3, &mut r)).into()),
        x_masked: mask_node_features(g.features(), 0.3, &mut r),
    };
    let z1 = forward(&v1, &params).unwrap().z;
    let z2 = forward(&v2, &params).unwrap().z;
    let k = r.random_range(1..=3);
    let h = r.random_range(1..=2);
    let km = KMeansParams {
        restarts: 1,
        ..KMeansParams::default()
    };
    let set = multi_cluster(&z1, &z2, k, h, &mut r, &km).unwrap();
    let tau = r.random_range(0.05..1.0);
    Instance { v1, v2, params, set, tau }
}

pub fn loss(inst: &Instance, params: &ModelParams) -> f64 {
    let z1 = forward(&inst.v1, params).unwrap().z;
    let z2 = forward(&inst.v2, params).unwrap().z;
    multi_loss(&z1, &z2, &inst.set, inst.tau).unwrap().total
}

/// Analytic gradients, one vector per tensor in declaration order.
pub fn analytic(inst: &Instance) -> Vec<Vec<f64>> {
    let mut p = inst.params.clone();
    p.zero_grad();
    let f1 = forward(&inst.v1, &p).unwrap();
    let f2 = forward(&inst.v2, &p).unwrap();
    let rep = multi_loss(&f1.z, &f2.z, &inst.set, inst.tau).unwrap();
    backward(f1.tape, &rep.grad_z_v, None, &mut p).unwrap();
    backward(f2.tape, &rep.grad_z_u, None, &mut p).unwrap();
    p.tensors().iter().map(|t| t.grad.clone()).collect()
}

fn central(inst: &Instance, t: usize, i: usize, h: f64) -> f64 {
    let mut p = inst.params.clone();
    let x = p.tensors()[t].value[i];
    p.tensors_mut()[t].value[i] = x + h;
    let up = loss(inst, &p);
    p.tensors_mut()[t].value[i] = x - h;
    let down = loss(inst, &p);
    (up - down) / (2.0 * h)
}

/// Richardson-extrapolated central difference. The step shrinks while the
/// estimates at `h` and `h/2` disagree, which happens when a ReLU kink lies
/// inside the stencil.
pub fn numeric(inst: &Instance, t: usize, i: usize) -> f64 {
    let mut h = 1e-4;
    let mut best = 0.0;
    for _ in 0..5 {
        let d1 = central(inst, t, i, h);
        let d2 = central(inst, t, i, h / 2.0);
        best = (4.0 * d2 - d1) / 3.0;
        if (d1 - d2).abs() <= 1e-6 * d1.abs().max(d2.abs()).max(1e-4) {
            return best;
        }
        h /= 10.0;
    }
    best
}

/// Components below this magnitude on both sides are compared absolutely.
pub const NEGLIGIBLE: f64 = 1e-8;
pub const REL_TOL: f64 = 1e-4;

/// Worst relative error over every parameter, or an error naming the first
/// component out of tolerance.
pub fn check(inst: &Instance) -> Result<f64, String> {
    check_against(inst, &analytic(inst))
}

/// [`check`] for given gradients.
pub fn check_against(inst: &Instance, grads: &[Vec<f64>]) -> Result<f64, String> {
    let names: Vec<&str> = inst.params.tensors().iter().map(|t| t.name).collect();
    let mut worst = 0.0f64;
    for (t, g) in grads.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let f = numeric(inst, t, i);
            let scale = a.abs().max(f.abs());
            if scale < NEGLIGIBLE {
                if (a - f).abs() > 0.1 * NEGLIGIBLE {
                    return Err(format!("{}[{i}]: analytic {a:e}, numeric {f:e}", names[t]));
                }
                continue;
            }
            let rel = (a - f).abs() / scale;
            worst = worst.max(rel);
            if rel >= REL_TOL {
                return Err(format!("{}[{i}]: analytic {a:e}, numeric {f:e}, relative error {rel:e}", names[t]));
            }
        }
    }
    Ok(worst)
}
