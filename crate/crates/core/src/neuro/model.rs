//! Forward and backward passes of the encoder and projector.
//!
//! Encoder: `H = act(mix · X · W + b)`.
//! Projector: `Z = act(BN(H · W1 + b1)) · W2 + b2`, batch statistics taken
//! over all rows.

use crate::augment::View;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::neuro::params::{ModelParams, Param};

/// Added to the batch variance before the square root.
pub const BN_EPS: f64 = 1e-5;

fn matrix(p: &Param) -> DenseMatrix {
    DenseMatrix::from_vec(p.rows, p.cols, p.value.clone()).expect("param shape is consistent")
}

fn accumulate(p: &mut Param, g: &[f64]) {
    debug_assert_eq!(p.grad.len(), g.len());
    for (a, b) in p.grad.iter_mut().zip(g) {
        *a += b;
    }
}

fn activate(pre: &DenseMatrix, slope: Option<f64>) -> DenseMatrix {
    let mut out = pre.clone();
    let a = slope.unwrap_or(0.0);
    out.data_mut().iter_mut().for_each(|v| {
        if *v <= 0.0 {
            *v *= a;
        }
    });
    out
}

/// Returns the gradient w.r.t. the pre-activation and the slope gradient
/// (zero for ReLU).
fn activate_backward(pre: &DenseMatrix, upstream: &DenseMatrix, slope: Option<f64>) -> (DenseMatrix, f64) {
    let a = slope.unwrap_or(0.0);
    let mut d = upstream.clone();
    let mut dslope = 0.0;
    for (g, &p) in d.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            dslope += *g * p;
            *g *= a;
        }
    }
    (d, dslope)
}

/// Saved encoder activations. Borrowing the view avoids copying the masked
/// attribute matrix.
#[derive(Debug)]
pub struct EncoderTape<'v> {
    view: &'v View,
    pre: DenseMatrix,
}

#[derive(Debug)]
pub struct ProjectorTape {
    h: DenseMatrix,
    /// Normalized first-layer output; `None` without batch norm.
    xhat: Option<DenseMatrix>,
    inv_std: Vec<f64>,
    /// Input of the hidden activation.
    hidden_pre: DenseMatrix,
    hidden: DenseMatrix,
}

/// Everything the backward pass needs from one view's forward pass.
/// [`backward`] takes it by value, so a tape cannot be replayed.
#[derive(Debug)]
pub struct ForwardTape<'v> {
    enc: EncoderTape<'v>,
    proj: Option<ProjectorTape>,
}

#[derive(Debug)]
pub struct Forward<'v> {
    pub h: DenseMatrix,
    pub z: DenseMatrix,
    pub tape: ForwardTape<'v>,
}

pub fn encode<'v>(view: &'v View, params: &ModelParams) -> Result<(DenseMatrix, EncoderTape<'v>)> {
    let x = &view.x_masked;
    if x.cols() != params.config.in_dim {
        return Err(Error::dims(
            "encode",
            format!("view has {} attributes, encoder expects {}", x.cols(), params.config.in_dim),
        ));
    }
    if view.mix.n() != x.rows() {
        return Err(Error::dims(
            "encode",
            format!("mixing matrix is {0}x{0}, attributes have {1} rows", view.mix.n(), x.rows()),
        ));
    }
    // mix · (X · W) keeps the dense product at n x dim.
    let xw = x.matmul(&matrix(&params.enc_w))?;
    let mut pre = view.mix.apply(&xw)?;
    if let Some(b) = &params.enc_b {
        pre.add_row_vector(&b.value);
    }
    let h = activate(&pre, params.prelu_slope());
    if !h.is_finite() {
        return Err(Error::NonFinite {
            context: "encoder output".into(),
        });
    }
    Ok((h, EncoderTape { view, pre }))
}

/// Applies the projector. Without one, `Z` is a copy of `H` and no tape is kept.
pub fn project(h: &DenseMatrix, params: &ModelParams) -> Result<(DenseMatrix, Option<ProjectorTape>)> {
    let Some(p) = &params.projector else {
        return Ok((h.clone(), None));
    };
    let n = h.rows();
    let d = p.w1.cols;
    let mut y = h.matmul(&matrix(&p.w1))?;
    if let Some(b) = &p.b1 {
        y.add_row_vector(&b.value);
    }

    let (hidden_pre, xhat, inv_std) = match (&p.gamma, &p.beta) {
        (Some(gamma), Some(beta)) => {
            let mean: Vec<f64> = y.column_sums().iter().map(|s| s / n as f64).collect();
            let mut var = vec![0.0; d];
            for row in y.row_iter() {
                for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v / n as f64 + BN_EPS).sqrt()).collect();
            let mut xhat = y;
            let mut out = DenseMatrix::zeros(n, d);
            for i in 0..n {
                let xr = xhat.row_mut(i);
                for j in 0..d {
                    xr[j] = (xr[j] - mean[j]) * inv_std[j];
                }
                let or = out.row_mut(i);
                for j in 0..d {
                    or[j] = gamma.value[j] * xr[j] + beta.value[j];
                }
            }
            (out, Some(xhat), inv_std)
        }
        _ => (y, None, Vec::new()),
    };

    let hidden = activate(&hidden_pre, params.prelu_slope());
    let mut z = hidden.matmul(&matrix(&p.w2))?;
    if let Some(b) = &p.b2 {
        z.add_row_vector(&b.value);
    }
    if !z.is_finite() {
        return Err(Error::NonFinite {
            context: "projector output".into(),
        });
    }
    Ok((
        z,
        Some(ProjectorTape {
            h: h.clone(),
            xhat,
            inv_std,
            hidden_pre,
            hidden,
        }),
    ))
}

pub fn forward<'v>(view: &'v View, params: &ModelParams) -> Result<Forward<'v>> {
    let (h, enc) = encode(view, params)?;
    let (z, proj) = project(&h, params)?;
    Ok(Forward {
        h,
        z,
        tape: ForwardTape { enc, proj },
    })
}

/// Accumulates parameter gradients for upstream gradients `grad_z` on the
/// projector output and, optionally, `grad_h` on the encoder output.
/// Gradient buffers are added to, never overwritten, so calling this once per
/// view sums the contributions of both views.
pub fn backward(
    tape: ForwardTape<'_>,
    grad_z: &DenseMatrix,
    grad_h: Option<&DenseMatrix>,
    params: &mut ModelParams,
) -> Result<()> {
    let slope = params.prelu_slope();
    let mut dslope = 0.0;
    let n = tape.enc.pre.rows();
    if grad_z.shape() != tape.enc.pre.shape() {
        return Err(Error::dims(
            "backward",
            format!("grad_z is {:?}, representations are {:?}", grad_z.shape(), tape.enc.pre.shape()),
        ));
    }

    let mut dh = match (tape.proj, params.projector.as_mut()) {
        (Some(t), Some(p)) => {
            // Second layer.
            let dw2 = t.hidden.t_matmul(grad_z)?;
            accumulate(&mut p.w2, dw2.data());
            if let Some(b2) = &mut p.b2 {
                accumulate(b2, &grad_z.column_sums());
            }
            let da = grad_z.matmul_t(&matrix(&p.w2))?;
            let (mut dy, ds) = activate_backward(&t.hidden_pre, &da, slope);
            dslope += ds;

            if let (Some(xhat), Some(gamma), Some(beta)) = (&t.xhat, &mut p.gamma, &mut p.beta) {
                let d = xhat.cols();
                let mut dgamma = vec![0.0; d];
                let mut sum_dxhat = vec![0.0; d];
                let mut sum_dxhat_xhat = vec![0.0; d];
                accumulate(beta, &dy.column_sums());
                for i in 0..n {
                    let xr = xhat.row(i);
                    let dr = dy.row_mut(i);
                    for j in 0..d {
                        dgamma[j] += dr[j] * xr[j];
                        dr[j] *= gamma.value[j];
                        sum_dxhat[j] += dr[j];
                        sum_dxhat_xhat[j] += dr[j] * xr[j];
                    }
                }
                accumulate(gamma, &dgamma);
                let nf = n as f64;
                for i in 0..n {
                    let xr = xhat.row(i);
                    let dr = dy.row_mut(i);
                    for j in 0..d {
                        dr[j] = t.inv_std[j] / nf * (nf * dr[j] - sum_dxhat[j] - xr[j] * sum_dxhat_xhat[j]);
                    }
                }
            }

            let dw1 = t.h.t_matmul(&dy)?;
            accumulate(&mut p.w1, dw1.data());
            if let Some(b1) = &mut p.b1 {
                accumulate(b1, &dy.column_sums());
            }
            dy.matmul_t(&matrix(&p.w1))?
        }
        (None, None) => grad_z.clone(),
        _ => unreachable!("projector tape and projector parameters always agree"),
    };
    if let Some(g) = grad_h {
        dh.add_assign(g)?;
    }

    let (dpre, ds) = activate_backward(&tape.enc.pre, &dh, slope);
    dslope += ds;
    if let Some(b) = &mut params.enc_b {
        accumulate(b, &dpre.column_sums());
    }
    let mixed = tape.enc.view.mix.apply_t(&dpre)?;
    let dw = tape.enc.view.x_masked.t_matmul(&mixed)?;
    accumulate(&mut params.enc_w, dw.data());
    if let Some(p) = &mut params.prelu {
        p.grad[0] += dslope;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::Rng as _;

    use super::*;
    use crate::augment::MixMatrix;
    use crate::neuro::params::{Activation, ModelConfig};
    use crate::rng;

    fn random_view(n: usize, f: usize, seed: u64) -> View {
        let mut r = rng::stream(seed, &[]);
        let mix = DenseMatrix::from_fn(n, n, |_, _| r.random_range(0.0..1.0));
        let x = DenseMatrix::from_fn(n, f, |_, _| r.random_range(-1.0..1.0));
        View {
            mix: Arc::new(MixMatrix::Dense(mix)),
            x_masked: x,
        }
    }

    fn relu(v: f64) -> f64 {
        v.max(0.0)
    }

    #[test]
    fn scalar_encoder() {
        let cfg = ModelConfig::new(1, 1, Activation::Relu);
        let mut p = ModelParams::init(cfg, &mut rng::stream(0, &[])).unwrap();
        p.enc_w.value[0] = 1.0;
        for c in [-2.0, 0.0, 3.5] {
            let view = View {
                mix: Arc::new(MixMatrix::Dense(DenseMatrix::identity(1))),
                x_masked: DenseMatrix::from_rows(&[[c]]),
            };
            let (h, _) = encode(&view, &p).unwrap();
            assert_eq!(h.data(), &[relu(c)]);
        }
    }

    #[test]
    fn encoder_matches_straight_line_oracle() {
        let cfg = ModelConfig::new(3, 2, Activation::Prelu);
        let mut p = ModelParams::init(cfg, &mut rng::stream(1, &[])).unwrap();
        p.enc_b.as_mut().unwrap().value = vec![0.1, -0.3];
        p.prelu.as_mut().unwrap().value[0] = 0.2;
        let view = random_view(4, 3, 2);
        let (h, _) = encode(&view, &p).unwrap();
        let mix = view.mix.to_dense();
        for i in 0..4 {
            for j in 0..2 {
                let mut acc = p.enc_b.as_ref().unwrap().value[j];
                for k in 0..4 {
                    for f in 0..3 {
                        acc += mix.get(i, k) * view.x_masked.get(k, f) * p.enc_w.value[f * 2 + j];
                    }
                }
                let want = if acc > 0.0 { acc } else { 0.2 * acc };
                assert!((h.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let cfg = ModelConfig::new(3, 4, Activation::Relu);
        let p = ModelParams::init(cfg, &mut rng::stream(3, &[])).unwrap();
        let view = random_view(5, 3, 4);
        let perm = [3, 0, 4, 1, 2];
        let mix = view.mix.to_dense();
        let pmix = DenseMatrix::from_fn(5, 5, |i, j| mix.get(perm[i], perm[j]));
        let pview = View {
            mix: Arc::new(MixMatrix::Dense(pmix)),
            x_masked: view.x_masked.select_rows(&perm),
        };
        let (h, _) = encode(&view, &p).unwrap();
        let (ph, _) = encode(&pview, &p).unwrap();
        assert!(ph.max_abs_diff(&h.select_rows(&perm)) < 1e-12);
    }

    #[test]
    fn encoder_shape_mismatch() {
        let p = ModelParams::init(ModelConfig::new(4, 2, Activation::Relu), &mut rng::stream(0, &[])).unwrap();
        let view = random_view(3, 3, 0);
        assert!(matches!(encode(&view, &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identical_rows_project_identically() {
        let cfg = ModelConfig::new(2, 3, Activation::Relu);
        let p = ModelParams::init(cfg, &mut rng::stream(5, &[])).unwrap();
        let h = DenseMatrix::from_rows(&[[0.3, -1.0, 2.0], [0.3, -1.0, 2.0]]);
        let (z, tape) = project(&h, &p).unwrap();
        assert_eq!(z.row(0), z.row(1));
        let t = tape.unwrap();
        assert!(t.xhat.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_batch_norm_gives_beta() {
        let cfg = ModelConfig::new(2, 2, Activation::Relu);
        let mut p = ModelParams::init(cfg, &mut rng::stream(6, &[])).unwrap();
        let proj = p.projector.as_mut().unwrap();
        proj.w1.value = vec![1.0, 0.0, 0.0, 1.0];
        proj.w2.value = vec![1.0, 0.0, 0.0, 1.0];
        proj.beta.as_mut().unwrap().value = vec![0.7, 0.4];
        let h = DenseMatrix::from_rows(&[[5.0, -3.0]]);
        let (z, _) = project(&h, &p).unwrap();
        assert_eq!(z.data(), &[0.7, 0.4]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn projector_matches_straight_line_oracle() {
        let cfg = ModelConfig::new(2, 3, Activation::Relu);
        let mut p = ModelParams::init(cfg, &mut rng::stream(7, &[])).unwrap();
        let mut r = rng::stream(8, &[]);
        for t in p.tensors_mut() {
            t.value.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
        }
        let h = DenseMatrix::from_fn(5, 3, |_, _| r.random_range(-1.0..1.0));
        let (z, _) = project(&h, &p).unwrap();

        let pr = p.projector.as_ref().unwrap();
        let (n, d) = (5, 3);
        let mut y = vec![vec![0.0; d]; n];
        for i in 0..n {
            for j in 0..d {
                y[i][j] = pr.b1.as_ref().unwrap().value[j]
                    + (0..d).map(|k| h.get(i, k) * pr.w1.value[k * d + j]).sum::<f64>();
            }
        }
        for j in 0..d {
            let mean = (0..n).map(|i| y[i][j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (y[i][j] - mean).powi(2)).sum::<f64>() / n as f64;
            for row in y.iter_mut() {
                let bn = pr.gamma.as_ref().unwrap().value[j] * (row[j] - mean) / (var + BN_EPS).sqrt()
                    + pr.beta.as_ref().unwrap().value[j];
                row[j] = relu(bn);
            }
        }
        for i in 0..n {
            for j in 0..d {
                let want = pr.b2.as_ref().unwrap().value[j]
                    + (0..d).map(|k| y[i][k] * pr.w2.value[k * d + j]).sum::<f64>();
                assert!((z.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads_and_linearity() {
        let cfg = ModelConfig::new(5, 4, Activation::Prelu);
        let mut p = ModelParams::init(cfg, &mut rng::stream(9, &[])).unwrap();
        let view = random_view(6, 5, 10);
        let f = forward(&view, &p).unwrap();
        backward(f.tape, &DenseMatrix::zeros(6, 4), None, &mut p).unwrap();
        assert!(p.tensors().iter().all(|t| t.grad.iter().all(|&g| g == 0.0)));

        let mut r = rng::stream(11, &[]);
        let gz = DenseMatrix::from_fn(6, 4, |_, _| r.random_range(-1.0..1.0));
        let mut gz2 = gz.clone();
        gz2.scale(2.0);
        let f = forward(&view, &p).unwrap();
        backward(f.tape, &gz, None, &mut p).unwrap();
        let once: Vec<Vec<f64>> = p.tensors().iter().map(|t| t.grad.clone()).collect();
        p.zero_grad();
        let f = forward(&view, &p).unwrap();
        backward(f.tape, &gz2, None, &mut p).unwrap();
        for (t, g1) in p.tensors().iter().zip(&once) {
            for (a, b) in t.grad.iter().zip(g1) {
                assert!((a - 2.0 * b).abs() <= 1e-12 * (1.0 + b.abs()), "{}", t.name);
            }
        }
    }
}
