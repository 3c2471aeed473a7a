use crate::error::{Error, Result};
use crate::neuro::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based), applied in place to
/// every tensor. Gradient buffers are zeroed afterwards.
pub fn adam_step(params: &mut ModelParams, cfg: &AdamConfig, t: u64) -> Result<()> {
    if t == 0 {
        return Err(Error::param("t", "Adam steps are counted from 1"));
    }
    let c1 = 1.0 - cfg.beta1.powf(t as f64);
    let c2 = 1.0 - cfg.beta2.powf(t as f64);
    for p in params.tensors_mut() {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = p.m[i] / c1;
            let v_hat = p.v[i] / c2;
            p.value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        p.zero_grad();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::params::{Activation, ModelConfig};
    use crate::rng;

    fn scalar_model() -> ModelParams {
        let c = ModelConfig {
            in_dim: 1,
            dim: 1,
            activation: Activation::Relu,
            bias: false,
            batch_norm: false,
            projector: false,
        };
        let mut p = ModelParams::init(c, &mut rng::stream(0, &[])).unwrap();
        p.enc_w.value[0] = 0.0;
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = ModelParams::init(ModelConfig::new(4, 3, Activation::Prelu), &mut rng::stream(1, &[])).unwrap();
        let before = p.clone();
        adam_step(&mut p, &AdamConfig::new(0.01), 1).unwrap();
        for (a, b) in p.tensors().iter().zip(before.tensors()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = scalar_model();
        p.enc_w.grad[0] = 1.0;
        adam_step(&mut p, &AdamConfig::new(0.001), 1).unwrap();
        // m_hat = v_hat = 1, step = lr / (1 + eps).
        let want = -0.001 / (1.0 + 1e-8);
        assert!((p.enc_w.value[0] - want).abs() < 1e-18);
        assert_eq!(p.enc_w.grad[0], 0.0);
    }

    #[test]
    fn second_identical_gradient_step_is_below_lr() {
        let mut p = scalar_model();
        let cfg = AdamConfig::new(0.001);
        p.enc_w.grad[0] = 1.0;
        adam_step(&mut p, &cfg, 1).unwrap();
        let after_one = p.enc_w.value[0];
        p.enc_w.grad[0] = 1.0;
        adam_step(&mut p, &cfg, 2).unwrap();
        let step = (p.enc_w.value[0] - after_one).abs();
        assert!(step < 0.001);
        assert!((step - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn step_zero_rejected() {
        assert!(adam_step(&mut scalar_model(), &AdamConfig::new(0.1), 0).is_err());
    }
}
