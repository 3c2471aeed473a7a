use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Hidden activation used by the encoder output and the projector's hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Leaky ReLU whose negative slope is one learnable scalar shared by
    /// both activation sites.
    Prelu,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "prelu" => Ok(Activation::Prelu),
            other => Err(Error::param("activation", format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Prelu => "prelu",
        })
    }
}

pub const PRELU_INIT: f64 = 0.25;

/// Architecture switches. The default model is a one-layer GCN encoder with
/// bias followed by a two-layer MLP projector with batch normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub dim: usize,
    pub activation: Activation,
    pub bias: bool,
    pub batch_norm: bool,
    /// Without a projector the representations are the encoder outputs.
    pub projector: bool,
}

impl ModelConfig {
    pub fn new(in_dim: usize, dim: usize, activation: Activation) -> Self {
        ModelConfig {
            in_dim,
            dim,
            activation,
            bias: true,
            batch_norm: true,
            projector: true,
        }
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (f, d) = (self.in_dim, self.dim);
        let b = usize::from(self.bias);
        let mut total = f * d + b * d;
        if self.projector {
            total += 2 * (d * d + b * d);
            if self.batch_norm {
                total += 2 * d;
            }
        }
        if self.activation == Activation::Prelu {
            total += 1;
        }
        total
    }
}

/// One parameter tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl Param {
    fn filled(name: &'static str, rows: usize, cols: usize, fill: f64) -> Self {
        let len = rows * cols;
        Param {
            name,
            rows,
            cols,
            value: vec![fill; len],
            grad: vec![0.0; len],
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// Glorot-uniform weights: `U(-a, a)` with `a = sqrt(6 / (rows + cols))`.
    fn glorot(name: &'static str, rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let mut p = Self::filled(name, rows, cols, 0.0);
        let a = (6.0 / (rows + cols) as f64).sqrt();
        p.value.iter_mut().for_each(|w| *w = rng.random_range(-a..=a));
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams {
    pub w1: Param,
    pub b1: Option<Param>,
    pub gamma: Option<Param>,
    pub beta: Option<Param>,
    pub w2: Param,
    pub b2: Option<Param>,
}

/// All learnable tensors. Declaration order, which checkpoints and
/// optimizers follow: encoder weight, encoder bias, first projector layer,
/// batch-norm scale and shift, second projector layer, PReLU slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub enc_w: Param,
    pub enc_b: Option<Param>,
    pub projector: Option<ProjectorParams>,
    pub prelu: Option<Param>,
}

impl ModelParams {
    /// Glorot weights, zero biases, `gamma = 1`, `beta = 0`, PReLU slope 0.25.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        if config.in_dim == 0 || config.dim == 0 {
            return Err(Error::param("dim", "layer widths must be at least 1"));
        }
        let d = config.dim;
        let bias = |name| config.bias.then(|| Param::filled(name, 1, d, 0.0));
        let enc_w = Param::glorot("enc_w", config.in_dim, d, rng);
        let enc_b = bias("enc_b");
        let projector = config.projector.then(|| {
            let w1 = Param::glorot("proj_w1", d, d, rng);
            let w2 = Param::glorot("proj_w2", d, d, rng);
            ProjectorParams {
                w1,
                b1: bias("proj_b1"),
                gamma: config.batch_norm.then(|| Param::filled("bn_gamma", 1, d, 1.0)),
                beta: config.batch_norm.then(|| Param::filled("bn_beta", 1, d, 0.0)),
                w2,
                b2: bias("proj_b2"),
            }
        });
        let prelu = (config.activation == Activation::Prelu).then(|| Param::filled("prelu", 1, 1, PRELU_INIT));
        Ok(ModelParams {
            config,
            enc_w,
            enc_b,
            projector,
            prelu,
        })
    }

    pub fn tensors(&self) -> Vec<&Param> {
        let mut v = vec![&self.enc_w];
        v.extend(self.enc_b.as_ref());
        if let Some(p) = &self.projector {
            v.push(&p.w1);
            v.extend(p.b1.as_ref());
            v.extend(p.gamma.as_ref());
            v.extend(p.beta.as_ref());
            v.push(&p.w2);
            v.extend(p.b2.as_ref());
        }
        v.extend(self.prelu.as_ref());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Param> {
        let mut v = vec![&mut self.enc_w];
        v.extend(self.enc_b.as_mut());
        if let Some(p) = &mut self.projector {
            v.push(&mut p.w1);
            v.extend(p.b1.as_mut());
            v.extend(p.gamma.as_mut());
            v.extend(p.beta.as_mut());
            v.push(&mut p.w2);
            v.extend(p.b2.as_mut());
        }
        v.extend(self.prelu.as_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        self.tensors_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn prelu_slope(&self) -> Option<f64> {
        self.prelu.as_ref().map(|p| p.value[0])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}

/// Total number of learnable scalars.
pub fn count_params(params: &ModelParams) -> usize {
    params.tensors().iter().map(|p| p.len()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn cora_sized_count() {
        // 1433*256 + 256 + 2*(256*256 + 256) + 2*256 = 499,200 (+1 with PReLU).
        let relu = ModelConfig::new(1433, 256, Activation::Relu);
        let prelu = ModelConfig::new(1433, 256, Activation::Prelu);
        assert_eq!(relu.param_count(), 499_200);
        assert_eq!(prelu.param_count(), 499_201);
        let p = ModelParams::init(relu, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(count_params(&p), 499_200);
    }

    #[test]
    fn bare_encoder_count() {
        let c = ModelConfig {
            in_dim: 1,
            dim: 1,
            activation: Activation::Relu,
            bias: false,
            batch_norm: false,
            projector: false,
        };
        let p = ModelParams::init(c, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(count_params(&p), 1);
        assert_eq!(c.param_count(), 1);
    }

    #[test]
    fn doubling_width_roughly_doubles_cora_count() {
        let a = ModelConfig::new(1433, 256, Activation::Relu).param_count() as f64;
        let b = ModelConfig::new(1433, 512, Activation::Relu).param_count() as f64;
        let ratio = b / a;
        // Encoder term doubles, projector term quadruples.
        assert!(ratio > 2.0 && ratio < 2.6, "{ratio}");
    }

    #[test]
    fn init_defaults() {
        let c = ModelConfig::new(5, 4, Activation::Prelu);
        let p = ModelParams::init(c, &mut rng::stream(1, &[])).unwrap();
        let proj = p.projector.as_ref().unwrap();
        assert!(proj.gamma.as_ref().unwrap().value.iter().all(|&g| g == 1.0));
        assert!(proj.beta.as_ref().unwrap().value.iter().all(|&b| b == 0.0));
        assert!(p.enc_b.as_ref().unwrap().value.iter().all(|&b| b == 0.0));
        assert_eq!(p.prelu_slope(), Some(PRELU_INIT));
        let a = (6.0f64 / 9.0).sqrt();
        assert!(p.enc_w.value.iter().all(|w| w.abs() <= a));
        let names: Vec<_> = p.tensors().iter().map(|t| t.name).collect();
        assert_eq!(
            names,
            ["enc_w", "enc_b", "proj_w1", "proj_b1", "bn_gamma", "bn_beta", "proj_w2", "proj_b2", "prelu"]
        );
    }
}
