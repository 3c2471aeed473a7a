//! End-to-end training loop and embedding extraction.

use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{ppr_diffusion, AugParams, MixMatrix, View, ViewSampler};
use crate::cluster::{bank_source, multi_cluster, ClusterMode, KMeansParams, MemoryBank, MultiClusterSet};
use crate::contrastive::{multi_loss, LossReport};
use crate::error::{Error, Result};
use crate::graph::{sym_normalize, Graph};
use crate::linalg::DenseMatrix;
use crate::neuro::{adam_step, backward, encode, forward, Activation, AdamConfig, ModelConfig, ModelParams};
use crate::rng::{self, tag};

/// Switches that remove one component of the method.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Forces a single clustering run per view.
    pub disable_multi_clustering: bool,
    /// Clusters the current epoch's representations instead of the bank.
    pub disable_async: bool,
    /// The first view uses edge removal (independent draw) instead of diffusion.
    pub disable_diffusion: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub aug: AugParams,
    /// Prototypes per view.
    pub k: usize,
    /// Clustering runs per view.
    pub h: usize,
    pub tau: f64,
    pub epochs: usize,
    pub lr: f64,
    pub activation: Activation,
    pub dim: usize,
    pub mode: ClusterMode,
    pub seed: u64,
    pub ablation: Ablation,
    /// k-means settings for the per-epoch prototypes. One seeding per run by
    /// default, so the `h` runs stay independent draws.
    pub kmeans: KMeansParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            aug: AugParams::default(),
            k: 14,
            h: 2,
            tau: 0.05,
            epochs: 10,
            lr: 5e-4,
            activation: Activation::Relu,
            dim: 256,
            mode: ClusterMode::Async,
            seed: 0,
            ablation: Ablation::default(),
            kmeans: KMeansParams {
                restarts: 1,
                ..KMeansParams::default()
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.aug.validate()?;
        if self.k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        if self.h == 0 {
            return Err(Error::param("h", "must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau", format!("{} must be positive", self.tau)));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs", "must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::param("lr", format!("{} must be finite and >= 0", self.lr)));
        }
        if self.dim == 0 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        if self.kmeans.restarts == 0 || self.kmeans.max_iters == 0 {
            return Err(Error::param("kmeans", "restarts and max_iters must be at least 1"));
        }
        Ok(())
    }

    /// Clustering runs after ablations.
    pub fn effective_h(&self) -> usize {
        if self.ablation.disable_multi_clustering {
            1
        } else {
            self.h
        }
    }

    /// Clustering mode after ablations.
    pub fn effective_mode(&self) -> ClusterMode {
        if self.ablation.disable_async {
            ClusterMode::Sync
        } else {
            self.mode
        }
    }
}

/// One epoch of the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub per_run_losses: Vec<f64>,
    pub collapse_warnings: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainTrace {
    /// One JSON object per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for rec in &self.epochs {
            serde_json::to_writer(&mut w, rec).map_err(|e| Error::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let epochs = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainTrace { epochs })
    }
}

/// What an observer sees at the end of each epoch, after the parameter
/// update and the bank update.
pub struct EpochEvent<'a> {
    pub record: &'a EpochRecord,
    pub view1: &'a View,
    pub view2: &'a View,
    pub clusters: &'a MultiClusterSet,
    pub bank: &'a MemoryBank,
    pub params: &'a ModelParams,
}

/// Builds the view sampler `cfg` asks for, computing the diffusion matrix
/// unless the ablation turns it off.
pub fn sampler_for(g: &Graph, cfg: &TrainConfig) -> Result<ViewSampler> {
    if cfg.ablation.disable_diffusion {
        ViewSampler::without_diffusion(g.clone(), cfg.aug)
    } else {
        ViewSampler::new(g.clone(), cfg.aug)
    }
}

/// Trains a fresh model on `g`.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<(ModelParams, TrainTrace)> {
    let sampler = sampler_for(g, cfg)?;
    train_with(&sampler, cfg, |_| {})
}

/// Trains with a prepared sampler, calling `observe` after every epoch.
pub fn train_with(
    sampler: &ViewSampler,
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochEvent<'_>),
) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate()?;
    let g = sampler.graph();
    if g.n() == 0 {
        return Err(Error::param("graph", "no nodes"));
    }
    let h = cfg.effective_h();
    let mode = cfg.effective_mode();
    let model_cfg = ModelConfig::new(g.num_features(), cfg.dim, cfg.activation);
    let mut params = ModelParams::init(model_cfg, &mut rng::stream(cfg.seed, &[tag::INIT]))?;
    let adam = AdamConfig::new(cfg.lr);
    let view_streams = |epoch: u64| {
        (
            rng::stream(cfg.seed, &[tag::EPOCH, epoch, tag::VIEW1]),
            rng::stream(cfg.seed, &[tag::EPOCH, epoch, tag::VIEW2]),
        )
    };

    let mut bank = MemoryBank::new();
    if mode == ClusterMode::Async {
        // The bank starts from the encoder outputs of one pre-training draw.
        let (mut r1, mut r2) = view_streams(0);
        let (v1, v2) = sampler.sample(&mut r1, &mut r2);
        let (h_v, _) = encode(&v1, &params)?;
        let (h_u, _) = encode(&v2, &params)?;
        bank.store(h_v, h_u)?;
    }

    let mut trace = TrainTrace::default();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut kmeans_rng = rng::stream(cfg.seed, &[tag::EPOCH, epoch as u64, tag::KMEANS_V]);
        let cluster = |zv: &DenseMatrix, zu: &DenseMatrix, rng: &mut rng::Rng| {
            multi_cluster(zv, zu, cfg.k, h, rng, &cfg.kmeans)
        };

        let early = match mode {
            ClusterMode::Async => {
                let (bv, bu) = bank.contents().ok_or(Error::BankUninitialized)?;
                Some(cluster(bv, bu, &mut kmeans_rng)?)
            }
            ClusterMode::Sync => None,
        };

        let (mut r1, mut r2) = view_streams(epoch as u64);
        let (view1, view2) = sampler.sample(&mut r1, &mut r2);
        let fv = forward(&view1, &params)?;
        let fu = forward(&view2, &params)?;
        let clusters = match early {
            Some(c) => c,
            None => {
                let (zv, zu) = bank_source(mode, &bank, &fv.z, &fu.z)?;
                cluster(zv, zu, &mut kmeans_rng)?
            }
        };

        let report: LossReport = multi_loss(&fv.z, &fu.z, &clusters, cfg.tau).map_err(|e| match e {
            Error::NonFinite { context } => Error::Diverged { epoch, detail: context },
            other => other,
        })?;
        if !report.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("loss is {}", report.total),
            });
        }

        let (z_v, z_u) = (fv.z, fu.z);
        backward(fv.tape, &report.grad_z_v, None, &mut params)?;
        backward(fu.tape, &report.grad_z_u, None, &mut params)?;
        adam_step(&mut params, &adam, epoch as u64)?;
        if !params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "parameters became non-finite".into(),
            });
        }
        if mode == ClusterMode::Async {
            bank.store(z_v, z_u)?;
        }

        let record = EpochRecord {
            epoch,
            loss: report.total,
            per_run_losses: report.per_run,
            collapse_warnings: report.collapse_warnings,
            seconds: start.elapsed().as_secs_f64(),
        };
        observe(&EpochEvent {
            record: &record,
            view1: &view1,
            view2: &view2,
            clusters: &clusters,
            bank: &bank,
            params: &params,
        });
        trace.epochs.push(record);
    }
    Ok((params, trace))
}

/// Node embeddings: the encoder applied to the normalized graph plus the
/// encoder applied to its diffusion, both on unmasked attributes.
pub fn embed(g: &Graph, params: &ModelParams, alpha: f64, eps: f64) -> Result<DenseMatrix> {
    let diffusion = Arc::new(ppr_diffusion(g, alpha, eps)?);
    embed_with_diffusion(g, params, diffusion)
}

/// [`embed`] with a precomputed diffusion matrix.
pub fn embed_with_diffusion(g: &Graph, params: &ModelParams, diffusion: Arc<MixMatrix>) -> Result<DenseMatrix> {
    if diffusion.n() != g.n() {
        return Err(Error::dims(
            "embed",
            format!("diffusion is {0}x{0}, graph has {1} nodes", diffusion.n(), g.n()),
        ));
    }
    let x = g.features().clone();
    let plain = View {
        mix: Arc::new(sym_normalize(g).into()),
        x_masked: x.clone(),
    };
    let diffused = View { mix: diffusion, x_masked: x };
    let (mut h, _) = encode(&plain, params)?;
    let (h2, _) = encode(&diffused, params)?;
    h.add_assign(&h2)?;
    Ok(h)
}

const EMBEDDING_MAGIC: &[u8; 4] = b"GRCE";
const EMBEDDING_VERSION: u32 = 1;

/// Writes `GRCE`, version `u32`, rows `u64`, cols `u64`, then row-major
/// little-endian `f32` values.
pub fn write_embeddings(path: &Path, h: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_VERSION.to_le_bytes())?;
    w.write_all(&(h.rows() as u64).to_le_bytes())?;
    w.write_all(&(h.cols() as u64).to_le_bytes())?;
    for &v in h.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 24 || &bytes[..4] != EMBEDDING_MAGIC {
        return Err(bad("not an embedding file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != EMBEDDING_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let body = &bytes[24..];
    if rows.checked_mul(cols).and_then(|c| c.checked_mul(4)) != Some(body.len()) {
        return Err(bad("size does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}
