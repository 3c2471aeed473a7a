//! Training and evaluation runs that write into a run directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use grcca::augment::{ppr_diffusion, read_diffusion_cache, write_diffusion_cache, ViewSampler};
use grcca::eval::{community_detect, link_predict, node_classify};
use grcca::graph::{load_dir, EDGES_FILE, FEATURES_FILE, LABELS_FILE};
use grcca::neuro::write_checkpoint;
use grcca::pipeline::{embed_with_diffusion, read_embeddings, train_with, write_embeddings};
use grcca::rng;
use grcca::{DenseMatrix, Graph, Metrics, MixMatrix, ModelParams, TrainConfig, TrainTrace};

use crate::config::{RunConfig, Task};
use crate::error::{CliError, Result};
use crate::hash::{blob_hash, file_hash, manifest};

pub const CHECKPOINT_FILE: &str = "checkpoint.grck";
pub const EMBEDDINGS_FILE: &str = "embeddings.grce";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const INPUTS_FILE: &str = "inputs.sha256";

/// Where progress lines go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verbosity {
    Quiet,
    Progress,
}

pub fn load_dataset(rc: &RunConfig) -> Result<Graph> {
    let dir = rc.dataset_dir();
    if !dir.join(EDGES_FILE).is_file() || !dir.join(FEATURES_FILE).is_file() {
        let key = if rc.dataset_path.is_some() { "dataset.path" } else { "dataset.name" };
        return Err(CliError::config(
            key,
            format!("no prepared dataset in {} (expected {EDGES_FILE} and {FEATURES_FILE})", dir.display()),
        ));
    }
    Ok(load_dir(&dir)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes the config snapshot as `snapshot_name` and a manifest of the
/// snapshot, the dataset files and `extra` inputs as `inputs_name`.
fn record_inputs(rc: &RunConfig, dir: &Path, snapshot_name: &str, inputs_name: &str, extra: &[&Path]) -> Result<()> {
    let snapshot = rc.snapshot();
    write_file(&dir.join(snapshot_name), &snapshot)?;
    let mut entries = vec![(blob_hash(snapshot.as_bytes()), snapshot_name.to_owned())];
    let data = rc.dataset_dir();
    for name in [EDGES_FILE, FEATURES_FILE, LABELS_FILE] {
        let path = data.join(name);
        if path.is_file() {
            entries.push((file_hash(&path)?, format!("dataset/{name}")));
        }
    }
    for path in extra {
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        entries.push((file_hash(path)?, name));
    }
    write_file(&dir.join(inputs_name), &manifest(&entries))
}

/// Short content hash of the graph structure, used to key diffusion caches.
fn structure_hash(g: &Graph) -> String {
    let mut text = format!("{}\n", g.n());
    for &(a, b) in g.edges() {
        text.push_str(&format!("{a} {b}\n"));
    }
    blob_hash(text.as_bytes())[..16].to_owned()
}

/// The diffusion matrix for `g`, read from or written to
/// `diffusion.cache_dir` when one is configured.
pub fn diffusion_for(rc: &RunConfig, g: &Graph, cfg: &TrainConfig) -> Result<Arc<MixMatrix>> {
    let (alpha, eps) = (cfg.aug.alpha, cfg.aug.eps);
    let Some(cache) = &rc.diffusion_cache_dir else {
        return Ok(Arc::new(ppr_diffusion(g, alpha, eps)?));
    };
    let path = cache.join(format!("ppr-{}-a{alpha}-e{eps}.grpd", structure_hash(g)));
    if path.is_file() {
        let s = read_diffusion_cache(&path)?;
        if s.n() == g.n() {
            return Ok(Arc::new(s));
        }
    }
    let s = ppr_diffusion(g, alpha, eps)?;
    create_dir(cache)?;
    write_diffusion_cache(&path, &s)?;
    Ok(Arc::new(s))
}

#[derive(Debug)]
pub struct Trained {
    pub params: ModelParams,
    pub trace: TrainTrace,
    pub embeddings: DenseMatrix,
}

impl Trained {
    pub fn final_loss(&self) -> f64 {
        self.trace.epochs.last().map_or(f64::NAN, |e| e.loss)
    }
}

/// Trains on `g` with `rc` and extracts embeddings. Nothing is written.
pub fn fit(rc: &RunConfig, g: &Graph, verbosity: Verbosity) -> Result<Trained> {
    let cfg = rc.train_config(g.n());
    let diffusion = diffusion_for(rc, g, &cfg)?;
    let sampler = if cfg.ablation.disable_diffusion {
        ViewSampler::without_diffusion(g.clone(), cfg.aug)?
    } else {
        ViewSampler::with_diffusion(g.clone(), cfg.aug, Arc::clone(&diffusion))?
    };
    let (params, trace) = train_with(&sampler, &cfg, |ev| {
        if verbosity == Verbosity::Progress {
            let r = &ev.record;
            eprintln!("epoch {}/{}  loss {:.6}  ({:.1} s)", r.epoch, cfg.epochs, r.loss, r.seconds);
        }
    })?;
    let embeddings = embed_with_diffusion(g, &params, diffusion)?;
    Ok(Trained {
        params,
        trace,
        embeddings,
    })
}

/// Trains on the configured dataset and writes checkpoint, embeddings,
/// trace, config snapshot and input manifest into `out`.
pub fn train_run(rc: &RunConfig, out: &Path, verbosity: Verbosity) -> Result<Trained> {
    let g = load_dataset(rc)?;
    create_dir(out)?;
    record_inputs(rc, out, SNAPSHOT_FILE, INPUTS_FILE, &[])?;
    let t = fit(rc, &g, verbosity)?;
    write_checkpoint(&out.join(CHECKPOINT_FILE), &t.params)?;
    write_embeddings(&out.join(EMBEDDINGS_FILE), &t.embeddings)?;
    t.trace.write_jsonl(&out.join(TRACE_FILE))?;
    Ok(t)
}

/// Scores `task`. Node and community tasks use `embeddings`; link
/// prediction retrains on the training graph of every split.
pub fn evaluate(rc: &RunConfig, g: &Graph, task: Task, embeddings: Option<&DenseMatrix>) -> Result<Metrics> {
    let seed = rc.train.seed;
    let need = |h: Option<&DenseMatrix>| -> Result<DenseMatrix> {
        let h = h.ok_or_else(|| CliError::config("task", format!("task {task} needs an embedding file")))?;
        if h.rows() != g.n() {
            return Err(CliError::Shape(format!("{} embedding rows, dataset has {} nodes", h.rows(), g.n())));
        }
        Ok(h.clone())
    };
    let labels = || {
        g.labels()
            .ok_or_else(|| CliError::config("dataset.path", format!("task {task} needs {LABELS_FILE}")))
    };
    let mut m = match task {
        Task::Node => {
            let h = need(embeddings)?;
            node_classify(&h, labels()?, rc.eval.split_protocol(), rc.eval.node_runs, seed, &rc.eval.probe)?
        }
        Task::Community => community_detect(&need(embeddings)?, labels()?, seed)?,
        Task::Link => {
            // Errors that are not core errors are parked here and rethrown
            // unchanged after the core callback returns.
            let mut parked = None;
            let res = link_predict(g, rc.eval.link_runs, seed, |train_graph, run| {
                let mut split_rc = rc.clone();
                split_rc.train.seed = rng::derive(seed, &[rng::tag::LINK_SPLIT, run as u64, rng::tag::INIT]);
                match fit(&split_rc, train_graph, Verbosity::Quiet) {
                    Ok(t) => Ok(t.embeddings),
                    Err(CliError::Core(e)) => Err(e),
                    Err(other) => {
                        let msg = other.to_string();
                        parked = Some(other);
                        Err(grcca::Error::Format(msg))
                    }
                }
            });
            match res {
                Ok(m) => m,
                Err(e) => return Err(parked.unwrap_or(CliError::Core(e))),
            }
        }
    };
    m.dataset = rc.label();
    m.config_hash = rc.config_hash();
    Ok(m)
}

pub fn metrics_file(task: Task) -> String {
    format!("metrics-{task}.json")
}

/// Evaluates and writes `metrics-<task>.json` plus its own snapshot and
/// input manifest into `out`.
pub fn eval_run(rc: &RunConfig, task: Task, embeddings: Option<&Path>, out: &Path) -> Result<Metrics> {
    let g = load_dataset(rc)?;
    let h = embeddings.map(read_embeddings).transpose()?;
    let m = evaluate(rc, &g, task, h.as_ref())?;
    create_dir(out)?;
    let extra: Vec<&Path> = embeddings.into_iter().collect();
    record_inputs(rc, out, &format!("eval-{task}.snapshot"), &format!("eval-{task}.sha256"), &extra)?;
    m.write_json(&out.join(metrics_file(task)))?;
    Ok(m)
}

/// One-line summary of a metrics record.
pub fn summary(m: &Metrics) -> String {
    let values: Vec<String> = m.values.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    format!("{} on {}: {}", m.task, m.dataset, values.join(" "))
}

/// Default eval output directory: next to the embeddings, else the
/// configured output directory.
pub fn default_eval_dir(rc: &RunConfig, embeddings: Option<&Path>) -> PathBuf {
    embeddings
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| rc.output_dir())
}
