//! Run configuration: line-oriented `key = value` text with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key must be
//! one of [`KEYS`]; a repeated key overrides the earlier value.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use grcca::eval::ProbeConfig;
use grcca::{AugParams, ClusterMode, SplitProtocol, TrainConfig};

use crate::error::{CliError, Result};

/// Environment variable naming the directory that holds prepared datasets.
pub const DATA_DIR_ENV: &str = "GRCCA_DATA_DIR";

/// Every accepted key, in snapshot order.
pub const KEYS: &[&str] = &[
    "dataset.name",
    "dataset.path",
    "output.dir",
    "task",
    "seed",
    "deterministic",
    "threads",
    "aug.p_re",
    "aug.p_mnf_1",
    "aug.p_mnf_2",
    "aug.alpha",
    "aug.eps",
    "model.dim",
    "model.activation",
    "train.n_pt",
    "train.h",
    "train.tau",
    "train.epochs",
    "train.lr",
    "train.mode",
    "ablation.disable_multi_clustering",
    "ablation.disable_async",
    "ablation.disable_diffusion",
    "kmeans.restarts",
    "kmeans.max_iters",
    "kmeans.tol",
    "eval.protocol",
    "eval.per_class",
    "eval.test_size",
    "eval.node_runs",
    "eval.link_runs",
    "eval.probe_l2",
    "eval.probe_iters",
    "diffusion.cache_dir",
];

/// Keys that locate files or control scheduling. They never change results
/// and are left out of [`RunConfig::config_hash`].
const PLUMBING_KEYS: &[&str] = &["dataset.path", "output.dir", "deterministic", "threads", "diffusion.cache_dir"];

/// Downstream task a run is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Node,
    Link,
    Community,
}

impl Task {
    /// The metric a grid search ranks by.
    pub fn score_key(self) -> &'static str {
        match self {
            Task::Node => "accuracy_mean",
            Task::Link => "auc_mean",
            Task::Community => "nmi",
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "node" => Ok(Task::Node),
            "link" => Ok(Task::Link),
            "community" => Ok(Task::Community),
            other => Err(format!("unknown task `{other}` (expected node, link or community)")),
        }
    }
}

impl Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Node => "node",
            Task::Link => "link",
            Task::Community => "community",
        })
    }
}

/// Diffusion sparsification threshold; `Auto` picks it from the graph size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eps {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Citation,
    CoPurchase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub protocol: ProtocolKind,
    /// Training nodes per class; `None` uses the protocol default.
    pub per_class: Option<usize>,
    /// Test nodes under the citation protocol.
    pub test_size: usize,
    pub node_runs: usize,
    pub link_runs: usize,
    pub probe: ProbeConfig,
}

impl EvalSettings {
    pub fn split_protocol(&self) -> SplitProtocol {
        match self.protocol {
            ProtocolKind::Citation => SplitProtocol::Citation {
                per_class: self.per_class.unwrap_or(20),
                test_size: self.test_size,
            },
            ProtocolKind::CoPurchase => SplitProtocol::CoPurchase {
                per_class: self.per_class.unwrap_or(30),
            },
        }
    }
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            protocol: ProtocolKind::Citation,
            per_class: None,
            test_size: 1000,
            node_runs: 10,
            link_runs: 5,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_name: String,
    pub dataset_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub task: Task,
    pub deterministic: bool,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    pub eps: Eps,
    /// Training settings. `train.aug.eps` is resolved per graph through [`Self::train_config`].
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub diffusion_cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset_name: String::new(),
            dataset_path: None,
            output_dir: None,
            task: Task::Node,
            deterministic: false,
            threads: 0,
            eps: Eps::Auto,
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            diffusion_cache_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::config(key, format!("cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::config(key, format!("expected true or false, got `{value}`"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

/// Splits `key = value`, trimming both sides.
fn split_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

/// Non-comment, non-blank lines of a config text with 1-based line numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

impl RunConfig {
    /// Parses config text on top of the defaults and validates the result.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut rc = RunConfig::default();
        rc.apply_text(text, origin)?;
        rc.validate()?;
        Ok(rc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Applies assignments without validating.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (line, content) in content_lines(text) {
            let (key, value) = split_assignment(content).ok_or_else(|| CliError::Syntax {
                path: origin.to_path_buf(),
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = split_assignment(assignment)
            .ok_or_else(|| CliError::config(assignment, "override must look like key=value"))?;
        self.set(key, value)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "dataset.name" => self.dataset_name = value.to_owned(),
            "dataset.path" => self.dataset_path = opt_path(value),
            "output.dir" => self.output_dir = opt_path(value),
            "task" => self.task = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "deterministic" => self.deterministic = parse_bool(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "aug.p_re" => t.aug.p_re = parse(key, value)?,
            "aug.p_mnf_1" => t.aug.p_mnf_1 = parse(key, value)?,
            "aug.p_mnf_2" => t.aug.p_mnf_2 = parse(key, value)?,
            "aug.alpha" => t.aug.alpha = parse(key, value)?,
            "aug.eps" => {
                self.eps = if value == "auto" {
                    Eps::Auto
                } else {
                    Eps::Fixed(parse(key, value)?)
                }
            }
            "model.dim" => t.dim = parse(key, value)?,
            "model.activation" => t.activation = parse(key, value)?,
            "train.n_pt" => t.k = parse(key, value)?,
            "train.h" => t.h = parse(key, value)?,
            "train.tau" => t.tau = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.lr" => t.lr = parse(key, value)?,
            "train.mode" => t.mode = parse::<ClusterMode>(key, value)?,
            "ablation.disable_multi_clustering" => t.ablation.disable_multi_clustering = parse_bool(key, value)?,
            "ablation.disable_async" => t.ablation.disable_async = parse_bool(key, value)?,
            "ablation.disable_diffusion" => t.ablation.disable_diffusion = parse_bool(key, value)?,
            "kmeans.restarts" => t.kmeans.restarts = parse(key, value)?,
            "kmeans.max_iters" => t.kmeans.max_iters = parse(key, value)?,
            "kmeans.tol" => t.kmeans.tol = parse(key, value)?,
            "eval.protocol" => {
                self.eval.protocol = match value {
                    "citation" => ProtocolKind::Citation,
                    "co_purchase" => ProtocolKind::CoPurchase,
                    other => {
                        return Err(CliError::config(
                            key,
                            format!("unknown protocol `{other}` (expected citation or co_purchase)"),
                        ))
                    }
                }
            }
            "eval.per_class" => {
                self.eval.per_class = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "eval.test_size" => self.eval.test_size = parse(key, value)?,
            "eval.node_runs" => self.eval.node_runs = parse(key, value)?,
            "eval.link_runs" => self.eval.link_runs = parse(key, value)?,
            "eval.probe_l2" => self.eval.probe.l2 = parse(key, value)?,
            "eval.probe_iters" => self.eval.probe.iters = parse(key, value)?,
            "diffusion.cache_dir" => self.diffusion_cache_dir = opt_path(value),
            _ => return Err(CliError::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let s = match key {
            "dataset.name" => self.dataset_name.clone(),
            "dataset.path" => show_path(&self.dataset_path),
            "output.dir" => show_path(&self.output_dir),
            "task" => self.task.to_string(),
            "seed" => t.seed.to_string(),
            "deterministic" => self.deterministic.to_string(),
            "threads" => self.threads.to_string(),
            "aug.p_re" => t.aug.p_re.to_string(),
            "aug.p_mnf_1" => t.aug.p_mnf_1.to_string(),
            "aug.p_mnf_2" => t.aug.p_mnf_2.to_string(),
            "aug.alpha" => t.aug.alpha.to_string(),
            "aug.eps" => match self.eps {
                Eps::Auto => "auto".to_owned(),
                Eps::Fixed(e) => e.to_string(),
            },
            "model.dim" => t.dim.to_string(),
            "model.activation" => t.activation.to_string(),
            "train.n_pt" => t.k.to_string(),
            "train.h" => t.h.to_string(),
            "train.tau" => t.tau.to_string(),
            "train.epochs" => t.epochs.to_string(),
            "train.lr" => t.lr.to_string(),
            "train.mode" => t.mode.to_string(),
            "ablation.disable_multi_clustering" => t.ablation.disable_multi_clustering.to_string(),
            "ablation.disable_async" => t.ablation.disable_async.to_string(),
            "ablation.disable_diffusion" => t.ablation.disable_diffusion.to_string(),
            "kmeans.restarts" => t.kmeans.restarts.to_string(),
            "kmeans.max_iters" => t.kmeans.max_iters.to_string(),
            "kmeans.tol" => t.kmeans.tol.to_string(),
            "eval.protocol" => match self.eval.protocol {
                ProtocolKind::Citation => "citation".to_owned(),
                ProtocolKind::CoPurchase => "co_purchase".to_owned(),
            },
            "eval.per_class" => self.eval.per_class.map_or("auto".to_owned(), |p| p.to_string()),
            "eval.test_size" => self.eval.test_size.to_string(),
            "eval.node_runs" => self.eval.node_runs.to_string(),
            "eval.link_runs" => self.eval.link_runs.to_string(),
            "eval.probe_l2" => self.eval.probe.l2.to_string(),
            "eval.probe_iters" => self.eval.probe.iters.to_string(),
            "diffusion.cache_dir" => show_path(&self.diffusion_cache_dir),
            _ => return None,
        };
        Some(s)
    }

    /// Full `key = value` listing of every key. Parsing it gives back an
    /// equal config.
    pub fn snapshot(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Listing of the keys that affect results.
    pub fn hashed_snapshot(&self) -> String {
        KEYS.iter()
            .filter(|k| !PLUMBING_KEYS.contains(k))
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Content hash of [`Self::hashed_snapshot`].
    pub fn config_hash(&self) -> String {
        crate::hash::blob_hash(self.hashed_snapshot().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_name.is_empty() && self.dataset_path.is_none() {
            return Err(CliError::config("dataset.name", "set dataset.name or dataset.path"));
        }
        if let Eps::Fixed(e) = self.eps {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(CliError::config("aug.eps", format!("{e} must be finite and >= 0")));
            }
        }
        self.train.validate().map_err(|e| match e {
            grcca::Error::InvalidParam { name, msg } => CliError::config(core_param_key(name), msg),
            other => CliError::Core(other),
        })?;
        if self.train.kmeans.tol.is_nan() || self.train.kmeans.tol < 0.0 {
            return Err(CliError::config("kmeans.tol", "must be >= 0"));
        }
        let ev = &self.eval;
        if ev.per_class == Some(0) {
            return Err(CliError::config("eval.per_class", "must be at least 1"));
        }
        if ev.protocol == ProtocolKind::Citation && ev.test_size == 0 {
            return Err(CliError::config("eval.test_size", "must be at least 1"));
        }
        if ev.node_runs == 0 {
            return Err(CliError::config("eval.node_runs", "must be at least 1"));
        }
        if ev.link_runs == 0 {
            return Err(CliError::config("eval.link_runs", "must be at least 1"));
        }
        if !(ev.probe.l2 >= 0.0 && ev.probe.l2.is_finite()) {
            return Err(CliError::config("eval.probe_l2", "must be finite and >= 0"));
        }
        if ev.probe.iters == 0 {
            return Err(CliError::config("eval.probe_iters", "must be at least 1"));
        }
        Ok(())
    }

    /// Threads for the worker pool after the determinism flag.
    pub fn effective_threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads
        }
    }

    /// Dataset directory: `dataset.path`, else `$GRCCA_DATA_DIR/<name>`,
    /// else `data/<name>`.
    pub fn dataset_dir(&self) -> PathBuf {
        if let Some(p) = &self.dataset_path {
            return p.clone();
        }
        let root = std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from);
        root.join(&self.dataset_name)
    }

    /// Output directory: `output.dir`, else `runs/<name>`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(self.label()))
    }

    /// Name reported in metrics: `dataset.name`, else the dataset directory name.
    pub fn label(&self) -> String {
        if !self.dataset_name.is_empty() {
            return self.dataset_name.clone();
        }
        self.dataset_dir()
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    /// Training settings for a graph with `n` nodes.
    pub fn train_config(&self, n: usize) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.aug.eps = match self.eps {
            Eps::Auto => AugParams::default_eps(n),
            Eps::Fixed(e) => e,
        };
        cfg
    }
}

/// Config key for a parameter name reported by the core library.
fn core_param_key(name: &str) -> &str {
    match name {
        "p_re" => "aug.p_re",
        "p_mnf_1" => "aug.p_mnf_1",
        "p_mnf_2" => "aug.p_mnf_2",
        "alpha" => "aug.alpha",
        "eps" => "aug.eps",
        "k" => "train.n_pt",
        "h" => "train.h",
        "tau" => "train.tau",
        "epochs" => "train.epochs",
        "lr" => "train.lr",
        "dim" => "model.dim",
        "kmeans" => "kmeans.restarts",
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.conf"))
    }

    #[test]
    fn keys_are_unique_and_readable() {
        let rc = RunConfig::default();
        for (i, k) in KEYS.iter().enumerate() {
            assert!(!KEYS[..i].contains(k), "{k} listed twice");
            assert!(rc.get(k).is_some(), "{k} has no getter");
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let mut rc = parse_str(
            "dataset.name = cora\n# comment\n\naug.p_re=0.3\ntrain.n_pt = 21\nmodel.activation = prelu\n\
             aug.eps = 1e-4\neval.protocol = co_purchase\neval.per_class = 12\nablation.disable_async = yes\n\
             dataset.path = /tmp/x\ntrain.mode = sync\n",
        )
        .unwrap();
        rc.train.lr = 0.1 + 0.2;
        let back = parse_str(&rc.snapshot()).unwrap();
        assert_eq!(back, rc);
        assert_eq!(back.train.k, 21);
        assert_eq!(back.eval.split_protocol(), SplitProtocol::CoPurchase { per_class: 12 });
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_str("dataset.name = x\naug.p_ree = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("aug.p_ree"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn validation_names_the_key() {
        for (line, key) in [
            ("train.tau = 0", "train.tau"),
            ("train.n_pt = 0", "train.n_pt"),
            ("aug.p_mnf_2 = 1.5", "aug.p_mnf_2"),
            ("aug.alpha = 1", "aug.alpha"),
            ("model.dim = 0", "model.dim"),
            ("eval.node_runs = 0", "eval.node_runs"),
            ("aug.eps = -1", "aug.eps"),
        ] {
            let err = parse_str(&format!("dataset.name = x\n{line}\n")).unwrap_err();
            assert!(err.to_string().contains(key), "{line}: {err}");
        }
    }

    #[test]
    fn bad_values_and_lines() {
        let err = parse_str("dataset.name = x\ntrain.h = two\n").unwrap_err();
        assert!(err.to_string().contains("train.h"));
        let err = parse_str("dataset.name = x\njust words\n").unwrap_err();
        assert!(err.to_string().contains("test.conf:2"), "{err}");
        assert!(parse_str("train.h = 2\n").is_err(), "a dataset is required");
    }

    #[test]
    fn hash_ignores_plumbing_only() {
        let a = parse_str("dataset.name = x\n").unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        b.threads = 3;
        b.deterministic = true;
        assert_eq!(a.config_hash(), b.config_hash());
        b.train.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn eps_resolution() {
        let rc = parse_str("dataset.name = x\n").unwrap();
        assert_eq!(rc.train_config(100).aug.eps, 0.0);
        assert!(rc.train_config(100_000).aug.eps > 0.0);
        let rc = parse_str("dataset.name = x\naug.eps = 0.001\n").unwrap();
        assert_eq!(rc.train_config(100_000).aug.eps, 0.001);
    }

    #[test]
    fn presets_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "conf") {
                let rc = RunConfig::load(&path).unwrap();
                assert_eq!(rc.train.h, 2);
                assert_eq!(rc.train.aug.alpha, 0.05);
                seen += 1;
            }
        }
        assert_eq!(seen, 6);
    }
}
