//! End-to-end checks on Cora and Citeseer with the committed presets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use grcca::eval::{community_detect, mean_std, node_classify};
use grcca::Graph;

use crate::config::{RunConfig, Task};
use crate::error::{CliError, Result};
use crate::run::{evaluate, fit, load_dataset, Verbosity};

pub const CORA_PRESET: &str = include_str!("../../../presets/cora.conf");
pub const CITESEER_PRESET: &str = include_str!("../../../presets/citeseer.conf");

/// Independent training runs per node-classification check.
pub const NODE_RUNS: usize = 10;
pub const CORA_MIN_ACCURACY: f64 = 0.82;
pub const CITESEER_MIN_ACCURACY: f64 = 0.71;
pub const CORA_TIME_BUDGET: Duration = Duration::from_secs(15 * 60);
pub const LINK_MIN: f64 = 0.93;
pub const COMMUNITY_MIN: f64 = 0.40;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "criterion {} ({}): {verdict}  {}", self.id, self.name, self.detail)
    }
}

/// A preset with its dataset located under `data_root` when given.
pub fn preset(text: &str, data_root: Option<&Path>) -> Result<RunConfig> {
    let mut rc = RunConfig::parse(text, Path::new("<preset>"))?;
    if let Some(root) = data_root {
        rc.dataset_path = Some(root.join(&rc.dataset_name));
    }
    Ok(rc)
}

/// Test accuracy of `runs` independent trainings, each scored on its own
/// random split. Run `r` uses seed `seed + r`.
pub fn node_accuracies(rc: &RunConfig, g: &Graph, runs: usize) -> Result<Vec<f64>> {
    let labels = g
        .labels()
        .ok_or_else(|| CliError::config("dataset.path", "dataset has no labels"))?;
    (0..runs as u64)
        .map(|r| {
            let mut rc = rc.clone();
            rc.train.seed = rc.train.seed.wrapping_add(r);
            let t = fit(&rc, g, Verbosity::Quiet)?;
            let m = node_classify(&t.embeddings, labels, rc.eval.split_protocol(), 1, rc.train.seed, &rc.eval.probe)?;
            Ok(m.values["accuracy_mean"])
        })
        .collect()
}

fn node_outcome(id: u8, name: &'static str, accs: &[f64], min: f64, elapsed: Option<Duration>) -> Outcome {
    let (mean, std) = mean_std(accs);
    let mut pass = mean >= min;
    let mut detail = format!("mean accuracy {:.2}% ± {:.2} over {} runs (need ≥ {:.1}%)", 100.0 * mean, 100.0 * std, accs.len(), 100.0 * min);
    if let Some(t) = elapsed {
        pass &= t <= CORA_TIME_BUDGET;
        detail.push_str(&format!(", {:.0} s (budget {} s)", t.as_secs_f64(), CORA_TIME_BUDGET.as_secs()));
    }
    Outcome { id, name, pass, detail }
}

pub fn cora_node(rc: &RunConfig, g: &Graph) -> Result<(Outcome, Vec<f64>)> {
    let start = Instant::now();
    let accs = node_accuracies(rc, g, NODE_RUNS)?;
    let o = node_outcome(1, "node classification, Cora", &accs, CORA_MIN_ACCURACY, Some(start.elapsed()));
    Ok((o, accs))
}

pub fn citeseer_node(rc: &RunConfig, g: &Graph) -> Result<Outcome> {
    let accs = node_accuracies(rc, g, NODE_RUNS)?;
    Ok(node_outcome(2, "node classification, Citeseer", &accs, CITESEER_MIN_ACCURACY, None))
}

/// Paired runs with and without diffusion; `full` holds the full-model
/// accuracies for the same seeds.
pub fn cora_ablation(rc: &RunConfig, g: &Graph, full: &[f64]) -> Result<Outcome> {
    let mut ablated_rc = rc.clone();
    ablated_rc.train.ablation.disable_diffusion = true;
    let ablated = node_accuracies(&ablated_rc, g, full.len())?;
    let drop = mean_std(full).0 - mean_std(&ablated).0;
    Ok(Outcome {
        id: 3,
        name: "diffusion ablation, Cora",
        pass: drop > 0.0,
        detail: format!("mean drop {:+.2} points over {} paired runs (need > 0)", 100.0 * drop, full.len()),
    })
}

pub fn cora_link(rc: &RunConfig, g: &Graph) -> Result<Outcome> {
    let mut rc = rc.clone();
    rc.eval.link_runs = 5;
    let m = evaluate(&rc, g, Task::Link, None)?;
    let (auc, ap) = (m.values["auc_mean"], m.values["ap_mean"]);
    Ok(Outcome {
        id: 4,
        name: "link prediction, Cora",
        pass: auc >= LINK_MIN && ap >= LINK_MIN,
        detail: format!("AUC {:.2}, AP {:.2} over 5 splits (need ≥ {:.1} each)", 100.0 * auc, 100.0 * ap, 100.0 * LINK_MIN),
    })
}

pub fn citeseer_community(rc: &RunConfig, g: &Graph) -> Result<Outcome> {
    let labels = g
        .labels()
        .ok_or_else(|| CliError::config("dataset.path", "dataset has no labels"))?;
    let t = fit(rc, g, Verbosity::Quiet)?;
    let m = community_detect(&t.embeddings, labels, rc.train.seed)?;
    let (nmi, ari) = (m.values["nmi"], m.values["ari"]);
    Ok(Outcome {
        id: 5,
        name: "community detection, Citeseer",
        pass: nmi >= COMMUNITY_MIN && ari >= COMMUNITY_MIN,
        detail: format!("NMI {nmi:.3}, ARI {ari:.3}, ACC {:.3} (need NMI and ARI ≥ {COMMUNITY_MIN})", m.values["acc"]),
    })
}

/// Runs all five checks, printing each line as it completes, and writes
/// `reproduce.txt` into `out`.
pub fn run_all(data_root: Option<&Path>, out: &Path) -> Result<Vec<Outcome>> {
    let cora_rc = preset(CORA_PRESET, data_root)?;
    let citeseer_rc = preset(CITESEER_PRESET, data_root)?;
    let cora = load_dataset(&cora_rc)?;
    let citeseer = load_dataset(&citeseer_rc)?;
    let mut outcomes = Vec::new();
    let mut report = |o: Outcome| {
        println!("{o}");
        outcomes.push(o);
    };
    let (o, full) = cora_node(&cora_rc, &cora)?;
    report(o);
    report(citeseer_node(&citeseer_rc, &citeseer)?);
    report(cora_ablation(&cora_rc, &cora, &full)?);
    report(cora_link(&cora_rc, &cora)?);
    report(citeseer_community(&citeseer_rc, &citeseer)?);
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path: PathBuf = out.join("reproduce.txt");
    let text: String = outcomes.iter().map(|o| format!("{o}\n")).collect();
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(outcomes)
}
