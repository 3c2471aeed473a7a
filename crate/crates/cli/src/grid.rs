//! Grid search over config keys.
//!
//! A grid spec uses the config syntax with comma-separated value lists,
//! e.g. `train.tau = 0.05, 0.1`. Combinations are the cartesian product in
//! spec order, the first key varying slowest.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;

use grcca::rng;

use crate::config::{content_lines, RunConfig};
use crate::error::{CliError, Result};
use crate::run::{eval_run, train_run, Verbosity, EMBEDDINGS_FILE};

pub const RESULTS_FILE: &str = "grid.csv";

/// Stream tag for drawing a capped subset of combinations.
const SUBSET_TAG: u64 = 0x6772_6964;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<(String, Vec<String>)>,
}

impl GridSpec {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut axes: Vec<(String, Vec<String>)> = Vec::new();
        for (line, content) in content_lines(text) {
            let (key, values) = content.split_once('=').ok_or_else(|| CliError::Syntax {
                path: origin.to_path_buf(),
                line,
                msg: format!("expected `key = v1, v2, ...`, got `{content}`"),
            })?;
            let key = key.trim();
            if axes.iter().any(|(k, _)| k == key) {
                return Err(CliError::config(key, "listed twice in the grid"));
            }
            let values: Vec<String> = values
                .split(',')
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(str::to_owned)
                .collect();
            if values.is_empty() {
                return Err(CliError::config(key, "grid axis has no values"));
            }
            axes.push((key.to_owned(), values));
        }
        if axes.is_empty() {
            return Err(CliError::config("grid", "empty grid"));
        }
        Ok(GridSpec { axes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values of combination `index` (mixed-radix decoding).
    pub fn combination(&self, mut index: usize) -> Vec<(&str, &str)> {
        let mut out = vec![("", ""); self.axes.len()];
        for (slot, (key, values)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = (key.as_str(), values[index % values.len()].as_str());
            index /= values.len();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub index: usize,
    pub values: Vec<String>,
    pub score: f64,
    pub score_std: Option<f64>,
    pub final_loss: f64,
    /// `ok` or the error message.
    pub status: String,
    pub dir: PathBuf,
}

/// Indices to run: all of them, or a seeded random subset of `cap`.
fn selection(total: usize, cap: Option<usize>, seed: u64) -> Vec<usize> {
    match cap {
        Some(c) if c < total => {
            let mut picked = sample(&mut rng::stream(seed, &[SUBSET_TAG]), total, c).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    }
}

pub fn combo_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("combo-{index:04}"))
}

/// Trains and evaluates each selected combination in a worker pool of
/// `base.effective_threads()` threads, then writes the ranked `grid.csv`.
pub fn run_grid(base: &RunConfig, spec: &GridSpec, cap: Option<usize>, out: &Path) -> Result<Vec<GridRow>> {
    let chosen = selection(spec.len(), cap, base.train.seed);
    if chosen.is_empty() {
        return Err(CliError::config("grid", "no combinations selected"));
    }
    // Every combination is validated before any training starts.
    let configs = chosen
        .iter()
        .map(|&i| {
            let mut rc = base.clone();
            for (k, v) in spec.combination(i) {
                rc.set(k, v)?;
            }
            rc.output_dir = Some(combo_dir(out, i));
            rc.validate()?;
            Ok((i, rc))
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(base.effective_threads())
        .build()
        .map_err(|e| CliError::config("threads", e.to_string()))?;
    let task = base.task;
    let score_key = task.score_key();
    let std_key = score_key.strip_suffix("_mean").map(|s| format!("{s}_std"));
    let mut rows: Vec<GridRow> = pool.install(|| {
        configs
            .par_iter()
            .map(|(i, rc)| {
                let dir = combo_dir(out, *i);
                let values = spec.combination(*i).iter().map(|(_, v)| (*v).to_owned()).collect();
                let outcome = train_run(rc, &dir, Verbosity::Quiet).and_then(|t| {
                    let emb = dir.join(EMBEDDINGS_FILE);
                    let emb = (task != crate::config::Task::Link).then_some(emb.as_path());
                    let m = eval_run(rc, task, emb, &dir)?;
                    Ok((t.final_loss(), m))
                });
                let row = match outcome {
                    Ok((loss, m)) => GridRow {
                        index: *i,
                        values,
                        score: m.values.get(score_key).copied().unwrap_or(f64::NAN),
                        score_std: std_key.as_ref().and_then(|k| m.values.get(k).copied()),
                        final_loss: loss,
                        status: "ok".to_owned(),
                        dir,
                    },
                    Err(e) => GridRow {
                        index: *i,
                        values,
                        score: f64::NAN,
                        score_std: None,
                        final_loss: f64::NAN,
                        status: e.to_string(),
                        dir,
                    },
                };
                eprintln!("combo {:04}: {score_key}={:.4} ({})", row.index, row.score, row.status);
                row
            })
            .collect()
    });
    rank(&mut rows);
    write_csv(&out.join(RESULTS_FILE), spec, score_key, &rows)?;
    Ok(rows)
}

/// Best score first; failed runs last; ties keep combination order.
fn rank(rows: &mut [GridRow]) {
    rows.sort_by(|a, b| match (a.score.is_nan(), b.score.is_nan()) {
        (false, false) => b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)),
        (x, y) => x.cmp(&y).then(a.index.cmp(&b.index)),
    });
}

fn write_csv(path: &Path, spec: &GridSpec, score_key: &str, rows: &[GridRow]) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new("."))).map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["rank".to_owned(), "combo".to_owned()];
    header.extend(spec.axes.iter().map(|(k, _)| k.clone()));
    header.extend([score_key.to_owned(), "score_std".into(), "final_loss".into(), "status".into(), "dir".into()]);
    w.write_record(&header)?;
    for (rank, r) in rows.iter().enumerate() {
        let mut rec = vec![(rank + 1).to_string(), r.index.to_string()];
        rec.extend(r.values.iter().cloned());
        rec.push(r.score.to_string());
        rec.push(r.score_std.map_or_else(String::new, |s| s.to_string()));
        rec.push(r.final_loss.to_string());
        rec.push(r.status.clone());
        rec.push(r.dir.display().to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> Result<GridSpec> {
        GridSpec::parse(text, Path::new("g"))
    }

    #[test]
    fn product_order_and_len() {
        let g = spec("a = 1, 2\n# x\nb = x, y, z\n").unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.combination(0), [("a", "1"), ("b", "x")]);
        assert_eq!(g.combination(2), [("a", "1"), ("b", "z")]);
        assert_eq!(g.combination(3), [("a", "2"), ("b", "x")]);
    }

    #[test]
    fn empty_grids_are_errors() {
        assert!(spec("").is_err());
        assert!(spec("# only comments\n").is_err());
        let err = spec("train.tau = ,\n").unwrap_err();
        assert!(err.to_string().contains("train.tau"));
        assert!(spec("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn capped_selection_is_seeded_subset() {
        let s = selection(100, Some(20), 3);
        assert_eq!(s.len(), 20);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, selection(100, Some(20), 3));
        assert_ne!(s, selection(100, Some(20), 4));
        assert_eq!(selection(5, Some(20), 3), [0, 1, 2, 3, 4]);
    }

    #[test]
    fn ranking_puts_failures_last() {
        let row = |index, score| GridRow {
            index,
            values: vec![],
            score,
            score_std: None,
            final_loss: 0.0,
            status: String::new(),
            dir: PathBuf::new(),
        };
        let mut rows = vec![row(0, 0.5), row(1, f64::NAN), row(2, 0.9), row(3, 0.5)];
        rank(&mut rows);
        let order: Vec<usize> = rows.iter().map(|r| r.index).collect();
        assert_eq!(order, [2, 0, 3, 1]);
    }
}
