//! Argument parsing and command dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use grcca::synth::PlantedPartition;

use crate::config::{RunConfig, Task};
use crate::error::{CliError, Result};
use crate::grid::{run_grid, GridSpec, RESULTS_FILE};
use crate::prepare::{read_linqs, write_prepared, Prepared};
use crate::reproduce::run_all;
use crate::run::{default_eval_dir, eval_run, metrics_file, summary, train_run, Verbosity};

#[derive(Debug, Parser)]
#[command(name = "grcca", version, about = "Graph representation learning by contrasting cluster assignments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by the commands that take a run config.
#[derive(Debug, Clone, Args)]
pub struct RunFlags {
    /// Run config file (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the `seed` key.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long)]
    pub deterministic: bool,
    /// Worker threads (0 picks the core count).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra `key=value` assignment applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Converts a raw dataset, or generates a synthetic one, into the text format.
    Prepare {
        /// Path prefix of a LINQS dataset: `<PREFIX>.content` and `<PREFIX>.cites`.
        #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
        linqs: Option<PathBuf>,
        /// Planted-partition graph as `NODES:CLASSES`.
        #[arg(long, value_name = "NODES:CLASSES")]
        synthetic: Option<String>,
        /// Seed for the synthetic generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains a model and writes checkpoint, embeddings and trace.
    Train(RunFlags),
    /// Scores embeddings on a downstream task.
    Eval {
        #[command(flatten)]
        flags: RunFlags,
        #[arg(long, value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<Task>()))]
        task: Task,
        /// Embedding file written by `train` (not used by the link task, which retrains per split).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Dataset directory; overrides `dataset.path`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Trains and scores every combination of a grid spec.
    Grid {
        #[command(flatten)]
        flags: RunFlags,
        /// Grid spec: `key = v1, v2, ...` lines.
        #[arg(long)]
        grid: PathBuf,
        /// Runs a seeded random subset of at most this many combinations.
        #[arg(long)]
        max_combos: Option<usize>,
    },
    /// Runs the Cora and Citeseer end-to-end checks.
    Reproduce {
        /// Directory holding prepared `cora/` and `citeseer/`.
        #[arg(long)]
        data_root: Option<PathBuf>,
        #[arg(long, default_value = "runs/reproduce")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        deterministic: bool,
    },
}

/// Loads the config and applies overrides in order: file, `--set`, flags.
pub fn resolve_config(flags: &RunFlags) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&flags.config).map_err(|e| CliError::io(&flags.config, e))?;
    let mut rc = RunConfig::default();
    rc.apply_text(&text, &flags.config)?;
    for s in &flags.set {
        rc.apply_override(s)?;
    }
    if let Some(seed) = flags.seed {
        rc.train.seed = seed;
    }
    if flags.deterministic {
        rc.deterministic = true;
    }
    if let Some(t) = flags.threads {
        rc.threads = t;
    }
    if let Some(out) = &flags.out {
        rc.output_dir = Some(out.clone());
    }
    rc.validate()?;
    Ok(rc)
}

/// Sizes the global pool once per process; later calls keep the first size.
fn init_threads(threads: usize) {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

fn parse_synthetic(spec: &str) -> Result<(usize, usize)> {
    let bad = || CliError::config("--synthetic", format!("expected NODES:CLASSES, got `{spec}`"));
    let (n, c) = spec.split_once(':').ok_or_else(bad)?;
    Ok((n.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

fn prepare(linqs: Option<&Path>, synthetic: Option<&str>, seed: u64, out: &Path) -> Result<()> {
    let prepared = match (linqs, synthetic) {
        (Some(prefix), _) => read_linqs(&prefix.with_extension("content"), &prefix.with_extension("cites"))?,
        (None, Some(spec)) => {
            let (nodes, classes) = parse_synthetic(spec)?;
            let graph = PlantedPartition::small(nodes, classes).generate(seed)?;
            Prepared {
                graph,
                classes: (0..classes).map(|c| format!("class{c}")).collect(),
                dropped_edges: 0,
            }
        }
        (None, None) => return Err(CliError::config("--linqs", "give --linqs or --synthetic")),
    };
    write_prepared(&prepared, out)?;
    let g = &prepared.graph;
    println!(
        "wrote {}: {} nodes, {} edges, {} attributes, {} classes",
        out.display(),
        g.n(),
        g.num_edges(),
        g.num_features(),
        prepared.classes.len()
    );
    if prepared.dropped_edges > 0 {
        eprintln!("note: dropped {} citations to papers without attributes", prepared.dropped_edges);
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare {
            linqs,
            synthetic,
            seed,
            out,
        } => prepare(linqs.as_deref(), synthetic.as_deref(), seed, &out),
        Command::Train(flags) => {
            let rc = resolve_config(&flags)?;
            init_threads(rc.effective_threads());
            let out = rc.output_dir();
            let t = train_run(&rc, &out, Verbosity::Progress)?;
            println!("final loss: {}", t.final_loss());
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Eval {
            flags,
            task,
            embeddings,
            dataset,
        } => {
            let mut rc = resolve_config(&flags)?;
            if let Some(d) = dataset {
                rc.dataset_path = Some(d);
            }
            init_threads(rc.effective_threads());
            if task == Task::Link && embeddings.is_some() {
                eprintln!("note: link prediction retrains on each split; --embeddings is not used");
            }
            let emb = embeddings.as_deref().filter(|_| task != Task::Link);
            let out = flags.out.clone().unwrap_or_else(|| default_eval_dir(&rc, emb));
            let m = eval_run(&rc, task, emb, &out)?;
            println!("{}", summary(&m));
            println!("wrote {}", out.join(metrics_file(task)).display());
            Ok(())
        }
        Command::Grid {
            flags,
            grid,
            max_combos,
        } => {
            let rc = resolve_config(&flags)?;
            let spec = GridSpec::load(&grid)?;
            let out = rc.output_dir();
            let rows = run_grid(&rc, &spec, max_combos, &out)?;
            let ok = rows.iter().filter(|r| r.status == "ok").count();
            if let Some(best) = rows.first().filter(|r| r.status == "ok") {
                let values: Vec<String> = spec.axes.iter().zip(&best.values).map(|((k, _), v)| format!("{k}={v}")).collect();
                println!("best: {} = {:.4} with {}", rc.task.score_key(), best.score, values.join(" "));
            }
            println!("{ok}/{} combinations succeeded; wrote {}", rows.len(), out.join(RESULTS_FILE).display());
            Ok(())
        }
        Command::Reproduce {
            data_root,
            out,
            threads,
            deterministic,
        } => {
            init_threads(if deterministic { 1 } else { threads.unwrap_or(0) });
            let outcomes = run_all(data_root.as_deref(), &out)?;
            let failed = outcomes.iter().filter(|o| !o.pass).count();
            if failed > 0 {
                return Err(CliError::CriteriaFailed {
                    failed,
                    total: outcomes.len(),
                });
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
