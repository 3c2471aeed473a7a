//! Conversion of raw datasets into the text format the trainer reads.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use grcca::graph::write_graph;
use grcca::{DenseMatrix, Graph};

use crate::error::{CliError, Result};

/// A converted graph plus the class names behind its integer labels.
#[derive(Debug)]
pub struct Prepared {
    pub graph: Graph,
    pub classes: Vec<String>,
    /// Citation lines naming a paper missing from the content file.
    pub dropped_edges: usize,
}

fn syntax(path: &Path, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Syntax {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads a LINQS-style pair: `<name>.content` rows of
/// `id <TAB> binary words... <TAB> class` and `<name>.cites` rows of
/// `cited <TAB> citing`. Nodes keep content-file order; classes are numbered
/// in sorted name order.
pub fn read_linqs(content_path: &Path, cites_path: &Path) -> Result<Prepared> {
    let content = std::fs::read_to_string(content_path).map_err(|e| CliError::io(content_path, e))?;
    let mut ids = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names = Vec::new();
    for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(syntax(content_path, i + 1, "expected id, attributes and class"));
        }
        let words = &fields[1..fields.len() - 1];
        if let Some(first) = rows.first() {
            if first.len() != words.len() {
                return Err(syntax(
                    content_path,
                    i + 1,
                    format!("{} attributes, earlier rows have {}", words.len(), first.len()),
                ));
            }
        }
        let row = words
            .iter()
            .map(|w| w.parse::<f64>().map_err(|_| syntax(content_path, i + 1, format!("bad attribute `{w}`"))))
            .collect::<Result<Vec<_>>>()?;
        if ids.insert(fields[0].to_owned(), rows.len()).is_some() {
            return Err(syntax(content_path, i + 1, format!("duplicate id `{}`", fields[0])));
        }
        rows.push(row);
        class_names.push(fields[fields.len() - 1].to_owned());
    }
    if rows.is_empty() {
        return Err(syntax(content_path, 1, "no nodes"));
    }
    let classes: Vec<String> = class_names.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = class_names
        .iter()
        .map(|c| classes.binary_search(c).expect("collected above") as i64)
        .collect();

    let cites = std::fs::read_to_string(cites_path).map_err(|e| CliError::io(cites_path, e))?;
    let mut edges = Vec::new();
    let mut dropped_edges = 0;
    for (i, line) in cites.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(syntax(cites_path, i + 1, "expected two ids"));
        };
        match (ids.get(a), ids.get(b)) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => dropped_edges += 1,
        }
    }

    let f = rows[0].len();
    let x = DenseMatrix::from_vec(rows.len(), f, rows.concat())?;
    Ok(Prepared {
        graph: Graph::new(x, edges, Some(labels))?,
        classes,
        dropped_edges,
    })
}

/// Writes the graph files and `classes.txt` into `out`.
pub fn write_prepared(p: &Prepared, out: &Path) -> Result<()> {
    write_graph(&p.graph, out)?;
    let names: String = p.classes.iter().map(|c| format!("{c}\n")).collect();
    let path = out.join("classes.txt");
    std::fs::write(&path, names).map_err(|e| CliError::io(path, e))
}
