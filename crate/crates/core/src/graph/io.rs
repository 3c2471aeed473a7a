//! Text dataset format.
//!
//! * `edges.tsv`: one `src<TAB>dst` pair per line, 0-indexed.
//! * `features.tsv`: line `i` holds node `i`'s attributes. Dense rows are
//!   tab-separated reals. If the first line is `#dim F`, every following line
//!   is a sparse row of `idx:val` pairs (possibly empty).
//! * `labels.tsv`: one integer per line, `-1` for unlabeled nodes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::DenseMatrix;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_graph(edges_path: &Path, features_path: &Path, labels_path: Option<&Path>) -> Result<Graph> {
    let x = read_features(features_path)?;
    let n = x.rows();
    let edges = read_edges(edges_path, n)?;
    let labels = labels_path.map(|p| read_labels(p, n)).transpose()?;
    Graph::new(x, edges, labels)
}

/// Loads `edges.tsv`, `features.tsv` and, if present, `labels.tsv` from `dir`.
pub fn load_dir(dir: &Path) -> Result<Graph> {
    let labels = dir.join(LABELS_FILE);
    load_graph(
        &dir.join(EDGES_FILE),
        &dir.join(FEATURES_FILE),
        labels.exists().then_some(labels.as_path()),
    )
}

fn read_features(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().peekable();
    let sparse_dim = match lines.peek() {
        Some((_, first)) if first.starts_with('#') => {
            let dim = first
                .strip_prefix("#dim")
                .map(str::trim)
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&d| d > 0)
                .ok_or_else(|| parse_err(path, 1, "expected header `#dim F` with F >= 1"))?;
            lines.next();
            Some(dim)
        }
        _ => None,
    };

    let mut data = Vec::new();
    let mut rows = 0usize;
    match sparse_dim {
        Some(dim) => {
            for (lineno, line) in lines {
                let start = data.len();
                data.resize(start + dim, 0.0);
                let row = &mut data[start..];
                let mut seen = Vec::new();
                for tok in line.split_whitespace() {
                    let (idx, val) = tok
                        .split_once(':')
                        .ok_or_else(|| parse_err(path, lineno + 1, format!("expected idx:val, got `{tok}`")))?;
                    let idx: usize = idx
                        .parse()
                        .map_err(|_| parse_err(path, lineno + 1, format!("bad index `{idx}`")))?;
                    let val: f64 = val
                        .parse()
                        .map_err(|_| parse_err(path, lineno + 1, format!("bad value `{val}`")))?;
                    if idx >= dim {
                        return Err(parse_err(path, lineno + 1, format!("index {idx} >= declared dim {dim}")));
                    }
                    if !val.is_finite() {
                        return Err(parse_err(path, lineno + 1, "non-finite value"));
                    }
                    if seen.contains(&idx) {
                        return Err(parse_err(path, lineno + 1, format!("duplicate feature index {idx}")));
                    }
                    seen.push(idx);
                    row[idx] = val;
                }
                rows += 1;
            }
            DenseMatrix::from_vec(rows, dim, data)
        }
        None => {
            let mut dim = None;
            for (lineno, line) in lines {
                let start = data.len();
                for tok in line.split('\t') {
                    let v: f64 = tok
                        .trim()
                        .parse()
                        .map_err(|_| parse_err(path, lineno + 1, format!("bad value `{tok}`")))?;
                    if !v.is_finite() {
                        return Err(parse_err(path, lineno + 1, "non-finite value"));
                    }
                    data.push(v);
                }
                let width = data.len() - start;
                match dim {
                    None => dim = Some(width),
                    Some(d) if d != width => {
                        return Err(parse_err(path, lineno + 1, format!("row has {width} values, expected {d}")));
                    }
                    _ => {}
                }
                rows += 1;
            }
            let dim = dim.ok_or_else(|| parse_err(path, 1, "features file has no rows"))?;
            DenseMatrix::from_vec(rows, dim, data)
        }
    }
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, lineno + 1, "expected `src<TAB>dst`"));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad node index `{s}`")))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        if a >= n || b >= n {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("node index {} >= node count {n}", a.max(b)),
            ));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<i64>> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        let v: i64 = line
            .parse()
            .map_err(|_| parse_err(path, lineno + 1, format!("bad label `{line}`")))?;
        if v < -1 {
            return Err(parse_err(path, lineno + 1, "labels must be >= -1"));
        }
        labels.push(v);
    }
    if labels.len() != n {
        return Err(parse_err(
            path,
            labels.len(),
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }
    Ok(labels)
}

/// Writes `g` in the text format read by [`load_dir`]. Attributes are written
/// sparse when fewer than half the entries are non-zero.
pub fn write_graph(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut edges = String::new();
    for &(a, b) in g.edges() {
        writeln!(edges, "{a}\t{b}").unwrap();
    }
    fs::write(dir.join(EDGES_FILE), edges)?;

    let x = g.features();
    let nnz = x.data().iter().filter(|v| **v != 0.0).count();
    let mut feats = String::new();
    if 2 * nnz < x.data().len() {
        writeln!(feats, "#dim {}", x.cols()).unwrap();
        for row in x.row_iter() {
            let mut first = true;
            for (j, v) in row.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                if !first {
                    feats.push('\t');
                }
                write!(feats, "{j}:{v}").unwrap();
                first = false;
            }
            feats.push('\n');
        }
    } else {
        for row in x.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            feats.push_str(&cells.join("\t"));
            feats.push('\n');
        }
    }
    fs::write(dir.join(FEATURES_FILE), feats)?;

    if let Some(labels) = g.labels() {
        let mut s = String::new();
        for l in labels {
            writeln!(s, "{l}").unwrap();
        }
        fs::write(dir.join(LABELS_FILE), s)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn loads_dense_features_and_dedups_edges() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), EDGES_FILE, "0\t1\n1\t0\n2\t2\n1\t2\n");
        write(dir.path(), FEATURES_FILE, "1\t0\n0\t1\n0.5\t0.25\n");
        write(dir.path(), LABELS_FILE, "0\n1\n-1\n");
        let g = load_dir(dir.path()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.features().row(2), &[0.5, 0.25]);
        assert_eq!(g.labels().unwrap(), &[0, 1, -1]);
        assert_eq!(g.num_classes(), 2);
    }

    #[test]
    fn empty_edges_file() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), EDGES_FILE, "");
        write(dir.path(), FEATURES_FILE, "#dim 4\n0:1\n\n3:2.5\t1:1\n");
        let g = load_dir(dir.path()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.features().row(1), &[0.0; 4]);
        assert_eq!(g.features().row(2), &[0.0, 1.0, 0.0, 2.5]);
        assert!(g.labels().is_none());
    }

    #[test]
    fn malformed_edge_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), EDGES_FILE, "0\t1\n1\tx\n");
        write(dir.path(), FEATURES_FILE, "1\n2\n");
        match load_dir(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_node_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), EDGES_FILE, "0\t5\n");
        write(dir.path(), FEATURES_FILE, "1\n2\n");
        match load_dir(dir.path()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 1);
                assert!(msg.contains(">= node count"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_feature_index_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), EDGES_FILE, "");
        write(dir.path(), FEATURES_FILE, "#dim 3\n0:1\n1:1 1:2\n");
        match load_dir(dir.path()) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("duplicate"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_dense_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), EDGES_FILE, "");
        write(dir.path(), FEATURES_FILE, "1\t2\n3\n");
        assert!(matches!(load_dir(dir.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn label_count_must_match() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), EDGES_FILE, "");
        write(dir.path(), FEATURES_FILE, "1\n2\n");
        write(dir.path(), LABELS_FILE, "0\n");
        assert!(load_dir(dir.path()).is_err());
    }
}
