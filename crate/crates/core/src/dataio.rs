//! Plain-text dataset bundles.
//!
//! A bundle is a directory with three files:
//!
//! - `meta.txt`: four lines, `name`, `num_nodes`, `num_features`, `num_edges`
//! - `features.txt`: `num_nodes` lines of `num_features` space-separated reals
//! - `edges.txt`: `num_edges` lines `u v` with `0 <= u < v < num_nodes`

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::matrix::Matrix;

pub const META_FILE: &str = "meta.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const EDGES_FILE: &str = "edges.txt";

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
}

fn load_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| load_err(path, 0, e.to_string()))
}

fn parse<T: FromStr>(path: &Path, line: usize, token: &str, what: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| load_err(path, line, format!("malformed {what} {token:?}")))
}

struct Meta {
    name: String,
    num_nodes: usize,
    num_features: usize,
    num_edges: usize,
}

fn read_meta(path: &Path) -> Result<Meta> {
    let text = read(path)?;
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    if lines.len() != 4 {
        return Err(load_err(
            path,
            lines.len().min(4) + 1,
            format!("expected 4 lines, found {}", lines.len()),
        ));
    }
    if lines[0].is_empty() {
        return Err(load_err(path, 1, "empty dataset name"));
    }
    Ok(Meta {
        name: lines[0].to_string(),
        num_nodes: parse(path, 2, lines[1], "node count")?,
        num_features: parse(path, 3, lines[2], "feature count")?,
        num_edges: parse(path, 4, lines[3], "edge count")?,
    })
}

fn read_features(path: &Path, meta: &Meta) -> Result<Matrix> {
    let text = read(path)?;
    let mut data = Vec::with_capacity(meta.num_nodes * meta.num_features);
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if rows == meta.num_nodes {
            return Err(load_err(path, lineno, format!("more than {} feature rows", meta.num_nodes)));
        }
        let before = data.len();
        for token in line.split_whitespace() {
            let v: f64 = parse(path, lineno, token, "real")?;
            if !v.is_finite() {
                return Err(load_err(path, lineno, format!("non-finite value {token:?}")));
            }
            data.push(v);
        }
        let found = data.len() - before;
        if found != meta.num_features {
            return Err(load_err(
                path,
                lineno,
                format!("expected {} values, found {found}", meta.num_features),
            ));
        }
        rows += 1;
    }
    if rows != meta.num_nodes {
        return Err(load_err(
            path,
            rows + 1,
            format!("expected {} feature rows, found {rows}", meta.num_nodes),
        ));
    }
    Matrix::from_vec(rows, meta.num_features, data)
}

fn read_edges(path: &Path, meta: &Meta) -> Result<Vec<Edge>> {
    let text = read(path)?;
    let mut edges = Vec::with_capacity(meta.num_edges);
    let mut seen = HashSet::with_capacity(meta.num_edges);
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = tokens[..] else {
            return Err(load_err(path, lineno, format!("expected \"u v\", found {line:?}")));
        };
        let u: usize = parse(path, lineno, a, "node index")?;
        let v: usize = parse(path, lineno, b, "node index")?;
        if u == v {
            return Err(load_err(path, lineno, format!("self-loop on node {u}")));
        }
        if u > v {
            return Err(load_err(path, lineno, format!("edge ({u}, {v}) is not ordered u < v")));
        }
        if v >= meta.num_nodes {
            return Err(load_err(
                path,
                lineno,
                format!("node {v} out of range for {} nodes", meta.num_nodes),
            ));
        }
        if !seen.insert((u, v)) {
            return Err(load_err(path, lineno, format!("duplicate edge ({u}, {v})")));
        }
        edges.push((u, v));
    }
    if edges.len() != meta.num_edges {
        return Err(load_err(
            path,
            edges.len() + 1,
            format!("expected {} edges, found {}", meta.num_edges, edges.len()),
        ));
    }
    Ok(edges)
}

/// Loads and validates the bundle in `dir`.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(load_err(dir, 0, "bundle directory not found"));
    }
    let meta_path = dir.join(META_FILE);
    let meta = read_meta(&meta_path)?;
    let features = read_features(&dir.join(FEATURES_FILE), &meta)?;
    let edges = read_edges(&dir.join(EDGES_FILE), &meta)?;
    let graph = Graph::new(features, &edges).map_err(|e| load_err(&meta_path, 0, e.to_string()))?;
    Ok(Dataset { name: meta.name, graph })
}

/// Writes `graph` as a bundle; edges are emitted canonically sorted.
pub fn write_dataset(dir: &Path, name: &str, graph: &Graph) -> Result<PathBuf> {
    if name.trim().is_empty() || name.contains('\n') {
        return Err(Error::Input(format!("invalid dataset name {name:?}")));
    }
    fs::create_dir_all(dir)?;
    let edges = graph.edges();
    fs::write(
        dir.join(META_FILE),
        format!("{name}\n{}\n{}\n{}\n", graph.num_nodes(), graph.num_features(), edges.len()),
    )?;
    let x = graph.features();
    let mut text = String::new();
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if j > 0 {
                text.push(' ');
            }
            write!(text, "{v}").unwrap();
        }
        text.push('\n');
    }
    fs::write(dir.join(FEATURES_FILE), text)?;
    let mut text = String::new();
    for (u, v) in edges {
        writeln!(text, "{u} {v}").unwrap();
    }
    fs::write(dir.join(EDGES_FILE), text)?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(meta: &str, features: &str, edges: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(META_FILE), meta).unwrap();
        fs::write(dir.path().join(FEATURES_FILE), features).unwrap();
        fs::write(dir.path().join(EDGES_FILE), edges).unwrap();
        dir
    }

    fn line_of(err: Error) -> (String, usize) {
        match err {
            Error::Load { path, line, .. } => (path.file_name().unwrap().to_string_lossy().into_owned(), line),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loads_toy_bundle() {
        let dir = bundle("toy\n3\n2\n2\n", "1 0\n0 1\n0.5 0.5\n", "0 1\n1 2\n");
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.name, "toy");
        assert_eq!(ds.graph.num_nodes(), 3);
        assert_eq!(ds.graph.num_features(), 2);
        assert_eq!(ds.graph.edges(), vec![(0, 1), (1, 2)]);
        assert_eq!(ds.graph.degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn duplicate_edge_names_line() {
        let dir = bundle("toy\n3\n1\n3\n", "1\n1\n1\n", "0 1\n1 2\n0 1\n");
        assert_eq!(line_of(load_dataset(dir.path()).unwrap_err()), ("edges.txt".into(), 3));
    }

    #[test]
    fn edge_errors_name_line() {
        let cases = [
            ("toy\n3\n1\n2\n", "0 1\n2 2\n", 2),
            ("toy\n3\n1\n2\n", "0 1\n2 1\n", 2),
            ("toy\n3\n1\n1\n", "0 3\n", 1),
            ("toy\n3\n1\n1\n", "0 x\n", 1),
            ("toy\n3\n1\n1\n", "0 1 2\n", 1),
            ("toy\n3\n1\n2\n", "0 1\n", 2),
        ];
        for (meta, edges, line) in cases {
            let dir = bundle(meta, "1\n1\n1\n", edges);
            assert_eq!(line_of(load_dataset(dir.path()).unwrap_err()), ("edges.txt".into(), line), "{edges:?}");
        }
    }

    #[test]
    fn feature_and_meta_errors() {
        let dir = bundle("toy\n3\n2\n0\n", "1 0\n0\n1 1\n", "");
        assert_eq!(line_of(load_dataset(dir.path()).unwrap_err()), ("features.txt".into(), 2));
        let dir = bundle("toy\n3\n1\n0\n", "1\n1\n", "");
        assert_eq!(line_of(load_dataset(dir.path()).unwrap_err()), ("features.txt".into(), 3));
        let dir = bundle("toy\nthree\n1\n0\n", "1\n1\n1\n", "");
        assert_eq!(line_of(load_dataset(dir.path()).unwrap_err()), ("meta.txt".into(), 2));
        assert!(load_dataset(Path::new("/nonexistent/bundle")).is_err());
    }

    #[test]
    fn write_then_load_is_identity() {
        let x = Matrix::from_fn(4, 3, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let g = Graph::new(x, &[(2, 0), (1, 3), (0, 1)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "rt", &g).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.name, "rt");
        assert_eq!(back.graph.features(), g.features());
        assert_eq!(back.graph.edges(), g.edges());
    }
}
