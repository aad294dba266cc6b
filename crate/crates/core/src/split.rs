//! Seeded train/validation/test edge splits, negative sampling and the
//! isolated/connected stratification of held-out edges.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{input, Error, Result};
use crate::graph::{canonical, Edge, Graph};

/// How the edges left over after the training share are divided.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Remainder split validation:test = 1:3.
    Ratio1To3,
    /// Validation gets 10% of all edges, test gets the rest.
    Fixed60_10_30,
}

impl SplitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitMode::Ratio1To3 => "ratio-1to3",
            SplitMode::Fixed60_10_30 => "fixed-60-10-30",
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio-1to3" => Ok(SplitMode::Ratio1To3),
            "fixed-60-10-30" => Ok(SplitMode::Fixed60_10_30),
            other => Err(input(format!(
                "unknown split mode {other:?} (expected ratio-1to3 or fixed-60-10-30)"
            ))),
        }
    }
}

const VAL_SHARE_FIXED: f64 = 0.10;

/// Positive edges partitioned three ways plus fixed evaluation negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSplit {
    pub num_nodes: usize,
    pub seed: u64,
    pub train_ratio: f64,
    pub mode: SplitMode,
    pub train_pos: Vec<Edge>,
    pub val_pos: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub val_neg: Vec<Edge>,
    pub test_neg: Vec<Edge>,
}

/// `⌊share · total⌋`, tolerant of products like `0.29 · 100 = 28.999…`.
fn share_of(share: f64, total: usize) -> usize {
    (share * total as f64 + 1e-9).floor() as usize
}

/// Shuffles the graph's edges with `seed` and partitions them.
pub fn split_edges(graph: &Graph, train_ratio: f64, mode: SplitMode, seed: u64) -> Result<EdgeSplit> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(input(format!("train ratio must lie in (0, 1), got {train_ratio}")));
    }
    let mut edges = graph.edges();
    let total = edges.len();
    let n_train = share_of(train_ratio, total);
    if n_train == 0 {
        return Err(input(format!(
            "train ratio {train_ratio} leaves no training edges out of {total}"
        )));
    }
    let n_val = match mode {
        SplitMode::Ratio1To3 => (total - n_train) / 4,
        SplitMode::Fixed60_10_30 => {
            if train_ratio + VAL_SHARE_FIXED >= 1.0 {
                return Err(input(format!(
                    "train ratio {train_ratio} leaves no room for the fixed 10% validation share"
                )));
            }
            share_of(VAL_SHARE_FIXED, total)
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    edges.shuffle(&mut rng);
    let test_pos = edges.split_off(n_train + n_val);
    let val_pos = edges.split_off(n_train);
    let train_pos = edges;

    let mut taken = HashSet::new();
    let val_neg = sample_negative_edges(graph, val_pos.len(), &mut rng, &taken)?;
    taken.extend(val_neg.iter().copied());
    let test_neg = sample_negative_edges(graph, test_pos.len(), &mut rng, &taken)?;

    Ok(EdgeSplit {
        num_nodes: graph.num_nodes(),
        seed,
        train_ratio,
        mode,
        train_pos,
        val_pos,
        test_pos,
        val_neg,
        test_neg,
    })
}

/// Number of node pairs that are neither edges of `graph` nor in `exclude`.
pub fn negative_capacity(graph: &Graph, exclude: &HashSet<Edge>) -> usize {
    let n = graph.num_nodes();
    let excluded_non_edges = exclude
        .iter()
        .filter(|&&(u, v)| u != v && u < n && v < n && !graph.has_edge(u, v))
        .count();
    (n * n.saturating_sub(1) / 2) - graph.num_edges() - excluded_non_edges
}

/// Draws `count` distinct canonical pairs uniformly among the node pairs that
/// are not edges of `graph`, not self-loops and not in `exclude`.
pub fn sample_negative_edges<R: Rng + ?Sized>(
    graph: &Graph,
    count: usize,
    rng: &mut R,
    exclude: &HashSet<Edge>,
) -> Result<Vec<Edge>> {
    let capacity = negative_capacity(graph, exclude);
    if count > capacity {
        return Err(input(format!(
            "cannot sample {count} negative edges; only {capacity} non-edges are available"
        )));
    }
    let n = graph.num_nodes();
    let allowed = |(u, v): Edge| !graph.has_edge(u, v) && !exclude.contains(&(u, v));

    // Dense regime: rejection would stall, so enumerate and draw from the pool.
    if count > 0 && count * 2 > capacity {
        let mut pool: Vec<Edge> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&e| allowed(e))
            .collect();
        pool.shuffle(rng);
        pool.truncate(count);
        return Ok(pool);
    }

    let mut chosen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let e = canonical((u, v));
        if allowed(e) && chosen.insert(e) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Whether a node kept at least one training edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stratum {
    Isolated,
    Connected,
}

impl EdgeSplit {
    /// Degree of every node in the training graph.
    pub fn train_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.train_pos {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// The graph containing only training edges.
    pub fn train_graph(&self, full: &Graph) -> Result<Graph> {
        full.with_edges(&self.train_pos)
    }

    /// Checks the partition and negative-set invariants against `graph`.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        if self.num_nodes != graph.num_nodes() {
            return Err(input(format!(
                "split was built for {} nodes, graph has {}",
                self.num_nodes,
                graph.num_nodes()
            )));
        }
        let mut seen = HashSet::new();
        for &e in self.train_pos.iter().chain(&self.val_pos).chain(&self.test_pos) {
            if !graph.has_edge(e.0, e.1) {
                return Err(input(format!("positive edge {e:?} is not in the graph")));
            }
            if !seen.insert(canonical(e)) {
                return Err(input(format!("positive edge {e:?} appears twice")));
            }
        }
        if seen.len() != graph.num_edges() {
            return Err(input(format!(
                "split covers {} of {} edges",
                seen.len(),
                graph.num_edges()
            )));
        }
        for (name, neg, pos) in [
            ("val", &self.val_neg, &self.val_pos),
            ("test", &self.test_neg, &self.test_pos),
        ] {
            if neg.len() != pos.len() {
                return Err(input(format!(
                    "{name} has {} negatives for {} positives",
                    neg.len(),
                    pos.len()
                )));
            }
            let mut uniq = HashSet::new();
            for &(u, v) in neg {
                if u == v || u >= self.num_nodes || v >= self.num_nodes {
                    return Err(input(format!("invalid {name} negative ({u}, {v})")));
                }
                if graph.has_edge(u, v) {
                    return Err(input(format!("{name} negative ({u}, {v}) is an edge")));
                }
                if !uniq.insert(canonical((u, v))) {
                    return Err(input(format!("{name} negative ({u}, {v}) repeated")));
                }
            }
        }
        Ok(())
    }
}

/// Per-node stratum: isolated iff the node has no training edge.
pub fn classify_test_nodes(split: &EdgeSplit) -> Vec<Stratum> {
    split
        .train_degrees()
        .into_iter()
        .map(|d| if d == 0 { Stratum::Isolated } else { Stratum::Connected })
        .collect()
}

/// An edge is isolated iff at least one endpoint is.
pub fn edge_strata(node_strata: &[Stratum], edges: &[Edge]) -> Vec<Stratum> {
    edges
        .iter()
        .map(|&(u, v)| {
            if node_strata[u] == Stratum::Isolated || node_strata[v] == Stratum::Isolated {
                Stratum::Isolated
            } else {
                Stratum::Connected
            }
        })
        .collect()
}

const SECTIONS: [&str; 5] = ["train_pos", "val_pos", "test_pos", "val_neg", "test_neg"];

/// Text manifest: a header of `key value` lines followed by one
/// `[section] count` block per edge set with one `u v` pair per line.
pub fn write_manifest(split: &EdgeSplit) -> String {
    let mut out = String::new();
    out.push_str("# edge split manifest\n");
    let _ = writeln!(out, "num_nodes {}", split.num_nodes);
    let _ = writeln!(out, "seed {}", split.seed);
    let _ = writeln!(out, "train_ratio {}", split.train_ratio);
    let _ = writeln!(out, "mode {}", split.mode);
    for (name, set) in SECTIONS.iter().zip(split.sets()) {
        let _ = writeln!(out, "[{name}] {}", set.len());
        for (u, v) in set {
            let _ = writeln!(out, "{u} {v}");
        }
    }
    out
}

pub fn read_manifest(text: &str) -> Result<EdgeSplit> {
    let bad = |line: usize, msg: String| input(format!("split manifest line {line}: {msg}"));
    let mut num_nodes = None;
    let mut seed = None;
    let mut train_ratio = None;
    let mut mode = None;
    let mut sets: Vec<Vec<Edge>> = vec![Vec::new(); SECTIONS.len()];
    let mut declared = vec![None; SECTIONS.len()];
    let mut current: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let (name, count) = rest
                .split_once(']')
                .ok_or_else(|| bad(lineno, format!("malformed section header {line:?}")))?;
            let k = SECTIONS
                .iter()
                .position(|s| *s == name)
                .ok_or_else(|| bad(lineno, format!("unknown section {name:?}")))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| bad(lineno, format!("bad count in {line:?}")))?;
            declared[k] = Some(count);
            current = Some(k);
            continue;
        }
        let mut parts = line.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => return Err(bad(lineno, format!("expected two fields, got {line:?}"))),
        };
        match current {
            None => match a {
                "num_nodes" => num_nodes = Some(parse_field(b, lineno)?),
                "seed" => seed = Some(parse_field(b, lineno)?),
                "train_ratio" => train_ratio = Some(parse_field(b, lineno)?),
                "mode" => mode = Some(b.parse::<SplitMode>()?),
                other => return Err(bad(lineno, format!("unknown header key {other:?}"))),
            },
            Some(k) => sets[k].push((parse_field(a, lineno)?, parse_field(b, lineno)?)),
        }
    }

    for (k, name) in SECTIONS.iter().enumerate() {
        match declared[k] {
            None => return Err(input(format!("split manifest is missing section [{name}]"))),
            Some(c) if c != sets[k].len() => {
                return Err(input(format!(
                    "section [{name}] declares {c} pairs but lists {}",
                    sets[k].len()
                )))
            }
            _ => {}
        }
    }
    let missing = |key: &str| input(format!("split manifest header lacks {key}"));
    let num_nodes = num_nodes.ok_or_else(|| missing("num_nodes"))?;
    for set in &sets {
        if let Some(&(u, v)) = set.iter().find(|&&(u, v)| u >= num_nodes || v >= num_nodes) {
            return Err(input(format!("pair ({u}, {v}) outside {num_nodes} nodes")));
        }
    }
    let mut it = sets.into_iter();
    Ok(EdgeSplit {
        num_nodes,
        seed: seed.ok_or_else(|| missing("seed"))?,
        train_ratio: train_ratio.ok_or_else(|| missing("train_ratio"))?,
        mode: mode.ok_or_else(|| missing("mode"))?,
        train_pos: it.next().unwrap(),
        val_pos: it.next().unwrap(),
        test_pos: it.next().unwrap(),
        val_neg: it.next().unwrap(),
        test_neg: it.next().unwrap(),
    })
}

fn parse_field<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| input(format!("split manifest line {line}: cannot parse {s:?}")))
}

impl EdgeSplit {
    fn sets(&self) -> [&Vec<Edge>; 5] {
        [
            &self.train_pos,
            &self.val_pos,
            &self.test_pos,
            &self.val_neg,
            &self.test_neg,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn path_graph(n: usize) -> Graph {
        let edges: Vec<Edge> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::new(Matrix::zeros(n, 1), &edges).unwrap()
    }

    fn graph_with_edges(n: usize, m: usize, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all: Vec<Edge> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        all.shuffle(&mut rng);
        all.truncate(m);
        Graph::new(Matrix::zeros(n, 1), &all).unwrap()
    }

    #[test]
    fn ratio_mode_sizes() {
        let g = graph_with_edges(40, 100, 1);
        let s = split_edges(&g, 0.8, SplitMode::Ratio1To3, 7).unwrap();
        assert_eq!((s.train_pos.len(), s.val_pos.len(), s.test_pos.len()), (80, 5, 15));
        assert_eq!((s.val_neg.len(), s.test_neg.len()), (5, 15));
        s.validate(&g).unwrap();
    }

    #[test]
    fn fixed_mode_sizes() {
        let g = graph_with_edges(40, 100, 2);
        let s = split_edges(&g, 0.6, SplitMode::Fixed60_10_30, 7).unwrap();
        assert_eq!((s.train_pos.len(), s.val_pos.len(), s.test_pos.len()), (60, 10, 30));
        s.validate(&g).unwrap();
    }

    #[test]
    fn seeds_control_shuffle() {
        let g = graph_with_edges(30, 80, 3);
        let a = split_edges(&g, 0.6, SplitMode::Ratio1To3, 1).unwrap();
        let b = split_edges(&g, 0.6, SplitMode::Ratio1To3, 1).unwrap();
        let c = split_edges(&g, 0.6, SplitMode::Ratio1To3, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train_pos, c.train_pos);
    }

    #[test]
    fn bad_ratios() {
        let g = graph_with_edges(10, 10, 4);
        assert!(split_edges(&g, 1.5, SplitMode::Ratio1To3, 0).is_err());
        assert!(split_edges(&g, 0.0, SplitMode::Ratio1To3, 0).is_err());
        assert!(split_edges(&g, 0.05, SplitMode::Ratio1To3, 0).is_err());
        assert!(split_edges(&g, 0.95, SplitMode::Fixed60_10_30, 0).is_err());
    }

    #[test]
    fn complete_graph_has_no_negatives() {
        let n = 5;
        let all: Vec<Edge> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        let g = Graph::new(Matrix::zeros(n, 1), &all).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_negative_edges(&g, 1, &mut rng, &HashSet::new()).is_err());
        assert!(sample_negative_edges(&g, 0, &mut rng, &HashSet::new()).unwrap().is_empty());
    }

    #[test]
    fn path_negatives_are_non_edges() {
        let g = path_graph(4);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let neg = sample_negative_edges(&g, 2, &mut rng, &HashSet::new()).unwrap();
            assert_eq!(neg.len(), 2);
            assert_ne!(neg[0], neg[1]);
            for (u, v) in neg {
                assert!(u < v);
                // path edges are exactly the consecutive pairs
                assert!(v - u != 1);
            }
        }
        // all three non-edges of the path
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut neg = sample_negative_edges(&g, 3, &mut rng, &HashSet::new()).unwrap();
        neg.sort();
        assert_eq!(neg, vec![(0, 2), (0, 3), (1, 3)]);
    }

    #[test]
    fn sampling_respects_exclude_and_seed() {
        let g = path_graph(6);
        let exclude: HashSet<Edge> = [(0, 2), (0, 3)].into_iter().collect();
        assert_eq!(negative_capacity(&g, &exclude), 15 - 5 - 2);
        let a = sample_negative_edges(&g, 4, &mut ChaCha8Rng::seed_from_u64(1), &exclude).unwrap();
        let b = sample_negative_edges(&g, 4, &mut ChaCha8Rng::seed_from_u64(1), &exclude).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|e| !exclude.contains(e)));
        assert!(sample_negative_edges(&g, 9, &mut ChaCha8Rng::seed_from_u64(1), &exclude).is_err());
    }

    #[test]
    fn strata_follow_training_degree() {
        let g = path_graph(5);
        let split = EdgeSplit {
            num_nodes: 5,
            seed: 0,
            train_ratio: 0.5,
            mode: SplitMode::Ratio1To3,
            train_pos: vec![(0, 1), (1, 2)],
            val_pos: vec![],
            test_pos: vec![(2, 3), (3, 4)],
            val_neg: vec![],
            test_neg: vec![(0, 4), (0, 2)],
        };
        split.validate(&g).unwrap();
        let nodes = classify_test_nodes(&split);
        assert_eq!(
            nodes,
            vec![
                Stratum::Connected,
                Stratum::Connected,
                Stratum::Connected,
                Stratum::Isolated,
                Stratum::Isolated
            ]
        );
        assert_eq!(
            edge_strata(&nodes, &split.test_pos),
            vec![Stratum::Isolated, Stratum::Isolated]
        );
        assert_eq!(
            edge_strata(&nodes, &split.test_neg),
            vec![Stratum::Isolated, Stratum::Connected]
        );
    }

    #[test]
    fn manifest_round_trip() {
        let g = graph_with_edges(25, 60, 5);
        let s = split_edges(&g, 0.4, SplitMode::Ratio1To3, 99).unwrap();
        let text = write_manifest(&s);
        assert_eq!(read_manifest(&text).unwrap(), s);
        assert!(text.starts_with("# edge split manifest\nnum_nodes 25\nseed 99\n"));
    }

    #[test]
    fn manifest_errors() {
        let g = graph_with_edges(10, 12, 6);
        let text = write_manifest(&split_edges(&g, 0.5, SplitMode::Ratio1To3, 0).unwrap());
        assert!(read_manifest(&text.replace("[test_neg]", "[bogus]")).is_err());
        assert!(read_manifest(&text.replace("seed 0\n", "")).is_err());
        let truncated: String = text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n");
        assert!(read_manifest(&truncated).is_err());
    }
}
