//! Shared fixtures for the integration tests: random graphs, a synthetic
//! citation-like graph, finite differences and bundle lookup.
#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vgnae::{Edge, Graph, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Erdős–Rényi edges on `n` nodes with probability `p`.
pub fn random_edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<Edge> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Random graph with dense uniform features (no zero rows almost surely).
pub fn random_graph(n: usize, p: f64, features: usize, rng: &mut ChaCha8Rng) -> Graph {
    let x = random_matrix(n, features, rng);
    let edges = random_edges(n, p, rng);
    Graph::new(x, &edges).unwrap()
}

/// Homophilous graph with sparse binary bag-of-words features.
///
/// Every node has a latent position around its class center. Words are
/// drawn from a softmax over word vectors at that position, and edge
/// partners are drawn by proximity weighted with a heavy-tailed activity
/// score, so low-degree nodes are common.
pub fn citation_like(n: usize, classes: usize, vocab: usize, num_edges: usize, seed: u64) -> Graph {
    const LATENT: usize = 16;
    let mut rng = rng(seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let centers: Vec<Vec<f64>> = (0..classes).map(|_| (0..LATENT).map(|_| gauss(&mut rng)).collect()).collect();
    let latent: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let c = &centers[rng.random_range(0..classes)];
            c.iter().map(|m| m + 0.6 * gauss(&mut rng)).collect()
        })
        .collect();
    let words: Vec<Vec<f64>> = (0..vocab).map(|_| (0..LATENT).map(|_| gauss(&mut rng)).collect()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut x = Matrix::zeros(n, vocab);
    let mut cum = vec![0.0; vocab];
    for v in 0..n {
        let mut acc = 0.0;
        for (w, e) in words.iter().enumerate() {
            acc += (0.8 * dot(&latent[v], e)).exp();
            cum[w] = acc;
        }
        for _ in 0..rng.random_range(10..25) {
            let t = rng.random::<f64>() * acc;
            x.set(v, cum.partition_point(|&c| c < t).min(vocab - 1), 1.0);
        }
    }

    let activity: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powf(-0.7)).collect();
    let mut act_cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for a in &activity {
        acc += a;
        act_cum.push(acc);
    }
    let mut edges = BTreeSet::new();
    let mut pick = vec![0.0; n];
    while edges.len() < num_edges {
        let t = rng.random::<f64>() * acc;
        let u = act_cum.partition_point(|&c| c < t).min(n - 1);
        let mut total = 0.0;
        for v in 0..n {
            let d2: f64 = latent[u].iter().zip(&latent[v]).map(|(a, b)| (a - b).powi(2)).sum();
            if v != u {
                total += activity[v] * (-d2 / 2.0).exp();
            }
            pick[v] = total;
        }
        let t = rng.random::<f64>() * total;
        let v = pick.partition_point(|&c| c < t).min(n - 1);
        if v != u {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    Graph::new(x, &edges.into_iter().collect::<Vec<_>>()).unwrap()
}

/// Central finite differences of `f` at `x`, one entry per element.
pub fn numeric_gradient(x: &Matrix, step: f64, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let orig = x.get(i, j);
            probe.set(i, j, orig + step);
            let up = f(&probe);
            probe.set(i, j, orig - step);
            let down = f(&probe);
            probe.set(i, j, orig);
            grad.set(i, j, (up - down) / (2.0 * step));
        }
    }
    grad
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both vanish.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// `data/<name>` under the workspace root, if it holds a bundle.
pub fn bundle_dir(name: &str) -> Option<PathBuf> {
    let dir = workspace_root().join("data").join(name);
    dir.join("meta.txt").is_file().then_some(dir)
}
