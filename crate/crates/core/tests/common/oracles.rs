//! Slow, direct reference implementations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vgnae::{Graph, Matrix};

/// `(D̃^{-1/2} (A + I) D̃^{-1/2})` built entry by entry from the edge list.
pub fn dense_normalized_adjacency(graph: &Graph) -> Matrix {
    let n = graph.num_nodes();
    let mut a = Matrix::identity(n);
    for (u, v) in graph.edges() {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    Matrix::from_fn(n, n, |i, j| a.get(i, j) / (deg[i] * deg[j]).sqrt())
}

/// Triple-loop product.
pub fn dense_product(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}

/// Node-wise normalized convolution:
/// `z_i = Σ_{j ∈ N(i) ∪ {i}} s · (x_j W) / ‖x_j W‖ / sqrt((d_i + 1)(d_j + 1))`.
pub fn nodewise_gncn(graph: &Graph, w: &Matrix, scale: f64) -> Matrix {
    let x = graph.features();
    let n = graph.num_nodes();
    let f = w.cols();
    let transformed: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..f).map(|c| (0..x.cols()).map(|k| x.get(j, k) * w.get(k, c)).sum()).collect())
        .collect();
    let mut z = Matrix::zeros(n, f);
    for i in 0..n {
        let di = graph.degree(i).unwrap() as f64;
        let mut members = graph.neighbors(i).unwrap().to_vec();
        members.push(i);
        for j in members {
            let dj = graph.degree(j).unwrap() as f64;
            let h = &transformed[j];
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            let coef = scale / norm / ((di + 1.0) * (dj + 1.0)).sqrt();
            for c in 0..f {
                z.set(i, c, z.get(i, c) + coef * h[c]);
            }
        }
    }
    z
}

/// Probability that a random positive outscores a random negative, ties
/// counted as one half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Precision at every positive's rank, averaged over positives. Ranking is
/// by score descending, ties broken by lower index first.
pub fn sweep_average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let ahead = |j: usize, i: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let mut total = 0.0;
    for i in 0..scores.len() {
        if !labels[i] {
            continue;
        }
        let rank = (0..scores.len()).filter(|&j| ahead(j, i)).count() as f64;
        let hits = (0..scores.len()).filter(|&j| labels[j] && ahead(j, i)).count() as f64;
        total += hits / rank;
    }
    total / positives
}

/// Random scored sample with both classes present; every other draw uses
/// coarse scores so that ties are common.
pub fn random_scored(len: usize, coarse: bool, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    loop {
        let labels: Vec<bool> = (0..len).map(|_| rng.random::<bool>()).collect();
        if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
            let scores = (0..len)
                .map(|i| {
                    let bias = if labels[i] { 0.3 } else { 0.0 };
                    let s: f64 = rng.random::<f64>() + bias;
                    if coarse {
                        (s * 8.0).floor() / 8.0
                    } else {
                        s
                    }
                })
                .collect();
            return (scores, labels);
        }
    }
}
