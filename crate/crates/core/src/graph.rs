//! Undirected attributed graphs and the symmetrically normalized adjacency
//! `D̃^{-1/2} (A + I) D̃^{-1/2}` used by both encoders.

use std::sync::Arc;

use crate::error::{input, Error, Result};
use crate::matrix::Matrix;
use crate::par;

/// An undirected pair stored canonically as `(min, max)`.
pub type Edge = (usize, usize);

pub(crate) fn canonical((u, v): Edge) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Node features plus a symmetric adjacency structure in CSR form.
///
/// Self-loops and duplicate edges are rejected at construction; neighbor lists
/// are sorted so every traversal has a fixed order.
#[derive(Clone, Debug)]
pub struct Graph {
    features: Arc<Matrix>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Graph {
    /// Builds a graph over `features.rows()` nodes. Each undirected edge may be
    /// given in either orientation but only once.
    pub fn new(features: Matrix, edges: &[Edge]) -> Result<Self> {
        Self::with_shared_features(Arc::new(features), edges)
    }

    pub fn with_shared_features(features: Arc<Matrix>, edges: &[Edge]) -> Result<Self> {
        let n = features.rows();
        let mut canon = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(input(format!(
                    "edge ({u}, {v}) has an endpoint outside [0, {n})"
                )));
            }
            if u == v {
                return Err(input(format!("self-loop on node {u}")));
            }
            canon.push(canonical((u, v)));
        }
        canon.sort_unstable();
        if let Some(w) = canon.windows(2).find(|w| w[0] == w[1]) {
            return Err(input(format!("duplicate edge ({}, {})", w[0].0, w[0].1)));
        }

        let mut degree = vec![0usize; n];
        for &(u, v) in &canon {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for d in &degree {
            row_ptr.push(row_ptr.last().unwrap() + d);
        }
        let mut fill = row_ptr[..n].to_vec();
        let mut col_idx = vec![0usize; 2 * canon.len()];
        for &(u, v) in &canon {
            col_idx[fill[u]] = v;
            fill[u] += 1;
            col_idx[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..n {
            col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        Ok(Self {
            features,
            row_ptr,
            col_idx,
        })
    }

    /// Same nodes and features, different edge set.
    pub fn with_edges(&self, edges: &[Edge]) -> Result<Self> {
        Self::with_shared_features(Arc::clone(&self.features), edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn shared_features(&self) -> Arc<Matrix> {
        Arc::clone(&self.features)
    }

    /// `|N(v)|`, excluding the implicit self-loop.
    pub fn degree(&self, v: usize) -> Result<usize> {
        self.check_node(v)?;
        Ok(self.row_ptr[v + 1] - self.row_ptr[v])
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> Result<&[usize]> {
        self.check_node(v)?;
        Ok(&self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]])
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes()
            && v < self.num_nodes()
            && self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]]
                .binary_search(&v)
                .is_ok()
    }

    /// Every undirected edge once as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in &self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]] {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.num_nodes() {
            return Err(input(format!(
                "node {v} out of range for a graph with {} nodes",
                self.num_nodes()
            )));
        }
        Ok(())
    }
}

/// Sparse symmetric matrix with entries
/// `1/(d_i+1)` on the diagonal and `1/(√(d_i+1)·√(d_j+1))` for each edge.
///
/// Column indices are sorted within each row, so the diagonal entry sits at
/// its natural position among the neighbors.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    degrees: Vec<usize>,
}

impl NormalizedAdjacency {
    pub fn new(graph: &Graph) -> Self {
        let n = graph.num_nodes();
        let degrees = graph.degrees();
        let inv_sqrt: Vec<f64> = degrees
            .iter()
            .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
            .collect();

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(graph.col_idx.len() + n);
        let mut values = Vec::with_capacity(graph.col_idx.len() + n);
        row_ptr.push(0);
        for i in 0..n {
            let neigh = &graph.col_idx[graph.row_ptr[i]..graph.row_ptr[i + 1]];
            let split = neigh.partition_point(|&j| j < i);
            for &j in &neigh[..split] {
                col_idx.push(j);
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
            col_idx.push(i);
            values.push(1.0 / (degrees[i] + 1) as f64);
            for &j in &neigh[split..] {
                col_idx.push(j);
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
            degrees,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Degrees of the graph this matrix was built from, without self-loops.
    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entry `(i, j)`; zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// Stored `(column, value)` pairs of row `i`.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row_entries(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// Sparse-dense product `self · dense`.
    pub fn spmm(&self, dense: &Matrix) -> Result<Matrix> {
        self.check_rows(dense)?;
        let mut out = Matrix::zeros(self.n, dense.cols());
        par::for_each_row(out.as_mut_slice(), dense.cols(), |i, row| {
            self.spmm_row(i, dense, row)
        });
        Ok(out)
    }

    /// [`NormalizedAdjacency::spmm`] on the calling thread only.
    pub fn spmm_serial(&self, dense: &Matrix) -> Result<Matrix> {
        self.check_rows(dense)?;
        let cols = dense.cols();
        let mut out = Matrix::zeros(self.n, cols);
        if cols > 0 {
            for (i, row) in out.as_mut_slice().chunks_mut(cols).enumerate() {
                self.spmm_row(i, dense, row);
            }
        }
        Ok(out)
    }

    fn spmm_row(&self, i: usize, dense: &Matrix, out: &mut [f64]) {
        for (j, a) in self.row_entries(i) {
            for (o, &x) in out.iter_mut().zip(dense.row(j)) {
                *o += a * x;
            }
        }
    }

    fn check_rows(&self, dense: &Matrix) -> Result<()> {
        if dense.rows() != self.n {
            return Err(Error::Shape {
                op: "spmm",
                lhs: (self.n, self.n),
                rhs: dense.shape(),
            });
        }
        Ok(())
    }
}
