//! Ranking metrics for link prediction and embedding-norm diagnostics.

use std::fmt::Write as _;

use crate::error::{input, Result};
use crate::graph::Graph;
use crate::matrix::{norm, Matrix};
use crate::par::map_range;
use crate::split::Stratum;

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(input(format!("score {i} is NaN")));
    }
    Ok(())
}

/// Area under the ROC curve, `P(s⁺ > s⁻) + ½·P(s⁺ = s⁻)`, from midranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(input("roc_auc needs both positive and negative labels"));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of (1-based) midranks over positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Average precision `Σ_k (R_k − R_{k−1}) · P_k` over a sweep sorted by
/// descending score, ties broken by ascending input index.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(input("average_precision needs at least one positive label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut tp = 0usize;
    let mut ap = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if labels[idx] {
            tp += 1;
            ap += tp as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / n_pos as f64)
}

/// Overall ranking quality plus AUC restricted to each stratum.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub auc: f64,
    pub ap: f64,
    pub auc_isolated: Option<f64>,
    pub auc_connected: Option<f64>,
    pub count_total: usize,
    pub count_isolated: usize,
    pub count_connected: usize,
    pub positives_isolated: usize,
    pub positives_connected: usize,
}

impl MetricsReport {
    /// Connected-minus-isolated AUC, when both strata are defined.
    pub fn stratum_gap(&self) -> Option<f64> {
        Some(self.auc_connected? - self.auc_isolated?)
    }

    /// `key=value` lines, one per field, each key prefixed with `prefix`.
    pub fn write_kv(&self, prefix: &str, out: &mut String) {
        let _ = writeln!(out, "{prefix}auc={}", self.auc);
        let _ = writeln!(out, "{prefix}ap={}", self.ap);
        let _ = writeln!(out, "{prefix}auc_isolated={}", fmt_opt(self.auc_isolated));
        let _ = writeln!(out, "{prefix}auc_connected={}", fmt_opt(self.auc_connected));
        let _ = writeln!(out, "{prefix}count_total={}", self.count_total);
        let _ = writeln!(out, "{prefix}count_isolated={}", self.count_isolated);
        let _ = writeln!(out, "{prefix}count_connected={}", self.count_connected);
        let _ = writeln!(out, "{prefix}positives_isolated={}", self.positives_isolated);
        let _ = writeln!(out, "{prefix}positives_connected={}", self.positives_connected);
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Overall AUC/AP and per-stratum AUC. A stratum lacking either class
/// reports `None`.
pub fn stratified_report(
    scores: &[f64],
    labels: &[bool],
    strata: &[Stratum],
) -> Result<MetricsReport> {
    if strata.len() != scores.len() {
        return Err(input(format!(
            "{} strata for {} scores",
            strata.len(),
            scores.len()
        )));
    }
    let auc = roc_auc(scores, labels)?;
    let ap = average_precision(scores, labels)?;

    let stratum = |which: Stratum| {
        let (s, l): (Vec<f64>, Vec<bool>) = strata
            .iter()
            .zip(scores.iter().zip(labels))
            .filter(|(st, _)| **st == which)
            .map(|(_, (&s, &l))| (s, l))
            .unzip();
        let positives = l.iter().filter(|&&x| x).count();
        (roc_auc(&s, &l).ok(), s.len(), positives)
    };
    let (auc_isolated, count_isolated, positives_isolated) = stratum(Stratum::Isolated);
    let (auc_connected, count_connected, positives_connected) = stratum(Stratum::Connected);

    Ok(MetricsReport {
        auc,
        ap,
        auc_isolated,
        auc_connected,
        count_total: scores.len(),
        count_isolated,
        count_connected,
        positives_isolated,
        positives_connected,
    })
}

/// Exact-degree buckets `0..OVERFLOW_DEGREE`, then one overflow bucket.
pub const OVERFLOW_DEGREE: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct NormDegreeRow {
    pub min_degree: usize,
    /// `None` for the overflow bucket.
    pub max_degree: Option<usize>,
    pub count: usize,
    pub mean_norm: f64,
    pub min_norm: f64,
    pub max_norm: f64,
}

impl NormDegreeRow {
    pub fn label(&self) -> String {
        match self.max_degree {
            Some(d) if d == self.min_degree => d.to_string(),
            Some(d) => format!("{}-{d}", self.min_degree),
            None => format!("{}+", self.min_degree),
        }
    }
}

/// Embedding norms grouped by node degree; empty buckets are omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct NormDegreeTable {
    pub rows: Vec<NormDegreeRow>,
    pub overall_mean_norm: f64,
}

impl NormDegreeTable {
    pub fn bucket(&self, degree: usize) -> Option<&NormDegreeRow> {
        self.rows.iter().find(|r| {
            degree >= r.min_degree && r.max_degree.is_none_or(|m| degree <= m)
        })
    }

    /// Mean norm of degree-0 nodes divided by the mean over all nodes.
    pub fn isolated_norm_ratio(&self) -> Option<f64> {
        let zero = self.bucket(0).filter(|r| r.min_degree == 0)?;
        Some(zero.mean_norm / self.overall_mean_norm)
    }

    pub fn total_count(&self) -> usize {
        self.rows.iter().map(|r| r.count).sum()
    }

    pub fn write_kv(&self, prefix: &str, out: &mut String) {
        let _ = writeln!(out, "{prefix}overall_mean={}", self.overall_mean_norm);
        let _ = writeln!(
            out,
            "{prefix}isolated_ratio={}",
            fmt_opt(self.isolated_norm_ratio())
        );
        for r in &self.rows {
            let label = r.label();
            let _ = writeln!(out, "{prefix}deg_{label}.count={}", r.count);
            let _ = writeln!(out, "{prefix}deg_{label}.mean={}", r.mean_norm);
            let _ = writeln!(out, "{prefix}deg_{label}.min={}", r.min_norm);
            let _ = writeln!(out, "{prefix}deg_{label}.max={}", r.max_norm);
        }
    }
}

/// Tabulates `‖z_v‖` against the degree of `v` in `graph`.
pub fn norm_by_degree(z: &Matrix, graph: &Graph) -> Result<NormDegreeTable> {
    if z.rows() != graph.num_nodes() {
        return Err(input(format!(
            "{} embedding rows for {} nodes",
            z.rows(),
            graph.num_nodes()
        )));
    }
    let norms: Vec<f64> = map_range(z.rows(), |i| norm(z.row(i)));
    let degrees = graph.degrees();

    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); OVERFLOW_DEGREE + 1];
    for (&d, &nrm) in degrees.iter().zip(&norms) {
        buckets[d.min(OVERFLOW_DEGREE)].push(nrm);
    }
    let rows = buckets
        .into_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(d, b)| NormDegreeRow {
            min_degree: d,
            max_degree: (d < OVERFLOW_DEGREE).then_some(d),
            count: b.len(),
            mean_norm: b.iter().sum::<f64>() / b.len() as f64,
            min_norm: b.iter().copied().fold(f64::INFINITY, f64::min),
            max_norm: b.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    let overall_mean_norm = if norms.is_empty() {
        0.0
    } else {
        norms.iter().sum::<f64>() / norms.len() as f64
    };
    Ok(NormDegreeTable {
        rows,
        overall_mean_norm,
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
