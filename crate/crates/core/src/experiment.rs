//! End-to-end runs: train on a split, evaluate on the held-out edges,
//! tabulate embedding norms, and render deterministic text reports.

use std::fmt::Write as _;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use crate::error::Result;
use crate::graph::{Edge, Graph, NormalizedAdjacency};
use crate::matrix::Matrix;
use crate::metrics::{fmt_opt, norm_by_degree, stratified_report, MetricsReport, NormDegreeTable};
use crate::models::{decode_pairs, seeded_rng, train, Model, ModelConfig, RngStream, TrainHistory};
use crate::split::{classify_test_nodes, edge_strata, EdgeSplit};

/// Test-set metrics and the norm table of one trained model.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub test: MetricsReport,
    /// Norms bucketed by training-graph degree.
    pub norms: NormDegreeTable,
    pub embedding: Matrix,
}

/// Initializes a model from `config.seed` and trains it on `split`.
pub fn train_model(graph: &Graph, split: &EdgeSplit, config: &ModelConfig) -> Result<(Model, TrainHistory)> {
    let mut rng = seeded_rng(config.seed, RngStream::Init);
    let mut model = Model::new(config, graph.num_features(), &mut rng)?;
    let history = train(&mut model, graph, split, config)?;
    Ok((model, history))
}

/// Scores `split.test_pos` against `split.test_neg` using the evaluation
/// embedding (`μ` for variational kinds) over the training graph.
pub fn evaluate(model: &Model, graph: &Graph, split: &EdgeSplit) -> Result<Evaluation> {
    split.validate(graph)?;
    let train_graph = split.train_graph(graph)?;
    let adj = Arc::new(NormalizedAdjacency::new(&train_graph));
    let z = model.embed(&Rc::new(graph.features().clone()), &adj)?;
    let pairs: Vec<Edge> = split.test_pos.iter().chain(&split.test_neg).copied().collect();
    let scores = decode_pairs(&z, &pairs)?;
    let labels: Vec<bool> = (0..pairs.len()).map(|i| i < split.test_pos.len()).collect();
    let strata = edge_strata(&classify_test_nodes(split), &pairs);
    let test = stratified_report(&scores, &labels, &strata)?;
    let norms = norm_by_degree(&z, &train_graph)?;
    Ok(Evaluation {
        test,
        norms,
        embedding: z,
    })
}

/// Everything a report needs besides the evaluation itself.
#[derive(Clone, Debug)]
pub struct ReportContext<'a> {
    pub command: &'a str,
    pub dataset: &'a str,
    pub model: &'a Model,
    pub split: &'a EdgeSplit,
    /// Present when the model was trained in this run.
    pub training: Option<(&'a ModelConfig, &'a TrainHistory)>,
}

fn write_header(ctx: &ReportContext<'_>, out: &mut String) {
    let m = ctx.model;
    let s = ctx.split;
    let _ = writeln!(out, "# {} report", ctx.command);
    let _ = writeln!(out, "dataset={}", ctx.dataset);
    let _ = writeln!(out, "model={}", m.kind());
    let _ = writeln!(out, "split.seed={}", s.seed);
    let _ = writeln!(out, "split.mode={}", s.mode);
    let _ = writeln!(out, "split.train_ratio={}", s.train_ratio);
    let _ = writeln!(out, "split.num_nodes={}", s.num_nodes);
    let _ = writeln!(out, "split.train_pos={}", s.train_pos.len());
    let _ = writeln!(out, "split.val_pos={}", s.val_pos.len());
    let _ = writeln!(out, "split.test_pos={}", s.test_pos.len());
    let _ = writeln!(out, "split.val_neg={}", s.val_neg.len());
    let _ = writeln!(out, "split.test_neg={}", s.test_neg.len());
    let _ = writeln!(out, "model.num_features={}", m.num_features());
    let _ = writeln!(out, "model.dim={}", m.embedding_dim());
    let _ = writeln!(
        out,
        "model.hidden={}",
        m.hidden_dim().map_or_else(|| "NA".to_string(), |h| h.to_string())
    );
    let _ = writeln!(out, "model.scale={}", fmt_opt(m.scale()));
    if let Some((cfg, hist)) = ctx.training {
        let _ = writeln!(out, "train.seed={}", cfg.seed);
        let _ = writeln!(out, "train.lr={}", cfg.lr);
        let _ = writeln!(out, "train.max_epochs={}", cfg.max_epochs);
        let _ = writeln!(out, "train.patience={}", cfg.patience);
        let _ = writeln!(out, "train.epochs_run={}", hist.epochs_run());
        let _ = writeln!(out, "train.stopped_early={}", hist.stopped_early);
        let _ = writeln!(out, "train.best_epoch={}", hist.best_epoch);
        let _ = writeln!(out, "train.best_val_auc={}", fmt_opt(hist.best_val_auc));
        let _ = writeln!(out, "train.final_loss={}", hist.final_loss());
    }
}

/// Report of a `train` run: header, test metrics and a summary line.
pub fn render_train_report(ctx: &ReportContext<'_>, eval: &Evaluation) -> String {
    let mut out = String::new();
    write_header(ctx, &mut out);
    eval.test.write_kv("test.", &mut out);
    let _ = writeln!(
        out,
        "# {} on {}: test AUC {:.4}, AP {:.4}",
        ctx.model.kind(),
        ctx.dataset,
        eval.test.auc,
        eval.test.ap
    );
    out
}

/// Report of a `diagnose` run: stratified test metrics and the norm table.
pub fn render_diagnose_report(ctx: &ReportContext<'_>, eval: &Evaluation) -> String {
    let mut out = String::new();
    write_header(ctx, &mut out);
    eval.test.write_kv("test.", &mut out);
    let _ = writeln!(out, "test.stratum_gap={}", fmt_opt(eval.test.stratum_gap()));
    eval.norms.write_kv("norm.", &mut out);
    let pct = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    let _ = writeln!(
        out,
        "# {} on {}: AUC isolated {} vs connected {}",
        ctx.model.kind(),
        ctx.dataset,
        pct(eval.test.auc_isolated),
        pct(eval.test.auc_connected)
    );
    let _ = writeln!(out, "# degree   count   mean norm");
    for r in &eval.norms.rows {
        let _ = writeln!(out, "# {:>6} {:>7} {:>11.4}", r.label(), r.count, r.mean_norm);
    }
    let _ = writeln!(
        out,
        "# isolated/overall norm ratio {}",
        pct(eval.norms.isolated_norm_ratio())
    );
    out
}

/// Runs `job` for every seed on up to `jobs` worker threads. Results come
/// back in seed order regardless of scheduling.
pub fn sweep<T, F>(seeds: &[u64], jobs: usize, job: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let workers = jobs.clamp(1, seeds.len().max(1));
    if workers == 1 {
        return seeds.iter().map(|&s| job(s)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = seeds.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let result = job(seed);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every seed is processed"))
        .collect()
}
