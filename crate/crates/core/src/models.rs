//! The four autoencoders (GAE, VGAE, GNAE, VGNAE), the inner-product
//! decoder, their losses and the early-stopped training loop.

use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{sigmoid, Tape, Var};
use crate::encoders::{GcnEncoder, GncnEncoder};
use crate::error::{input, Error, Result};
use crate::graph::{Edge, Graph, NormalizedAdjacency};
use crate::matrix::{dot, Matrix};
use crate::metrics::roc_auc;
use crate::optim::{adam_step, Parameter};
use crate::split::{negative_capacity, sample_negative_edges, EdgeSplit};

/// `log σ` is clamped into this range before exponentiation.
pub const LOG_SIGMA_CLAMP: (f64, f64) = (-10.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gae,
    Vgae,
    Gnae,
    Vgnae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Gae, ModelKind::Vgae, ModelKind::Gnae, ModelKind::Vgnae];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gae => "gae",
            ModelKind::Vgae => "vgae",
            ModelKind::Gnae => "gnae",
            ModelKind::Vgnae => "vgnae",
        }
    }

    pub fn is_variational(self) -> bool {
        matches!(self, ModelKind::Vgae | ModelKind::Vgnae)
    }

    /// Whether the embedding (or its mean) comes from the normalized convolution.
    pub fn uses_gncn(self) -> bool {
        matches!(self, ModelKind::Gnae | ModelKind::Vgnae)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| input(format!("unknown model {s:?} (expected gae, vgae, gnae or vgnae)")))
    }
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Embedding dimension `f`.
    pub dim: usize,
    /// Hidden width of every two-layer GCN.
    pub hidden: usize,
    /// Target row norm of the normalized convolution.
    pub scale: f64,
    pub lr: f64,
    pub max_epochs: usize,
    /// Early-stopping window in epochs.
    pub patience: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// The reference protocol: 64-d embeddings, 128 hidden units, s = 1.8,
    /// Adam at 0.005, at most 300 epochs with a 50-epoch window.
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            dim: 64,
            hidden: 128,
            scale: 1.8,
            lr: 0.005,
            max_epochs: 300,
            patience: 50,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(input("embedding and hidden dimensions must be positive"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(input(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(input(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.max_epochs == 0 {
            return Err(input("max_epochs must be positive"));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(input(format!(
                "early-stopping window {} must lie in [1, max_epochs = {}]",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Independent random streams derived from one seed.
#[derive(Clone, Copy, Debug)]
pub enum RngStream {
    Init = 0,
    Negatives = 1,
    Noise = 2,
}

pub fn seeded_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Encoder producing `Z` (or `μ` for the variational kinds).
#[derive(Clone, Debug)]
pub enum MeanEncoder {
    Gcn(GcnEncoder),
    Gncn(GncnEncoder),
}

/// Taped outputs of one forward pass.
pub struct ForwardPass<'t> {
    /// Embedding fed to the decoder: a sample in training mode, `μ` otherwise.
    pub z: Var<'t>,
    pub mu: Var<'t>,
    /// Clamped `log σ`, variational kinds only.
    pub log_sigma: Option<Var<'t>>,
    pub epsilon: Option<Matrix>,
    /// Weight leaves in [`Model::params`] order.
    pub weights: Vec<Var<'t>>,
}

/// Values of a variational forward pass.
#[derive(Clone, Debug)]
pub struct VariationalState {
    pub mu: Matrix,
    pub log_sigma: Matrix,
    pub z_sample: Matrix,
    pub epsilon: Matrix,
}

#[derive(Clone, Debug)]
pub struct Model {
    kind: ModelKind,
    mean: MeanEncoder,
    log_sigma: Option<GcnEncoder>,
}

impl Model {
    /// Glorot-initialized model for `num_features` input features.
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, num_features: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if num_features == 0 {
            return Err(input("graph has no features"));
        }
        let mean = if config.kind.uses_gncn() {
            MeanEncoder::Gncn(GncnEncoder::new(num_features, config.dim, config.scale, rng))
        } else {
            MeanEncoder::Gcn(GcnEncoder::new(num_features, config.hidden, config.dim, rng))
        };
        let log_sigma = config
            .kind
            .is_variational()
            .then(|| GcnEncoder::new(num_features, config.hidden, config.dim, rng));
        Ok(Self {
            kind: config.kind,
            mean,
            log_sigma,
        })
    }

    pub fn from_parts(kind: ModelKind, mean: MeanEncoder, log_sigma: Option<GcnEncoder>) -> Result<Self> {
        let gncn = matches!(mean, MeanEncoder::Gncn(_));
        if gncn != kind.uses_gncn() || log_sigma.is_some() != kind.is_variational() {
            return Err(input(format!("encoders do not match model kind {kind}")));
        }
        Ok(Self {
            kind,
            mean,
            log_sigma,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn mean_encoder(&self) -> &MeanEncoder {
        &self.mean
    }

    pub fn log_sigma_encoder(&self) -> Option<&GcnEncoder> {
        self.log_sigma.as_ref()
    }

    /// Scaling constant of the normalized convolution, if any.
    pub fn scale(&self) -> Option<f64> {
        match &self.mean {
            MeanEncoder::Gncn(e) => Some(e.scale),
            MeanEncoder::Gcn(_) => None,
        }
    }

    pub fn num_features(&self) -> usize {
        match &self.mean {
            MeanEncoder::Gcn(e) => e.in_dim(),
            MeanEncoder::Gncn(e) => e.in_dim(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match &self.mean {
            MeanEncoder::Gcn(e) => e.out_dim(),
            MeanEncoder::Gncn(e) => e.out_dim(),
        }
    }

    /// Hidden width of the GCN encoders; `None` when the model has none.
    pub fn hidden_dim(&self) -> Option<usize> {
        match (&self.mean, &self.log_sigma) {
            (MeanEncoder::Gcn(e), _) | (_, Some(e)) => Some(e.hidden_dim()),
            _ => None,
        }
    }

    /// Parameters in declaration order: mean encoder, then `log σ` encoder.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = match &self.mean {
            MeanEncoder::Gcn(e) => e.params().to_vec(),
            MeanEncoder::Gncn(e) => e.params().to_vec(),
        };
        if let Some(e) = &self.log_sigma {
            out.extend(e.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = match &mut self.mean {
            MeanEncoder::Gcn(e) => e.params_mut().into_iter().collect(),
            MeanEncoder::Gncn(e) => e.params_mut().into_iter().collect(),
        };
        if let Some(e) = &mut self.log_sigma {
            out.extend(e.params_mut());
        }
        out
    }

    /// Runs the encoders on a tape. With `noise` the variational kinds sample
    /// `Z = μ + σ ⊙ ε`; without it `Z = μ`.
    pub fn forward<'t, R: Rng + ?Sized>(
        &self,
        tape: &'t Tape,
        x: Var<'t>,
        adj: &Arc<NormalizedAdjacency>,
        noise: Option<&mut R>,
    ) -> Result<ForwardPass<'t>> {
        let encoded = match &self.mean {
            MeanEncoder::Gcn(e) => e.forward(tape, x, adj)?,
            MeanEncoder::Gncn(e) => e.forward(tape, x, adj)?,
        };
        let mu = encoded.output;
        let mut weights = encoded.weights;
        let Some(ls_enc) = &self.log_sigma else {
            return Ok(ForwardPass {
                z: mu,
                mu,
                log_sigma: None,
                epsilon: None,
                weights,
            });
        };
        let ls = ls_enc.forward(tape, x, adj)?;
        weights.extend(ls.weights);
        let log_sigma = ls.output.clamp(LOG_SIGMA_CLAMP.0, LOG_SIGMA_CLAMP.1);
        let (z, epsilon) = match noise {
            Some(rng) => {
                let (z, eps) = reparameterize(mu, log_sigma, rng)?;
                (z, Some(eps))
            }
            None => (mu, None),
        };
        Ok(ForwardPass {
            z,
            mu,
            log_sigma: Some(log_sigma),
            epsilon,
            weights,
        })
    }

    /// Value-level forward pass over `graph`'s features.
    pub fn forward_values<R: Rng + ?Sized>(
        &self,
        graph: &Graph,
        adj: &Arc<NormalizedAdjacency>,
        noise: Option<&mut R>,
    ) -> Result<(Matrix, Option<VariationalState>)> {
        let tape = Tape::new();
        let x = tape.constant(graph.features().clone());
        let pass = self.forward(&tape, x, adj, noise)?;
        let z = (*pass.z.value()).clone();
        let state = pass.log_sigma.map(|ls| VariationalState {
            mu: (*pass.mu.value()).clone(),
            log_sigma: (*ls.value()).clone(),
            z_sample: z.clone(),
            epsilon: pass
                .epsilon
                .clone()
                .unwrap_or_else(|| Matrix::zeros(z.rows(), z.cols())),
        });
        Ok((z, state))
    }

    /// Evaluation-time embedding (`Z`, or `μ` for variational kinds).
    pub fn embed(&self, features: &Rc<Matrix>, adj: &Arc<NormalizedAdjacency>) -> Result<Matrix> {
        let tape = Tape::new();
        let x = tape.constant_shared(Rc::clone(features));
        let pass = self.forward::<ChaCha8Rng>(&tape, x, adj, None)?;
        Ok((*pass.z.value()).clone())
    }

    fn snapshot(&self) -> Vec<Matrix> {
        self.params().into_iter().map(|p| p.value().clone()).collect()
    }

    fn restore(&mut self, values: Vec<Matrix>) {
        for (p, v) in self.params_mut().into_iter().zip(values) {
            *p = Parameter::new(v);
        }
    }
}

/// `Z = μ + exp(log σ) ⊙ ε` with `ε ~ N(0, I)` drawn as a constant, so the
/// gradient reaches `μ` and `log σ` only.
pub fn reparameterize<'t, R: Rng + ?Sized>(
    mu: Var<'t>,
    log_sigma: Var<'t>,
    rng: &mut R,
) -> Result<(Var<'t>, Matrix)> {
    let (rows, cols) = mu.shape();
    if log_sigma.shape() != (rows, cols) {
        return Err(Error::Shape {
            op: "reparameterize",
            lhs: mu.shape(),
            rhs: log_sigma.shape(),
        });
    }
    let eps = Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let noise = mu.tape().constant(eps.clone());
    let z = mu.add(log_sigma.exp().mul(noise)?)?;
    Ok((z, eps))
}

/// `sigmoid(⟨z_u, z_v⟩)` for every pair.
pub fn decode_pairs(z: &Matrix, pairs: &[Edge]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(u, v)| {
            if u >= z.rows() || v >= z.rows() {
                return Err(input(format!(
                    "pair ({u}, {v}) out of range for {} nodes",
                    z.rows()
                )));
            }
            Ok(sigmoid(dot(z.row(u), z.row(v))))
        })
        .collect()
}

/// Mean of `−log σ(⟨z_u, z_v⟩)` over positives plus mean of
/// `−log(1 − σ(⟨z_u, z_v⟩))` over negatives.
pub fn reconstruction_loss<'t>(z: Var<'t>, pos: &[Edge], neg: &[Edge]) -> Result<Var<'t>> {
    if pos.is_empty() {
        return Err(input("reconstruction loss needs at least one positive edge"));
    }
    let pos_term = z.pair_dot(pos)?.scale(-1.0).softplus().mean();
    if neg.is_empty() {
        return Ok(pos_term);
    }
    let neg_term = z.pair_dot(neg)?.softplus().mean();
    pos_term.add(neg_term)
}

/// `KL(N(μ, σ²) ‖ N(0, I))` summed over dimensions, averaged over nodes.
pub fn kl_divergence<'t>(mu: Var<'t>, log_sigma: Var<'t>) -> Result<Var<'t>> {
    if mu.shape() != log_sigma.shape() {
        return Err(Error::Shape {
            op: "kl_divergence",
            lhs: mu.shape(),
            rhs: log_sigma.shape(),
        });
    }
    let n = mu.shape().0.max(1) as f64;
    let two_ls = log_sigma.scale(2.0);
    let inner = two_ls.add_scalar(1.0).sub(mu.mul(mu)?)?.sub(two_ls.exp())?;
    Ok(inner.sum().scale(-0.5 / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters the model holds after training (1-based).
    pub best_epoch: usize,
    pub best_val_auc: Option<f64>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.loss)
    }
}

/// AUC of `z` on the validation edges; `None` when validation is empty.
fn validation_auc(z: &Matrix, split: &EdgeSplit) -> Result<Option<f64>> {
    if split.val_pos.is_empty() || split.val_neg.is_empty() {
        return Ok(None);
    }
    let pairs: Vec<Edge> = split.val_pos.iter().chain(&split.val_neg).copied().collect();
    let scores = decode_pairs(z, &pairs)?;
    let labels: Vec<bool> = (0..pairs.len()).map(|i| i < split.val_pos.len()).collect();
    roc_auc(&scores, &labels).map(Some)
}

/// Trains `model` on `split.train_pos` and leaves it holding the parameters
/// of the epoch with the best validation AUC.
///
/// Each epoch draws fresh negatives (as many as there are training edges,
/// or every available non-edge if fewer exist) from the non-edges of the
/// training graph.
pub fn train(model: &mut Model, graph: &Graph, split: &EdgeSplit, config: &ModelConfig) -> Result<TrainHistory> {
    config.validate()?;
    if model.kind() != config.kind {
        return Err(input(format!(
            "model is {} but config asks for {}",
            model.kind(),
            config.kind
        )));
    }
    if split.num_nodes != graph.num_nodes() {
        return Err(input("split and graph disagree on the node count"));
    }
    if split.train_pos.is_empty() {
        return Err(input("split has no training edges"));
    }
    let train_graph = split.train_graph(graph)?;
    let adj = Arc::new(NormalizedAdjacency::new(&train_graph));
    let features = Rc::new(graph.features().clone());

    let mut neg_rng = seeded_rng(config.seed, RngStream::Negatives);
    let mut noise_rng = seeded_rng(config.seed, RngStream::Noise);
    let no_exclude = HashSet::new();
    let neg_count = split
        .train_pos
        .len()
        .min(negative_capacity(&train_graph, &no_exclude));

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<Matrix>)> = None;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        let neg = sample_negative_edges(&train_graph, neg_count, &mut neg_rng, &no_exclude)?;

        let tape = Tape::new();
        let x = tape.constant_shared(Rc::clone(&features));
        let pass = model.forward(&tape, x, &adj, Some(&mut noise_rng))?;
        let mut loss = reconstruction_loss(pass.z, &split.train_pos, &neg)?;
        if let Some(ls) = pass.log_sigma {
            loss = loss.add(kl_divergence(pass.mu, ls)?)?;
        }
        let loss_value = loss.value().get(0, 0);
        if !loss_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: loss_value,
            });
        }
        let mut grads = loss.backward()?;
        let mut params = model.params_mut();
        for (p, w) in params.iter_mut().zip(&pass.weights) {
            let g = grads
                .take(*w)
                .ok_or_else(|| Error::State("weight received no gradient".into()))?;
            p.set_grad(g)?;
        }
        adam_step(&mut params, config.lr)?;
        drop(tape);

        let z = model.embed(&features, &adj)?;
        if !z.all_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: loss_value,
            });
        }
        let val_auc = validation_auc(&z, split)?;
        epochs.push(EpochRecord {
            epoch,
            loss: loss_value,
            val_auc,
        });

        if let Some(auc) = val_auc {
            if best.as_ref().is_none_or(|(_, b, _)| auc > *b) {
                best = Some((epoch, auc, model.snapshot()));
            }
        }
        if let Some((best_epoch, _, _)) = &best {
            if epoch - best_epoch >= config.patience {
                stopped_early = epoch < config.max_epochs;
                break;
            }
        }
    }

    let (best_epoch, best_val_auc) = match best {
        Some((epoch, auc, values)) => {
            model.restore(values);
            (epoch, Some(auc))
        }
        None => (epochs.len(), None),
    };
    Ok(TrainHistory {
        epochs,
        best_epoch,
        best_val_auc,
        stopped_early,
    })
}
