//! Finite-difference gradient checks for every tape op and for whole
//! encoder + loss pipelines.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vgnae::autodiff::{Tape, Var};
use vgnae::models::{kl_divergence, reconstruction_loss, seeded_rng, RngStream};
use vgnae::{Edge, Matrix, Model, ModelConfig, ModelKind, NormalizedAdjacency, Result};

use super::{numeric_gradient, random_graph, random_matrix, relative_error, rng};

pub const FD_STEP: f64 = 1e-5;
pub const FD_RELATIVE_TOLERANCE: f64 = 1e-6;
pub const INSTANCES: u64 = 5;

/// Largest relative error between the tape gradient and central differences
/// of `sum(build(inputs) ⊙ weights)` over every input.
pub fn check(inputs: &[Matrix], build: &dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>, seed: u64) -> f64 {
    let probe_tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| probe_tape.param(m.clone())).collect();
    let out_shape = build(&probe_tape, &vars).unwrap().shape();
    let weights = random_matrix(out_shape.0, out_shape.1, &mut rng(seed ^ 0x5eed));

    let objective = |values: &[Matrix]| -> (f64, Vec<Matrix>) {
        let tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|m| tape.param(m.clone())).collect();
        let out = build(&tape, &vars).unwrap();
        let w = tape.constant(weights.clone());
        let loss = out.mul(w).unwrap().sum();
        let grads = loss.backward().unwrap();
        let g = vars
            .iter()
            .map(|v| grads.get(*v).cloned().unwrap_or_else(|| Matrix::zeros(v.shape().0, v.shape().1)))
            .collect();
        (loss.value().get(0, 0), g)
    };

    let (_, analytic) = objective(inputs);
    let mut worst: f64 = 0.0;
    for k in 0..inputs.len() {
        let numeric = numeric_gradient(&inputs[k], FD_STEP, |probe| {
            let mut values = inputs.to_vec();
            values[k] = probe.clone();
            objective(&values).0
        });
        worst = worst.max(relative_error(&analytic[k], &numeric));
    }
    worst
}

fn shape(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..7), rng.random_range(1..7))
}

/// Values bounded away from `points` by at least `gap`.
fn avoiding(rows: usize, cols: usize, points: &[f64], gap: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| loop {
        let v: f64 = rng.random_range(-1.5..1.5);
        if points.iter().all(|p| (v - p).abs() > gap) {
            break v;
        }
    })
}

fn random_pairs(n: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Edge> {
    (0..count).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect()
}

/// Worst relative error of each named case over [`INSTANCES`] random draws.
pub fn all_cases() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut run = |name: &'static str, case: &dyn Fn(u64) -> f64| {
        let worst = (0..INSTANCES).map(case).fold(0.0, f64::max);
        out.push((name, worst));
    };

    run("matmul", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let c = r.random_range(1..7);
        let lhs = random_matrix(a, b, &mut r);
        let rhs = random_matrix(b, c, &mut r);
        check(&[lhs, rhs], &|_, v| v[0].matmul(v[1]), seed)
    });
    run("spmm", &|seed| {
        let mut r = rng(seed);
        let n = r.random_range(2..9);
        let adj = Arc::new(NormalizedAdjacency::new(&random_graph(n, 0.4, 1, &mut r)));
        let cols = r.random_range(1..5);
        let x = random_matrix(n, cols, &mut r);
        check(&[x], &move |_, v| v[0].spmm(&adj), seed)
    });
    run("row_l2_normalize", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let s = r.random_range(0.5..3.0);
        let x = avoiding(a, b, &[0.0], 0.1, &mut r);
        check(&[x], &move |_, v| v[0].row_l2_normalize(s), seed)
    });
    run("sigmoid", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        check(&[random_matrix(a, b, &mut r)], &|_, v| Ok(v[0].sigmoid()), seed)
    });
    run("relu", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        check(&[avoiding(a, b, &[0.0], 0.01, &mut r)], &|_, v| Ok(v[0].relu()), seed)
    });
    run("exp", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        check(&[random_matrix(a, b, &mut r)], &|_, v| Ok(v[0].exp()), seed)
    });
    run("softplus", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let x = random_matrix(a, b, &mut r).scale(4.0);
        check(&[x], &|_, v| Ok(v[0].softplus()), seed)
    });
    run("clamp", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        check(&[avoiding(a, b, &[-0.5, 0.5], 0.01, &mut r)], &|_, v| Ok(v[0].clamp(-0.5, 0.5)), seed)
    });
    run("add", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let x = random_matrix(a, b, &mut r);
        let y = random_matrix(a, b, &mut r);
        check(&[x, y], &|_, v| v[0].add(v[1]), seed)
    });
    run("sub", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let x = random_matrix(a, b, &mut r);
        let y = random_matrix(a, b, &mut r);
        check(&[x, y], &|_, v| v[0].sub(v[1]), seed)
    });
    run("mul", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let x = random_matrix(a, b, &mut r);
        let y = random_matrix(a, b, &mut r);
        check(&[x, y], &|_, v| v[0].mul(v[1]), seed)
    });
    run("scale", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let c = r.random_range(-3.0..3.0);
        check(&[random_matrix(a, b, &mut r)], &move |_, v| Ok(v[0].scale(c)), seed)
    });
    run("add_scalar", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let c = r.random_range(-3.0..3.0);
        check(&[random_matrix(a, b, &mut r)], &move |_, v| v[0].add_scalar(c).mul(v[0]), seed)
    });
    run("sum", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        check(&[random_matrix(a, b, &mut r)], &|_, v| Ok(v[0].sum()), seed)
    });
    run("mean", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        check(&[random_matrix(a, b, &mut r)], &|_, v| Ok(v[0].mean()), seed)
    });
    run("pair_dot", &|seed| {
        let mut r = rng(seed);
        let (n, f) = shape(&mut r);
        let pairs = random_pairs(n, r.random_range(1..8), &mut r);
        check(&[random_matrix(n, f, &mut r)], &move |_, v| v[0].pair_dot(&pairs), seed)
    });
    run("reconstruction_loss", &|seed| {
        let mut r = rng(seed);
        let n = r.random_range(2..8);
        let f = r.random_range(1..5);
        let pos = random_pairs(n, r.random_range(1..6), &mut r);
        let neg = random_pairs(n, r.random_range(1..6), &mut r);
        check(&[random_matrix(n, f, &mut r)], &move |_, v| reconstruction_loss(v[0], &pos, &neg), seed)
    });
    run("kl_divergence", &|seed| {
        let mut r = rng(seed);
        let (a, b) = shape(&mut r);
        let mu = random_matrix(a, b, &mut r);
        let ls = random_matrix(a, b, &mut r);
        check(&[mu, ls], &|_, v| kl_divergence(v[0], v[1]), seed)
    });
    for kind in ModelKind::ALL {
        let name = match kind {
            ModelKind::Gae => "gae_model_end_to_end",
            ModelKind::Vgae => "vgae_model_end_to_end",
            ModelKind::Gnae => "gnae_model_end_to_end",
            ModelKind::Vgnae => "vgnae_model_end_to_end",
        };
        run(name, &|seed| model_case(kind, seed));
    }
    out
}

/// Loss of a full model forward pass (with fixed noise and pairs) as a
/// function of its parameters, checked against perturbations of the
/// model's own parameter values.
fn model_case(kind: ModelKind, seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.random_range(3..9);
    let m = r.random_range(1..5);
    let graph = random_graph(n, 0.35, m, &mut r);
    let adj = Arc::new(NormalizedAdjacency::new(&graph));
    let pos = random_pairs(n, 4, &mut r);
    let neg = random_pairs(n, 4, &mut r);
    // a single embedding column normalizes to a constant ±s, so keep f >= 2
    let config = ModelConfig {
        dim: r.random_range(2..5),
        hidden: r.random_range(2..6),
        ..ModelConfig::new(kind)
    };
    let model = Model::new(&config, m, &mut seeded_rng(seed, RngStream::Init)).unwrap();

    let loss_and_grads = |model: &Model| -> (f64, Vec<Matrix>) {
        let tape = Tape::new();
        let x = tape.constant(graph.features().clone());
        let mut noise = seeded_rng(seed, RngStream::Noise);
        let pass = model.forward(&tape, x, &adj, Some(&mut noise)).unwrap();
        let mut loss = reconstruction_loss(pass.z, &pos, &neg).unwrap();
        if let Some(ls) = pass.log_sigma {
            loss = loss.add(kl_divergence(pass.mu, ls).unwrap()).unwrap();
        }
        let grads = loss.backward().unwrap();
        let g = pass.weights.iter().map(|w| grads.get(*w).unwrap().clone()).collect();
        (loss.value().get(0, 0), g)
    };

    let (_, analytic) = loss_and_grads(&model);
    let values: Vec<Matrix> = model.params().iter().map(|p| p.value().clone()).collect();
    let mut worst: f64 = 0.0;
    for k in 0..values.len() {
        let numeric = numeric_gradient(&values[k], FD_STEP, |probe| {
            let mut perturbed = model.clone();
            *perturbed.params_mut()[k] = vgnae::optim::Parameter::new(probe.clone());
            loss_and_grads(&perturbed).0
        });
        worst = worst.max(relative_error(&analytic[k], &numeric));
    }
    worst
}
