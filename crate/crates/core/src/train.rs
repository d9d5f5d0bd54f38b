//! Graph-autoencoder training: inner-product edge decoder with logistic loss
//! over observed pairs and uniformly drawn negative pairs.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{EncoderConfig, EncoderModel, NodeRef, SageLayer, Scaler};
use crate::error::{Error, Result};
use crate::graph::{NodeIdx, TemporalGraph};
use crate::rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Optimizer {
    Sgd,
    #[default]
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!("unknown optimizer `{other}` (sgd|adam)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Positive pairs per gradient step.
    pub batch_size: usize,
    pub negatives: usize,
    pub optimizer: Optimizer,
    /// Cap on edges used to fit the edge-embedding scaler.
    pub scaler_sample: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.001,
            batch_size: 64,
            negatives: 1,
            optimizer: Optimizer::Adam,
            scaler_sample: 20_000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss on the fixed evaluation sample before the first step.
    pub initial_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss on the fixed evaluation sample after training.
    pub final_loss: f64,
    pub positive_pairs: usize,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Zero-valued gradient buffers shaped like the model's layers.
pub fn zero_grads(model: &EncoderModel) -> Vec<SageLayer> {
    model
        .layers
        .iter()
        .map(|l| SageLayer::zeros(l.in_dim(), l.out_dim()))
        .collect()
}

/// Mean reconstruction loss over `pairs` and its gradient.
///
/// Each positive pair `(s, d)` contributes `softplus(-z_s·z_d)` plus
/// `softplus(z_s·z_n)` for `negatives` nodes `n` drawn uniformly from the
/// graph. All sampling comes from `rng`, so a fixed generator state gives a
/// deterministic function of the weights.
pub fn loss_and_grad<R: Rng + ?Sized>(
    model: &EncoderModel,
    graph: &TemporalGraph,
    pairs: &[(NodeIdx, NodeIdx)],
    negatives: usize,
    rng: &mut R,
    grads: Option<&mut [SageLayer]>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let n_nodes = graph.node_count();
    let depth = model.depth();
    let inv = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    let mut grads = grads;
    for &(s, d) in pairs {
        let ts = model.forward(graph, NodeRef::Known(s), depth, rng)?;
        let td = model.forward(graph, NodeRef::Known(d), depth, rng)?;
        let (zs, zd) = (ts.output(), td.output());
        let pos = dot(zs, zd);
        total += softplus(-pos);
        let g_pos = (sigmoid(pos) - 1.0) * inv;

        let mut g_s: Vec<f64> = zd.iter().map(|v| g_pos * v).collect();
        let g_d: Vec<f64> = zs.iter().map(|v| g_pos * v).collect();
        let mut neg_traces = Vec::with_capacity(negatives);
        for _ in 0..negatives {
            let n = rng.random_range(0..n_nodes) as NodeIdx;
            let tn = model.forward(graph, NodeRef::Known(n), depth, rng)?;
            let zn = tn.output();
            let neg = dot(zs, zn);
            total += softplus(neg);
            let g_neg = sigmoid(neg) * inv;
            g_s.iter_mut().zip(zn).for_each(|(g, v)| *g += g_neg * v);
            let g_n: Vec<f64> = zs.iter().map(|v| g_neg * v).collect();
            neg_traces.push((tn, g_n));
        }
        if let Some(g) = grads.as_deref_mut() {
            ts.backward(model, &g_s, g);
            td.backward(model, &g_d, g);
            for (tn, g_n) in &neg_traces {
                tn.backward(model, g_n, g);
            }
        }
    }
    Ok(total * inv)
}

/// Distinct observed `(source, destination)` pairs of the graph.
pub fn positive_pairs(graph: &TemporalGraph) -> Vec<(NodeIdx, NodeIdx)> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in 0..graph.node_count() as NodeIdx {
        for &(d, _) in graph.out_neighbors(s) {
            if seen.insert((s, d)) {
                out.push((s, d));
            }
        }
    }
    out
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn apply_step(
    model: &mut EncoderModel,
    grads: &[SageLayer],
    optimizer: Optimizer,
    lr: f64,
    adam: &mut AdamState,
) {
    let params = model.layers.iter_mut().flat_map(|l| l.params_mut());
    let g = grads.iter().flat_map(|l| l.params());
    match optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.zip(g) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let bc1 = 1.0 - ADAM_B1.powi(adam.t);
            let bc2 = 1.0 - ADAM_B2.powi(adam.t);
            for (((p, g), m), v) in params.zip(g).zip(&mut adam.m).zip(&mut adam.v) {
                *m = ADAM_B1 * *m + (1.0 - ADAM_B1) * g;
                *v = ADAM_B2 * *v + (1.0 - ADAM_B2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

const EVAL_PAIRS: usize = 4096;

/// Trains an encoder on a graph snapshot and fits both embedding scalers.
pub fn train_gae(
    snapshot: &TemporalGraph,
    encoder: EncoderConfig,
    config: &TrainConfig,
) -> Result<(EncoderModel, TrainReport)> {
    config.validate()?;
    if snapshot.edge_count() == 0 {
        return Err(Error::Precondition("training snapshot has no edges".into()));
    }
    let mut model = EncoderModel::init(encoder, config.seed, &mut rng::derive(config.seed, 1))?;
    let mut pairs = positive_pairs(snapshot);
    let mut order_rng = rng::derive(config.seed, 2);

    let eval: Vec<_> = pairs
        .choose_multiple(&mut rng::derive(config.seed, 3), EVAL_PAIRS)
        .copied()
        .collect();
    let eval_loss = |m: &EncoderModel| {
        loss_and_grad(
            m,
            snapshot,
            &eval,
            config.negatives.max(1),
            &mut rng::derive(config.seed, 4),
            None,
        )
    };
    let mut report = TrainReport {
        initial_loss: eval_loss(&model)?,
        positive_pairs: pairs.len(),
        ..TrainReport::default()
    };

    let n_params = model.param_count();
    let mut adam = AdamState {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut sample_rng = rng::derive(config.seed, 5);
    for epoch in 0..config.epochs {
        pairs.shuffle(&mut order_rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for batch in pairs.chunks(config.batch_size) {
            let mut grads = zero_grads(&model);
            let loss = loss_and_grad(
                &model,
                snapshot,
                batch,
                config.negatives,
                &mut sample_rng,
                Some(&mut grads),
            )?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            apply_step(
                &mut model,
                &grads,
                config.optimizer,
                config.learning_rate,
                &mut adam,
            );
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::info!("epoch {epoch}: loss {mean:.5}");
        report.epoch_losses.push(mean);
    }
    report.final_loss = eval_loss(&model)?;
    if !report.final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: config.epochs,
            loss: report.final_loss,
        });
    }

    model.trained = true;
    fit_scalers(&mut model, snapshot, &pairs, config)?;
    Ok((model, report))
}

/// Node scaler over every snapshot node; edge scaler over (a sample of) the
/// snapshot's distinct pairs.
pub fn fit_scalers(
    model: &mut EncoderModel,
    snapshot: &TemporalGraph,
    pairs: &[(NodeIdx, NodeIdx)],
    config: &TrainConfig,
) -> Result<()> {
    let dim = model.embed_dim();
    let mut r = rng::derive(config.seed, 6);
    let nodes: Vec<Vec<f64>> = (0..snapshot.node_count() as NodeIdx)
        .map(|v| model.embed_idx(snapshot, v, &mut r))
        .collect::<Result<_>>()?;
    model.node_scaler = Some(Scaler::fit(dim, nodes.iter().map(Vec::as_slice))?);

    let sample: Vec<_> = pairs
        .choose_multiple(&mut rng::derive(config.seed, 7), config.scaler_sample.max(1))
        .copied()
        .collect();
    let edges: Vec<Vec<f64>> = sample
        .iter()
        .map(|&(s, d)| {
            let hs = model.embed_idx(snapshot, s, &mut r)?;
            let hd = model.embed_idx(snapshot, d, &mut r)?;
            model.combine(&hs, &hd)
        })
        .collect::<Result<_>>()?;
    model.edge_scaler = Some(Scaler::fit(dim, edges.iter().map(Vec::as_slice))?);
    Ok(())
}
