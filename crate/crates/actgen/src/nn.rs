//! Multilayer perceptrons with entity-embedding input layers, trained by
//! mini-batch gradient descent.
//!
//! Each hidden layer applies an affine map followed by an activation. The
//! output head is a softmax for classifiers or the identity for regressors.
//! Categorical inputs either arrive pre-expanded (one-hot) or pass through
//! per-column embedding tables trained jointly with the dense layers.
//!
//! The squared-error loss is optimized as mean squared error and reported
//! as RMSE; both have the same minimizer and MSE has the simpler gradient.
//! Training is single-threaded and bit-deterministic for a fixed seed; a
//! grid search trains candidate configurations in parallel since they share
//! no state.

use crate::encoding::{embedding_dim, EmbeddingTable, FeatureSchema, IndexedRow};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Sigmoid,
    ReLU,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Self::ReLU => z.max(0.0),
            Self::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` with output `a`. The ReLU
    /// subgradient at zero is taken as 0, so dead units get zero gradient.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Self::Sigmoid => a * (1.0 - a),
            Self::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::ReLU => "relu",
            Self::Identity => "identity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    Rmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputHead {
    Softmax,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("grid search requires a non-empty grid")]
    EmptyGrid,
}

/// Dense row-major matrix, `rows` x `cols` (outputs x inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Embedding table owned by a network, keyed by the source column name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetEmbedding {
    pub column: String,
    pub table: EmbeddingTable,
}

/// How an input slot of the network is filled from an [`IndexedRow`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutItem {
    /// Embedding lookup for the `emb`-th categorical column.
    Cat { emb: usize },
    /// The `num`-th continuous value.
    Num { num: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub embeddings: Vec<NetEmbedding>,
    /// Input assembly order; mirrors the source schema's column order.
    pub layout: Vec<LayoutItem>,
    pub layers: Vec<DenseLayer>,
    pub head: OutputHead,
}

fn init_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize, activation: Activation) -> Matrix {
    // He-style scaling for ReLU, Xavier-style otherwise.
    let limit = match activation {
        Activation::ReLU => (6.0 / cols as f64).sqrt(),
        _ => (6.0 / (cols + rows) as f64).sqrt(),
    };
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Matrix { rows, cols, data }
}

impl NeuralNet {
    /// Plain dense network over a pre-encoded input of `input_width` reals.
    pub fn dense(
        input_width: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        head: OutputHead,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = (0..input_width).map(|i| LayoutItem::Num { num: i }).collect();
        let layers = Self::build_layers(&mut rng, input_width, hidden, output_dim, activation);
        Self { embeddings: Vec::new(), layout, layers, head }
    }

    /// Network with an entity-embedding layer for every categorical column
    /// of `schema`. Embedding weights initialize as standard normal draws.
    pub fn embedded(
        schema: &FeatureSchema,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        head: OutputHead,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embeddings = Vec::new();
        let mut layout = Vec::new();
        let mut num_i = 0;
        let mut input_width = 0;
        for col in &schema.columns {
            match col.cardinality() {
                Some(n) => {
                    let dim = embedding_dim(n);
                    let weights =
                        (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    layout.push(LayoutItem::Cat { emb: embeddings.len() });
                    embeddings.push(NetEmbedding {
                        column: col.name.clone(),
                        table: EmbeddingTable { rows: n, dim, weights },
                    });
                    input_width += dim;
                }
                None => {
                    layout.push(LayoutItem::Num { num: num_i });
                    num_i += 1;
                    input_width += 1;
                }
            }
        }
        let layers = Self::build_layers(&mut rng, input_width, hidden, output_dim, activation);
        Self { embeddings, layout, layers, head }
    }

    fn build_layers(
        rng: &mut ChaCha8Rng,
        input_width: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
    ) -> Vec<DenseLayer> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input_width;
        for &h in hidden {
            layers.push(DenseLayer {
                weights: init_weights(rng, h, width, activation),
                bias: vec![0.0; h],
                activation,
            });
            width = h;
        }
        layers.push(DenseLayer {
            weights: init_weights(rng, output_dim, width, Activation::Identity),
            bias: vec![0.0; output_dim],
            activation: Activation::Identity,
        });
        layers
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.cols)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.rows)
    }

    fn check_row(&self, row: &IndexedRow) -> Result<(), NnError> {
        let cats = self.embeddings.len();
        let nums = self.layout.iter().filter(|i| matches!(i, LayoutItem::Num { .. })).count();
        if row.cats.len() != cats || row.nums.len() != nums {
            return Err(NnError::DimensionMismatch(format!(
                "row has {} categorical / {} continuous values, net expects {cats} / {nums}",
                row.cats.len(),
                row.nums.len()
            )));
        }
        for (idx, e) in row.cats.iter().zip(&self.embeddings) {
            if *idx >= e.table.rows {
                return Err(NnError::DimensionMismatch(format!(
                    "category index {idx} out of range for column {:?}",
                    e.column
                )));
            }
        }
        Ok(())
    }

    fn assemble_input(&self, row: &IndexedRow, out: &mut Vec<f64>) {
        out.clear();
        for item in &self.layout {
            match *item {
                LayoutItem::Cat { emb } => {
                    out.extend_from_slice(self.embeddings[emb].table.row(row.cats[emb]));
                }
                LayoutItem::Num { num } => out.push(row.nums[num]),
            }
        }
    }

    /// Deterministic forward pass: embedding lookup, affine maps,
    /// activations, and the output head.
    pub fn forward(&self, row: &IndexedRow) -> Result<Vec<f64>, NnError> {
        self.check_row(row)?;
        let mut x = Vec::with_capacity(self.input_width());
        self.assemble_input(row, &mut x);
        for layer in &self.layers {
            x = affine(layer, &x).iter().map(|&z| layer.activation.apply(z)).collect();
        }
        Ok(match self.head {
            OutputHead::Softmax => softmax(&x),
            OutputHead::Identity => x,
        })
    }

    /// Mutable views of every parameter block, in a fixed order matching
    /// [`Gradients::blocks`].
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut blocks: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            blocks.push(l.weights.data.as_mut_slice());
            blocks.push(l.bias.as_mut_slice());
        }
        for e in &mut self.embeddings {
            blocks.push(e.table.weights.as_mut_slice());
        }
        blocks
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data.len() + l.bias.len()).sum::<usize>()
            + self.embeddings.iter().map(|e| e.table.weights.len()).sum::<usize>()
    }
}

fn affine(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
    let mut z = layer.bias.clone();
    for (o, zo) in z.iter_mut().enumerate() {
        let w = layer.weights.row(o);
        let mut acc = 0.0;
        for (wi, xi) in w.iter().zip(x) {
            acc += wi * xi;
        }
        *zo += acc;
    }
    z
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Negative log-likelihood of `label` under `probs`, with probabilities
/// clipped away from 0 and 1.
pub fn loss_cross_entropy(probs: &[f64], label: usize) -> f64 {
    -probs[label].clamp(PROB_CLIP, 1.0 - PROB_CLIP).ln()
}

/// Root mean squared error between two equal-length slices.
pub fn loss_rmse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len(), "rmse operands must have equal length");
    let mse = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>()
        / pred.len() as f64;
    mse.sqrt()
}

/// Training targets: class indices or real values.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Self::Classes(v) => v.len(),
            Self::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub rows: Vec<IndexedRow>,
    pub targets: Targets,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub embeddings: Vec<EmbeddingTable>,
}

impl Gradients {
    fn zeros_like(net: &NeuralNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.weights.rows, l.weights.cols), vec![0.0; l.bias.len()]))
                .collect(),
            embeddings: net
                .embeddings
                .iter()
                .map(|e| EmbeddingTable::zeros(e.table.rows, e.table.dim))
                .collect(),
        }
    }

    fn blocks(&self) -> Vec<&[f64]> {
        let mut blocks: Vec<&[f64]> = Vec::new();
        for (w, b) in &self.layers {
            blocks.push(&w.data);
            blocks.push(b);
        }
        for e in &self.embeddings {
            blocks.push(&e.weights);
        }
        blocks
    }

    fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.data.iter_mut().for_each(|x| *x *= s);
            b.iter_mut().for_each(|x| *x *= s);
        }
        for e in &mut self.embeddings {
            e.weights.iter_mut().for_each(|x| *x *= s);
        }
    }
}

/// The differentiable objective gradients are taken against: mean
/// cross-entropy for classifiers, mean squared error for regressors.
pub fn batch_objective(
    net: &NeuralNet,
    rows: &[IndexedRow],
    targets: &Targets,
    loss: LossKind,
) -> Result<f64, NnError> {
    let mut total = 0.0;
    for (i, row) in rows.iter().enumerate() {
        let out = net.forward(row)?;
        total += match (loss, targets) {
            (LossKind::CrossEntropy, Targets::Classes(labels)) => {
                loss_cross_entropy(&out, labels[i])
            }
            (LossKind::Rmse, Targets::Values(values)) => {
                let d = out[0] - values[i];
                d * d
            }
            _ => {
                return Err(NnError::DimensionMismatch(
                    "loss kind does not match target kind".into(),
                ))
            }
        };
    }
    Ok(total / rows.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy)]
enum SampleTarget {
    Class(usize),
    Value(f64),
}

fn target_at(targets: &Targets, i: usize) -> SampleTarget {
    match targets {
        Targets::Classes(v) => SampleTarget::Class(v[i]),
        Targets::Values(v) => SampleTarget::Value(v[i]),
    }
}

/// Exact analytic gradients of the configured objective, averaged over the
/// batch. Also returns the batch objective value.
pub fn gradients(
    net: &NeuralNet,
    rows: &[IndexedRow],
    targets: &Targets,
    loss: LossKind,
) -> Result<(Gradients, f64), NnError> {
    if rows.len() != targets.len() {
        return Err(NnError::DimensionMismatch(format!(
            "{} rows vs {} targets",
            rows.len(),
            targets.len()
        )));
    }
    gradients_over(net, rows.iter().enumerate().map(|(i, r)| (r, target_at(targets, i))), loss)
}

fn gradients_over<'a>(
    net: &NeuralNet,
    samples: impl Iterator<Item = (&'a IndexedRow, SampleTarget)>,
    loss: LossKind,
) -> Result<(Gradients, f64), NnError> {
    let mut grads = Gradients::zeros_like(net);
    let mut total_loss = 0.0;
    let mut input = Vec::with_capacity(net.input_width());
    let mut count = 0usize;

    for (row, target) in samples {
        count += 1;
        net.check_row(row)?;
        net.assemble_input(row, &mut input);

        // Forward, keeping pre-activations and activations per layer.
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(net.layers.len());
        let mut x = input.clone();
        for layer in &net.layers {
            let z = affine(layer, &x);
            x = z.iter().map(|&v| layer.activation.apply(v)).collect();
            zs.push(z);
            acts.push(x.clone());
        }
        let last = acts.last().expect("at least one layer");

        // Output-layer delta dL/dz.
        let mut delta: Vec<f64> = match (loss, target, net.head) {
            (LossKind::CrossEntropy, SampleTarget::Class(label), OutputHead::Softmax) => {
                let probs = softmax(last);
                total_loss += loss_cross_entropy(&probs, label);
                let mut d = probs;
                d[label] -= 1.0;
                d
            }
            (LossKind::Rmse, SampleTarget::Value(y), OutputHead::Identity) => {
                let k = last.len() as f64;
                let mut d = Vec::with_capacity(last.len());
                for &p in last {
                    total_loss += (p - y) * (p - y) / k;
                    d.push(2.0 * (p - y) / k);
                }
                d
            }
            _ => {
                return Err(NnError::DimensionMismatch(
                    "loss/head/target combination not supported".into(),
                ))
            }
        };

        // Backward through the dense stack.
        for l in (0..net.layers.len()).rev() {
            let layer = &net.layers[l];
            let below: &[f64] = if l == 0 { &input } else { &acts[l - 1] };
            // Fold the activation derivative into delta (output layer is Identity).
            if layer.activation != Activation::Identity {
                for (d, (&z, &a)) in delta.iter_mut().zip(zs[l].iter().zip(&acts[l])) {
                    *d *= layer.activation.derivative(z, a);
                }
            }
            let (gw, gb) = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                let wrow = gw.row_mut(o);
                for (g, &b) in wrow.iter_mut().zip(below) {
                    *g += d * b;
                }
            }
            if l > 0 || !net.embeddings.is_empty() {
                let mut prev = vec![0.0; layer.weights.cols];
                for (o, &d) in delta.iter().enumerate() {
                    let wrow = layer.weights.row(o);
                    for (p, &w) in prev.iter_mut().zip(wrow) {
                        *p += d * w;
                    }
                }
                if l > 0 {
                    delta = prev;
                } else {
                    // Scatter the input gradient into the embedding tables.
                    let mut offset = 0;
                    for item in &net.layout {
                        match *item {
                            LayoutItem::Cat { emb } => {
                                let dim = net.embeddings[emb].table.dim;
                                let g = grads.embeddings[emb].row_mut(row.cats[emb]);
                                for (gv, pv) in g.iter_mut().zip(&prev[offset..offset + dim]) {
                                    *gv += pv;
                                }
                                offset += dim;
                            }
                            LayoutItem::Num { .. } => offset += 1,
                        }
                    }
                }
            }
        }
    }

    let n = count.max(1) as f64;
    grads.scale(1.0 / n);
    Ok((grads, total_loss / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Number of hidden layers (the output layer is extra).
    pub hidden_layers: usize,
    /// Explicit hidden widths; when absent a geometric taper from input to
    /// output width is used.
    pub layer_widths: Option<[usize; 6]>,
    pub learning_rate: f64,
    pub activation: Activation,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            layer_widths: None,
            learning_rate: 1e-2,
            activation: Activation::ReLU,
            loss: LossKind::CrossEntropy,
            optimizer: OptimizerKind::Adam,
            batch_size: 256,
            epochs: 40,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Hidden widths for this config given the input/output dimensions.
    pub fn hidden_widths(&self, input_width: usize, output_dim: usize) -> Vec<usize> {
        if let Some(w) = self.layer_widths {
            return w[..self.hidden_layers].to_vec();
        }
        default_hidden_widths(input_width, output_dim, self.hidden_layers)
    }
}

/// Geometric taper from input width down to output width.
pub fn default_hidden_widths(input_width: usize, output_dim: usize, depth: usize) -> Vec<usize> {
    let lo = (output_dim.max(2) as f64).ln();
    let hi = (input_width.max(2) as f64).ln();
    (1..=depth)
        .map(|k| {
            let t = k as f64 / (depth + 1) as f64;
            ((hi + t * (lo - hi)).exp().round() as usize).max(4)
        })
        .collect()
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn optimizer_step(
    net: &mut NeuralNet,
    grads: &Gradients,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState>,
) {
    let gblocks = grads.blocks();
    let mut pblocks = net.param_blocks_mut();
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for (p, g) in pblocks.iter_mut().zip(&gblocks) {
                for (pv, gv) in p.iter_mut().zip(g.iter()) {
                    *pv -= cfg.learning_rate * gv;
                }
            }
        }
        OptimizerKind::Adam => {
            let state = adam.get_or_insert_with(|| AdamState {
                m: gblocks.iter().map(|g| vec![0.0; g.len()]).collect(),
                v: gblocks.iter().map(|g| vec![0.0; g.len()]).collect(),
                t: 0,
            });
            state.t += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
            for ((p, g), (m, v)) in pblocks
                .iter_mut()
                .zip(&gblocks)
                .zip(state.m.iter_mut().zip(state.v.iter_mut()))
            {
                for (((pv, &gv), mv), vv) in
                    p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
                {
                    *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
                    *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
                    let mhat = *mv / bc1;
                    let vhat = *vv / bc2;
                    *pv -= cfg.learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss per epoch: mean NLL for cross-entropy, RMSE for
    /// the squared-error loss.
    pub epoch_losses: Vec<f64>,
}

/// Trains by mini-batch backpropagation. With a fixed seed the loss history
/// and final parameters are bit-deterministic. Zero epochs returns the net
/// unchanged.
pub fn train(
    mut net: NeuralNet,
    data: &TrainSet,
    cfg: &TrainConfig,
) -> Result<(NeuralNet, TrainHistory), NnError> {
    if data.rows.len() != data.targets.len() {
        return Err(NnError::DimensionMismatch(format!(
            "{} rows vs {} targets",
            data.rows.len(),
            data.targets.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam: Option<AdamState> = None;
    let mut history = TrainHistory { epoch_losses: Vec::with_capacity(cfg.epochs) };
    let mut order: Vec<usize> = (0..data.rows.len()).collect();
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        // Fisher-Yates driven by the training rng.
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let samples = chunk.iter().map(|&i| (&data.rows[i], target_at(&data.targets, i)));
            let (grads, loss) = gradients_over(&net, samples, cfg.loss)?;
            if !loss.is_finite() {
                return Err(NnError::DivergenceDetected { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            optimizer_step(&mut net, &grads, cfg, &mut adam);
        }
        let mean = epoch_loss / data.rows.len().max(1) as f64;
        history.epoch_losses.push(match cfg.loss {
            LossKind::CrossEntropy => mean,
            LossKind::Rmse => mean.sqrt(),
        });
    }
    Ok((net, history))
}

/// Classification accuracy of argmax predictions over a set.
pub fn accuracy_on(net: &NeuralNet, set: &TrainSet) -> Result<f64, NnError> {
    let Targets::Classes(labels) = &set.targets else {
        return Err(NnError::DimensionMismatch("accuracy needs class targets".into()));
    };
    if set.rows.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (row, &label) in set.rows.iter().zip(labels) {
        let out = net.forward(row)?;
        let pred = argmax(&out);
        hits += usize::from(pred == label);
    }
    Ok(hits as f64 / set.rows.len() as f64)
}

/// RMSE of point predictions over a set.
pub fn rmse_on(net: &NeuralNet, set: &TrainSet) -> Result<f64, NnError> {
    let Targets::Values(values) = &set.targets else {
        return Err(NnError::DimensionMismatch("rmse needs value targets".into()));
    };
    if set.rows.is_empty() {
        return Ok(0.0);
    }
    let mut sq = 0.0;
    for (row, &y) in set.rows.iter().zip(values) {
        let out = net.forward(row)?;
        sq += (out[0] - y) * (out[0] - y);
    }
    Ok((sq / set.rows.len() as f64).sqrt())
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// The hyperparameter grid searched for network configurations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DlGrid {
    pub hidden_layers: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub activations: Vec<Activation>,
    pub optimizers: Vec<OptimizerKind>,
    pub base: TrainConfig,
}

impl DlGrid {
    /// Every combination, in depth-major order.
    pub fn expand(&self) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &hl in &self.hidden_layers {
            for &lr in &self.learning_rates {
                for &act in &self.activations {
                    for &opt in &self.optimizers {
                        out.push(TrainConfig {
                            hidden_layers: hl,
                            learning_rate: lr,
                            activation: act,
                            optimizer: opt,
                            ..self.base
                        });
                    }
                }
            }
        }
        out
    }
}

/// The full published grid: depths 1-6, five learning rates, two
/// activations, two optimizers (120 configurations).
pub fn full_dl_grid(base: TrainConfig) -> DlGrid {
    DlGrid {
        hidden_layers: vec![1, 2, 3, 4, 5, 6],
        learning_rates: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
        activations: vec![Activation::Sigmoid, Activation::ReLU],
        optimizers: vec![OptimizerKind::Sgd, OptimizerKind::Adam],
        base,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlLeaderboardRow {
    pub config_index: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub activation: String,
    pub optimizer: String,
    /// Metric on the training split (accuracy or RMSE by task).
    pub train_metric: f64,
    /// Metric on the held-out split; selection key.
    pub valid_metric: f64,
    /// Candidates that diverged keep a row with NaN metrics.
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DlSearchResult {
    pub best_index: usize,
    pub best_net: NeuralNet,
    pub leaderboard: Vec<DlLeaderboardRow>,
}

/// Exhaustive grid search. Every candidate trains on `train` and is scored
/// on the held-out `valid` split: highest accuracy wins for classifiers,
/// lowest RMSE for regressors. Candidates train concurrently; results are
/// collected in grid order so the outcome is deterministic.
pub fn grid_search_dl(
    train_set: &TrainSet,
    valid_set: &TrainSet,
    grid: &[TrainConfig],
    build: impl Fn(&TrainConfig) -> NeuralNet + Sync,
) -> Result<DlSearchResult, NnError> {
    if grid.is_empty() {
        return Err(NnError::EmptyGrid);
    }
    let classification = matches!(train_set.targets, Targets::Classes(_));

    let results: Vec<(DlLeaderboardRow, Option<NeuralNet>)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let net = build(cfg);
            let mut row = DlLeaderboardRow {
                config_index: i,
                hidden_layers: cfg.hidden_layers,
                learning_rate: cfg.learning_rate,
                activation: cfg.activation.label().to_string(),
                optimizer: cfg.optimizer.label().to_string(),
                train_metric: f64::NAN,
                valid_metric: f64::NAN,
                diverged: false,
            };
            match train(net, train_set, cfg) {
                Ok((trained, _)) => {
                    let (tm, vm) = if classification {
                        (accuracy_on(&trained, train_set), accuracy_on(&trained, valid_set))
                    } else {
                        (rmse_on(&trained, train_set), rmse_on(&trained, valid_set))
                    };
                    row.train_metric = tm.unwrap_or(f64::NAN);
                    row.valid_metric = vm.unwrap_or(f64::NAN);
                    (row, Some(trained))
                }
                Err(_) => {
                    row.diverged = true;
                    (row, None)
                }
            }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (i, (row, net)) in results.iter().enumerate() {
        if net.is_none() || !row.valid_metric.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = results[b].0.valid_metric;
                if classification {
                    row.valid_metric > cur
                } else {
                    row.valid_metric < cur
                }
            }
        };
        if better {
            best = Some(i);
        }
    }
    let best_index = best.ok_or(NnError::DivergenceDetected { epoch: 0 })?;
    let mut results = results;
    let best_net = results[best_index].1.take().expect("best candidate trained");
    Ok(DlSearchResult {
        best_index,
        best_net,
        leaderboard: results.into_iter().map(|(row, _)| row).collect(),
    })
}
