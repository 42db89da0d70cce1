//! LSTM cell whose eight gate matrices form one HT weight.
//!
//! The concatenated input `[x_t, h_{t-1}]` goes through a single HT layer
//! with root rank 4; the four root slices are the pre-activations of the
//! forget, update, candidate and output gates, in that order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ht::{Checkpoint, HtConfig, HtError, HtWeight};
use crate::layer::{self, LayerError, LayerSchedule};
use crate::tensor::DenseTensor;

pub const GATES: usize = 4;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("root rank must be 4 (one slice per gate), got {0}")]
    RootRank(usize),
    #[error("product of output modes {outputs} must equal the hidden size {hidden}")]
    HiddenSize { outputs: usize, hidden: usize },
    #[error("input size {needed} (input + hidden) exceeds the HT input size {available}")]
    InputSize { needed: usize, available: usize },
    #[error("expected input of length {expected}, got {found}")]
    InputLength { expected: usize, found: usize },
    #[error("sequence is empty")]
    EmptySequence,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Ht(#[from] HtError),
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub ht: HtWeight,
    /// `[b_f, b_u, b_c, b_o]`, each of hidden size.
    pub bias: Vec<f64>,
    input_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize, batch: usize) -> Self {
        Self {
            h: vec![0.0; hidden * batch],
            c: vec![0.0; hidden * batch],
        }
    }
}

/// Activated gate values of one step, each `batch x hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub forget: Vec<f64>,
    pub update: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
}

impl LstmParams {
    pub fn new(ht: HtWeight, bias: Vec<f64>, input_size: usize) -> Result<Self, LstmError> {
        let cfg = ht.config();
        if ht.root_rank() != GATES {
            return Err(LstmError::RootRank(ht.root_rank()));
        }
        let hidden = cfg.output_size();
        if input_size + hidden > cfg.input_size() {
            return Err(LstmError::InputSize {
                needed: input_size + hidden,
                available: cfg.input_size(),
            });
        }
        if bias.len() != GATES * hidden {
            return Err(LstmError::InputLength {
                expected: GATES * hidden,
                found: bias.len(),
            });
        }
        Ok(Self {
            ht,
            bias,
            input_size,
        })
    }

    pub fn zeros(cfg: HtConfig, input_size: usize) -> Result<Self, LstmError> {
        let hidden = cfg.output_size();
        Self::new(HtWeight::zeros(cfg)?, vec![0.0; GATES * hidden], input_size)
    }

    pub fn hidden(&self) -> usize {
        self.ht.config().output_size()
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    /// `(HT values, bias values)`, kept apart on purpose.
    pub fn param_counts(&self) -> (usize, usize) {
        (self.ht.param_count(), self.bias.len())
    }

    /// Gate pre-activations (bias included) for a batch of concatenated inputs.
    fn preactivations(
        &self,
        schedule: &LayerSchedule,
        joint: &[f64],
    ) -> Result<Vec<f64>, LstmError> {
        let mut pre = layer::forward_with(&self.ht, schedule, joint)?;
        let width = GATES * self.hidden();
        for row in pre.chunks_mut(width) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(pre)
    }
}

fn concat_inputs(x: &[f64], h: &[f64], batch: usize, input: usize, hidden: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * (input + hidden));
    for b in 0..batch {
        out.extend_from_slice(&x[b * input..(b + 1) * input]);
        out.extend_from_slice(&h[b * hidden..(b + 1) * hidden]);
    }
    out
}

struct StepCache {
    joint: Vec<f64>,
    gates: Gates,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Scale applied to `h` before it is fed to the next step.
    mask: Option<Vec<f64>>,
}

fn cell(
    p: &LstmParams,
    schedule: &LayerSchedule,
    x: &[f64],
    state: &LstmState,
    batch: usize,
) -> Result<(LstmState, StepCache), LstmError> {
    let (input, hidden) = (p.input_size, p.hidden());
    if x.len() != batch * input {
        return Err(LstmError::InputLength {
            expected: batch * input,
            found: x.len(),
        });
    }
    let joint = concat_inputs(x, &state.h, batch, input, hidden);
    let pre = p.preactivations(schedule, &joint)?;
    let n = batch * hidden;
    let mut gates = Gates {
        forget: Vec::with_capacity(n),
        update: Vec::with_capacity(n),
        candidate: Vec::with_capacity(n),
        output: Vec::with_capacity(n),
    };
    for row in pre.chunks(GATES * hidden) {
        let (f, rest) = row.split_at(hidden);
        let (u, rest) = rest.split_at(hidden);
        let (c, o) = rest.split_at(hidden);
        gates.forget.extend(f.iter().map(|&v| sigmoid(v)));
        gates.update.extend(u.iter().map(|&v| sigmoid(v)));
        gates.candidate.extend(c.iter().map(|&v| v.tanh()));
        gates.output.extend(o.iter().map(|&v| sigmoid(v)));
    }
    let c: Vec<f64> = (0..n)
        .map(|k| gates.forget[k] * state.c[k] + gates.update[k] * gates.candidate[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = (0..n).map(|k| gates.output[k] * tanh_c[k]).collect();
    let cache = StepCache {
        joint,
        gates,
        c_prev: state.c.clone(),
        tanh_c,
        mask: None,
    };
    Ok((LstmState { h, c }, cache))
}

/// One step for a single sequence.
pub fn step(p: &LstmParams, x: &[f64], state: &LstmState) -> Result<(LstmState, Gates), LstmError> {
    let schedule = LayerSchedule::build(&p.ht, 1)?;
    let (next, cache) = cell(p, &schedule, x, state, 1)?;
    Ok((next, cache.gates))
}

/// Runs a batch of sequences; `seq[t]` is `batch x input`.
pub fn run(p: &LstmParams, seq: &[Vec<f64>], batch: usize) -> Result<LstmState, LstmError> {
    Ok(unroll(p, seq, batch, None)?.0)
}

// `dropout` = (rate, rng) applies an inverted-dropout mask to h between steps.
fn unroll(
    p: &LstmParams,
    seq: &[Vec<f64>],
    batch: usize,
    mut dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<(LstmState, Vec<StepCache>), LstmError> {
    if seq.is_empty() {
        return Err(LstmError::EmptySequence);
    }
    let schedule = LayerSchedule::build(&p.ht, batch)?;
    let mut state = LstmState::zeros(p.hidden(), batch);
    let mut caches = Vec::with_capacity(seq.len());
    for (t, x) in seq.iter().enumerate() {
        let (mut next, mut cache) = cell(p, &schedule, x, &state, batch)?;
        if t + 1 < seq.len() {
            if let Some((rate, rng)) = dropout.as_mut() {
                if *rate > 0.0 {
                    let keep = 1.0 - *rate;
                    let mask: Vec<f64> = (0..next.h.len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    for (h, m) in next.h.iter_mut().zip(&mask) {
                        *h *= m;
                    }
                    cache.mask = Some(mask);
                }
            }
        }
        caches.push(cache);
        state = next;
    }
    Ok((state, caches))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub ht: Vec<DenseTensor>,
    pub bias: Vec<f64>,
}

fn backward_through_time(
    p: &LstmParams,
    caches: &[StepCache],
    dh_final: &[f64],
    batch: usize,
) -> Result<LstmGrads, LstmError> {
    let (input, hidden) = (p.input_size, p.hidden());
    let n = batch * hidden;
    let mut grads = LstmGrads {
        ht: p
            .ht
            .cores()
            .iter()
            .map(|c| DenseTensor::zeros(c.shape().to_vec()).expect("core shape"))
            .collect(),
        bias: vec![0.0; GATES * hidden],
    };
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; n];
    for (t, cache) in caches.iter().enumerate().rev() {
        if t + 1 < caches.len() {
            if let Some(mask) = &cache.mask {
                for (g, m) in dh.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
        }
        let g = &cache.gates;
        let mut dpre = vec![0.0; batch * GATES * hidden];
        for k in 0..n {
            let (b, j) = (k / hidden, k % hidden);
            let tc = cache.tanh_c[k];
            let d_out = dh[k] * tc;
            let dck = dc[k] + dh[k] * g.output[k] * (1.0 - tc * tc);
            let base = b * GATES * hidden + j;
            dpre[base] = dck * cache.c_prev[k] * g.forget[k] * (1.0 - g.forget[k]);
            dpre[base + hidden] = dck * g.candidate[k] * g.update[k] * (1.0 - g.update[k]);
            dpre[base + 2 * hidden] =
                dck * g.update[k] * (1.0 - g.candidate[k] * g.candidate[k]);
            dpre[base + 3 * hidden] = d_out * g.output[k] * (1.0 - g.output[k]);
            dc[k] = dck * g.forget[k];
        }
        for row in dpre.chunks(GATES * hidden) {
            for (acc, v) in grads.bias.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let frame_grads = layer::backward_frames(&p.ht, &cache.joint, &dpre, batch)?;
        for (acc, gr) in grads.ht.iter_mut().zip(frame_grads) {
            for (a, v) in acc.data_mut().iter_mut().zip(gr.data()) {
                *a += v;
            }
        }
        if t > 0 {
            let dj = layer::backward_input(&p.ht, &dpre, batch, input + hidden)?;
            dh = dj
                .chunks(input + hidden)
                .flat_map(|row| row[input..].iter().copied())
                .collect();
        }
    }
    Ok(grads)
}

/// Gradients of a loss on the final hidden state, given `dL/dh_T`.
pub fn bptt_gradients(
    p: &LstmParams,
    seq: &[Vec<f64>],
    batch: usize,
    dh_final: &[f64],
) -> Result<LstmGrads, LstmError> {
    let (state, caches) = unroll(p, seq, batch, None)?;
    if dh_final.len() != state.h.len() {
        return Err(LstmError::InputLength {
            expected: state.h.len(),
            found: dh_final.len(),
        });
    }
    backward_through_time(p, &caches, dh_final, batch)
}

/// Dense linear classifier on `h_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub classes: usize,
    pub hidden: usize,
    /// `classes x hidden`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Head {
    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        h.chunks(self.hidden)
            .flat_map(|row| {
                (0..self.classes).map(move |c| {
                    let w = &self.weight[c * self.hidden..(c + 1) * self.hidden];
                    self.bias[c] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>()
                })
            })
            .collect()
    }
}

/// Mean softmax cross-entropy, correct count, and `dL/dlogits`.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, usize, Vec<f64>) {
    let batch = labels.len();
    let mut loss = 0.0;
    let mut correct = 0;
    let mut grad = vec![0.0; logits.len()];
    for (b, &y) in labels.iter().enumerate() {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - row[y];
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if pred == y {
            correct += 1;
        }
        for c in 0..classes {
            let p = exps[c] / z;
            grad[b * classes + c] = (p - if c == y { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    (loss / batch as f64, correct, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimConfig {
    Sgd {
        lr: f64,
        #[serde(default)]
        momentum: f64,
    },
    /// Adam with decoupled weight decay.
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimConfig {
    pub fn lr(&self) -> f64 {
        match *self {
            OptimConfig::Sgd { lr, .. } | OptimConfig::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            OptimConfig::Sgd { momentum, .. } => OptimConfig::Sgd { lr, momentum },
            OptimConfig::Adam {
                beta1,
                beta2,
                eps,
                weight_decay,
                ..
            } => OptimConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            },
        }
    }
}

/// Per-slot optimizer state; slots are parameter buffers in a fixed order.
struct Optimizer {
    config: OptimConfig,
    t: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    fn new(config: OptimConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            t: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn begin_step(&mut self) {
        self.t += 1;
    }

    fn update(&mut self, slot: usize, params: &mut [f64], grads: &[f64]) {
        match self.config {
            OptimConfig::Sgd { lr, momentum } => {
                let v = &mut self.first[slot];
                for ((p, g), v) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            OptimConfig::Adam {
                lr,
                beta1,
                beta2,
                eps,
                weight_decay,
            } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                let (m, v) = (&mut self.first[slot], &mut self.second[slot]);
                for k in 0..params.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * grads[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * grads[k] * grads[k];
                    let step = (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                    params[k] -= lr * (step + weight_decay * params[k]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    pub leaf_rank: usize,
    pub non_leaf_rank: usize,
}

impl ModelConfig {
    pub fn ht_config(&self) -> HtConfig {
        HtConfig::new(
            self.in_dims.clone(),
            self.out_dims.clone(),
            self.leaf_rank,
            self.non_leaf_rank,
            GATES,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub samples: usize,
    pub seq_len: usize,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub model: ModelConfig,
    pub task: TaskConfig,
    pub optim: OptimConfig,
    pub epochs: usize,
    pub batch: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                input_size: 4,
                in_dims: vec![5, 4],
                out_dims: vec![4, 4],
                leaf_rank: 4,
                non_leaf_rank: 4,
            },
            task: TaskConfig {
                samples: 64,
                seq_len: 8,
                noise: 0.3,
            },
            optim: OptimConfig::Adam {
                lr: 0.02,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                weight_decay: 0.001,
            },
            epochs: 200,
            batch: 16,
            dropout: 0.25,
        }
    }
}

/// Labelled sequences; `inputs[s][t]` has `input_size` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyData {
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<usize>,
}

/// Two classes: class 0 is a sinusoid with random phase per channel, class 1
/// a step from -1 to +1 at a random time. Both get Gaussian noise.
pub fn toy_data(task: &TaskConfig, input_size: usize, seed: u64) -> ToyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, task.noise.max(0.0)).expect("finite noise");
    let t_len = task.seq_len;
    let mut inputs = Vec::with_capacity(task.samples);
    let mut labels = Vec::with_capacity(task.samples);
    for s in 0..task.samples {
        let label = s % 2;
        let phases: Vec<f64> = (0..input_size)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let tau = rng.random_range(1..t_len.max(2));
        let seq = (0..t_len)
            .map(|t| {
                (0..input_size)
                    .map(|k| {
                        let clean = if label == 0 {
                            (std::f64::consts::TAU * t as f64 / t_len as f64 + phases[k]).sin()
                        } else if t >= tau {
                            1.0
                        } else {
                            -1.0
                        };
                        clean + noise.sample(&mut rng)
                    })
                    .collect()
            })
            .collect();
        inputs.push(seq);
        labels.push(label);
    }
    ToyData { inputs, labels }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub params: LstmParams,
    pub head: Head,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.accuracy)
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy\n");
        for m in &self.metrics {
            out.push_str(&format!("{},{:.12},{:.6}\n", m.epoch, m.loss, m.accuracy));
        }
        out
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            weight: self.params.ht.clone(),
            sections: vec![
                ("bias".into(), self.params.bias.clone()),
                ("head_weight".into(), self.head.weight.clone()),
                ("head_bias".into(), self.head.bias.clone()),
            ],
        }
    }
}

fn batch_inputs(data: &ToyData, idx: &[usize], t_len: usize) -> Vec<Vec<f64>> {
    (0..t_len)
        .map(|t| idx.iter().flat_map(|&s| data.inputs[s][t].iter().copied()).collect())
        .collect()
}

fn evaluate(p: &LstmParams, head: &Head, data: &ToyData, t_len: usize) -> Result<(f64, f64), LstmError> {
    let idx: Vec<usize> = (0..data.labels.len()).collect();
    let seq = batch_inputs(data, &idx, t_len);
    let state = run(p, &seq, idx.len())?;
    let (loss, correct, _) = softmax_cross_entropy(&head.logits(&state.h), &data.labels, head.classes);
    Ok((loss, correct as f64 / idx.len() as f64))
}

pub fn train_toy(cfg: &ToyConfig, seed: u64) -> Result<TrainReport, LstmError> {
    if cfg.batch == 0 || cfg.task.samples == 0 || cfg.task.seq_len == 0 {
        return Err(LstmError::Config(
            "batch, samples and seq_len must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(LstmError::Config("dropout must be in [0, 1)".into()));
    }
    let classes = 2;
    let ht = HtWeight::random(cfg.model.ht_config(), seed)?;
    let hidden = ht.config().output_size();
    let mut bias = vec![0.0; GATES * hidden];
    bias[..hidden].fill(1.0);
    let mut params = LstmParams::new(ht, bias, cfg.model.input_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let head_std = (1.0 / hidden as f64).sqrt();
    let head_normal = Normal::new(0.0, head_std).expect("finite std");
    let mut head = Head {
        classes,
        hidden,
        weight: (0..classes * hidden).map(|_| head_normal.sample(&mut rng)).collect(),
        bias: vec![0.0; classes],
    };
    let data = toy_data(&cfg.task, cfg.model.input_size, seed.wrapping_add(1));
    let t_len = cfg.task.seq_len;

    let mut sizes: Vec<usize> = params.ht.cores().iter().map(DenseTensor::len).collect();
    sizes.extend([params.bias.len(), head.weight.len(), head.bias.len()]);
    let mut opt = Optimizer::new(cfg.optim, &sizes);
    let cores = params.ht.cores().len();

    let mut metrics = Vec::with_capacity(cfg.epochs + 1);
    let (loss, accuracy) = evaluate(&params, &head, &data, t_len)?;
    metrics.push(EpochMetrics {
        epoch: 0,
        loss,
        accuracy,
    });

    let mut order: Vec<usize> = (0..cfg.task.samples).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch) {
            let batch = idx.len();
            let seq = batch_inputs(&data, idx, t_len);
            let drop = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut rng));
            let (state, caches) = unroll(&params, &seq, batch, drop)?;
            let labels: Vec<usize> = idx.iter().map(|&s| data.labels[s]).collect();
            let logits = head.logits(&state.h);
            let (loss, _, dlogits) = softmax_cross_entropy(&logits, &labels, classes);
            if !loss.is_finite() {
                return Err(LstmError::Diverged { epoch, loss });
            }
            let mut dh = vec![0.0; batch * hidden];
            let mut dw = vec![0.0; head.weight.len()];
            let mut db = vec![0.0; classes];
            for b in 0..batch {
                let h = &state.h[b * hidden..(b + 1) * hidden];
                for c in 0..classes {
                    let g = dlogits[b * classes + c];
                    db[c] += g;
                    for j in 0..hidden {
                        dw[c * hidden + j] += g * h[j];
                        dh[b * hidden + j] += g * head.weight[c * hidden + j];
                    }
                }
            }
            let grads = backward_through_time(&params, &caches, &dh, batch)?;
            opt.begin_step();
            for (slot, g) in grads.ht.iter().enumerate() {
                opt.update(slot, params.ht.core_mut(slot).data_mut(), g.data());
            }
            opt.update(cores, &mut params.bias, &grads.bias);
            opt.update(cores + 1, &mut head.weight, &dw);
            opt.update(cores + 2, &mut head.bias, &db);
        }
        let (loss, accuracy) = evaluate(&params, &head, &data, t_len)?;
        if !loss.is_finite() {
            return Err(LstmError::Diverged { epoch, loss });
        }
        metrics.push(EpochMetrics {
            epoch,
            loss,
            accuracy,
        });
    }
    Ok(TrainReport {
        metrics,
        params,
        head,
    })
}
