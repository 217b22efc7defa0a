//! Fixed-point CNN training where the client routes linear layers through an [`Engine`].
//!
//! Truncation, bias, softmax, normalization statistics and nonlinear derivatives run on the
//! client's plaintext, so any engine that returns exact products yields identical weights.

pub mod data;
mod engine;
mod fixed;
mod model;

pub use data::Dataset;
pub use engine::{Costs, Engine, Protocol, ReferenceEngine, SecureConfig, SecureEngine};
pub use fixed::{FixParams, FixTensor};
pub use model::{slot, LayerParams, LayerSpec, LinearUse, Model, ModelSpec, Shape, ROLE_FORWARD, ROLE_INPUT_GRAD, ROLE_WEIGHT_GRAD};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::he::{Backend, HeParams};
use crate::linprot::LinearOp;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub fix: FixParams,
    pub batch: usize,
    /// Learning rate at the fixed-point scale.
    pub lr: i64,
    pub epochs: usize,
    /// Linear results must stay below this in magnitude to survive the plaintext modulus.
    pub product_bound: i64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let fix = FixParams::default();
        TrainConfig { fix, batch: 8, lr: fix.one() >> 6, epochs: 1, product_bound: default_product_bound() }
    }
}

pub fn default_product_bound() -> i64 {
    let t = HeParams::with_backend(Backend::Clear, 4096).expect("default parameters").plain_modulus();
    (t / 2) as i64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub online_seconds: f64,
    pub offline_seconds: f64,
    pub bytes_online: u64,
    pub bytes_offline: u64,
    /// Mean loss of every batch, in order.
    pub batch_losses: Vec<f64>,
}

pub const METRICS_HEADER: [&str; 7] =
    ["epoch", "loss", "accuracy", "online_seconds", "offline_seconds", "bytes_online", "bytes_offline"];

pub fn write_metrics_csv(out: impl Write, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in rows {
        w.write_record([
            m.epoch.to_string(),
            format!("{:.6}", m.loss),
            format!("{:.4}", m.accuracy),
            format!("{:.3}", m.online_seconds),
            format!("{:.3}", m.offline_seconds),
            m.bytes_online.to_string(),
            m.bytes_offline.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Means of `k` equal consecutive windows of the batch losses (the last window takes the rest).
pub fn window_means(losses: &[f64], k: usize) -> Vec<f64> {
    let k = k.min(losses.len()).max(1);
    let size = losses.len() / k;
    (0..k)
        .map(|i| {
            let end = if i + 1 == k { losses.len() } else { (i + 1) * size };
            let w = &losses[i * size..end];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

struct BnCache {
    xhat: Vec<i64>,
    inv_std: Vec<i64>,
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace {
    /// Input of layer i at index i; the logits last.
    pub acts: Vec<Vec<i64>>,
    bn: Vec<Option<BnCache>>,
}

impl Trace {
    pub fn logits(&self) -> &[i64] {
        self.acts.last().expect("at least the input")
    }
}

/// Parameter gradients per layer, summed over the samples seen since the last step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradBundle {
    pub layers: Vec<Option<(Vec<i64>, Vec<i64>)>>,
    /// Gradient with respect to the input of each layer where it was computed.
    pub inputs: Vec<Option<Vec<i64>>>,
}

impl GradBundle {
    pub fn zeros(model: &Model) -> Self {
        let layers = model
            .params
            .iter()
            .map(|p| match p {
                LayerParams::Conv { w, b } | LayerParams::Fc { w, b } => Some((vec![0; w.len()], vec![0; b.len()])),
                LayerParams::Bn { gamma, beta } => Some((vec![0; gamma.len()], vec![0; beta.len()])),
                LayerParams::None => None,
            })
            .collect();
        GradBundle { layers, inputs: vec![None; model.params.len()] }
    }
}

/// Terms summed into one output entry of `op`.
fn fan_in(op: &LinearOp) -> usize {
    match *op {
        LinearOp::Conv { c_in, k, .. } => c_in * k * k,
        LinearOp::ConvInputGrad { c_out, k, .. } => c_out * k * k,
        LinearOp::ConvWeightGrad { h, w, k, pad, .. } => (h + 2 * pad + 1 - k) * (w + 2 * pad + 1 - k),
        LinearOp::MatVec { cols, .. } => cols,
        LinearOp::MatTVec { rows, .. } => rows,
        LinearOp::Outer { .. } | LinearOp::Scale { .. } => 1,
        LinearOp::ChannelDot { size, .. } => size,
    }
}

fn max_abs(v: &[i64]) -> i128 {
    v.iter().map(|x| x.unsigned_abs() as i128).max().unwrap_or(0)
}

/// Softmax cross-entropy on decoded logits; returns (loss, gradient at the fixed-point scale).
pub fn softmax_xent(logits: &[i64], label: usize, fix: &FixParams) -> (f64, Vec<i64>) {
    let z: Vec<f64> = logits.iter().map(|&v| fix.decode(v)).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = e.iter().sum();
    let loss = -(e[label] / sum).ln();
    let grad = e
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = v / sum - if i == label { 1.0 } else { 0.0 };
            (p * fix.one() as f64).round() as i64
        })
        .collect();
    (loss, grad)
}

fn argmax(v: &[i64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Reorders a (c, h, w) map so each `size x size` window is contiguous; returns source indices.
fn pool_order(s: Shape, size: usize) -> Vec<usize> {
    let (c, h, w) = s;
    let mut idx = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for u in 0..h / size {
            for v in 0..w / size {
                for i in 0..size {
                    for j in 0..size {
                        idx.push((ch * h + u * size + i) * w + v * size + j);
                    }
                }
            }
        }
    }
    idx
}

pub struct Trainer<E: Engine> {
    pub model: Model,
    pub engine: E,
    pub cfg: TrainConfig,
}

impl<E: Engine> Trainer<E> {
    pub fn new(model: Model, engine: E, cfg: TrainConfig) -> Self {
        Trainer { model, engine, cfg }
    }

    fn linear(&mut self, slot: u32, op: LinearOp, x: &[i64], w: &[i64]) -> Result<Vec<i64>> {
        let worst = max_abs(x) * max_abs(w) * fan_in(&op) as i128;
        if worst >= self.cfg.product_bound as i128 {
            return Err(Error::Overflow(format!("{} may reach {worst}, beyond the plaintext modulus", op.name())));
        }
        let y = self.engine.linear(slot, op, x, w)?;
        Ok(y.into_iter().map(|v| self.cfg.fix.trunc(v)).collect())
    }

    /// Nonlinear inputs must leave headroom for differences in the share ring.
    fn check_nonlinear(&self, x: &[i64]) -> Result<()> {
        let lim = 1i64 << (self.cfg.fix.bits - 2);
        match x.iter().find(|v| v.abs() >= lim) {
            Some(v) => Err(Error::Overflow(format!("activation {v} beyond {} bits", self.cfg.fix.bits - 2))),
            None => Ok(()),
        }
    }

    pub fn forward(&mut self, input: &[i64]) -> Result<Trace> {
        let fix = self.cfg.fix;
        let n = self.model.spec.layers.len();
        let mut acts = Vec::with_capacity(n + 1);
        let mut bn = Vec::with_capacity(n);
        acts.push(input.to_vec());
        for i in 0..n {
            self.engine.enter_layer(i, false);
            let x = acts[i].clone();
            let s = self.model.shapes[i];
            let mut cache = None;
            let y = match self.model.spec.layers[i] {
                LayerSpec::Conv { .. } | LayerSpec::Fc { .. } => {
                    let op = self.model.forward_op(i).expect("linear layer");
                    let (w, b) = match &self.model.params[i] {
                        LayerParams::Conv { w, b } | LayerParams::Fc { w, b } => (w.data.clone(), b.data.clone()),
                        _ => unreachable!("params follow the layer kind"),
                    };
                    let mut y = self.linear(slot(i, ROLE_FORWARD), op, &x, &w)?;
                    let per = y.len() / b.len();
                    for (j, v) in y.iter_mut().enumerate() {
                        *v += b[j / per];
                    }
                    y
                }
                LayerSpec::Bn => {
                    let op = self.model.forward_op(i).expect("linear layer");
                    let (gamma, beta) = match &self.model.params[i] {
                        LayerParams::Bn { gamma, beta } => (gamma.data.clone(), beta.data.clone()),
                        _ => unreachable!("params follow the layer kind"),
                    };
                    let size = s.1 * s.2;
                    let mut xhat = vec![0i64; x.len()];
                    let mut inv_std = Vec::with_capacity(s.0);
                    for c in 0..s.0 {
                        let ch = &x[c * size..(c + 1) * size];
                        let mean = ch.iter().sum::<i64>().div_euclid(size as i64);
                        let var = ch.iter().map(|v| fix.trunc((v - mean) * (v - mean))).sum::<i64>().div_euclid(size as i64);
                        let inv = fix.encode(1.0 / (fix.decode(var) + 1e-3).sqrt())?;
                        for (o, v) in xhat[c * size..(c + 1) * size].iter_mut().zip(ch) {
                            *o = fix.trunc((v - mean) * inv);
                        }
                        inv_std.push(inv);
                    }
                    let mut y = self.linear(slot(i, ROLE_FORWARD), op, &xhat, &gamma)?;
                    for (j, v) in y.iter_mut().enumerate() {
                        *v += beta[j / size];
                    }
                    cache = Some(BnCache { xhat, inv_std });
                    y
                }
                LayerSpec::Relu => {
                    self.check_nonlinear(&x)?;
                    self.engine.relu(&x)?
                }
                LayerSpec::MaxPool { size } => {
                    self.check_nonlinear(&x)?;
                    let gathered: Vec<i64> = pool_order(s, size).into_iter().map(|j| x[j]).collect();
                    self.engine.maxpool(&gathered, size * size)?
                }
                LayerSpec::Flatten => x,
            };
            fix.check(&y, "activation")?;
            acts.push(y);
            bn.push(cache);
        }
        Ok(Trace { acts, bn })
    }

    /// Accumulates parameter gradients of one sample into `grads`.
    pub fn backward(&mut self, trace: &Trace, dlogits: Vec<i64>, grads: &mut GradBundle) -> Result<()> {
        let fix = self.cfg.fix;
        let first_linear = (0..self.model.spec.layers.len()).find(|&i| self.model.forward_op(i).is_some());
        let mut dy = dlogits;
        for i in (0..self.model.spec.layers.len()).rev() {
            self.engine.enter_layer(i, true);
            let s = self.model.shapes[i];
            let x = &trace.acts[i];
            let need_dx = first_linear.is_some_and(|f| i > f);
            let dx = match self.model.spec.layers[i] {
                LayerSpec::Conv { c_out, k, pad } => {
                    let w = match &self.model.params[i] {
                        LayerParams::Conv { w, .. } => w.data.clone(),
                        _ => unreachable!("params follow the layer kind"),
                    };
                    let (c_in, h, wd) = s;
                    let dw = self.linear(slot(i, ROLE_WEIGHT_GRAD), LinearOp::ConvWeightGrad { c_in, c_out, h, w: wd, k, pad }, x, &dy)?;
                    let per = dy.len() / c_out;
                    let db: Vec<i64> = dy.chunks(per).map(|c| c.iter().sum()).collect();
                    accumulate(grads, i, &dw, &db);
                    if need_dx {
                        Some(self.linear(slot(i, ROLE_INPUT_GRAD), LinearOp::ConvInputGrad { c_in, c_out, h, w: wd, k, pad }, &dy, &w)?)
                    } else {
                        None
                    }
                }
                LayerSpec::Fc { out } => {
                    let w = match &self.model.params[i] {
                        LayerParams::Fc { w, .. } => w.data.clone(),
                        _ => unreachable!("params follow the layer kind"),
                    };
                    let dw = self.linear(slot(i, ROLE_WEIGHT_GRAD), LinearOp::Outer { rows: out, cols: s.0 }, x, &dy)?;
                    accumulate(grads, i, &dw, &dy);
                    if need_dx {
                        Some(self.linear(slot(i, ROLE_INPUT_GRAD), LinearOp::MatTVec { rows: out, cols: s.0 }, &dy, &w)?)
                    } else {
                        None
                    }
                }
                LayerSpec::Bn => {
                    let gamma = match &self.model.params[i] {
                        LayerParams::Bn { gamma, .. } => gamma.data.clone(),
                        _ => unreachable!("params follow the layer kind"),
                    };
                    let cache = trace.bn[i].as_ref().expect("forward cached normalization");
                    let size = s.1 * s.2;
                    let op = LinearOp::ChannelDot { channels: s.0, size };
                    let dgamma = self.linear(slot(i, ROLE_WEIGHT_GRAD), op, &cache.xhat, &dy)?;
                    let dbeta: Vec<i64> = dy.chunks(size).map(|c| c.iter().sum()).collect();
                    accumulate(grads, i, &dgamma, &dbeta);
                    if need_dx {
                        let dxhat = self.linear(slot(i, ROLE_INPUT_GRAD), LinearOp::Scale { channels: s.0, size }, &dy, &gamma)?;
                        Some(dxhat.iter().enumerate().map(|(j, &g)| fix.trunc(g * cache.inv_std[j / size])).collect())
                    } else {
                        None
                    }
                }
                LayerSpec::Relu => {
                    let y = &trace.acts[i + 1];
                    Some(dy.iter().zip(y).map(|(&g, &v)| if v > 0 { g } else { 0 }).collect())
                }
                LayerSpec::MaxPool { size } => {
                    let win = size * size;
                    let order = pool_order(s, size);
                    let mut dx = vec![0i64; x.len()];
                    for (o, g) in dy.iter().enumerate() {
                        let idx = &order[o * win..(o + 1) * win];
                        let vals: Vec<i64> = idx.iter().map(|&j| x[j]).collect();
                        dx[idx[argmax(&vals)]] += g;
                    }
                    Some(dx)
                }
                LayerSpec::Flatten => Some(dy.clone()),
            };
            grads.inputs[i] = dx.clone();
            match dx {
                Some(d) if need_dx => {
                    fix.check(&d, "gradient")?;
                    dy = d;
                }
                _ => break,
            }
        }
        Ok(())
    }

    /// w -= lr * g / batch, with both roundings toward minus infinity.
    pub fn apply(&mut self, grads: &GradBundle, batch: usize) -> Result<()> {
        let fix = self.cfg.fix;
        let lr = self.cfg.lr;
        let step = |p: &mut Vec<i64>, g: &[i64]| {
            for (w, &g) in p.iter_mut().zip(g) {
                *w -= fix.trunc(lr * g).div_euclid(batch as i64);
            }
        };
        for (p, g) in self.model.params.iter_mut().zip(&grads.layers) {
            if let Some((gw, gb)) = g {
                match p {
                    LayerParams::Conv { w, b } | LayerParams::Fc { w, b } => {
                        step(&mut w.data, gw);
                        step(&mut b.data, gb);
                        fix.check(&w.data, "weight")?;
                    }
                    LayerParams::Bn { gamma, beta } => {
                        step(&mut gamma.data, gw);
                        step(&mut beta.data, gb);
                        fix.check(&gamma.data, "weight")?;
                    }
                    LayerParams::None => {}
                }
            }
        }
        Ok(())
    }

    /// One epoch of minibatch SGD in dataset order.
    pub fn train_epoch(&mut self, data: &Dataset, epoch: usize) -> Result<EpochMetrics> {
        let fix = self.cfg.fix;
        let uses = self.model.linear_uses();
        let before = self.engine.costs();
        let mut losses = Vec::new();
        let (mut total, mut correct) = (0.0, 0usize);
        let mut start = 0;
        while start < data.len() {
            let end = (start + self.cfg.batch).min(data.len());
            self.engine.prepare(&uses, end - start)?;
            let mut grads = GradBundle::zeros(&self.model);
            let mut batch_loss = 0.0;
            for i in start..end {
                let trace = self.forward(&data.fixed_image(i, &fix))?;
                let label = data.labels[i] as usize;
                if argmax(trace.logits()) == label {
                    correct += 1;
                }
                let (loss, dlogits) = softmax_xent(trace.logits(), label, &fix);
                batch_loss += loss;
                self.backward(&trace, dlogits, &mut grads)?;
            }
            self.apply(&grads, end - start)?;
            total += batch_loss;
            losses.push(batch_loss / (end - start) as f64);
            start = end;
        }
        let after = self.engine.costs();
        Ok(EpochMetrics {
            epoch,
            loss: total / data.len().max(1) as f64,
            accuracy: correct as f64 / data.len().max(1) as f64,
            online_seconds: after.online_seconds - before.online_seconds,
            offline_seconds: after.offline_seconds - before.offline_seconds,
            bytes_online: after.bytes_online - before.bytes_online,
            bytes_offline: after.bytes_offline - before.bytes_offline,
            batch_losses: losses,
        })
    }

    pub fn train(&mut self, data: &Dataset) -> Result<Vec<EpochMetrics>> {
        (0..self.cfg.epochs).map(|e| self.train_epoch(data, e)).collect()
    }

    /// Fraction of samples whose largest logit is the label.
    pub fn accuracy(&mut self, data: &Dataset) -> Result<f64> {
        let fix = self.cfg.fix;
        let uses: Vec<_> = self.model.linear_uses().into_iter().filter(|u| u.slot % 4 == ROLE_FORWARD).collect();
        self.engine.prepare(&uses, data.len())?;
        let mut correct = 0;
        for i in 0..data.len() {
            let trace = self.forward(&data.fixed_image(i, &fix))?;
            if argmax(trace.logits()) == data.labels[i] as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len().max(1) as f64)
    }
}

fn accumulate(grads: &mut GradBundle, i: usize, dw: &[i64], db: &[i64]) {
    let (gw, gb) = grads.layers[i].as_mut().expect("parameterized layer");
    for (a, b) in gw.iter_mut().zip(dw) {
        *a += b;
    }
    for (a, b) in gb.iter_mut().zip(db) {
        *a += b;
    }
}
