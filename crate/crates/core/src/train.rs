//! Quantization-aware training.
//!
//! Forward passes run a whole mini-batch layer by layer with batch-statistic
//! batch norm. In fake-quant mode every quantizer rounds in the forward pass
//! and passes gradients straight through inside its clipping range (zero
//! outside). Quantizer scales other than the network input are learned with
//! step-size gradients. After the last epoch the batch-norm running statistics
//! are recomputed over the whole training split, layer by layer, so the frozen
//! network matches what the last layers were trained against.

#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use crate::config::{validate_config, LayerGeometry, NetworkConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{TrainedNetwork, TrainingMeta};
use crate::poly::{enumerate_monomials, MonomialBasis};
use crate::quant::QuantSpec;
use crate::rng::SeededRng;

pub const TRAIN_STREAM: u64 = 3;
const MIN_SCALE: f64 = 1e-4;
const RECALIBRATION_CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Train through fake quantizers (normal QAT). Off trains in float.
    pub fake_quant: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 1024, learning_rate: 1e-2, weight_decay: 0.0, seed: 0, fake_quant: true }
    }
}

impl Hyper {
    /// Batch 128 for image-sized inputs, 1024 otherwise.
    pub fn for_config(cfg: &NetworkConfig) -> Self {
        let batch_size = if cfg.input_width == 784 || cfg.name.starts_with("hdr") { 128 } else { 1024 };
        Self { batch_size, seed: cfg.seed, ..Self::default() }
    }
}

/// Forward value and straight-through derivatives of one fake quantizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantGrad {
    pub value: f64,
    /// d value / d input: 1 inside the clipping range, 0 outside.
    pub dv: f64,
    /// d value / d scale (step-size estimator).
    pub ds: f64,
}

pub fn fake_quant(v: f64, spec: &QuantSpec) -> QuantGrad {
    let code = spec.quantize(v);
    let u = v / spec.scale + spec.zero_point as f64;
    let q = (code - spec.zero_point) as f64;
    if u < spec.min_code() as f64 || u > spec.max_code() as f64 {
        QuantGrad { value: spec.dequantize(code), dv: 0.0, ds: q }
    } else {
        QuantGrad { value: spec.dequantize(code), dv: 1.0, ds: q - v / spec.scale }
    }
}

/// ReLU fused with an unsigned fake quantizer.
pub fn fake_quant_relu(v: f64, spec: &QuantSpec) -> QuantGrad {
    if v <= 0.0 || v.is_nan() {
        return QuantGrad { value: spec.dequantize(spec.quantize(0.0)), dv: 0.0, ds: 0.0 };
    }
    fake_quant(v, spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Norm {
    Batch,
    Running,
}

struct LayerCache {
    input: Vec<f64>,
    monos: Vec<f64>,
    sub_dv: Vec<f64>,
    sub_ds: Vec<f64>,
    sum: Vec<f64>,
    inv_std: Vec<f64>,
    xhat: Vec<f64>,
    y: Vec<f64>,
    out: Vec<f64>,
    out_dv: Vec<f64>,
    out_ds: Vec<f64>,
}

struct Model {
    geometry: Vec<LayerGeometry>,
    bases: Vec<MonomialBasis>,
}

impl Model {
    fn new(net: &TrainedNetwork) -> Result<Self> {
        let geometry = net.geometry();
        let bases = geometry.iter().map(|g| enumerate_monomials(g.fanin, g.degree)).collect::<Result<_>>()?;
        Ok(Self { geometry, bases })
    }

    fn inputs(&self, net: &TrainedNetwork, data: &Dataset, batch: &[usize], fq: bool) -> Vec<f64> {
        let spec = net.layers[0].input_spec;
        let mut v = Vec::with_capacity(batch.len() * data.width);
        for &i in batch {
            let row = data.row(i);
            if fq {
                v.extend(row.iter().map(|&x| spec.dequantize(spec.quantize(x))));
            } else {
                v.extend_from_slice(row);
            }
        }
        v
    }

    /// Runs layers `0..=last` on a batch.
    fn forward(&self, net: &TrainedNetwork, input: Vec<f64>, batch: usize, fq: bool, norm: Norm, last: usize) -> Vec<LayerCache> {
        let mut caches: Vec<LayerCache> = Vec::with_capacity(last + 1);
        let mut vals = input;
        for l in 0..=last {
            let (geo, layer, basis) = (&self.geometry[l], &net.layers[l], &self.bases[l]);
            let conn = &net.connectivity.layers[l];
            let (w, a, m, iw) = (geo.width, geo.adder, basis.len(), geo.in_width);
            let fq_sub = fq && a >= 2;
            let units = batch * w * a;
            let mut monos = vec![0.0; units * m];
            let mut sub_dv = vec![1.0; units];
            let mut sub_ds = vec![0.0; units];
            let mut sum = vec![0.0; batch * w];
            let mut x = vec![0.0; geo.fanin];
            for b in 0..batch {
                let row = &vals[b * iw..(b + 1) * iw];
                for n in 0..w {
                    let neuron = &layer.neurons[n];
                    for g in 0..a {
                        let idx = (b * w + n) * a + g;
                        for (xi, &s) in x.iter_mut().zip(&conn[n][g]) {
                            *xi = row[s as usize];
                        }
                        let ms = &mut monos[idx * m..(idx + 1) * m];
                        basis.eval_into(&x, ms);
                        let mut acc = 0.0;
                        for (wk, mk) in neuron.subs[g].weights.iter().zip(ms.iter()) {
                            acc += wk * mk;
                        }
                        let q = if fq_sub {
                            let r = fake_quant(acc, &layer.sub_spec);
                            sub_dv[idx] = r.dv;
                            sub_ds[idx] = r.ds;
                            r.value
                        } else {
                            acc
                        };
                        sum[b * w + n] += q;
                    }
                }
            }
            let mut inv_std = vec![0.0; w];
            let mut xhat = vec![0.0; batch * w];
            let mut y = vec![0.0; batch * w];
            let mut out = vec![0.0; batch * w];
            let mut out_dv = vec![0.0; batch * w];
            let mut out_ds = vec![0.0; batch * w];
            for n in 0..w {
                let bn = &layer.neurons[n].bn;
                let (mean, var) = match norm {
                    Norm::Batch => {
                        let mean = (0..batch).map(|b| sum[b * w + n]).sum::<f64>() / batch as f64;
                        let var = (0..batch).map(|b| (sum[b * w + n] - mean).powi(2)).sum::<f64>() / batch as f64;
                        (mean, var)
                    }
                    Norm::Running => (bn.running_mean, bn.running_var),
                };
                inv_std[n] = 1.0 / (var + bn.epsilon).sqrt();
                for b in 0..batch {
                    let i = b * w + n;
                    xhat[i] = (sum[i] - mean) * inv_std[n];
                    y[i] = bn.gamma * xhat[i] + bn.beta_shift;
                    let r = match (fq, geo.is_output) {
                        (true, true) => fake_quant(y[i], &layer.output_spec),
                        (true, false) => fake_quant_relu(y[i], &layer.output_spec),
                        (false, true) => QuantGrad { value: y[i], dv: 1.0, ds: 0.0 },
                        (false, false) => QuantGrad { value: y[i].max(0.0), dv: f64::from(u8::from(y[i] > 0.0)), ds: 0.0 },
                    };
                    out[i] = r.value;
                    out_dv[i] = r.dv;
                    out_ds[i] = r.ds;
                }
            }
            let next = out.clone();
            caches.push(LayerCache { input: vals, monos, sub_dv, sub_ds, sum, inv_std, xhat, y, out, out_dv, out_ds });
            vals = next;
        }
        caches
    }

    /// Gradients in [`param_order`] layout, from `dout` on the last layer's output.
    fn backward(&self, net: &TrainedNetwork, caches: &[LayerCache], mut dout: Vec<f64>, batch: usize, fq: bool) -> Vec<LayerGrads> {
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(caches.len());
        for l in (0..caches.len()).rev() {
            let (geo, layer, basis, c) = (&self.geometry[l], &net.layers[l], &self.bases[l], &caches[l]);
            let conn = &net.connectivity.layers[l];
            let (w, a, m, iw, f) = (geo.width, geo.adder, basis.len(), geo.in_width, geo.fanin);
            let mut g = LayerGrads::zeros(w, a, m);
            if fq {
                let qp = layer.output_spec.max_code() as f64;
                let scale = 1.0 / ((w as f64) * qp).sqrt();
                g.out_scale = dout.iter().zip(&c.out_ds).map(|(d, s)| d * s).sum::<f64>() * scale;
            }
            let dy: Vec<f64> = dout.iter().zip(&c.out_dv).map(|(d, m)| d * m).collect();
            let mut dsum = vec![0.0; batch * w];
            for n in 0..w {
                let gamma = layer.neurons[n].bn.gamma;
                let (mut sdy, mut sdyx) = (0.0, 0.0);
                for b in 0..batch {
                    let i = b * w + n;
                    sdy += dy[i];
                    sdyx += dy[i] * c.xhat[i];
                }
                g.gamma[n] = sdyx;
                g.beta[n] = sdy;
                let (mdy, mdyx) = (sdy / batch as f64, sdyx / batch as f64);
                for b in 0..batch {
                    let i = b * w + n;
                    dsum[i] = gamma * c.inv_std[n] * (dy[i] - mdy - c.xhat[i] * mdyx);
                }
            }
            let fq_sub = fq && a >= 2;
            let sub_scale = if fq_sub {
                1.0 / ((w * a) as f64 * layer.sub_spec.max_code() as f64).sqrt()
            } else {
                0.0
            };
            let mut din = vec![0.0; if l > 0 { batch * iw } else { 0 }];
            let mut x = vec![0.0; f];
            let mut partial = vec![0.0; m];
            for b in 0..batch {
                for n in 0..w {
                    let dq = dsum[b * w + n];
                    for gi in 0..a {
                        let idx = (b * w + n) * a + gi;
                        if fq_sub {
                            g.sub_scale += dq * c.sub_ds[idx] * sub_scale;
                        }
                        let dpre = dq * c.sub_dv[idx];
                        if dpre == 0.0 {
                            continue;
                        }
                        let gw = &mut g.weights[(n * a + gi) * m..(n * a + gi + 1) * m];
                        for (gk, mk) in gw.iter_mut().zip(&c.monos[idx * m..(idx + 1) * m]) {
                            *gk += dpre * mk;
                        }
                        if l > 0 {
                            let src = &conn[n][gi];
                            for (xi, &s) in x.iter_mut().zip(src) {
                                *xi = c.input[b * iw + s as usize];
                            }
                            let weights = &layer.neurons[n].subs[gi].weights;
                            for (j, &s) in src.iter().enumerate() {
                                basis.eval_partial_into(&x, j, &mut partial);
                                let d: f64 = weights.iter().zip(&partial).map(|(wk, pk)| wk * pk).sum();
                                din[b * iw + s as usize] += dpre * d;
                            }
                        }
                    }
                }
            }
            grads.push(g);
            dout = din;
        }
        grads.reverse();
        grads
    }
}

#[derive(Clone, Debug, PartialEq)]
struct LayerGrads {
    weights: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    sub_scale: f64,
    out_scale: f64,
}

impl LayerGrads {
    fn zeros(w: usize, a: usize, m: usize) -> Self {
        Self { weights: vec![0.0; w * a * m], gamma: vec![0.0; w], beta: vec![0.0; w], sub_scale: 0.0, out_scale: 0.0 }
    }
}

/// Which parameter a flat index refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Weight { layer: usize, neuron: usize, group: usize, index: usize },
    Gamma { layer: usize, neuron: usize },
    Beta { layer: usize, neuron: usize },
    SubScale { layer: usize },
    OutScale { layer: usize },
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight { .. })
    }
}

/// Flat parameter layout: per layer, per neuron the sub-neuron weights then
/// gamma and beta; then (with `scales`) the sub and output quantizer scales.
pub fn param_order(net: &TrainedNetwork, scales: bool) -> Vec<ParamKind> {
    let mut out = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        for (n, neuron) in layer.neurons.iter().enumerate() {
            for (g, sub) in neuron.subs.iter().enumerate() {
                out.extend((0..sub.weights.len()).map(|index| ParamKind::Weight { layer: l, neuron: n, group: g, index }));
            }
            out.push(ParamKind::Gamma { layer: l, neuron: n });
            out.push(ParamKind::Beta { layer: l, neuron: n });
        }
        if scales {
            out.push(ParamKind::SubScale { layer: l });
            out.push(ParamKind::OutScale { layer: l });
        }
    }
    out
}

fn flatten(net: &TrainedNetwork, grads: &[LayerGrads], scales: bool) -> Vec<f64> {
    let mut out = Vec::new();
    for (layer, g) in net.layers.iter().zip(grads) {
        let a = layer.neurons.first().map_or(0, |n| n.subs.len());
        for (n, neuron) in layer.neurons.iter().enumerate() {
            let m = neuron.subs.first().map_or(0, |s| s.weights.len());
            out.extend_from_slice(&g.weights[n * a * m..(n + 1) * a * m]);
            out.push(g.gamma[n]);
            out.push(g.beta[n]);
        }
        if scales {
            out.push(g.sub_scale);
            out.push(g.out_scale);
        }
    }
    out
}

pub fn param_mut(net: &mut TrainedNetwork, kind: ParamKind) -> &mut f64 {
    match kind {
        ParamKind::Weight { layer, neuron, group, index } => &mut net.layers[layer].neurons[neuron].subs[group].weights[index],
        ParamKind::Gamma { layer, neuron } => &mut net.layers[layer].neurons[neuron].bn.gamma,
        ParamKind::Beta { layer, neuron } => &mut net.layers[layer].neurons[neuron].bn.beta_shift,
        ParamKind::SubScale { layer } => &mut net.layers[layer].sub_spec.scale,
        ParamKind::OutScale { layer } => &mut net.layers[layer].output_spec.scale,
    }
}

/// Copies each layer's output spec into the next layer's input spec.
fn sync_specs(net: &mut TrainedNetwork) {
    for l in 1..net.layers.len() {
        net.layers[l].input_spec = net.layers[l - 1].output_spec;
    }
}

/// Mean loss over `scores` (batch x classes) and its gradient. Softmax cross
/// entropy, or logistic loss on the single score for one-output networks.
fn loss_grad(scores: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let batch = labels.len() as f64;
    let mut grad = vec![0.0; scores.len()];
    let mut loss = 0.0;
    if classes == 1 {
        for (i, (&z, &y)) in scores.iter().zip(labels).enumerate() {
            let t = y as f64;
            loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
            grad[i] = (1.0 / (1.0 + (-z).exp()) - t) / batch;
        }
    } else {
        for (b, &y) in labels.iter().enumerate() {
            let row = &scores[b * classes..(b + 1) * classes];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|s| (s - mx).exp()).sum();
            loss += z.ln() + mx - row[y];
            for k in 0..classes {
                let p = (row[k] - mx).exp() / z;
                grad[b * classes + k] = (p - f64::from(u8::from(k == y))) / batch;
            }
        }
    }
    (loss / batch, grad)
}

fn check_data(net: &TrainedNetwork, data: &Dataset) -> Result<()> {
    if data.width != net.input_width() {
        return Err(Error::Dimension(format!(
            "dataset has {} features, network expects {}",
            data.width,
            net.input_width()
        )));
    }
    let out = net.output_width();
    if (out == 1 && data.classes > 2) || (out > 1 && data.classes > out) {
        return Err(Error::Dimension(format!("{} classes do not fit {out} outputs", data.classes)));
    }
    Ok(())
}

/// Training-mode loss and flat gradient on `batch` (dataset row indices), in
/// [`param_order`] layout (scales included when `fake_quant`).
pub fn loss_and_grad(net: &TrainedNetwork, data: &Dataset, batch: &[usize], fake_quant: bool) -> Result<(f64, Vec<f64>)> {
    net.check()?;
    check_data(net, data)?;
    if batch.is_empty() {
        return Err(Error::Dataset("empty batch".into()));
    }
    let model = Model::new(net)?;
    let (loss, grads) = step_grads(&model, net, data, batch, fake_quant);
    Ok((loss, flatten(net, &grads, fake_quant)))
}

/// Training-mode loss only.
pub fn batch_loss(net: &TrainedNetwork, data: &Dataset, batch: &[usize], fake_quant: bool) -> Result<f64> {
    check_data(net, data)?;
    let model = Model::new(net)?;
    let input = model.inputs(net, data, batch, fake_quant);
    let caches = model.forward(net, input, batch.len(), fake_quant, Norm::Batch, net.layers.len() - 1);
    let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
    Ok(loss_grad(&caches.last().unwrap().out, &labels, net.output_width()).0)
}

fn step_grads(model: &Model, net: &TrainedNetwork, data: &Dataset, batch: &[usize], fq: bool) -> (f64, Vec<LayerGrads>) {
    let input = model.inputs(net, data, batch, fq);
    let caches = model.forward(net, input, batch.len(), fq, Norm::Batch, net.layers.len() - 1);
    let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
    let (loss, dout) = loss_grad(&caches.last().unwrap().out, &labels, net.output_width());
    (loss, model.backward(net, &caches, dout, batch.len(), fq))
}

/// Step-size initialization `2 * mean|v| / sqrt(Qp)` for the sub-neuron and
/// output quantizers, one layer at a time on `batch`.
fn calibrate(model: &Model, net: &mut TrainedNetwork, data: &Dataset, batch: &[usize]) {
    let init = |vals: &[f64], spec: &QuantSpec| {
        let mean = vals.iter().map(|v| v.abs()).sum::<f64>() / vals.len().max(1) as f64;
        (2.0 * mean / (spec.max_code() as f64).sqrt()).max(MIN_SCALE)
    };
    for l in 0..net.layers.len() {
        let input = model.inputs(net, data, batch, true);
        if model.geometry[l].has_adder() {
            // Pre-activations do not depend on this layer's sub scale.
            let c = model.forward(net, input.clone(), batch.len(), true, Norm::Batch, l);
            let pre: Vec<f64> = pre_activations(model, net, &c[l], l);
            let s = init(&pre, &net.layers[l].sub_spec);
            net.layers[l].sub_spec.scale = s;
        }
        let c = model.forward(net, input, batch.len(), true, Norm::Batch, l);
        let s = init(&c[l].y, &net.layers[l].output_spec);
        net.layers[l].output_spec.scale = s;
        sync_specs(net);
    }
}

fn pre_activations(model: &Model, net: &TrainedNetwork, c: &LayerCache, l: usize) -> Vec<f64> {
    let m = model.bases[l].len();
    let (w, a) = (model.geometry[l].width, model.geometry[l].adder);
    c.monos
        .chunks(m)
        .enumerate()
        .map(|(idx, ms)| {
            let (n, g) = ((idx / a) % w, idx % a);
            net.layers[l].neurons[n].subs[g].weights.iter().zip(ms).map(|(wk, mk)| wk * mk).sum()
        })
        .collect()
}

/// Replaces running statistics with exact statistics over `rows`, layer by
/// layer, with earlier layers already using their new statistics.
fn recalibrate_bn(model: &Model, net: &mut TrainedNetwork, data: &Dataset, rows: &[usize], fq: bool) {
    for l in 0..net.layers.len() {
        let w = model.geometry[l].width;
        let (mut s1, mut s2) = (vec![0.0; w], vec![0.0; w]);
        for chunk in rows.chunks(RECALIBRATION_CHUNK) {
            let input = model.inputs(net, data, chunk, fq);
            let c = model.forward(net, input, chunk.len(), fq, Norm::Running, l);
            for (i, &v) in c[l].sum.iter().enumerate() {
                s1[i % w] += v;
                s2[i % w] += v * v;
            }
        }
        let count = rows.len() as f64;
        for (n, neuron) in net.layers[l].neurons.iter_mut().enumerate() {
            let mean = s1[n] / count;
            neuron.bn.running_mean = mean;
            neuron.bn.running_var = (s2[n] / count - mean * mean).max(0.0);
        }
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, net: &mut TrainedNetwork, order: &[ParamKind], grads: &[f64], lr: f64, wd: f64) {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        for (i, (&kind, &g)) in order.iter().zip(grads).enumerate() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            let p = param_mut(net, kind);
            let mut delta = (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
            if kind.decays() {
                delta += wd * *p;
            }
            *p -= lr * delta;
            if matches!(kind, ParamKind::SubScale { .. } | ParamKind::OutScale { .. }) {
                *p = p.max(MIN_SCALE);
            }
        }
    }
}

/// Per-epoch progress passed to [`train_with`] observers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
}

pub fn train(cfg: &NetworkConfig, data: &Dataset, hyper: &Hyper) -> Result<TrainedNetwork> {
    train_with(cfg, data, hyper, |_| {})
}

/// Deterministic single-threaded training; `observe` sees each epoch's loss.
pub fn train_with(cfg: &NetworkConfig, data: &Dataset, hyper: &Hyper, mut observe: impl FnMut(EpochStats)) -> Result<TrainedNetwork> {
    let cfg = validate_config(cfg)?;
    if data.train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    if hyper.batch_size == 0 || !(hyper.learning_rate.is_finite() && hyper.learning_rate > 0.0) {
        return Err(Error::Invalid("batch size and learning rate must be positive".into()));
    }
    let mut net = TrainedNetwork::init(&cfg)?;
    check_data(&net, data)?;
    let model = Model::new(&net)?;
    let fq = hyper.fake_quant;
    if hyper.epochs > 0 {
        if fq {
            let first: Vec<usize> = data.train.iter().take(hyper.batch_size).copied().collect();
            calibrate(&model, &mut net, data, &first);
        }
        let order = param_order(&net, fq);
        let mut opt = AdamW::new(order.len());
        let mut rng = SeededRng::derived(hyper.seed, TRAIN_STREAM);
        let mut rows = data.train.clone();
        for epoch in 0..hyper.epochs {
            rng.shuffle(&mut rows);
            let mut total = 0.0;
            for (bi, batch) in rows.chunks(hyper.batch_size).enumerate() {
                let (loss, grads) = step_grads(&model, &net, data, batch, fq);
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}, batch {bi}")));
                }
                total += loss * batch.len() as f64;
                let flat = flatten(&net, &grads, fq);
                opt.step(&mut net, &order, &flat, hyper.learning_rate, hyper.weight_decay);
                if order.iter().any(|&k| !param_mut(&mut net, k).is_finite()) {
                    return Err(Error::Diverged(format!("non-finite parameter at epoch {epoch}, batch {bi}")));
                }
                sync_specs(&mut net);
            }
            observe(EpochStats { epoch, mean_loss: total / rows.len() as f64 });
        }
        recalibrate_bn(&model, &mut net, data, &data.train, true);
    }
    net.meta = TrainingMeta {
        epochs: hyper.epochs,
        seed: hyper.seed,
        train_accuracy: Some(accuracy(&net, data, &data.train)?),
        test_accuracy: if data.test.is_empty() { None } else { Some(accuracy(&net, data, &data.test)?) },
    };
    net.check()?;
    Ok(net)
}

/// Fraction of `rows` classified correctly by the quantized reference path.
pub fn accuracy(net: &TrainedNetwork, data: &Dataset, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let ev = net.evaluator()?;
    let mut hits = 0usize;
    for &i in rows {
        hits += usize::from(ev.predict(data.row(i))? == data.labels[i]);
    }
    Ok(hits as f64 / rows.len() as f64)
}
