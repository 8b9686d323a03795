#![allow(clippy::approx_constant)]

//! The reference forward pass against a hand-rolled re-implementation on a
//! pinned 2-3-2 network.

mod common;

use lutnet_core::network::TrainedNetwork;
use lutnet_core::quant::{BatchNormAffine, QuantSpec};

fn round_away(v: f64) -> f64 {
    let r = (v.abs() + 0.5).floor();
    if v < 0.0 {
        -r
    } else {
        r
    }
}

fn q(v: f64, scale: f64, lo: i64, hi: i64) -> i64 {
    (round_away(v / scale) as i64).clamp(lo, hi)
}

fn bn(b: &BatchNormAffine, x: f64) -> f64 {
    b.gamma * (x - b.running_mean) / (b.running_var + b.epsilon).sqrt() + b.beta_shift
}

const BN: [(f64, f64, f64, f64); 5] = [
    (1.1, 0.05, 0.07, 0.5),
    (-0.9, 0.31, -0.4, 0.6),
    (0.7, 0.12, 0.0, 0.45),
    (0.8, -0.03, 0.2, 0.4),
    (-0.5, -0.1, -0.3, 0.7),
];

fn pinned() -> TrainedNetwork {
    let cfg = common::config(2, &[3, 2], 2, 2, 1, 2, 5);
    let mut net = TrainedNetwork::init(&cfg).unwrap();
    let weights = [0.173, -0.521, 0.887, 0.412, 0.0931, -0.659, -0.247, 0.733, 0.318, 0.529, -0.061, -0.811];
    let mut k = 0;
    for (l, layer) in net.layers.iter_mut().enumerate() {
        layer.sub_spec = QuantSpec::signed(3, 0.29);
        for (n, neuron) in layer.neurons.iter_mut().enumerate() {
            for sub in &mut neuron.subs {
                for w in &mut sub.weights {
                    *w = weights[k % weights.len()] * if (k / 5) % 2 == 0 { 1.0 } else { -1.3 };
                    k += 1;
                }
            }
            let (gamma, beta_shift, running_mean, running_var) = BN[l * 3 + n];
            neuron.bn = BatchNormAffine { gamma, beta_shift, running_mean, running_var, epsilon: 1e-5 };
        }
    }
    net.layers[0].output_spec = QuantSpec::unsigned(2, 0.23);
    net.layers[1].input_spec = net.layers[0].output_spec;
    net.layers[1].output_spec = QuantSpec::signed(2, 0.19);
    net.check().unwrap();
    net
}

/// Independent evaluation: quantize inputs, gather, affine pre-activations,
/// signed 3-bit sub codes, sum, batch norm, ReLU/quantize.
fn oracle(net: &TrainedNetwork, x: &[f64]) -> Vec<i64> {
    let mut vals: Vec<f64> = x.iter().map(|&v| q(v, 1.0 / 3.0, 0, 3) as f64 / 3.0).collect();
    let mut codes = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        let last = l + 1 == net.layers.len();
        codes.clear();
        for (n, neuron) in layer.neurons.iter().enumerate() {
            let mut sum = 0.0;
            for (a, sub) in neuron.subs.iter().enumerate() {
                let src = &net.connectivity.layers[l][n][a];
                let pre = sub.weights[0] + sub.weights[1] * vals[src[0] as usize] + sub.weights[2] * vals[src[1] as usize];
                sum += q(pre, 0.29, -4, 3) as f64 * 0.29;
            }
            let y = bn(&neuron.bn, sum);
            let s = layer.output_spec.scale;
            codes.push(if last { q(y, s, -2, 1) } else { q(y.max(0.0), s, 0, 3) });
        }
        vals = codes.iter().map(|&c| c as f64 * layer.output_spec.scale).collect();
    }
    codes
}

#[test]
fn pinned_network_matches_hand_rolled_reference() {
    let net = pinned();
    let ev = net.evaluator().unwrap();
    let mut distinct = std::collections::BTreeSet::new();
    for i in 0..=20 {
        for j in 0..=20 {
            let x = [i as f64 / 20.0, j as f64 / 20.0];
            let want = oracle(&net, &x);
            let codes = ev.forward_codes(&ev.quantize_input(&x)).unwrap();
            assert_eq!(codes, want, "x = {x:?}");
            let scores = ev.forward(&x, true).unwrap();
            let deq: Vec<f64> = want.iter().map(|&c| c as f64 * 0.19).collect();
            assert_eq!(scores, deq);
            distinct.insert(want);
        }
    }
    assert!(distinct.len() > 5, "pinned network is too degenerate: {distinct:?}");
}

#[test]
fn float_forward_is_plain_arithmetic() {
    let net = pinned();
    let ev = net.evaluator().unwrap();
    let x = [0.3, 0.8];
    let mut vals = x.to_vec();
    for (l, layer) in net.layers.iter().enumerate() {
        let last = l + 1 == net.layers.len();
        vals = layer
            .neurons
            .iter()
            .enumerate()
            .map(|(n, neuron)| {
                let sum: f64 = neuron
                    .subs
                    .iter()
                    .enumerate()
                    .map(|(a, sub)| {
                        let src = &net.connectivity.layers[l][n][a];
                        sub.weights[0] + sub.weights[1] * vals[src[0] as usize] + sub.weights[2] * vals[src[1] as usize]
                    })
                    .sum();
                let y = bn(&neuron.bn, sum);
                if last {
                    y
                } else {
                    y.max(0.0)
                }
            })
            .collect();
    }
    let got = ev.forward(&x, false).unwrap();
    for (g, w) in got.iter().zip(&vals) {
        assert!((g - w).abs() < 1e-12, "{got:?} vs {vals:?}");
    }
}
