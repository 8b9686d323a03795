//! A two-group additive neuron with lossless intermediate words reproduces the
//! single wide neuron it was split from.

mod common;

use lutnet_core::poly::decompose_wide_dot;
use lutnet_core::quant::{fold_batchnorm, quantize, BatchNormAffine, QuantSpec};
use lutnet_core::sim::eval_netlist;
use lutnet_core::tablegen::{compile_network, TableOptions};
use lutnet_core::TrainedNetwork;

#[test]
fn split_neuron_equals_wide_neuron_on_all_inputs() {
    // Inputs are multiples of 1/3; with weights in {-1, 1} and bias -1/3 every
    // sub-neuron sum is a multiple of 1/3 inside [-4/3, 1], which the signed
    // 3-bit word at scale 1/3 holds exactly.
    let wide = [1.0, -1.0, -1.0, 1.0];
    let bias = -1.0 / 3.0;
    let cfg = common::config(4, &[1], 2, 2, 1, 2, 0);
    let mut net = TrainedNetwork::init(&cfg).unwrap();
    net.connectivity.layers[0][0] = vec![vec![0, 1], vec![2, 3]];
    let layer = &mut net.layers[0];
    layer.sub_spec = QuantSpec::signed(3, 1.0 / 3.0);
    layer.output_spec = QuantSpec::signed(2, 0.173);
    layer.neurons[0].subs = decompose_wide_dot(&wide, bias, 2).unwrap();
    layer.neurons[0].bn = BatchNormAffine { gamma: 0.8, beta_shift: 0.05, running_mean: -0.1, running_var: 0.9, epsilon: 1e-5 };
    net.check().unwrap();

    let nl = compile_network(&net, TableOptions::default()).unwrap();
    let (a, c) = fold_batchnorm(&net.layers[0].neurons[0].bn);
    let out_spec = net.layers[0].output_spec;
    let mut mismatches = 0;
    let mut seen = std::collections::BTreeSet::new();
    for idx in 0..256u32 {
        let words: Vec<u16> = (0..4).map(|j| ((idx >> (2 * j)) & 3) as u16).collect();
        let x: Vec<f64> = words.iter().map(|&w| w as f64 / 3.0).collect();
        let dot = bias + wide.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
        let want = out_spec.to_bits(quantize(a * dot + c, &out_spec));
        let got = eval_netlist(&nl, &words).unwrap()[0];
        mismatches += usize::from(got != want);
        seen.insert(want);
    }
    assert_eq!(mismatches, 0);
    assert!(seen.len() >= 3);
}
