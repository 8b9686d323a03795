#![allow(dead_code)]

use lutnet_core::{NetworkConfig, PipelineStrategy, TrainedNetwork};

pub fn config(input_width: usize, widths: &[usize], beta: u32, fanin: usize, degree: u32, adder: usize, seed: u64) -> NetworkConfig {
    NetworkConfig {
        name: "t".into(),
        input_width,
        layer_widths: widths.to_vec(),
        beta,
        fanin,
        degree,
        adder,
        input_beta: None,
        input_fanin: None,
        output_beta: None,
        output_fanin: None,
        depth_factor: 1,
        width_factor: 1,
        seed,
        pipeline_strategy: PipelineStrategy::Combined,
    }
}

/// Fresh network with non-trivial batch norm and quantizer scales so tables
/// exercise rounding and saturation rather than a handful of codes.
pub fn perturbed(cfg: &NetworkConfig) -> TrainedNetwork {
    let mut net = TrainedNetwork::init(cfg).unwrap();
    let mut k = 0u32;
    for layer in &mut net.layers {
        layer.sub_spec.scale = 0.21;
        layer.output_spec.scale *= 0.37;
        for neuron in &mut layer.neurons {
            k += 1;
            neuron.bn.gamma = 0.6 + 0.1 * (k % 7) as f64;
            neuron.bn.beta_shift = 0.05 * (k % 5) as f64 - 0.1;
            neuron.bn.running_mean = 0.02 * (k % 3) as f64;
            neuron.bn.running_var = 0.3 + 0.05 * (k % 4) as f64;
        }
    }
    for l in 1..net.layers.len() {
        net.layers[l].input_spec = net.layers[l - 1].output_spec;
    }
    net.check().unwrap();
    net
}
