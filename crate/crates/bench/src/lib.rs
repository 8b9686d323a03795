//! Shared fixtures for the benchmarks.

use lutnet_core::{preset, NetworkConfig, PipelineStrategy, TrainedNetwork};

pub fn jsc_m_lite() -> TrainedNetwork {
    TrainedNetwork::init(&preset("jsc-m-lite").expect("preset exists")).expect("preset is valid")
}

pub fn small_config(adder: usize) -> NetworkConfig {
    NetworkConfig {
        name: "bench".into(),
        input_width: 6,
        layer_widths: vec![32, 16, 2],
        beta: 3,
        fanin: 2,
        degree: 2,
        adder,
        input_beta: None,
        input_fanin: None,
        output_beta: None,
        output_fanin: None,
        depth_factor: 1,
        width_factor: 1,
        seed: 0,
        pipeline_strategy: PipelineStrategy::Combined,
    }
}
