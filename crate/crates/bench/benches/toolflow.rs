use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lutnet_bench::{jsc_m_lite, small_config};
use lutnet_core::data::SplitOptions;
use lutnet_core::sim::{equivalence_inputs, EquivalenceOptions};
use lutnet_core::tablegen::TableOptions;
use lutnet_core::train::Hyper;
use lutnet_core::{
    check_equivalence, compile_network, emit_rtl, enumerate_monomials, eval_netlist, load_dataset, parse_back, simulate_pipeline,
    train, PipelineStrategy,
};

fn monomials(c: &mut Criterion) {
    c.bench_function("enumerate_monomials F=8 D=6", |b| b.iter(|| enumerate_monomials(black_box(8), black_box(6)).unwrap()));
}

fn tables(c: &mut Criterion) {
    let net = jsc_m_lite();
    let mut g = c.benchmark_group("jsc-m-lite");
    g.sample_size(10);
    g.bench_function("compile_network", |b| b.iter(|| compile_network(&net, TableOptions::default()).unwrap()));
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    g.bench_function("emit_rtl", |b| b.iter(|| emit_rtl(&nl, PipelineStrategy::PerLayer)));
    let rtl = emit_rtl(&nl, PipelineStrategy::Combined).concat();
    g.bench_function("parse_back", |b| b.iter(|| parse_back(&rtl).unwrap()));
    let opts = EquivalenceOptions { samples: 1000, ..Default::default() };
    let (_, inputs) = equivalence_inputs(&nl, &opts);
    g.bench_function("eval_netlist x1000", |b| {
        b.iter(|| inputs.iter().map(|x| eval_netlist(&nl, x).unwrap()[0] as u64).sum::<u64>())
    });
    g.bench_function("simulate_pipeline x1000", |b| {
        b.iter(|| simulate_pipeline(&nl, PipelineStrategy::PerLayer, &inputs).unwrap().latency_cycles)
    });
    let opts = EquivalenceOptions { samples: 10_000, ..Default::default() };
    g.bench_function("check_equivalence 1e4", |b| b.iter(|| check_equivalence(&net, &nl, &rtl, &opts).unwrap().pass));
    g.finish();
}

fn training(c: &mut Criterion) {
    let data = load_dataset("synthetic-nonlinear", None, &SplitOptions::default()).unwrap();
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    for adder in [1, 2] {
        let cfg = small_config(adder);
        let hyper = Hyper { epochs: 5, batch_size: 64, learning_rate: 0.02, ..Hyper::default() };
        g.bench_function(format!("5 epochs A={adder}"), |b| {
            b.iter_batched(|| cfg.clone(), |cfg| train(&cfg, &data, &hyper).unwrap(), BatchSize::SmallInput)
        });
    }
    g.finish();
}

criterion_group!(benches, monomials, tables, training);
criterion_main!(benches);
