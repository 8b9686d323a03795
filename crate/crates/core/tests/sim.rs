mod common;

use lutnet_core::netlist::{NetLayer, NetNeuron, Netlist, Provenance, SubUnit, TruthTable, UnitKind, NETLIST_FORMAT, NETLIST_VERSION};
use lutnet_core::rtl::emit_rtl;
use lutnet_core::sim::{check_equivalence, eval_netlist, latency_report, simulate_pipeline, Check, EquivalenceOptions};
use lutnet_core::tablegen::{compile_network, TableOptions};
use lutnet_core::{preset, PipelineStrategy, TrainedNetwork};

fn compiled(widths: &[usize], beta: u32, fanin: usize, adder: usize, seed: u64) -> (TrainedNetwork, Netlist) {
    let net = common::perturbed(&common::config(4, widths, beta, fanin, 1, adder, seed));
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    (net, nl)
}

fn stream(nl: &Netlist, n: usize) -> Vec<Vec<u16>> {
    let m = 1usize << nl.input_bits;
    (0..n).map(|i| (0..nl.input_width).map(|j| ((i * 5 + j * 11 + i / 3) % m) as u16).collect()).collect()
}

#[test]
fn single_table_netlist_is_a_lookup() {
    let table = TruthTable {
        input_bits: 2,
        output_bits: 3,
        provenance: Provenance { layer: 0, neuron: 0, kind: UnitKind::PolySub, group: 0 },
        entries: vec![5, 1, 7, 2],
    };
    let nl = Netlist {
        format: NETLIST_FORMAT.into(),
        version: NETLIST_VERSION,
        name: "one".into(),
        input_width: 2,
        input_bits: 1,
        output_signed: true,
        layers: vec![NetLayer {
            in_width: 2,
            width: 1,
            in_bits: 1,
            out_bits: 3,
            fanin: 2,
            adder: 1,
            neurons: vec![NetNeuron { subs: vec![SubUnit { sources: vec![1, 0], table }], adder: None }],
        }],
    };
    // sources[0] = word 1 is the low index bit.
    assert_eq!(eval_netlist(&nl, &[0, 1]).unwrap(), vec![1]);
    assert_eq!(eval_netlist(&nl, &[1, 0]).unwrap(), vec![7]);
    assert!(eval_netlist(&nl, &[2, 0]).is_err());
    assert!(eval_netlist(&nl, &[0]).is_err());
}

#[test]
fn latency_law() {
    let (_, nl) = compiled(&[5, 3, 2], 2, 2, 2, 1);
    let inputs = stream(&nl, 4);
    assert_eq!(simulate_pipeline(&nl, PipelineStrategy::Combined, &inputs).unwrap().latency_cycles, 3);
    assert_eq!(simulate_pipeline(&nl, PipelineStrategy::PerLayer, &inputs).unwrap().latency_cycles, 6);
    let (_, single) = compiled(&[5, 3, 2], 2, 2, 1, 1);
    for s in [PipelineStrategy::Combined, PipelineStrategy::PerLayer] {
        assert_eq!(simulate_pipeline(&single, s, &inputs).unwrap().latency_cycles, 3);
    }
}

#[test]
fn throughput_and_strategy_independence() {
    let (_, nl) = compiled(&[5, 4, 3], 2, 3, 2, 7);
    let inputs = stream(&nl, 25);
    let mut by_strategy = Vec::new();
    for s in [PipelineStrategy::Combined, PipelineStrategy::PerLayer] {
        let trace = simulate_pipeline(&nl, s, &inputs).unwrap();
        assert_eq!(trace.outputs.len(), inputs.len());
        for (k, (cycle, item, words)) in trace.outputs.iter().enumerate() {
            assert_eq!(*item, k);
            assert_eq!(*cycle, k as u64 + trace.latency_cycles);
            assert_eq!(words, &eval_netlist(&nl, &inputs[k]).unwrap());
        }
        assert_eq!(trace.cycles.len(), inputs.len() + trace.latency_cycles as usize);
        by_strategy.push(trace.outputs.iter().map(|o| o.2.clone()).collect::<Vec<_>>());
    }
    assert_eq!(by_strategy[0], by_strategy[1]);
    assert!(simulate_pipeline(&nl, PipelineStrategy::Combined, &[]).is_err());
}

#[test]
fn hdr_preset_takes_six_cycles() {
    let net = TrainedNetwork::init(&preset("hdr").unwrap()).unwrap();
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    let r = latency_report(&nl, PipelineStrategy::Combined, 1.0).unwrap();
    assert_eq!(r.cycles, 6);
    assert_eq!(latency_report(&nl, PipelineStrategy::PerLayer, 1.0).unwrap().cycles, 12);
}

#[test]
fn latency_in_time() {
    let (_, nl) = compiled(&[5, 3, 2], 2, 2, 2, 1);
    let r = latency_report(&nl, PipelineStrategy::Combined, 2.05).unwrap();
    assert_eq!(r.cycles, 3);
    assert!((r.latency_ns - 6.15).abs() < 1e-12);
    let p = 1.7;
    assert!((latency_report(&nl, PipelineStrategy::PerLayer, p).unwrap().latency_ns - 6.0 * p).abs() < 1e-12);
    assert!(latency_report(&nl, PipelineStrategy::Combined, 0.0).is_err());
    assert!(latency_report(&nl, PipelineStrategy::Combined, -1.0).is_err());

    let empty = Netlist { layers: Vec::new(), ..nl };
    assert_eq!(latency_report(&empty, PipelineStrategy::PerLayer, 3.0).unwrap().cycles, 0);
    let trace = simulate_pipeline(&empty, PipelineStrategy::Combined, &[vec![1, 2, 3, 0]]).unwrap();
    assert_eq!(trace.outputs[0], (0, 0, vec![1, 2, 3, 0]));
}

#[test]
fn fresh_net_passes_exhaustively() {
    // beta = 1, F = 2: 4 input bits.
    let net = common::perturbed(&common::config(4, &[3, 2], 1, 2, 2, 2, 5));
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    for s in [PipelineStrategy::Combined, PipelineStrategy::PerLayer] {
        let rtl = emit_rtl(&nl, s).concat();
        let opts = EquivalenceOptions { strategy: s, ..Default::default() };
        let report = check_equivalence(&net, &nl, &rtl, &opts).unwrap();
        assert!(report.pass && report.exhaustive, "{report:?}");
        assert_eq!(report.inputs_checked, 16);
        assert!(report.counterexamples.is_empty());
    }
}

#[test]
fn two_layer_net_matches_reference_on_all_inputs() {
    let (net, nl) = compiled(&[6, 3], 3, 3, 2, 12);
    let rtl = emit_rtl(&nl, PipelineStrategy::PerLayer).concat();
    let opts = EquivalenceOptions { strategy: PipelineStrategy::PerLayer, ..Default::default() };
    let report = check_equivalence(&net, &nl, &rtl, &opts).unwrap();
    assert!(report.pass && report.exhaustive);
    assert_eq!(report.inputs_checked, 1 << 12);
}

#[test]
fn flipped_table_bit_is_reported_with_offending_inputs() {
    // Single layer, A = 1: each input hits exactly one entry per neuron.
    let net = common::perturbed(&common::config(4, &[2], 2, 2, 1, 1, 31));
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    let rtl = emit_rtl(&nl, PipelineStrategy::Combined).concat();
    let mut bad = nl.clone();
    let entry = 6usize;
    bad.layers[0].neurons[1].subs[0].table.entries[entry] ^= 1;
    let src = nl.layers[0].neurons[1].subs[0].sources.clone();
    let report = check_equivalence(&net, &bad, &rtl, &EquivalenceOptions::default()).unwrap();
    assert!(!report.pass);
    assert_eq!(report.table_mismatches.len(), 1);
    assert_eq!(report.table_mismatches[0].neuron, 1);
    let hits = |input: &Vec<u16>| (input[src[0] as usize] as usize) | ((input[src[1] as usize] as usize) << 2) == entry;
    let reference: Vec<_> = report.counterexamples.iter().filter(|c| c.check == Check::ReferenceVsNetlist).collect();
    // 2 free words of 2 bits: 16 inputs reach that entry.
    assert_eq!(reference.len(), 16);
    assert!(reference.iter().all(|c| hits(&c.input)));
    assert!(reference.iter().all(|c| c.expected[1] ^ c.got[1] == 1 && c.expected[0] == c.got[0]));
}

#[test]
fn jsc_m_lite_sampled_equivalence() {
    let net = common::perturbed(&preset("jsc-m-lite").unwrap());
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    let rtl = emit_rtl(&nl, PipelineStrategy::Combined).concat();
    let opts = EquivalenceOptions { samples: 10_000, seed: 3, ..Default::default() };
    let report = check_equivalence(&net, &nl, &rtl, &opts).unwrap();
    assert!(report.pass && !report.exhaustive, "{report:?}");
    assert_eq!(report.inputs_checked, 10_000);
}
