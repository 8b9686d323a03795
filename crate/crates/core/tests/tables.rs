mod common;

use lutnet_core::netlist::UnitKind;
use lutnet_core::quant::{BatchNormAffine, QuantSpec};
use lutnet_core::sim::audit_tables;
use lutnet_core::tablegen::{build_adder_table, build_subneuron_table, compile_network, TableOptions};
use lutnet_core::{Error, TrainedNetwork};

#[test]
fn tiny_poly_table_by_direct_arithmetic() {
    // beta = 1, F = 2, D = 1: four entries.
    let cfg = common::config(2, &[1], 1, 2, 1, 2, 4);
    let mut net = TrainedNetwork::init(&cfg).unwrap();
    net.layers[0].sub_spec = QuantSpec::signed(2, 0.25);
    net.layers[0].neurons[0].subs[0].weights = vec![-0.2, 0.45, -0.3];
    let src = net.connectivity.group(0, 0, 0).to_vec();
    let t = build_subneuron_table(&net, 0, 0, 0, TableOptions::default()).unwrap();
    assert_eq!((t.input_bits, t.output_bits, t.len()), (2, 2, 4));
    // Entry index bit j is the value of sources[j].
    for idx in 0..4usize {
        let (x0, x1) = ((idx & 1) as f64, (idx >> 1) as f64);
        let pre: f64 = -0.2 + 0.45 * x0 - 0.3 * x1;
        let code = ((pre / 0.25).abs() + 0.5).floor().copysign(pre).clamp(-2.0, 1.0) as i64;
        assert_eq!(t.entries[idx], (code & 3) as u16, "idx {idx} (sources {src:?})");
    }
    assert_eq!(t.entries, vec![3, 1, 2, 0]);
}

#[test]
fn zero_weight_neuron_gives_constant_table() {
    let cfg = common::config(5, &[3, 2], 2, 3, 2, 2, 8);
    let mut net = TrainedNetwork::init(&cfg).unwrap();
    net.layers[0].neurons[1].subs[1].weights.iter_mut().for_each(|w| *w = 0.0);
    let t = build_subneuron_table(&net, 0, 1, 1, TableOptions::default()).unwrap();
    let zero = net.layers[0].sub_spec.to_bits(net.layers[0].sub_spec.quantize(0.0));
    assert!(t.entries.iter().all(|&e| e == zero));
}

#[test]
fn table_sizes() {
    let net = TrainedNetwork::init(&common::config(8, &[2], 2, 6, 1, 2, 1)).unwrap();
    let t = build_subneuron_table(&net, 0, 0, 0, TableOptions::default()).unwrap();
    assert_eq!(t.len(), 4096);
    assert_eq!(build_adder_table(&net, 0, 0, TableOptions::default()).unwrap().len(), 64);
    let net = TrainedNetwork::init(&common::config(8, &[2, 3], 3, 2, 1, 3, 1)).unwrap();
    let add = build_adder_table(&net, 0, 1, TableOptions::default()).unwrap();
    assert_eq!((add.len(), add.input_bits), (1 << 12, 12));
    assert_eq!(add.provenance.kind, UnitKind::Adder);
}

#[test]
fn identity_batch_norm_zero_inputs_give_zero() {
    let mut net = TrainedNetwork::init(&common::config(4, &[3, 2], 2, 2, 1, 2, 6)).unwrap();
    net.layers[0].neurons[2].bn = BatchNormAffine::identity();
    let t = build_adder_table(&net, 0, 2, TableOptions::default()).unwrap();
    assert_eq!(t.entries[0], 0);
}

#[test]
fn enumeration_cap_is_refused_with_parameters() {
    let net = TrainedNetwork::init(&common::config(8, &[2], 2, 6, 1, 2, 1)).unwrap();
    match build_subneuron_table(&net, 0, 0, 0, TableOptions { cap_bits: 10 }) {
        Err(e @ Error::EnumerationCap { .. }) => {
            assert_eq!(e.code(), "E_ENUM_CAP");
            assert!(e.to_string().contains("beta=2 F=6"), "{e}");
        }
        other => panic!("expected refusal, got {other:?}"),
    }
    let err = build_adder_table(&net, 0, 0, TableOptions { cap_bits: 5 }).unwrap_err();
    assert!(err.to_string().contains("beta=2 A=2"), "{err}");
    assert!(compile_network(&net, TableOptions { cap_bits: 10 }).is_err());
}

#[test]
fn a1_has_no_adder() {
    let net = TrainedNetwork::init(&common::config(4, &[3, 2], 2, 2, 1, 1, 6)).unwrap();
    assert!(build_adder_table(&net, 0, 0, TableOptions::default()).is_err());
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    for layer in &nl.layers {
        for n in &layer.neurons {
            assert_eq!(n.subs.len(), 1);
            assert!(n.adder.is_none());
        }
    }
}

#[test]
fn every_unit_matches_direct_arithmetic_over_desk_grid() {
    let mut units = 0;
    for beta in 1..=3u32 {
        for fanin in 1..=4usize {
            for adder in 1..=3usize {
                for degree in 1..=3u32 {
                    let seed = (beta * 100 + fanin as u32 * 10 + adder as u32 + degree * 1000) as u64;
                    let cfg = common::config(5, &[4, 3], beta, fanin, degree, adder, seed);
                    let net = common::perturbed(&cfg);
                    let nl = compile_network(&net, TableOptions::default()).unwrap();
                    let audit = audit_tables(&net, &nl).unwrap();
                    assert!(audit.pass(), "beta={beta} F={fanin} A={adder} D={degree}: {:?}", &audit.mismatches[..audit.mismatches.len().min(4)]);
                    units += audit.units;
                }
            }
        }
    }
    assert!(units > 1000);
}

#[test]
fn audit_catches_a_flipped_entry_and_rewiring() {
    let net = common::perturbed(&common::config(5, &[4, 3], 2, 2, 2, 2, 3));
    let mut nl = compile_network(&net, TableOptions::default()).unwrap();
    nl.layers[1].neurons[2].adder.as_mut().unwrap().entries[9] ^= 1;
    let audit = audit_tables(&net, &nl).unwrap();
    assert_eq!(audit.mismatches.len(), 1);
    assert_eq!(audit.mismatches[0].0.neuron, 2);
    assert_eq!(audit.mismatches[0].1, 9);
    nl.layers[0].neurons[0].subs[0].sources.swap(0, 1);
    assert_eq!(audit_tables(&net, &nl).unwrap().wiring_mismatches.len(), 1);
}

#[test]
fn compilation_is_order_and_thread_independent() {
    let net = common::perturbed(&common::config(6, &[5, 4, 3], 2, 3, 2, 2, 21));
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = single.install(|| compile_network(&net, TableOptions::default()).unwrap());
    let b = many.install(|| compile_network(&net, TableOptions::default()).unwrap());
    assert_eq!(a, b);
    // Building units one by one in reverse order gives the same tables.
    for l in (0..3).rev() {
        for n in (0..a.layers[l].width).rev() {
            for g in (0..2).rev() {
                let t = build_subneuron_table(&net, l, n, g, TableOptions::default()).unwrap();
                assert_eq!(t, a.layers[l].neurons[n].subs[g].table);
            }
            let t = build_adder_table(&net, l, n, TableOptions::default()).unwrap();
            assert_eq!(Some(t), a.layers[l].neurons[n].adder);
        }
    }
}

#[test]
fn jsc_m_lite_netlist_shape() {
    let net = TrainedNetwork::init(&lutnet_core::preset("jsc-m-lite").unwrap()).unwrap();
    let nl = compile_network(&net, TableOptions::default()).unwrap();
    let neurons: usize = nl.layers.iter().map(|l| l.width).sum();
    assert_eq!(neurons, 101);
    let tables = nl.tables().count();
    assert_eq!(tables, 101 * 3);
    let report = nl.resource_report().unwrap();
    assert_eq!(report.total_entries, nl.materialized_entries());
    assert_eq!(nl.name, "jsc_m_lite");
}
