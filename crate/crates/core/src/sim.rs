//! Bit-exact netlist evaluation, register-transfer pipeline simulation and
//! three-way equivalence checking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineStrategy;
use crate::error::{Error, Result};
use crate::netlist::{NetLayer, Netlist, Provenance};
use crate::network::TrainedNetwork;
use crate::poly::{enumerate_monomials, neuron_preactivation};
use crate::quant::{fold_batchnorm, quantize};
use crate::rng::SeededRng;
use crate::rtl::parse_back;

/// One combinational block between two register boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "layer", rename_all = "kebab-case")]
pub enum StageOp {
    Poly(usize),
    Adder(usize),
    /// Poly followed by the adder (if any) without a register between them.
    Fused(usize),
}

pub fn stage_ops(netlist: &Netlist, strategy: PipelineStrategy) -> Vec<StageOp> {
    let mut ops = Vec::new();
    for (l, layer) in netlist.layers.iter().enumerate() {
        if layer.has_adder() && strategy == PipelineStrategy::PerLayer {
            ops.push(StageOp::Poly(l));
            ops.push(StageOp::Adder(l));
        } else {
            ops.push(StageOp::Fused(l));
        }
    }
    ops
}

fn poly_stage(layer: &NetLayer, words: &[u16]) -> Vec<u16> {
    let mut out = Vec::with_capacity(layer.width * layer.adder);
    for neuron in &layer.neurons {
        for sub in &neuron.subs {
            let mut idx = 0usize;
            for (j, &s) in sub.sources.iter().enumerate() {
                idx |= (words[s as usize] as usize) << (j as u32 * layer.in_bits);
            }
            out.push(sub.table.lookup(idx));
        }
    }
    out
}

fn adder_stage(layer: &NetLayer, subs: &[u16]) -> Vec<u16> {
    let sub_bits = layer.sub_bits();
    layer
        .neurons
        .iter()
        .zip(subs.chunks(layer.adder))
        .map(|(neuron, chunk)| {
            let table = neuron.adder.as_ref().expect("adder layer has adder tables");
            let mut idx = 0usize;
            for (a, &w) in chunk.iter().enumerate() {
                idx |= (w as usize) << (a as u32 * sub_bits);
            }
            table.lookup(idx)
        })
        .collect()
}

fn apply(netlist: &Netlist, op: StageOp, words: &[u16]) -> Vec<u16> {
    match op {
        StageOp::Poly(l) => poly_stage(&netlist.layers[l], words),
        StageOp::Adder(l) => adder_stage(&netlist.layers[l], words),
        StageOp::Fused(l) => {
            let layer = &netlist.layers[l];
            let subs = poly_stage(layer, words);
            if layer.has_adder() {
                adder_stage(layer, &subs)
            } else {
                subs
            }
        }
    }
}

fn check_input(netlist: &Netlist, input: &[u16]) -> Result<()> {
    if input.len() != netlist.input_width {
        return Err(Error::Dimension(format!(
            "input has {} words, netlist expects {}",
            input.len(),
            netlist.input_width
        )));
    }
    if let Some(i) = input.iter().position(|&w| (w as u32) >> netlist.input_bits != 0) {
        return Err(Error::Dimension(format!(
            "input word {i} = {} does not fit in {} bits",
            input[i], netlist.input_bits
        )));
    }
    Ok(())
}

/// Combinational evaluation: table lookups layer by layer.
pub fn eval_netlist(netlist: &Netlist, input: &[u16]) -> Result<Vec<u16>> {
    check_input(netlist, input)?;
    let mut words = input.to_vec();
    for l in 0..netlist.layers.len() {
        words = apply(netlist, StageOp::Fused(l), &words);
    }
    Ok(words)
}

/// Output words as signed (or unsigned) integer codes.
pub fn decode_outputs(netlist: &Netlist, raw: &[u16]) -> Vec<i64> {
    let bits = netlist.output_bits();
    raw.iter()
        .map(|&w| {
            let v = w as i64;
            if netlist.output_signed && v >= 1 << (bits - 1) {
                v - (1 << bits)
            } else {
                v
            }
        })
        .collect()
}

/// Contents of one pipeline register: which stream item it holds and its words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterValue {
    pub item: usize,
    pub words: Vec<u16>,
}

/// Free-running pipeline, one register bank per stage, no stalls.
pub struct Pipeline<'a> {
    netlist: &'a Netlist,
    ops: Vec<StageOp>,
    regs: Vec<Option<RegisterValue>>,
    cycle: u64,
}

impl<'a> Pipeline<'a> {
    pub fn new(netlist: &'a Netlist, strategy: PipelineStrategy) -> Self {
        let ops = stage_ops(netlist, strategy);
        let regs = vec![None; ops.len()];
        Self { netlist, ops, regs, cycle: 0 }
    }

    pub fn latency(&self) -> usize {
        self.ops.len()
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn registers(&self) -> &[Option<RegisterValue>] {
        &self.regs
    }

    /// Output visible during the current cycle given this cycle's input.
    pub fn output(&self, input: Option<&RegisterValue>) -> Option<RegisterValue> {
        match self.regs.last() {
            Some(r) => r.clone(),
            None => input.cloned(),
        }
    }

    /// Rising clock edge: every register loads its stage's function of the
    /// previous register's old value; the first loads from `input`.
    pub fn clock(&mut self, input: Option<RegisterValue>) {
        for k in (0..self.regs.len()).rev() {
            let src = if k == 0 { input.clone() } else { self.regs[k - 1].take() };
            self.regs[k] = src.map(|r| RegisterValue { item: r.item, words: apply(self.netlist, self.ops[k], &r.words) });
        }
        self.cycle += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: u64,
    /// Stream item presented at the input this cycle.
    pub input: Option<usize>,
    pub registers: Vec<Option<RegisterValue>>,
    pub output: Option<RegisterValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub strategy: PipelineStrategy,
    pub stages: Vec<StageOp>,
    pub cycles: Vec<CycleRecord>,
    /// `(cycle, item, words)` in emission order.
    pub outputs: Vec<(u64, usize, Vec<u16>)>,
    /// Cycles from presenting an item to seeing it at the output.
    pub latency_cycles: u64,
}

impl SimTrace {
    pub fn latency_ns(&self, clock_period_ns: f64) -> f64 {
        self.latency_cycles as f64 * clock_period_ns
    }
}

/// Streams `inputs` through the pipeline, one new item per cycle, and runs until
/// the last item leaves. Every cycle's register contents are recorded.
pub fn simulate_pipeline(netlist: &Netlist, strategy: PipelineStrategy, inputs: &[Vec<u16>]) -> Result<SimTrace> {
    if inputs.is_empty() {
        return Err(Error::Invalid("input stream is empty".into()));
    }
    for input in inputs {
        check_input(netlist, input)?;
    }
    let mut pipe = Pipeline::new(netlist, strategy);
    let mut cycles = Vec::new();
    let mut outputs = Vec::new();
    let mut first_out = None;
    let total = inputs.len() + pipe.latency();
    for t in 0..total {
        let input = inputs.get(t).map(|w| RegisterValue { item: t, words: w.clone() });
        let out = pipe.output(input.as_ref());
        if let Some(o) = &out {
            first_out.get_or_insert(t as u64);
            outputs.push((t as u64, o.item, o.words.clone()));
        }
        cycles.push(CycleRecord {
            cycle: t as u64,
            input: input.as_ref().map(|r| r.item),
            registers: pipe.registers().to_vec(),
            output: out,
        });
        pipe.clock(input);
    }
    Ok(SimTrace {
        strategy,
        stages: pipe.ops.clone(),
        cycles,
        outputs,
        latency_cycles: first_out.unwrap_or(0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub strategy: PipelineStrategy,
    pub cycles: u64,
    pub clock_period_ns: f64,
    pub latency_ns: f64,
}

pub fn latency_report(netlist: &Netlist, strategy: PipelineStrategy, clock_period_ns: f64) -> Result<LatencySummary> {
    if !(clock_period_ns > 0.0 && clock_period_ns.is_finite()) {
        return Err(Error::Invalid(format!("clock period must be positive, got {clock_period_ns}")));
    }
    let trace = simulate_pipeline(netlist, strategy, &[vec![0; netlist.input_width]])?;
    Ok(LatencySummary {
        strategy,
        cycles: trace.latency_cycles,
        clock_period_ns,
        latency_ns: trace.latency_ns(clock_period_ns),
    })
}

/// Default exhaustive-check bound, in total input bits.
pub const DEFAULT_EXHAUSTIVE_BITS: u32 = 16;
pub const DEFAULT_SAMPLES: usize = 100_000;
pub const SAMPLE_STREAM: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EquivalenceOptions {
    /// Enumerate every input when the total input width is at most this many bits.
    pub exhaustive_bits: u32,
    /// Seeded random inputs otherwise.
    pub samples: usize,
    pub seed: u64,
    pub strategy: PipelineStrategy,
}

impl Default for EquivalenceOptions {
    fn default() -> Self {
        Self {
            exhaustive_bits: DEFAULT_EXHAUSTIVE_BITS,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            strategy: PipelineStrategy::Combined,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    ReferenceVsNetlist,
    RtlVsNetlist,
    PipelineVsNetlist,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub check: Check,
    pub input: Vec<u16>,
    pub expected: Vec<u16>,
    pub got: Vec<u16>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub pass: bool,
    pub exhaustive: bool,
    pub inputs_checked: usize,
    pub mismatches: usize,
    /// Up to [`MAX_COUNTEREXAMPLES`] per check, in input order.
    pub counterexamples: Vec<Counterexample>,
    /// Units whose parsed-back RTL table differs from the netlist.
    pub table_mismatches: Vec<Provenance>,
    pub topology_matches: bool,
    pub rtl_error: Option<String>,
    pub pipeline_latency: u64,
}

pub const MAX_COUNTEREXAMPLES: usize = 16;

/// Inputs covered by an equivalence run: every code when the input space is
/// small enough, seeded samples otherwise.
pub fn equivalence_inputs(netlist: &Netlist, opts: &EquivalenceOptions) -> (bool, Vec<Vec<u16>>) {
    let bits = netlist.input_width as u64 * netlist.input_bits as u64;
    let mask = (1u64 << netlist.input_bits) - 1;
    if bits <= opts.exhaustive_bits as u64 {
        let all = (0..1u64 << bits)
            .map(|idx| {
                (0..netlist.input_width)
                    .map(|j| ((idx >> (j as u64 * netlist.input_bits as u64)) & mask) as u16)
                    .collect()
            })
            .collect();
        return (true, all);
    }
    let mut rng = SeededRng::derived(opts.seed, SAMPLE_STREAM);
    let samples = (0..opts.samples)
        .map(|_| (0..netlist.input_width).map(|_| rng.below(mask + 1) as u16).collect())
        .collect();
    (false, samples)
}

fn structure_matches(a: &Netlist, b: &Netlist) -> bool {
    a.name == b.name
        && a.input_width == b.input_width
        && a.input_bits == b.input_bits
        && a.output_signed == b.output_signed
        && a.layers.len() == b.layers.len()
        && a.layers.iter().zip(&b.layers).all(|(x, y)| {
            x.in_width == y.in_width
                && x.width == y.width
                && x.in_bits == y.in_bits
                && x.out_bits == y.out_bits
                && x.fanin == y.fanin
                && x.adder == y.adder
                && x.neurons.len() == y.neurons.len()
                && x.neurons.iter().zip(&y.neurons).all(|(p, q)| {
                    p.subs.len() == q.subs.len()
                        && p.adder.is_some() == q.adder.is_some()
                        && p.subs.iter().zip(&q.subs).all(|(s, t)| s.sources == t.sources)
                })
        })
}

/// Reference model vs netlist vs parsed-back RTL vs pipeline timing.
///
/// Mismatches are collected, never hidden: the report lists offending inputs.
/// Inputs are sharded across threads; results are merged in input order.
pub fn check_equivalence(
    net: &TrainedNetwork,
    netlist: &Netlist,
    rtl_text: &str,
    opts: &EquivalenceOptions,
) -> Result<EquivalenceReport> {
    let ev = net.evaluator()?;
    let out_spec = net
        .layers
        .last()
        .map(|l| l.output_spec)
        .ok_or_else(|| Error::Invalid("network has no layers".into()))?;
    let (exhaustive, inputs) = equivalence_inputs(netlist, opts);

    let (parsed, rtl_error) = match parse_back(rtl_text) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut table_mismatches = Vec::new();
    let mut topology_matches = false;
    if let Some(p) = &parsed {
        topology_matches = structure_matches(p, netlist);
        if topology_matches {
            for (x, y) in netlist.tables().zip(p.tables()) {
                if x != y {
                    table_mismatches.push(x.provenance);
                }
            }
        }
    }
    let parsed_usable = parsed.as_ref().filter(|_| topology_matches);

    let per_input: Vec<(Option<Counterexample>, Option<Counterexample>)> = inputs
        .par_iter()
        .map(|input| -> Result<_> {
            let got = eval_netlist(netlist, input)?;
            let codes: Vec<i64> = input.iter().map(|&w| w as i64).collect();
            let expected: Vec<u16> = ev.forward_codes(&codes)?.iter().map(|&c| out_spec.to_bits(c)).collect();
            let reference = (expected != got).then(|| Counterexample {
                check: Check::ReferenceVsNetlist,
                input: input.clone(),
                expected: expected.clone(),
                got: got.clone(),
            });
            let rtl = match parsed_usable {
                Some(p) => {
                    let r = eval_netlist(p, input)?;
                    (r != got).then(|| Counterexample {
                        check: Check::RtlVsNetlist,
                        input: input.clone(),
                        expected: got.clone(),
                        got: r,
                    })
                }
                None => None,
            };
            Ok((reference, rtl))
        })
        .collect::<Result<_>>()?;

    let mut counterexamples = Vec::new();
    let mut mismatches = 0;
    for pick in [0usize, 1] {
        let mut kept = 0;
        for pair in &per_input {
            let cx = if pick == 0 { &pair.0 } else { &pair.1 };
            if let Some(cx) = cx {
                mismatches += 1;
                if kept < MAX_COUNTEREXAMPLES {
                    counterexamples.push(cx.clone());
                    kept += 1;
                }
            }
        }
    }

    // pipeline: item k must appear at cycle k + latency with eval_netlist's value
    let mut pipe = Pipeline::new(netlist, opts.strategy);
    let latency = pipe.latency();
    let mut kept = 0;
    for t in 0..inputs.len() + latency {
        let input = inputs.get(t).map(|w| RegisterValue { item: t, words: w.clone() });
        if t >= latency {
            let k = t - latency;
            let expected = eval_netlist(netlist, &inputs[k])?;
            let out = pipe.output(input.as_ref());
            let ok = matches!(&out, Some(o) if o.item == k && o.words == expected);
            if !ok {
                mismatches += 1;
                if kept < MAX_COUNTEREXAMPLES {
                    counterexamples.push(Counterexample {
                        check: Check::PipelineVsNetlist,
                        input: inputs[k].clone(),
                        expected,
                        got: out.map(|o| o.words).unwrap_or_default(),
                    });
                    kept += 1;
                }
            }
        }
        pipe.clock(input);
    }

    let pass = mismatches == 0 && rtl_error.is_none() && topology_matches && table_mismatches.is_empty();
    Ok(EquivalenceReport {
        pass,
        exhaustive,
        inputs_checked: inputs.len(),
        mismatches,
        counterexamples,
        table_mismatches,
        topology_matches,
        rtl_error,
        pipeline_latency: latency as u64,
    })
}

/// Result of re-deriving every table entry from the model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableAudit {
    pub units: usize,
    pub entries_checked: u64,
    /// `(unit, entry index)` for every disagreeing entry, in netlist order.
    pub mismatches: Vec<(Provenance, usize)>,
    /// Units whose wiring differs from the model's connectivity.
    pub wiring_mismatches: Vec<Provenance>,
}

impl TableAudit {
    pub fn pass(&self) -> bool {
        self.mismatches.is_empty() && self.wiring_mismatches.is_empty()
    }
}

/// Recomputes every entry of every table by direct arithmetic on the model
/// (polynomial value, quantizers, folded batch norm) without the table
/// generator, and compares. Units are audited in parallel.
/// Per unit: bad entries, wiring ok, entries checked.
type AuditRow = (Vec<(Provenance, usize)>, bool, u64);

pub fn audit_tables(net: &TrainedNetwork, netlist: &Netlist) -> Result<TableAudit> {
    net.check()?;
    let geometry = net.geometry();
    if geometry.len() != netlist.layers.len() {
        return Err(Error::Dimension(format!(
            "model has {} layers, netlist {}",
            geometry.len(),
            netlist.layers.len()
        )));
    }
    let mut units = Vec::new();
    for (geo, layer) in geometry.iter().zip(&netlist.layers) {
        if layer.width != geo.width || layer.adder != geo.adder || layer.fanin != geo.fanin {
            return Err(Error::Dimension(format!("layer {} shape differs from the model", geo.index)));
        }
        for (n, neuron) in layer.neurons.iter().enumerate() {
            for (a, sub) in neuron.subs.iter().enumerate() {
                units.push((*geo, n, Some(a), sub.sources.as_slice(), &sub.table));
            }
            if let Some(t) = &neuron.adder {
                units.push((*geo, n, None, &[][..], t));
            }
        }
    }
    let results: Vec<AuditRow> = units
        .par_iter()
        .map(|&(geo, n, group, sources, table)| -> Result<_> {
            let params = &net.layers[geo.index];
            let np = &params.neurons[n];
            let (a, c) = fold_batchnorm(&np.bn);
            let finish = |v: f64| {
                let y = a * v + c;
                let code = if geo.is_output { quantize(y, &params.output_spec) } else { quantize(y.max(0.0), &params.output_spec) };
                params.output_spec.to_bits(code)
            };
            let mut bad = Vec::new();
            let mut wiring_ok = true;
            match group {
                Some(g) => {
                    wiring_ok = sources == net.connectivity.group(geo.index, n, g);
                    let basis = enumerate_monomials(geo.fanin, geo.degree)?;
                    let mask = (1usize << geo.in_bits) - 1;
                    for (idx, &entry) in table.entries.iter().enumerate() {
                        let x: Vec<f64> = (0..geo.fanin)
                            .map(|j| params.input_spec.value_of_bits(((idx >> (j * geo.in_bits as usize)) & mask) as u16))
                            .collect();
                        let pre = neuron_preactivation(&basis, &np.subs[g], &x)?;
                        let want = if geo.has_adder() {
                            params.sub_spec.to_bits(quantize(pre, &params.sub_spec))
                        } else {
                            finish(pre)
                        };
                        if want != entry {
                            bad.push((table.provenance, idx));
                        }
                    }
                }
                None => {
                    let w = params.sub_spec.bits as usize;
                    for (idx, &entry) in table.entries.iter().enumerate() {
                        let sum: f64 = (0..geo.adder)
                            .map(|k| params.sub_spec.value_of_bits(((idx >> (k * w)) & ((1 << w) - 1)) as u16))
                            .sum();
                        if finish(sum) != entry {
                            bad.push((table.provenance, idx));
                        }
                    }
                }
            }
            Ok((bad, wiring_ok, table.entries.len() as u64))
        })
        .collect::<Result<_>>()?;
    let mut audit = TableAudit { units: units.len(), entries_checked: 0, mismatches: Vec::new(), wiring_mismatches: Vec::new() };
    for ((bad, wiring_ok, n), unit) in results.into_iter().zip(&units) {
        audit.entries_checked += n;
        audit.mismatches.extend(bad);
        if !wiring_ok {
            audit.wiring_mismatches.push(unit.4.provenance);
        }
    }
    Ok(audit)
}
