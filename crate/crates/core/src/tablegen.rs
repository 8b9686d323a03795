//! Exhaustive truth-table enumeration and lookup-table resource accounting.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{LayerGeometry, PipelineStrategy};
use crate::error::{Error, Result};
use crate::netlist::{NetLayer, NetNeuron, Netlist, Provenance, SubUnit, TruthTable, UnitKind, NETLIST_FORMAT, NETLIST_VERSION};
use crate::network::{neuron_code, sub_code, Evaluator, TrainedNetwork};

/// Default per-unit enumeration cap, in input bits (2^20 entries).
pub const DEFAULT_CAP_BITS: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TableOptions {
    pub cap_bits: u32,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { cap_bits: DEFAULT_CAP_BITS }
    }
}

struct LayerCtx<'e, 'n> {
    ev: &'e Evaluator<'n>,
    layer: usize,
    geo: LayerGeometry,
    /// Dequantized value of every input word pattern.
    word_values: Vec<f64>,
}

impl<'e, 'n> LayerCtx<'e, 'n> {
    fn new(ev: &'e Evaluator<'n>, layer: usize) -> Result<Self> {
        let net = ev.network();
        let geo = *net
            .geometry()
            .get(layer)
            .ok_or_else(|| Error::Invalid(format!("layer {layer} out of range")))?;
        let spec = net.layers[layer].input_spec;
        let word_values = (0..1u32 << geo.in_bits).map(|raw| spec.value_of_bits(raw as u16)).collect();
        Ok(Self { ev, layer, geo, word_values })
    }

    fn neuron_in_range(&self, neuron: usize) -> Result<()> {
        if neuron >= self.geo.width {
            return Err(Error::Invalid(format!("neuron {neuron} out of range for layer {}", self.layer)));
        }
        Ok(())
    }

    fn sub_table(&self, neuron: usize, group: usize, cap_bits: u32) -> Result<TruthTable> {
        self.neuron_in_range(neuron)?;
        if group >= self.geo.adder {
            return Err(Error::Invalid(format!("group {group} out of range (A = {})", self.geo.adder)));
        }
        let geo = &self.geo;
        let input_bits = geo.sub_input_bits();
        if input_bits > cap_bits {
            return Err(Error::EnumerationCap {
                kind: "poly",
                layer: self.layer,
                neuron,
                input_bits,
                cap_bits,
                detail: format!("beta={} F={}", geo.in_bits, geo.fanin),
            });
        }
        let net = self.ev.network();
        let params = &net.layers[self.layer];
        let np = &params.neurons[neuron];
        let basis = self.ev.basis(self.layer);
        let out_spec = if geo.has_adder() { params.sub_spec } else { params.output_spec };
        let word_mask = (1usize << geo.in_bits) - 1;
        let mut x = vec![0.0; geo.fanin];
        let mut scratch = vec![0.0; basis.len()];
        let entries = (0..1usize << input_bits)
            .map(|idx| {
                for (j, xj) in x.iter_mut().enumerate() {
                    *xj = self.word_values[(idx >> (j as u32 * geo.in_bits)) & word_mask];
                }
                let code = sub_code(params, geo.is_output, basis, np, group, &x, &mut scratch);
                out_spec.to_bits(code)
            })
            .collect();
        Ok(TruthTable {
            input_bits,
            output_bits: out_spec.bits,
            provenance: Provenance { layer: self.layer, neuron, kind: UnitKind::PolySub, group },
            entries,
        })
    }

    fn adder_table(&self, neuron: usize, cap_bits: u32) -> Result<TruthTable> {
        self.neuron_in_range(neuron)?;
        let geo = &self.geo;
        if !geo.has_adder() {
            return Err(Error::Invalid(format!(
                "layer {} has A = 1; batch norm and activation live in the poly table",
                self.layer
            )));
        }
        let input_bits = geo.adder_input_bits();
        if input_bits > cap_bits {
            return Err(Error::EnumerationCap {
                kind: "adder",
                layer: self.layer,
                neuron,
                input_bits,
                cap_bits,
                detail: format!("beta={} A={}", geo.out_bits, geo.adder),
            });
        }
        let params = &self.ev.network().layers[self.layer];
        let np = &params.neurons[neuron];
        let sub_bits = params.sub_spec.bits;
        let mask = (1usize << sub_bits) - 1;
        let mut codes = vec![0i64; geo.adder];
        let entries = (0..1usize << input_bits)
            .map(|idx| {
                for (a, c) in codes.iter_mut().enumerate() {
                    *c = params.sub_spec.from_bits(((idx >> (a as u32 * sub_bits)) & mask) as u16);
                }
                params.output_spec.to_bits(neuron_code(params, geo.is_output, np, &codes))
            })
            .collect();
        Ok(TruthTable {
            input_bits,
            output_bits: params.output_spec.bits,
            provenance: Provenance { layer: self.layer, neuron, kind: UnitKind::Adder, group: 0 },
            entries,
        })
    }
}

/// Table for poly sub-neuron `group` of `neuron` in `layer`.
///
/// Input: F words of the layer's input width, `sources[0]` least significant.
/// Output: the signed sub-neuron code, or the neuron's output code when A = 1.
pub fn build_subneuron_table(
    net: &TrainedNetwork,
    layer: usize,
    neuron: usize,
    group: usize,
    opts: TableOptions,
) -> Result<TruthTable> {
    let ev = net.evaluator()?;
    LayerCtx::new(&ev, layer)?.sub_table(neuron, group, opts.cap_bits)
}

/// Table for the adder unit of `neuron`: A signed sub-neuron words in, the
/// neuron's output word out.
pub fn build_adder_table(net: &TrainedNetwork, layer: usize, neuron: usize, opts: TableOptions) -> Result<TruthTable> {
    let ev = net.evaluator()?;
    LayerCtx::new(&ev, layer)?.adder_table(neuron, opts.cap_bits)
}

/// Enumerates every unit of the network. Units are built in parallel and
/// assembled by position, so the result does not depend on scheduling.
pub fn compile_network(net: &TrainedNetwork, opts: TableOptions) -> Result<Netlist> {
    net.check()?;
    let ev = net.evaluator()?;
    let mut layers = Vec::with_capacity(net.layers.len());
    for geo in net.geometry() {
        let ctx = LayerCtx::new(&ev, geo.index)?;
        let neurons = (0..geo.width)
            .into_par_iter()
            .map(|n| {
                let subs = (0..geo.adder)
                    .map(|a| {
                        Ok(SubUnit {
                            sources: net.connectivity.group(geo.index, n, a).to_vec(),
                            table: ctx.sub_table(n, a, opts.cap_bits)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let adder = if geo.has_adder() { Some(ctx.adder_table(n, opts.cap_bits)?) } else { None };
                Ok(NetNeuron { subs, adder })
            })
            .collect::<Result<Vec<_>>>()?;
        layers.push(NetLayer {
            in_width: geo.in_width,
            width: geo.width,
            in_bits: geo.in_bits,
            out_bits: geo.out_bits,
            fanin: geo.fanin,
            adder: geo.adder,
            neurons,
        });
    }
    let name = identifier(&net.config.name);
    Ok(Netlist {
        format: NETLIST_FORMAT.into(),
        version: NETLIST_VERSION,
        name,
        input_width: net.config.input_width,
        input_bits: net.config.input_bits(),
        output_signed: true,
        layers,
    })
}

/// Netlist name usable as a Verilog identifier prefix: characters outside
/// `[A-Za-z0-9_]` become `_`, a leading digit gets a `lutnet_` prefix, and an
/// empty name becomes `lutnet`.
pub fn identifier(name: &str) -> String {
    let cleaned: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if cleaned.is_empty() {
        "lutnet".into()
    } else if cleaned.starts_with(|c: char| c.is_ascii_digit()) {
        format!("lutnet_{cleaned}")
    } else {
        cleaned
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableMode {
    /// One table over F words.
    PolyLut,
    /// A tables over F words each plus an adder over A widened words.
    PolyLutAdd,
    /// One table over all A*F words.
    SingleTableEquivalent,
}

fn pow2(exponent: u64) -> Result<u64> {
    if exponent >= 64 {
        Err(Error::EntryOverflow { exponent })
    } else {
        Ok(1u64 << exponent)
    }
}

/// Lookup table entries per neuron. The polynomial degree changes what the
/// tables contain, never how many entries they have.
pub fn entry_count(beta: u32, fanin: usize, _degree: u32, adder: usize, mode: TableMode) -> Result<u64> {
    let (b, f, a) = (beta as u64, fanin as u64, adder as u64);
    let poly_bits = b.checked_mul(f).ok_or(Error::EntryOverflow { exponent: u64::MAX })?;
    match mode {
        TableMode::PolyLut => pow2(poly_bits),
        TableMode::PolyLutAdd => {
            let subs = a.checked_mul(pow2(poly_bits)?).ok_or(Error::EntryOverflow { exponent: poly_bits })?;
            let adder_bits = a * (b + 1);
            subs.checked_add(pow2(adder_bits)?).ok_or(Error::EntryOverflow { exponent: adder_bits })
        }
        TableMode::SingleTableEquivalent => pow2(poly_bits.saturating_mul(a)),
    }
}

/// Entries per neuron for one layer, split into its two stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronEntries {
    pub poly_bits: u32,
    pub subs: usize,
    /// Adder input bits, when the layer has an adder.
    pub adder_bits: Option<u32>,
}

impl NeuronEntries {
    pub fn total(&self) -> Result<u64> {
        let poly = pow2(self.poly_bits as u64)?;
        let adder = self.adder_bits.map_or(Ok(0), |b| pow2(b as u64))?;
        (self.subs as u64)
            .checked_mul(poly)
            .and_then(|p| p.checked_add(adder))
            .ok_or(Error::EntryOverflow { exponent: self.poly_bits as u64 })
    }
}

impl fmt::Display for NeuronEntries {
    /// Compact formula, e.g. `2^12×2 + 2^6`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2^{}", self.poly_bits)?;
        if self.subs > 1 {
            write!(f, "×{}", self.subs)?;
        }
        if let Some(b) = self.adder_bits {
            write!(f, " + 2^{b}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerResources {
    pub layer: usize,
    pub neurons: usize,
    pub per_neuron: NeuronEntries,
    pub entries: u64,
    pub single_table_entries: u64,
    pub stages_per_layer: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub layers: Vec<LayerResources>,
    pub total_entries: u64,
    pub total_single_table_entries: u64,
    pub latency_combined: u32,
    pub latency_per_layer: u32,
}

impl ResourceReport {
    pub fn latency(&self, strategy: PipelineStrategy) -> u32 {
        match strategy {
            PipelineStrategy::Combined => self.latency_combined,
            PipelineStrategy::PerLayer => self.latency_per_layer,
        }
    }
}

fn layer_resources(geo: &LayerGeometry) -> Result<LayerResources> {
    // in_bits on the poly side, out_bits + 1 on the adder side; these differ
    // from the hidden beta only at the first and last layers
    let per_neuron = NeuronEntries {
        poly_bits: geo.sub_input_bits(),
        subs: geo.adder,
        adder_bits: geo.has_adder().then(|| geo.adder_input_bits()),
    };
    let per = per_neuron.total()?;
    let single = entry_count(geo.in_bits, geo.fanin, geo.degree, geo.adder, TableMode::SingleTableEquivalent)?;
    let mul = |v: u64| v.checked_mul(geo.width as u64).ok_or(Error::EntryOverflow { exponent: 64 });
    Ok(LayerResources {
        layer: geo.index,
        neurons: geo.width,
        per_neuron,
        entries: mul(per)?,
        single_table_entries: mul(single)?,
        stages_per_layer: if geo.has_adder() { 2 } else { 1 },
    })
}

/// Resource and latency model straight from the architecture.
pub fn resource_report(geometry: &[LayerGeometry]) -> Result<ResourceReport> {
    let layers = geometry.iter().map(layer_resources).collect::<Result<Vec<_>>>()?;
    let sum = |f: fn(&LayerResources) -> u64| {
        layers
            .iter()
            .try_fold(0u64, |acc, l| acc.checked_add(f(l)))
            .ok_or(Error::EntryOverflow { exponent: 64 })
    };
    Ok(ResourceReport {
        total_entries: sum(|l| l.entries)?,
        total_single_table_entries: sum(|l| l.single_table_entries)?,
        latency_combined: layers.len() as u32,
        latency_per_layer: layers.iter().map(|l| l.stages_per_layer).sum(),
        layers,
    })
}

impl Netlist {
    /// Layer shapes as recorded in the netlist. The degree is not stored and
    /// reads as 1; it does not affect table sizes.
    pub fn geometry(&self) -> Vec<LayerGeometry> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| LayerGeometry {
                index: i,
                in_width: l.in_width,
                width: l.width,
                in_bits: l.in_bits,
                out_bits: l.out_bits,
                fanin: l.fanin,
                adder: l.adder,
                degree: 1,
                is_output: i + 1 == self.layers.len(),
            })
            .collect()
    }

    /// Resource model recomputed from the netlist's own structure.
    pub fn resource_report(&self) -> Result<ResourceReport> {
        resource_report(&self.geometry())
    }

    /// Entries actually materialized in the netlist.
    pub fn materialized_entries(&self) -> u64 {
        self.tables().map(|t| t.len() as u64).sum()
    }
}
