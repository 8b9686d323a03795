//! Table netlists and their on-disk dump format.
//!
//! # Dump format (version 1)
//!
//! A JSON document:
//!
//! ```text
//! { "format": "lutnet-netlist", "version": 1, "name": ..., "input_width": N,
//!   "input_bits": B, "output_signed": bool,
//!   "layers": [ { "in_width", "width", "in_bits", "out_bits", "fanin", "adder",
//!                 "neurons": [ { "subs": [ { "sources": [...], "table": T } ],
//!                                "adder": T | null } ] } ] }
//! ```
//!
//! A table `T` is `{ "input_bits", "output_bits", "layer", "neuron", "kind", "group",
//! "entries" }` where `kind` is `"poly-sub"` or `"adder"` and `entries` is one
//! string of `2^input_bits` fixed-width lowercase hex fields, each
//! `ceil(output_bits / 4)` digits, entry 0 first.
//!
//! # Bit packing
//!
//! A table index concatenates its input words with the first word in the least
//! significant position: for a poly sub-neuron, word `j` (the value of
//! `sources[j]`) occupies bits `[j*in_bits, (j+1)*in_bits)`; for an adder, the
//! output of sub-neuron `a` occupies bits `[a*(out_bits+1), (a+1)*(out_bits+1))`.
//! Signed codes are stored as two's complement in their word width.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineStrategy;
use crate::error::{Error, Result};

pub const NETLIST_FORMAT: &str = "lutnet-netlist";
pub const NETLIST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitKind {
    PolySub,
    Adder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub layer: usize,
    pub neuron: usize,
    pub kind: UnitKind,
    /// Sub-neuron index; 0 for adders.
    pub group: usize,
}

/// Exhaustive map from every packed input code to an output bit pattern.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TableWire", try_from = "TableWire")]
pub struct TruthTable {
    pub input_bits: u32,
    pub output_bits: u32,
    pub provenance: Provenance,
    pub entries: Vec<u16>,
}

impl TruthTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, index: usize) -> u16 {
        self.entries[index]
    }

    pub fn check(&self) -> Result<()> {
        let expected = 1usize.checked_shl(self.input_bits).unwrap_or(0);
        if self.entries.len() != expected {
            return Err(Error::Dimension(format!(
                "table {:?} has {} entries, expected 2^{}",
                self.provenance,
                self.entries.len(),
                self.input_bits
            )));
        }
        let limit = 1u32 << self.output_bits;
        if let Some(i) = self.entries.iter().position(|&e| e as u32 >= limit) {
            return Err(Error::Dimension(format!(
                "table {:?} entry {i} does not fit in {} bits",
                self.provenance, self.output_bits
            )));
        }
        Ok(())
    }
}

fn hex_digits(bits: u32) -> usize {
    bits.div_ceil(4).max(1) as usize
}

#[derive(Serialize, Deserialize)]
struct TableWire {
    input_bits: u32,
    output_bits: u32,
    layer: usize,
    neuron: usize,
    kind: UnitKind,
    group: usize,
    entries: String,
}

impl From<TruthTable> for TableWire {
    fn from(t: TruthTable) -> Self {
        let width = hex_digits(t.output_bits);
        let mut entries = String::with_capacity(t.entries.len() * width);
        for &e in &t.entries {
            let _ = write!(entries, "{e:0width$x}");
        }
        let Provenance { layer, neuron, kind, group } = t.provenance;
        Self { input_bits: t.input_bits, output_bits: t.output_bits, layer, neuron, kind, group, entries }
    }
}

impl TryFrom<TableWire> for TruthTable {
    type Error = String;

    fn try_from(w: TableWire) -> std::result::Result<Self, String> {
        let width = hex_digits(w.output_bits);
        let digits = w.entries.as_bytes();
        if !digits.len().is_multiple_of(width) {
            return Err(format!("entry string length {} is not a multiple of {width}", digits.len()));
        }
        let entries = digits
            .chunks(width)
            .map(|chunk| {
                let s = std::str::from_utf8(chunk).map_err(|e| e.to_string())?;
                u16::from_str_radix(s, 16).map_err(|e| format!("bad table entry `{s}`: {e}"))
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(TruthTable {
            input_bits: w.input_bits,
            output_bits: w.output_bits,
            provenance: Provenance { layer: w.layer, neuron: w.neuron, kind: w.kind, group: w.group },
            entries,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubUnit {
    /// Previous-layer word indices, first index least significant.
    pub sources: Vec<u32>,
    pub table: TruthTable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetNeuron {
    pub subs: Vec<SubUnit>,
    pub adder: Option<TruthTable>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetLayer {
    pub in_width: usize,
    pub width: usize,
    pub in_bits: u32,
    pub out_bits: u32,
    pub fanin: usize,
    pub adder: usize,
    pub neurons: Vec<NetNeuron>,
}

impl NetLayer {
    pub fn has_adder(&self) -> bool {
        self.adder >= 2
    }

    /// Width of each poly sub-neuron output word.
    pub fn sub_bits(&self) -> u32 {
        if self.has_adder() {
            self.out_bits + 1
        } else {
            self.out_bits
        }
    }

    /// Register stages this layer contributes under `strategy`.
    pub fn stages(&self, strategy: PipelineStrategy) -> u32 {
        match strategy {
            PipelineStrategy::PerLayer if self.has_adder() => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub input_width: usize,
    pub input_bits: u32,
    /// Whether final output words are two's complement.
    pub output_signed: bool,
    pub layers: Vec<NetLayer>,
}

impl Netlist {
    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input_width, |l| l.width)
    }

    pub fn output_bits(&self) -> u32 {
        self.layers.last().map_or(self.input_bits, |l| l.out_bits)
    }

    /// End-to-end latency in cycles.
    pub fn latency(&self, strategy: PipelineStrategy) -> u32 {
        self.layers.iter().map(|l| l.stages(strategy)).sum()
    }

    pub fn tables(&self) -> impl Iterator<Item = &TruthTable> {
        self.layers.iter().flat_map(|l| {
            l.neurons
                .iter()
                .flat_map(|n| n.subs.iter().map(|s| &s.table).chain(n.adder.iter()))
        })
    }

    pub fn tables_mut(&mut self) -> impl Iterator<Item = &mut TruthTable> {
        self.layers.iter_mut().flat_map(|l| {
            l.neurons
                .iter_mut()
                .flat_map(|n| n.subs.iter_mut().map(|s| &mut s.table).chain(n.adder.iter_mut()))
        })
    }

    /// Structural and width consistency of the whole netlist.
    pub fn check(&self) -> Result<()> {
        if self.format != NETLIST_FORMAT {
            return Err(Error::Invalid(format!("not a netlist (format `{}`)", self.format)));
        }
        if self.version != NETLIST_VERSION {
            return Err(Error::Version { kind: "netlist", found: self.version, expected: NETLIST_VERSION });
        }
        let mut prev_width = self.input_width;
        let mut prev_bits = self.input_bits;
        for (l, layer) in self.layers.iter().enumerate() {
            let bad = |m: String| Err(Error::Dimension(format!("layer {l}: {m}")));
            if layer.in_width != prev_width || layer.in_bits != prev_bits {
                return bad("input shape does not match previous layer".into());
            }
            if layer.neurons.len() != layer.width {
                return bad("neuron count mismatch".into());
            }
            for neuron in &layer.neurons {
                if neuron.subs.len() != layer.adder || neuron.adder.is_some() != layer.has_adder() {
                    return bad("unit count mismatch".into());
                }
                for sub in &neuron.subs {
                    if sub.sources.len() != layer.fanin
                        || sub.sources.iter().any(|&s| s as usize >= layer.in_width)
                        || sub.table.input_bits != layer.in_bits * layer.fanin as u32
                        || sub.table.output_bits != layer.sub_bits()
                    {
                        return bad("poly unit shape mismatch".into());
                    }
                    sub.table.check()?;
                }
                if let Some(add) = &neuron.adder {
                    if add.input_bits != layer.adder as u32 * layer.sub_bits() || add.output_bits != layer.out_bits {
                        return bad("adder shape mismatch".into());
                    }
                    add.check()?;
                }
            }
            prev_width = layer.width;
            prev_bits = layer.out_bits;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("netlist serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: Netlist = serde_json::from_str(text)?;
        net.check()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(input_bits: u32, output_bits: u32, entries: Vec<u16>) -> TruthTable {
        TruthTable {
            input_bits,
            output_bits,
            provenance: Provenance { layer: 0, neuron: 0, kind: UnitKind::PolySub, group: 0 },
            entries,
        }
    }

    fn one_table_net() -> Netlist {
        Netlist {
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
                out_bits: 5,
                fanin: 2,
                adder: 1,
                neurons: vec![NetNeuron {
                    subs: vec![SubUnit { sources: vec![1, 0], table: table(2, 5, vec![0, 31, 7, 16]) }],
                    adder: None,
                }],
            }],
        }
    }

    #[test]
    fn dump_round_trip_and_layout() {
        let net = one_table_net();
        let text = net.to_json();
        assert!(text.contains("\"entries\":\"001f0710\""), "{text}");
        assert_eq!(Netlist::from_json(&text).unwrap(), net);
    }

    #[test]
    fn wrong_entry_count_is_rejected() {
        let mut net = one_table_net();
        net.layers[0].neurons[0].subs[0].table.entries.pop();
        assert!(net.check().is_err());
        assert!(Netlist::from_json(&net.to_json()).is_err());
    }

    #[test]
    fn version_is_checked() {
        let mut net = one_table_net();
        net.version = 7;
        assert!(matches!(Netlist::from_json(&net.to_json()), Err(Error::Version { .. })));
    }

    #[test]
    fn entry_must_fit_output_width() {
        let t = table(1, 2, vec![0, 4]);
        assert!(t.check().is_err());
    }
}
