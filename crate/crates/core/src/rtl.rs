//! Verilog-2001 emission from table netlists, self-checking testbenches, and a
//! reader for the emitted dialect.
//!
//! Layout: `<name>_layer<L>.v` per layer, `<name>_top.v`, and `<name>_tb.v`.
//! Every table becomes a function holding a full `case` over its input code.
//! Ports pack words little-end first: word `k` of a `B`-bit bus lives at
//! `[k*B +: B]`. Table inputs are concatenated with the first source word least
//! significant. One clock, synchronous active-high reset, no enables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::PipelineStrategy;
use crate::error::{Error, Result};
use crate::netlist::{NetLayer, NetNeuron, Netlist, Provenance, SubUnit, TruthTable, UnitKind, NETLIST_FORMAT, NETLIST_VERSION};

pub const RTL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtlFile {
    pub name: String,
    pub text: String,
}

/// Emitted design: layer files in order, then the top module.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RtlBundle {
    pub files: Vec<RtlFile>,
}

impl RtlBundle {
    /// All design files as one source text, in dependency order.
    pub fn concat(&self) -> String {
        self.files.iter().map(|f| f.text.as_str()).collect()
    }

    pub fn file_names(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.name.as_str()).collect()
    }
}

/// Per-layer register plan derived from a netlist and strategy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RtlModulePlan {
    pub module: String,
    pub input_port_bits: usize,
    pub output_port_bits: usize,
    pub stages_per_layer: Vec<u32>,
    pub strategy: PipelineStrategy,
}

impl RtlModulePlan {
    pub fn new(netlist: &Netlist, strategy: PipelineStrategy) -> Self {
        Self {
            module: format!("{}_top", netlist.name),
            input_port_bits: netlist.input_width * netlist.input_bits as usize,
            output_port_bits: netlist.output_width() * netlist.output_bits() as usize,
            stages_per_layer: netlist.layers.iter().map(|l| l.stages(strategy)).collect(),
            strategy,
        }
    }

    pub fn latency(&self) -> u32 {
        self.stages_per_layer.iter().sum()
    }
}

fn hex_width(bits: u32) -> usize {
    bits.div_ceil(4).max(1) as usize
}

fn bus(bits: usize) -> String {
    format!("[{}:0]", bits.max(1) - 1)
}

fn sub_fn(neuron: usize, group: usize) -> String {
    format!("n{neuron}_s{group}")
}

fn adder_fn(neuron: usize) -> String {
    format!("n{neuron}_add")
}

fn write_function(out: &mut String, name: &str, table: &TruthTable) {
    let iw = hex_width(table.input_bits);
    let ow = hex_width(table.output_bits);
    let _ = writeln!(out, "    function {} {name};", bus(table.output_bits as usize));
    let _ = writeln!(out, "        input {} x;", bus(table.input_bits as usize));
    out.push_str("        begin\n            case (x)\n");
    for (idx, &e) in table.entries.iter().enumerate() {
        let _ = writeln!(
            out,
            "                {}'h{:0iw$x}: {name} = {}'h{:0ow$x};",
            table.input_bits, idx, table.output_bits, e
        );
    }
    out.push_str("            endcase\n        end\n    endfunction\n\n");
}

fn write_register(out: &mut String, name: &str, src: &str, bits: usize) {
    let _ = writeln!(out, "    reg  {} {name};", bus(bits));
    out.push_str("    always @(posedge clk) begin\n");
    let _ = writeln!(out, "        if (rst) {name} <= {bits}'d0;");
    let _ = writeln!(out, "        else {name} <= {src};");
    out.push_str("    end\n");
}

fn emit_layer(netlist: &Netlist, l: usize, layer: &NetLayer, strategy: PipelineStrategy) -> RtlFile {
    let mut out = String::new();
    let in_bus = layer.in_width * layer.in_bits as usize;
    let out_bus = layer.width * layer.out_bits as usize;
    let poly_reg = layer.stages(strategy) == 2;
    let _ = writeln!(
        out,
        "// layer {l}: {} neurons, {} inputs x {} bits, fan-in {}, A = {}, output {} bits",
        layer.width, layer.in_width, layer.in_bits, layer.fanin, layer.adder, layer.out_bits
    );
    let _ = writeln!(out, "module {}_layer{l} (", netlist.name);
    out.push_str("    input  wire clk,\n    input  wire rst,\n");
    let _ = writeln!(out, "    input  wire {} in_codes,", bus(in_bus));
    let _ = writeln!(out, "    output wire {} out_codes", bus(out_bus));
    out.push_str(");\n");
    for (k, v) in [
        ("IN_WIDTH", layer.in_width),
        ("IN_BITS", layer.in_bits as usize),
        ("WIDTH", layer.width),
        ("OUT_BITS", layer.out_bits as usize),
        ("FANIN", layer.fanin),
        ("ADDER", layer.adder),
        ("POLY_REGISTER", poly_reg as usize),
    ] {
        let _ = writeln!(out, "    localparam {k} = {v};");
    }
    out.push('\n');

    for (n, neuron) in layer.neurons.iter().enumerate() {
        for (a, sub) in neuron.subs.iter().enumerate() {
            write_function(&mut out, &sub_fn(n, a), &sub.table);
        }
        if let Some(add) = &neuron.adder {
            write_function(&mut out, &adder_fn(n), add);
        }
    }

    let b = layer.in_bits as usize;
    let gather = |sub: &SubUnit| -> String {
        let parts: Vec<String> =
            sub.sources.iter().rev().map(|&s| format!("in_codes[{} +: {b}]", s as usize * b)).collect();
        format!("{{{}}}", parts.join(", "))
    };
    let _ = writeln!(out, "    wire {} out_d;", bus(out_bus));
    let ob = layer.out_bits as usize;
    if layer.has_adder() {
        let sb = layer.sub_bits() as usize;
        let poly_bits = layer.width * layer.adder * sb;
        let _ = writeln!(out, "    wire {} poly_d;", bus(poly_bits));
        for (n, neuron) in layer.neurons.iter().enumerate() {
            for (a, sub) in neuron.subs.iter().enumerate() {
                let base = (n * layer.adder + a) * sb;
                let _ = writeln!(out, "    assign poly_d[{base} +: {sb}] = {}({});", sub_fn(n, a), gather(sub));
            }
        }
        if poly_reg {
            write_register(&mut out, "poly_q", "poly_d", poly_bits);
            let _ = writeln!(out, "    wire {} poly = poly_q;", bus(poly_bits));
        } else {
            let _ = writeln!(out, "    wire {} poly = poly_d;", bus(poly_bits));
        }
        let ab = layer.adder * sb;
        for n in 0..layer.width {
            let _ = writeln!(out, "    assign out_d[{} +: {ob}] = {}(poly[{} +: {ab}]);", n * ob, adder_fn(n), n * ab);
        }
    } else {
        for (n, neuron) in layer.neurons.iter().enumerate() {
            let _ = writeln!(out, "    assign out_d[{} +: {ob}] = {}({});", n * ob, sub_fn(n, 0), gather(&neuron.subs[0]));
        }
    }
    write_register(&mut out, "out_q", "out_d", out_bus);
    out.push_str("    assign out_codes = out_q;\nendmodule\n\n");
    RtlFile { name: layer_file_name(netlist, l), text: out }
}

fn emit_top(netlist: &Netlist, strategy: PipelineStrategy) -> RtlFile {
    let plan = RtlModulePlan::new(netlist, strategy);
    let mut out = String::new();
    let _ = writeln!(out, "// lutnet generated RTL, format {RTL_FORMAT_VERSION}");
    let _ = writeln!(out, "// netlist: {}", netlist.name);
    let _ = writeln!(out, "// strategy: {strategy}, latency {} cycles", plan.latency());
    let _ = writeln!(
        out,
        "// in_codes: {} words x {} bits, word k at [k*{} +: {}]",
        netlist.input_width, netlist.input_bits, netlist.input_bits, netlist.input_bits
    );
    let _ = writeln!(
        out,
        "// out_codes: {} words x {} bits{}, word k at [k*{} +: {}]",
        netlist.output_width(),
        netlist.output_bits(),
        if netlist.output_signed { " (two's complement)" } else { "" },
        netlist.output_bits(),
        netlist.output_bits()
    );
    out.push_str("// table inputs: first source word least significant\n");
    out.push_str("// clocking: single rising-edge clock, synchronous active-high reset\n");
    let _ = writeln!(out, "module {} (", plan.module);
    out.push_str("    input  wire clk,\n    input  wire rst,\n");
    let _ = writeln!(out, "    input  wire {} in_codes,", bus(plan.input_port_bits));
    let _ = writeln!(out, "    output wire {} out_codes", bus(plan.output_port_bits));
    out.push_str(");\n");
    for (k, v) in [
        ("INPUT_WORDS", netlist.input_width),
        ("INPUT_BITS", netlist.input_bits as usize),
        ("OUTPUT_WORDS", netlist.output_width()),
        ("OUTPUT_BITS", netlist.output_bits() as usize),
        ("OUTPUT_SIGNED", netlist.output_signed as usize),
        ("LAYERS", netlist.layers.len()),
        ("LATENCY", plan.latency() as usize),
    ] {
        let _ = writeln!(out, "    localparam {k} = {v};");
    }
    let mut prev = "in_codes".to_string();
    for (l, layer) in netlist.layers.iter().enumerate() {
        let wire = format!("l{l}_out");
        let _ = writeln!(out, "    wire {} {wire};", bus(layer.width * layer.out_bits as usize));
        let _ = writeln!(
            out,
            "    {}_layer{l} u_layer{l} (.clk(clk), .rst(rst), .in_codes({prev}), .out_codes({wire}));",
            netlist.name
        );
        prev = wire;
    }
    let _ = writeln!(out, "    assign out_codes = {prev};");
    out.push_str("endmodule\n");
    RtlFile { name: top_file_name(netlist), text: out }
}

/// Deterministic Verilog for the whole netlist.
pub fn layer_file_name(netlist: &Netlist, layer: usize) -> String {
    format!("{}_layer{layer}.v", netlist.name)
}

pub fn top_file_name(netlist: &Netlist) -> String {
    format!("{}_top.v", netlist.name)
}

/// Module files in the order [`parse_back`] expects them concatenated.
pub fn rtl_file_names(netlist: &Netlist) -> Vec<String> {
    (0..netlist.layers.len()).map(|l| layer_file_name(netlist, l)).chain([top_file_name(netlist)]).collect()
}

pub fn emit_rtl(netlist: &Netlist, strategy: PipelineStrategy) -> RtlBundle {
    let mut files: Vec<RtlFile> = netlist
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| emit_layer(netlist, l, layer, strategy))
        .collect();
    files.push(emit_top(netlist, strategy));
    RtlBundle { files }
}

/// One stimulus/response pair in packed port form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVector {
    pub input: Vec<u16>,
    pub output: Vec<u16>,
}

fn pack_hex(words: &[u16], bits: u32) -> String {
    // little-end-first words into one big hex literal
    let total = words.len() * bits as usize;
    let mut nibbles = vec![0u8; total.div_ceil(4).max(1)];
    for (k, &w) in words.iter().enumerate() {
        for b in 0..bits as usize {
            if (w >> b) & 1 == 1 {
                let pos = k * bits as usize + b;
                nibbles[pos / 4] |= 1 << (pos % 4);
            }
        }
    }
    nibbles.iter().rev().map(|n| char::from_digit(*n as u32, 16).unwrap()).collect()
}

/// Self-checking bench: drives one vector per cycle on the falling edge and
/// compares the output `LATENCY` cycles later.
pub fn emit_testbench(netlist: &Netlist, strategy: PipelineStrategy, vectors: &[TestVector]) -> Result<RtlFile> {
    if vectors.is_empty() {
        return Err(Error::Invalid("testbench needs at least one vector".into()));
    }
    let plan = RtlModulePlan::new(netlist, strategy);
    let (ib, ob) = (plan.input_port_bits.max(1), plan.output_port_bits.max(1));
    let n = vectors.len();
    let mut out = String::new();
    out.push_str("`timescale 1ns/1ps\n");
    let _ = writeln!(out, "module {}_tb;", netlist.name);
    let _ = writeln!(out, "    localparam LATENCY = {};", plan.latency());
    let _ = writeln!(out, "    localparam N = {n};");
    out.push_str("    reg clk = 1'b0;\n    reg rst = 1'b1;\n");
    let _ = writeln!(out, "    reg  [{}:0] in_codes;", ib - 1);
    let _ = writeln!(out, "    wire [{}:0] out_codes;", ob - 1);
    let _ = writeln!(out, "    reg  [{}:0] stim [0:N-1];", ib - 1);
    let _ = writeln!(out, "    reg  [{}:0] expect [0:N-1];", ob - 1);
    out.push_str("    integer errors;\n    integer t;\n\n");
    let _ = writeln!(
        out,
        "    {} dut (.clk(clk), .rst(rst), .in_codes(in_codes), .out_codes(out_codes));\n",
        plan.module
    );
    out.push_str("    always #5 clk = ~clk;\n\n    initial begin\n");
    for (i, v) in vectors.iter().enumerate() {
        let _ = writeln!(out, "        stim[{i}] = {ib}'h{};", pack_hex(&v.input, netlist.input_bits));
        let _ = writeln!(out, "        expect[{i}] = {ob}'h{};", pack_hex(&v.output, netlist.output_bits()));
    }
    out.push_str(
        "        errors = 0;\n\
         \x20       in_codes = 0;\n\
         \x20       @(posedge clk);\n\
         \x20       @(negedge clk);\n\
         \x20       rst = 1'b0;\n\
         \x20       for (t = 0; t < N + LATENCY; t = t + 1) begin\n\
         \x20           if (t < N) in_codes = stim[t];\n\
         \x20           #1;\n\
         \x20           if (t >= LATENCY && out_codes !== expect[t - LATENCY]) begin\n\
         \x20               $display(\"FAIL vector %0d: got %h expected %h\", t - LATENCY, out_codes, expect[t - LATENCY]);\n\
         \x20               errors = errors + 1;\n\
         \x20           end\n\
         \x20           @(negedge clk);\n\
         \x20       end\n\
         \x20       if (errors == 0) $display(\"PASS %0d vectors\", N);\n\
         \x20       else $display(\"FAILED %0d of %0d vectors\", errors, N);\n\
         \x20       $finish;\n\
         \x20   end\n\
         endmodule\n",
    );
    Ok(RtlFile { name: format!("{}_tb.v", netlist.name), text: out })
}

/// What [`parse_rtl`] recovers: the netlist plus the register plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedRtl {
    pub netlist: Netlist,
    pub strategy: PipelineStrategy,
    pub latency: u32,
}

pub fn parse_back(rtl: &str) -> Result<Netlist> {
    parse_rtl(rtl).map(|p| p.netlist)
}

struct Cursor<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

fn perr<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { path: "<rtl>".into(), line, msg: msg.into() })
}

impl<'a> Cursor<'a> {
    /// Next non-blank, non-comment line, trimmed.
    fn next(&mut self) -> Option<&'a str> {
        for (i, raw) in self.lines.by_ref() {
            self.line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with("//") || t.starts_with('`') {
                continue;
            }
            return Some(t);
        }
        None
    }

    fn expect(&mut self, want: &str) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => perr(self.line, format!("expected `{want}`, found `{t}`")),
            None => perr(self.line, format!("expected `{want}`, found end of input")),
        }
    }

    fn require(&mut self) -> Result<&'a str> {
        match self.next() {
            Some(t) => Ok(t),
            None => perr(self.line, "unexpected end of input"),
        }
    }
}

fn parse_num(s: &str, line: usize) -> Result<usize> {
    s.trim().parse().or_else(|_| perr(line, format!("expected a number, found `{s}`")))
}

/// `[H:0]` -> H + 1
fn parse_range(s: &str, line: usize) -> Result<usize> {
    let inner = s
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(":0]"))
        .ok_or_else(|| Error::Parse { path: "<rtl>".into(), line, msg: format!("bad range `{s}`") })?;
    Ok(parse_num(inner, line)? + 1)
}

/// `W'hDIGITS`
fn parse_sized_hex(s: &str, line: usize) -> Result<(u32, u64)> {
    let (w, digits) = s
        .split_once("'h")
        .ok_or_else(|| Error::Parse { path: "<rtl>".into(), line, msg: format!("bad literal `{s}`") })?;
    let w = parse_num(w, line)? as u32;
    let v = u64::from_str_radix(digits, 16).or_else(|_| perr(line, format!("bad hex `{digits}`")))?;
    Ok((w, v))
}

/// `name ( ... );` header: returns the module name.
fn parse_module_header(cur: &mut Cursor<'_>) -> Result<Option<(String, usize, usize)>> {
    let Some(t) = cur.next() else { return Ok(None) };
    let name = match t.strip_prefix("module ").and_then(|r| r.strip_suffix(" (")) {
        Some(n) => n.to_string(),
        None => return perr(cur.line, format!("expected a lutnet module header, found `{t}`")),
    };
    cur.expect("input  wire clk,")?;
    cur.expect("input  wire rst,")?;
    let t = cur.require()?;
    let in_bits = match t.strip_prefix("input  wire ").and_then(|r| r.strip_suffix(" in_codes,")) {
        Some(r) => parse_range(r, cur.line)?,
        None => return perr(cur.line, format!("expected in_codes port, found `{t}`")),
    };
    let t = cur.require()?;
    let out_bits = match t.strip_prefix("output wire ").and_then(|r| r.strip_suffix(" out_codes")) {
        Some(r) => parse_range(r, cur.line)?,
        None => return perr(cur.line, format!("expected out_codes port, found `{t}`")),
    };
    cur.expect(");")?;
    Ok(Some((name, in_bits, out_bits)))
}

fn parse_localparam(cur: &mut Cursor<'_>, key: &str) -> Result<usize> {
    let t = cur.require()?;
    let rest = t
        .strip_prefix("localparam ")
        .and_then(|r| r.strip_prefix(key))
        .and_then(|r| r.strip_prefix(" = "))
        .and_then(|r| r.strip_suffix(';'));
    match rest {
        Some(v) => parse_num(v, cur.line),
        None => perr(cur.line, format!("expected localparam {key}, found `{t}`")),
    }
}

/// Parses `n<N>_s<A>` or `n<N>_add`.
fn parse_unit_name(name: &str, line: usize) -> Result<(usize, Option<usize>)> {
    let bad = || Error::Parse { path: "<rtl>".into(), line, msg: format!("bad unit name `{name}`") };
    let rest = name.strip_prefix('n').ok_or_else(bad)?;
    let (n, tail) = rest.split_once('_').ok_or_else(bad)?;
    let n = n.parse().map_err(|_| bad())?;
    if tail == "add" {
        return Ok((n, None));
    }
    let g = tail.strip_prefix('s').and_then(|g| g.parse().ok()).ok_or_else(bad)?;
    Ok((n, Some(g)))
}

struct ParsedFunction {
    neuron: usize,
    group: Option<usize>,
    input_bits: u32,
    output_bits: u32,
    entries: Vec<u16>,
}

fn parse_function(cur: &mut Cursor<'_>, header: &str) -> Result<ParsedFunction> {
    let line = cur.line;
    let rest = header.strip_prefix("function ").and_then(|r| r.strip_suffix(';'));
    let Some((range, name)) = rest.and_then(|r| r.split_once(' ')) else {
        return perr(line, format!("bad function header `{header}`"));
    };
    let output_bits = parse_range(range, line)? as u32;
    let (neuron, group) = parse_unit_name(name, line)?;
    let t = cur.require()?;
    let input_bits = match t.strip_prefix("input ").and_then(|r| r.strip_suffix(" x;")) {
        Some(r) => parse_range(r, cur.line)? as u32,
        None => return perr(cur.line, format!("expected function input, found `{t}`")),
    };
    if input_bits > 30 || output_bits > 16 {
        return perr(line, format!("table {name} too wide ({input_bits} -> {output_bits} bits)"));
    }
    cur.expect("begin")?;
    cur.expect("case (x)")?;
    let size = 1usize << input_bits;
    let mut entries = vec![0u16; size];
    let mut seen = vec![false; size];
    let assign = format!(" {name} = ");
    loop {
        let t = cur.require()?;
        if t == "endcase" {
            break;
        }
        let Some((label, value)) = t.split_once(':') else {
            return perr(cur.line, format!("expected case arm, found `{t}`"));
        };
        let (lw, idx) = parse_sized_hex(label, cur.line)?;
        let value = value
            .strip_prefix(assign.as_str())
            .and_then(|v| v.strip_suffix(';'))
            .ok_or_else(|| Error::Parse { path: "<rtl>".into(), line: cur.line, msg: format!("bad case arm `{t}`") })?;
        let (vw, v) = parse_sized_hex(value, cur.line)?;
        if lw != input_bits || vw != output_bits {
            return perr(cur.line, "case arm width does not match function declaration");
        }
        let idx = idx as usize;
        if idx >= size || v >> output_bits != 0 {
            return perr(cur.line, format!("case arm out of range in {name}"));
        }
        if std::mem::replace(&mut seen[idx], true) {
            return perr(cur.line, format!("duplicate case arm {idx} in {name}"));
        }
        entries[idx] = v as u16;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return perr(cur.line, format!("case in {name} is incomplete: no arm for {missing}"));
    }
    cur.expect("end")?;
    cur.expect("endfunction")?;
    Ok(ParsedFunction { neuron, group, input_bits, output_bits, entries })
}

/// `{in_codes[b +: w], ...}` -> source indices, least significant first.
fn parse_gather(s: &str, in_bits: usize, line: usize) -> Result<Vec<u32>> {
    let inner = s
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| Error::Parse { path: "<rtl>".into(), line, msg: format!("bad gather `{s}`") })?;
    let mut sources = Vec::new();
    for part in inner.split(", ") {
        let sel = part
            .strip_prefix("in_codes[")
            .and_then(|p| p.strip_suffix(']'))
            .and_then(|p| p.split_once(" +: "))
            .ok_or_else(|| Error::Parse { path: "<rtl>".into(), line, msg: format!("bad select `{part}`") })?;
        let base = parse_num(sel.0, line)?;
        if parse_num(sel.1, line)? != in_bits || base % in_bits != 0 {
            return perr(line, format!("select `{part}` is not word aligned"));
        }
        sources.push((base / in_bits) as u32);
    }
    sources.reverse();
    Ok(sources)
}

fn skip_register(cur: &mut Cursor<'_>, first: &str, name: &str, src: &str) -> Result<()> {
    if !(first.starts_with("reg  ") && first.ends_with(&format!(" {name};"))) {
        return perr(cur.line, format!("expected register {name}, found `{first}`"));
    }
    cur.expect("always @(posedge clk) begin")?;
    let t = cur.require()?;
    if !(t.starts_with(&format!("if (rst) {name} <= ")) && t.ends_with("'d0;")) {
        return perr(cur.line, format!("bad reset for {name}"));
    }
    cur.expect(&format!("else {name} <= {src};"))?;
    cur.expect("end")
}

fn parse_layer(cur: &mut Cursor<'_>, index: usize, in_port: usize, out_port: usize) -> Result<(NetLayer, bool)> {
    let in_width = parse_localparam(cur, "IN_WIDTH")?;
    let in_bits = parse_localparam(cur, "IN_BITS")? as u32;
    let width = parse_localparam(cur, "WIDTH")?;
    let out_bits = parse_localparam(cur, "OUT_BITS")? as u32;
    let fanin = parse_localparam(cur, "FANIN")?;
    let adder = parse_localparam(cur, "ADDER")?;
    let poly_reg = parse_localparam(cur, "POLY_REGISTER")? == 1;
    if in_port != (in_width * in_bits as usize).max(1) || out_port != (width * out_bits as usize).max(1) {
        return perr(cur.line, format!("layer {index} port widths disagree with parameters"));
    }
    let mut neurons: Vec<NetNeuron> =
        (0..width).map(|_| NetNeuron { subs: Vec::new(), adder: None }).collect();
    let mut sub_tables: Vec<Vec<Option<TruthTable>>> = vec![vec![None; adder]; width];
    let mut sources: Vec<Vec<Option<Vec<u32>>>> = vec![vec![None; adder]; width];

    let mut t = cur.require()?;
    while t.starts_with("function ") {
        let f = parse_function(cur, t)?;
        if f.neuron >= width {
            return perr(cur.line, format!("neuron {} out of range", f.neuron));
        }
        match f.group {
            Some(g) if g < adder => {
                sub_tables[f.neuron][g] = Some(TruthTable {
                    input_bits: f.input_bits,
                    output_bits: f.output_bits,
                    provenance: Provenance { layer: index, neuron: f.neuron, kind: UnitKind::PolySub, group: g },
                    entries: f.entries,
                })
            }
            Some(g) => return perr(cur.line, format!("group {g} out of range")),
            None => {
                neurons[f.neuron].adder = Some(TruthTable {
                    input_bits: f.input_bits,
                    output_bits: f.output_bits,
                    provenance: Provenance { layer: index, neuron: f.neuron, kind: UnitKind::Adder, group: 0 },
                    entries: f.entries,
                })
            }
        }
        t = cur.require()?;
    }
    if !t.starts_with("wire ") || !t.ends_with(" out_d;") {
        return perr(cur.line, format!("expected out_d declaration, found `{t}`"));
    }
    let ib = in_bits as usize;
    let has_adder = adder >= 2;
    if has_adder {
        let decl = cur.require()?;
        if !decl.starts_with("wire ") || !decl.ends_with(" poly_d;") {
            return perr(cur.line, format!("expected poly_d declaration, found `{decl}`"));
        }
    }
    loop {
        t = cur.require()?;
        let target = if has_adder { "assign poly_d[" } else { "assign out_d[" };
        let Some(rest) = t.strip_prefix(target) else { break };
        let Some((_, call)) = rest.split_once("] = ") else {
            return perr(cur.line, format!("bad assignment `{t}`"));
        };
        let Some((fname, arg)) = call.strip_suffix(");").and_then(|c| c.split_once('(')) else {
            return perr(cur.line, format!("bad call `{call}`"));
        };
        let (n, g) = parse_unit_name(fname, cur.line)?;
        let g = g.ok_or_else(|| Error::Parse { path: "<rtl>".into(), line: cur.line, msg: "adder in poly wiring".into() })?;
        if n >= width || g >= adder {
            return perr(cur.line, format!("unit {fname} out of range"));
        }
        sources[n][g] = Some(parse_gather(arg, ib, cur.line)?);
    }
    if has_adder {
        if poly_reg {
            skip_register(cur, t, "poly_q", "poly_d")?;
            t = cur.require()?;
            if !t.ends_with(" poly = poly_q;") {
                return perr(cur.line, format!("expected registered poly bus, found `{t}`"));
            }
        } else if !t.ends_with(" poly = poly_d;") {
            return perr(cur.line, format!("expected poly bus, found `{t}`"));
        }
        t = cur.require()?;
        while t.starts_with("assign out_d[") {
            t = cur.require()?;
        }
    }
    skip_register(cur, t, "out_q", "out_d")?;
    cur.expect("assign out_codes = out_q;")?;
    cur.expect("endmodule")?;

    for (n, neuron) in neurons.iter_mut().enumerate() {
        for g in 0..adder {
            let (Some(table), Some(src)) = (sub_tables[n][g].take(), sources[n][g].take()) else {
                return perr(cur.line, format!("layer {index} neuron {n} group {g} is missing its table or wiring"));
            };
            neuron.subs.push(SubUnit { sources: src, table });
        }
        if has_adder != neuron.adder.is_some() {
            return perr(cur.line, format!("layer {index} neuron {n} adder presence disagrees with ADDER"));
        }
    }
    Ok((NetLayer { in_width, width, in_bits, out_bits, fanin, adder, neurons }, poly_reg))
}

/// Reads RTL produced by [`emit_rtl`] (layer modules followed by the top
/// module, as in [`RtlBundle::concat`]). Any other text is a parse error.
pub fn parse_rtl(rtl: &str) -> Result<ParsedRtl> {
    let mut cur = Cursor { lines: rtl.lines().enumerate().peekable(), line: 0 };
    let mut layers = Vec::new();
    let mut poly_regs = Vec::new();
    loop {
        let Some((module, in_port, out_port)) = parse_module_header(&mut cur)? else {
            return perr(cur.line, "no top module found");
        };
        if let Some(name) = module.strip_suffix("_top") {
            let input_width = parse_localparam(&mut cur, "INPUT_WORDS")?;
            let input_bits = parse_localparam(&mut cur, "INPUT_BITS")? as u32;
            let _ = parse_localparam(&mut cur, "OUTPUT_WORDS")?;
            let _ = parse_localparam(&mut cur, "OUTPUT_BITS")?;
            let output_signed = parse_localparam(&mut cur, "OUTPUT_SIGNED")? == 1;
            let count = parse_localparam(&mut cur, "LAYERS")?;
            let latency = parse_localparam(&mut cur, "LATENCY")? as u32;
            if count != layers.len() {
                return perr(cur.line, format!("top declares {count} layers, found {}", layers.len()));
            }
            if in_port != (input_width * input_bits as usize).max(1) {
                return perr(cur.line, "top input port width disagrees with parameters");
            }
            let _ = out_port;
            let netlist = Netlist {
                format: NETLIST_FORMAT.into(),
                version: NETLIST_VERSION,
                name: name.to_string(),
                input_width,
                input_bits,
                output_signed,
                layers,
            };
            netlist.check().map_err(|e| Error::Parse { path: "<rtl>".into(), line: cur.line, msg: e.to_string() })?;
            let strategy = if poly_regs.iter().any(|&r| r) { PipelineStrategy::PerLayer } else { PipelineStrategy::Combined };
            if netlist.latency(strategy) != latency {
                return perr(cur.line, format!("declared latency {latency} disagrees with register plan"));
            }
            return Ok(ParsedRtl { netlist, strategy, latency });
        }
        let expected = format!("_layer{}", layers.len());
        if !module.ends_with(&expected) {
            return perr(cur.line, format!("expected module *{expected}, found `{module}`"));
        }
        let (layer, poly_reg) = parse_layer(&mut cur, layers.len(), in_port, out_port)?;
        layers.push(layer);
        poly_regs.push(poly_reg);
    }
}
