//! Network architecture descriptions, validation and random sparse wiring.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IssueList, Result};
use crate::rng::SeededRng;

/// Where pipeline registers go inside a composite (poly + adder) layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineStrategy {
    /// Register after the poly stage and after the adder stage.
    PerLayer,
    /// One register per composite layer.
    #[default]
    Combined,
}

impl PipelineStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineStrategy::PerLayer => "per-layer",
            PipelineStrategy::Combined => "combined",
        }
    }
}

impl fmt::Display for PipelineStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-layer" => Ok(PipelineStrategy::PerLayer),
            "combined" => Ok(PipelineStrategy::Combined),
            other => Err(Error::Invalid(format!(
                "unknown pipeline strategy `{other}` (expected per-layer or combined)"
            ))),
        }
    }
}

fn one() -> usize {
    1
}

/// Full architectural description of a network.
///
/// `layer_widths` lists the neuron count of every computing layer; the last entry
/// is the output layer. The raw feature count lives in `input_width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub name: String,
    pub input_width: usize,
    pub layer_widths: Vec<usize>,
    pub beta: u32,
    #[serde(rename = "fanin_F")]
    pub fanin: usize,
    #[serde(rename = "degree_D")]
    pub degree: u32,
    #[serde(rename = "adder_A")]
    pub adder: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_beta: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_fanin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_beta: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_fanin: Option<usize>,
    #[serde(default = "one")]
    pub depth_factor: usize,
    #[serde(default = "one")]
    pub width_factor: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub pipeline_strategy: PipelineStrategy,
}

/// Widest code word a table entry may hold.
pub const MAX_WORD_BITS: u32 = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ConfigIssue {
    NoLayers,
    ZeroInputWidth,
    ZeroLayerWidth { layer: usize },
    ZeroBeta,
    WordTooWide { what: &'static str, bits: u32 },
    ZeroFanin { layer: usize },
    FaninExceedsSource { layer: usize, fanin: usize, source_width: usize },
    AdderBelowOne,
    DegreeBelowOne,
    ZeroFactor { which: &'static str },
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigIssue::NoLayers => write!(f, "layer_widths is empty"),
            ConfigIssue::ZeroInputWidth => write!(f, "input_width must be positive"),
            ConfigIssue::ZeroLayerWidth { layer } => write!(f, "layer {layer} has zero width"),
            ConfigIssue::ZeroBeta => write!(f, "word length must be at least 1 bit"),
            ConfigIssue::WordTooWide { what, bits } => {
                write!(f, "{what} of {bits} bits exceeds the supported word size")
            }
            ConfigIssue::ZeroFanin { layer } => write!(f, "layer {layer} has zero fan-in"),
            ConfigIssue::FaninExceedsSource { layer, fanin, source_width } => write!(
                f,
                "layer {layer} fan-in {fanin} exceeds source width {source_width}"
            ),
            ConfigIssue::AdderBelowOne => write!(f, "adder_A must be at least 1"),
            ConfigIssue::DegreeBelowOne => write!(f, "degree_D must be at least 1"),
            ConfigIssue::ZeroFactor { which } => write!(f, "{which} must be at least 1"),
        }
    }
}

/// Concrete shape of one computing layer after overrides are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerGeometry {
    pub index: usize,
    pub in_width: usize,
    pub width: usize,
    /// Bits per incoming word.
    pub in_bits: u32,
    /// Bits per outgoing word (the layer's activation word length).
    pub out_bits: u32,
    pub fanin: usize,
    pub adder: usize,
    pub degree: u32,
    pub is_output: bool,
}

impl LayerGeometry {
    /// Input width of one poly sub-neuron table.
    pub fn sub_input_bits(&self) -> u32 {
        self.in_bits * self.fanin as u32
    }

    /// Output width of a poly sub-neuron when an adder follows it.
    pub fn sub_output_bits(&self) -> u32 {
        self.out_bits + 1
    }

    pub fn adder_input_bits(&self) -> u32 {
        self.adder as u32 * self.sub_output_bits()
    }

    pub fn has_adder(&self) -> bool {
        self.adder >= 2
    }
}

impl NetworkConfig {
    /// Hidden widths repeated `depth_factor` times in place and scaled by
    /// `width_factor`; the output layer is untouched.
    pub fn expanded_widths(&self) -> Vec<usize> {
        let Some((&output, hidden)) = self.layer_widths.split_last() else {
            return Vec::new();
        };
        let mut widths = Vec::with_capacity(hidden.len() * self.depth_factor.max(1) + 1);
        for &w in hidden {
            for _ in 0..self.depth_factor.max(1) {
                widths.push(w * self.width_factor.max(1));
            }
        }
        widths.push(output);
        widths
    }

    pub fn input_bits(&self) -> u32 {
        self.input_beta.unwrap_or(self.beta)
    }

    pub fn output_bits(&self) -> u32 {
        self.output_beta.unwrap_or(self.beta)
    }

    /// Per-layer geometry of the expanded network.
    ///
    /// A single-layer network is both first and last: it reads `input_beta` words
    /// and uses `output_fanin` if given, else `input_fanin`, else `fanin`.
    pub fn geometry(&self) -> Vec<LayerGeometry> {
        let widths = self.expanded_widths();
        let n = widths.len();
        let mut prev = self.input_width;
        widths
            .iter()
            .enumerate()
            .map(|(i, &width)| {
                let first = i == 0;
                let last = i + 1 == n;
                let fanin = match (first, last) {
                    (_, true) => self
                        .output_fanin
                        .or(if first { self.input_fanin } else { None })
                        .unwrap_or(self.fanin),
                    (true, false) => self.input_fanin.unwrap_or(self.fanin),
                    (false, false) => self.fanin,
                };
                let geo = LayerGeometry {
                    index: i,
                    in_width: prev,
                    width,
                    in_bits: if first { self.input_bits() } else { self.beta },
                    out_bits: if last { self.output_bits() } else { self.beta },
                    fanin,
                    adder: self.adder,
                    degree: self.degree,
                    is_output: last,
                };
                prev = width;
                geo
            })
            .collect()
    }

    /// The equivalent PolyLUT network is the same config with one sub-neuron.
    pub fn is_polylut(&self) -> bool {
        self.adder == 1
    }

    pub fn is_logicnets(&self) -> bool {
        self.adder == 1 && self.degree == 1
    }
}

/// Checks every structural invariant and returns the config with depth and width
/// factors folded into `layer_widths`.
pub fn validate_config(cfg: &NetworkConfig) -> Result<NetworkConfig> {
    let mut issues = Vec::new();
    if cfg.layer_widths.is_empty() {
        issues.push(ConfigIssue::NoLayers);
    }
    if cfg.input_width == 0 {
        issues.push(ConfigIssue::ZeroInputWidth);
    }
    if cfg.depth_factor == 0 {
        issues.push(ConfigIssue::ZeroFactor { which: "depth_factor" });
    }
    if cfg.width_factor == 0 {
        issues.push(ConfigIssue::ZeroFactor { which: "width_factor" });
    }
    if cfg.adder < 1 {
        issues.push(ConfigIssue::AdderBelowOne);
    }
    if cfg.degree < 1 {
        issues.push(ConfigIssue::DegreeBelowOne);
    }
    for bits in [Some(cfg.beta), cfg.input_beta, cfg.output_beta].into_iter().flatten() {
        if bits == 0 {
            issues.push(ConfigIssue::ZeroBeta);
        }
    }
    // sub-neuron outputs carry one extra bit
    for (what, bits) in [("beta", Some(cfg.beta)), ("output_beta", cfg.output_beta)] {
        if let Some(bits) = bits {
            if bits + 1 > MAX_WORD_BITS {
                issues.push(ConfigIssue::WordTooWide { what, bits });
            }
        }
    }
    if let Some(bits) = cfg.input_beta {
        if bits > MAX_WORD_BITS {
            issues.push(ConfigIssue::WordTooWide { what: "input_beta", bits });
        }
    }
    for geo in cfg.geometry() {
        if geo.width == 0 {
            issues.push(ConfigIssue::ZeroLayerWidth { layer: geo.index });
        }
        if geo.fanin == 0 {
            issues.push(ConfigIssue::ZeroFanin { layer: geo.index });
        } else if geo.fanin > geo.in_width && geo.in_width > 0 {
            issues.push(ConfigIssue::FaninExceedsSource {
                layer: geo.index,
                fanin: geo.fanin,
                source_width: geo.in_width,
            });
        }
    }
    if !issues.is_empty() {
        return Err(Error::Config(IssueList(issues)));
    }
    let mut out = cfg.clone();
    out.layer_widths = cfg.expanded_widths();
    out.depth_factor = 1;
    out.width_factor = 1;
    Ok(out)
}

/// Source indices feeding every sub-neuron of every layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connectivity {
    /// `layers[l][n][a]` holds the F source indices of group `a` of neuron `n`.
    pub layers: Vec<Vec<Vec<Vec<u32>>>>,
}

impl Connectivity {
    pub fn group(&self, layer: usize, neuron: usize, group: usize) -> &[u32] {
        &self.layers[layer][neuron][group]
    }

    pub fn in_degree(&self, layer: usize, neuron: usize) -> usize {
        self.layers[layer][neuron].iter().map(Vec::len).sum()
    }
}

/// Random sparse wiring: for every layer, neuron and group in that order, draw F
/// distinct indices of the previous layer from one seeded stream (see
/// [`SeededRng::sample_distinct`]). Groups are drawn independently and may overlap.
pub fn generate_connectivity(cfg: &NetworkConfig) -> Result<Connectivity> {
    let cfg = validate_config(cfg)?;
    let mut rng = SeededRng::derived(cfg.seed, CONNECTIVITY_STREAM);
    let layers = cfg
        .geometry()
        .iter()
        .map(|geo| {
            (0..geo.width)
                .map(|_| {
                    (0..geo.adder)
                        .map(|_| rng.sample_distinct(geo.in_width, geo.fanin))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(Connectivity { layers })
}

pub const CONNECTIVITY_STREAM: u64 = 1;

/// Named configurations for the shipped benchmark models.
pub const PRESET_NAMES: [&str; 8] = [
    "hdr",
    "jsc-xl",
    "jsc-m-lite",
    "nid-lite",
    "hdr-add2",
    "jsc-xl-add2",
    "jsc-m-lite-add2",
    "nid-add2",
];

/// Raw feature counts: 28x28 images, 16 jet substructure properties, and the
/// 593-bit encoded intrusion-detection records.
const MNIST_INPUTS: usize = 784;
const JSC_INPUTS: usize = 16;
const UNSW_INPUTS: usize = 593;

#[allow(clippy::too_many_arguments)]
fn preset_config(
    name: &str,
    input_width: usize,
    layers: &[usize],
    beta: u32,
    fanin: usize,
    degree: u32,
    adder: usize,
    input: Option<(u32, usize)>,
    output: Option<(u32, usize)>,
) -> NetworkConfig {
    NetworkConfig {
        name: name.to_string(),
        input_width,
        layer_widths: layers.to_vec(),
        beta,
        fanin,
        degree,
        adder,
        input_beta: input.map(|p| p.0),
        input_fanin: input.map(|p| p.1),
        output_beta: output.map(|p| p.0),
        output_fanin: output.map(|p| p.1),
        depth_factor: 1,
        width_factor: 1,
        seed: 0,
        pipeline_strategy: PipelineStrategy::Combined,
    }
}

pub fn preset(name: &str) -> Result<NetworkConfig> {
    const HDR: &[usize] = &[256, 100, 100, 100, 100, 10];
    const JSC_XL: &[usize] = &[128, 64, 64, 64, 5];
    const JSC_M: &[usize] = &[64, 32, 5];
    let cfg = match name {
        "hdr" => preset_config(name, MNIST_INPUTS, HDR, 2, 6, 1, 2, None, None),
        "jsc-xl" => preset_config(name, JSC_INPUTS, JSC_XL, 5, 3, 1, 2, Some((7, 2)), None),
        "jsc-m-lite" => preset_config(name, JSC_INPUTS, JSC_M, 3, 4, 1, 2, None, None),
        "nid-lite" => preset_config(
            name,
            UNSW_INPUTS,
            &[686, 147, 98, 49, 1],
            3,
            5,
            1,
            2,
            Some((1, 7)),
            None,
        ),
        "hdr-add2" => preset_config(name, MNIST_INPUTS, HDR, 2, 4, 3, 2, None, None),
        "jsc-xl-add2" => {
            preset_config(name, JSC_INPUTS, JSC_XL, 5, 2, 3, 2, Some((7, 1)), None)
        }
        "jsc-m-lite-add2" => preset_config(name, JSC_INPUTS, JSC_M, 3, 2, 3, 2, None, None),
        "nid-add2" => preset_config(
            name,
            UNSW_INPUTS,
            &[100, 100, 50, 50, 1],
            2,
            3,
            1,
            2,
            Some((1, 6)),
            Some((2, 7)),
        ),
        other => {
            return Err(Error::Invalid(format!(
                "unknown preset `{other}` (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(cfg)
}

/// One point of the PolyLUT / Deeper / Wider / Add comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationPoint {
    pub label: String,
    pub config: NetworkConfig,
}

/// Variant factors for [`ablation_grid`]. Each listed value above 1 yields one
/// configuration derived from the base with only that factor changed.
#[derive(Clone, Debug, Default)]
pub struct AblationVariants {
    pub deeper: Vec<usize>,
    pub wider: Vec<usize>,
    pub add: Vec<usize>,
}

/// The baseline (A=1, factors 1) followed by its Deeper, Wider and Add variants,
/// each validated and expanded.
pub fn ablation_grid(base: &NetworkConfig, variants: &AblationVariants) -> Result<Vec<AblationPoint>> {
    let mut baseline = base.clone();
    baseline.adder = 1;
    baseline.depth_factor = 1;
    baseline.width_factor = 1;
    let mut points = vec![AblationPoint {
        label: "polylut".into(),
        config: validate_config(&baseline)?,
    }];
    for &d in variants.deeper.iter().filter(|&&d| d > 1) {
        let mut cfg = baseline.clone();
        cfg.depth_factor = d;
        points.push(AblationPoint { label: format!("deeper-{d}"), config: validate_config(&cfg)? });
    }
    for &w in variants.wider.iter().filter(|&&w| w > 1) {
        let mut cfg = baseline.clone();
        cfg.width_factor = w;
        points.push(AblationPoint { label: format!("wider-{w}"), config: validate_config(&cfg)? });
    }
    for &a in variants.add.iter().filter(|&&a| a > 1) {
        let mut cfg = baseline.clone();
        cfg.adder = a;
        points.push(AblationPoint { label: format!("add-{a}"), config: validate_config(&cfg)? });
    }
    Ok(points)
}

/// Parses a TOML config document.
pub fn parse_config(text: &str) -> Result<NetworkConfig> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: "<config>".into(),
        line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
        msg: e.message().to_string(),
    })
}

pub fn config_to_toml(cfg: &NetworkConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}
