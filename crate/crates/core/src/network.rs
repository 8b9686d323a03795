//! Trained network parameters and the reference (non-table) inference path.
//!
//! The scalar kernels here ([`sub_code`], [`neuron_code`]) are the single
//! definition of what every table entry must contain; the table generator calls
//! them directly, so table lookups and reference evaluation agree bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{generate_connectivity, validate_config, Connectivity, LayerGeometry, NetworkConfig};
use crate::error::{Error, Result};
use crate::poly::{enumerate_monomials, preactivation_with, MonomialBasis, PolyNeuron};
use crate::quant::{activation_quantized, fold_batchnorm, quantize, subneuron_output_spec, BatchNormAffine, QuantSpec};
use crate::rng::SeededRng;

pub const MODEL_FORMAT: &str = "lutnet-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// One polynomial per sub-neuron group, in connectivity order.
    pub subs: Vec<PolyNeuron>,
    pub bn: BatchNormAffine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Spec of the words this layer reads.
    pub input_spec: QuantSpec,
    /// Signed, one bit wider than the output word; only used when A >= 2.
    pub sub_spec: QuantSpec,
    /// Unsigned ReLU output for hidden layers, signed raw scores for the last.
    pub output_spec: QuantSpec,
    pub neurons: Vec<NeuronParams>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub seed: u64,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub format: String,
    pub version: u32,
    pub config: NetworkConfig,
    pub connectivity: Connectivity,
    pub layers: Vec<LayerParams>,
    pub meta: TrainingMeta,
}

/// Spec of the network's raw input words: features normalized to [0, 1].
pub fn input_spec(bits: u32) -> QuantSpec {
    QuantSpec::unsigned(bits, 1.0 / ((1u64 << bits) - 1) as f64)
}

/// Initial activation spec: hidden ReLU outputs cover [0, 2], final scores [-2, 2).
pub fn default_output_spec(geo: &LayerGeometry) -> QuantSpec {
    if geo.is_output {
        QuantSpec::signed(geo.out_bits, 2.0 / (1u64 << (geo.out_bits - 1)) as f64)
    } else {
        QuantSpec::unsigned(geo.out_bits, 2.0 / ((1u64 << geo.out_bits) - 1) as f64)
    }
}

impl TrainedNetwork {
    /// Fresh network: seeded connectivity and weights drawn uniformly from
    /// `[-1/sqrt(M), 1/sqrt(M)]` per sub-neuron, identity batch norm.
    pub fn init(cfg: &NetworkConfig) -> Result<Self> {
        let cfg = validate_config(cfg)?;
        let connectivity = generate_connectivity(&cfg)?;
        let mut rng = SeededRng::derived(cfg.seed, INIT_STREAM);
        let mut layers = Vec::new();
        let mut prev_spec = input_spec(cfg.input_bits());
        for geo in cfg.geometry() {
            let m = enumerate_monomials(geo.fanin, geo.degree)?.len();
            let bound = 1.0 / (m as f64).sqrt();
            let neurons = (0..geo.width)
                .map(|_| NeuronParams {
                    subs: (0..geo.adder)
                        .map(|_| PolyNeuron {
                            weights: (0..m).map(|_| rng.uniform(-bound, bound)).collect(),
                        })
                        .collect(),
                    bn: BatchNormAffine::default(),
                })
                .collect();
            let output_spec = default_output_spec(&geo);
            layers.push(LayerParams {
                input_spec: prev_spec,
                sub_spec: subneuron_output_spec(geo.out_bits),
                output_spec,
                neurons,
            });
            prev_spec = output_spec;
        }
        Ok(Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: cfg.clone(),
            connectivity,
            layers,
            meta: TrainingMeta { seed: cfg.seed, ..Default::default() },
        })
    }

    pub fn geometry(&self) -> Vec<LayerGeometry> {
        self.config.geometry()
    }

    pub fn input_width(&self) -> usize {
        self.config.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.config.input_width, |l| l.neurons.len())
    }

    /// Structural consistency of config, connectivity and parameter tensors.
    pub fn check(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Invalid(format!("not a model file (format `{}`)", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Version { kind: "model", found: self.version, expected: MODEL_VERSION });
        }
        let geometry = validate_config(&self.config)?.geometry();
        let dim = |msg: String| Err(Error::Dimension(msg));
        if geometry.len() != self.layers.len() || geometry.len() != self.connectivity.layers.len() {
            return dim(format!(
                "config has {} layers, parameters {}, connectivity {}",
                geometry.len(),
                self.layers.len(),
                self.connectivity.layers.len()
            ));
        }
        for (geo, (layer, conn)) in geometry.iter().zip(self.layers.iter().zip(&self.connectivity.layers)) {
            let m = enumerate_monomials(geo.fanin, geo.degree)?.len();
            if layer.neurons.len() != geo.width || conn.len() != geo.width {
                return dim(format!("layer {} width mismatch", geo.index));
            }
            if layer.input_spec.bits != geo.in_bits
                || layer.output_spec.bits != geo.out_bits
                || layer.sub_spec.bits != geo.sub_output_bits()
            {
                return dim(format!("layer {} quantizer widths disagree with config", geo.index));
            }
            for (n, (neuron, groups)) in layer.neurons.iter().zip(conn).enumerate() {
                if neuron.subs.len() != geo.adder || groups.len() != geo.adder {
                    return dim(format!("layer {} neuron {n}: expected {} groups", geo.index, geo.adder));
                }
                for (sub, group) in neuron.subs.iter().zip(groups) {
                    if sub.weights.len() != m {
                        return dim(format!(
                            "layer {} neuron {n}: {} weights, expected {m}",
                            geo.index,
                            sub.weights.len()
                        ));
                    }
                    if group.len() != geo.fanin || group.iter().any(|&i| i as usize >= geo.in_width) {
                        return dim(format!("layer {} neuron {n}: bad source indices", geo.index));
                    }
                }
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].output_spec != pair[1].input_spec {
                return dim("adjacent layer quantizers disagree".into());
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: TrainedNetwork = serde_json::from_str(text)?;
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

    pub fn evaluator(&self) -> Result<Evaluator<'_>> {
        Evaluator::new(self)
    }
}

pub const INIT_STREAM: u64 = 2;

/// Code emitted by poly sub-neuron `group` given its dequantized inputs.
///
/// With an adder after it this is the signed sub-neuron code. For A = 1 the
/// sub-neuron table is fused with batch norm and activation, so this returns
/// the neuron's output code.
pub fn sub_code(
    layer: &LayerParams,
    is_output: bool,
    basis: &MonomialBasis,
    neuron: &NeuronParams,
    group: usize,
    inputs: &[f64],
    scratch: &mut [f64],
) -> i64 {
    let pre = preactivation_with(basis, &neuron.subs[group].weights, inputs, scratch);
    if neuron.subs.len() == 1 {
        output_code(layer, is_output, neuron, pre)
    } else {
        quantize(pre, &layer.sub_spec)
    }
}

/// Adder-unit output: sum of dequantized sub-neuron codes (in group order),
/// then batch norm and the output quantizer.
pub fn neuron_code(layer: &LayerParams, is_output: bool, neuron: &NeuronParams, sub_codes: &[i64]) -> i64 {
    let mut sum = 0.0;
    for &c in sub_codes {
        sum += layer.sub_spec.dequantize(c);
    }
    output_code(layer, is_output, neuron, sum)
}

fn output_code(layer: &LayerParams, is_output: bool, neuron: &NeuronParams, sum: f64) -> i64 {
    let (a, c) = fold_batchnorm(&neuron.bn);
    let y = a * sum + c;
    if is_output {
        quantize(y, &layer.output_spec)
    } else {
        activation_quantized(y, &layer.output_spec)
    }
}

/// Reference evaluator with per-layer monomial bases prepared once.
pub struct Evaluator<'a> {
    net: &'a TrainedNetwork,
    geometry: Vec<LayerGeometry>,
    bases: Vec<MonomialBasis>,
}

impl<'a> Evaluator<'a> {
    pub fn new(net: &'a TrainedNetwork) -> Result<Self> {
        let geometry = net.geometry();
        let bases = geometry
            .iter()
            .map(|g| enumerate_monomials(g.fanin, g.degree))
            .collect::<Result<_>>()?;
        Ok(Self { net, geometry, bases })
    }

    pub fn network(&self) -> &TrainedNetwork {
        self.net
    }

    pub fn basis(&self, layer: usize) -> &MonomialBasis {
        &self.bases[layer]
    }

    pub fn quantize_input(&self, x: &[f64]) -> Vec<i64> {
        let spec = self.net.layers.first().map_or_else(|| input_spec(self.net.config.input_bits()), |l| l.input_spec);
        x.iter().map(|&v| spec.quantize(v)).collect()
    }

    /// Integer reference path from network input codes to output codes.
    pub fn forward_codes(&self, input: &[i64]) -> Result<Vec<i64>> {
        if input.len() != self.net.input_width() {
            return Err(Error::Dimension(format!(
                "input has {} words, network expects {}",
                input.len(),
                self.net.input_width()
            )));
        }
        let mut codes = input.to_vec();
        let mut vals = Vec::new();
        let mut x = Vec::new();
        let mut subs = Vec::new();
        for ((geo, layer), (basis, conn)) in self
            .geometry
            .iter()
            .zip(&self.net.layers)
            .zip(self.bases.iter().zip(&self.net.connectivity.layers))
        {
            let mut scratch = vec![0.0; basis.len()];
            vals.clear();
            vals.extend(codes.iter().map(|&c| layer.input_spec.dequantize(c)));
            let mut next = Vec::with_capacity(geo.width);
            for (neuron, groups) in layer.neurons.iter().zip(conn) {
                subs.clear();
                for (a, group) in groups.iter().enumerate() {
                    x.clear();
                    x.extend(group.iter().map(|&i| vals[i as usize]));
                    subs.push(sub_code(layer, geo.is_output, basis, neuron, a, &x, &mut scratch));
                }
                next.push(if geo.has_adder() {
                    neuron_code(layer, geo.is_output, neuron, &subs)
                } else {
                    subs[0]
                });
            }
            codes = next;
        }
        Ok(codes)
    }

    /// Class scores for normalized features `x`.
    ///
    /// With `fake_quant` the input is quantized and the integer path is taken,
    /// returning dequantized output codes. Without it every quantizer is the
    /// identity and the network is evaluated in plain floating point.
    pub fn forward(&self, x: &[f64], fake_quant: bool) -> Result<Vec<f64>> {
        if x.len() != self.net.input_width() {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.net.input_width()
            )));
        }
        if fake_quant {
            let out = self.forward_codes(&self.quantize_input(x))?;
            let spec = self.net.layers.last().map_or_else(|| input_spec(self.net.config.input_bits()), |l| l.output_spec);
            return Ok(out.iter().map(|&c| spec.dequantize(c)).collect());
        }
        let mut vals = x.to_vec();
        let mut gathered = Vec::new();
        for ((geo, layer), (basis, conn)) in self
            .geometry
            .iter()
            .zip(&self.net.layers)
            .zip(self.bases.iter().zip(&self.net.connectivity.layers))
        {
            let mut scratch = vec![0.0; basis.len()];
            let mut next = Vec::with_capacity(geo.width);
            for (neuron, groups) in layer.neurons.iter().zip(conn) {
                let mut sum = 0.0;
                for (sub, group) in neuron.subs.iter().zip(groups) {
                    gathered.clear();
                    gathered.extend(group.iter().map(|&i| vals[i as usize]));
                    sum += preactivation_with(basis, &sub.weights, &gathered, &mut scratch);
                }
                let (a, c) = fold_batchnorm(&neuron.bn);
                let y = a * sum + c;
                next.push(if geo.is_output { y } else { y.max(0.0) });
            }
            vals = next;
        }
        Ok(vals)
    }

    /// Index of the predicted class (first maximum; sign test for one output).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax_class(&self.forward(x, true)?))
    }
}

pub fn argmax_class(scores: &[f64]) -> usize {
    if scores.len() == 1 {
        return usize::from(scores[0] > 0.0);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PipelineStrategy;

    pub(crate) fn tiny_config(adder: usize, degree: u32) -> NetworkConfig {
        NetworkConfig {
            name: "tiny".into(),
            input_width: 2,
            layer_widths: vec![3, 2],
            beta: 2,
            fanin: 2,
            degree,
            adder,
            input_beta: None,
            input_fanin: None,
            output_beta: None,
            output_fanin: None,
            depth_factor: 1,
            width_factor: 1,
            seed: 17,
            pipeline_strategy: PipelineStrategy::Combined,
        }
    }

    #[test]
    fn zero_weights_give_zero_scores() {
        let mut net = TrainedNetwork::init(&tiny_config(2, 1)).unwrap();
        for layer in &mut net.layers {
            for n in &mut layer.neurons {
                n.bn = BatchNormAffine::identity();
                for s in &mut n.subs {
                    s.weights.iter_mut().for_each(|w| *w = 0.0);
                }
            }
        }
        let ev = net.evaluator().unwrap();
        for fq in [false, true] {
            assert_eq!(ev.forward(&[0.3, 0.9], fq).unwrap(), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn float_forward_with_one_group_is_sparse_mlp() {
        let net = TrainedNetwork::init(&tiny_config(1, 1)).unwrap();
        let ev = net.evaluator().unwrap();
        let x = [0.25, 0.75];
        let mut h = Vec::new();
        for (n, neuron) in net.layers[0].neurons.iter().enumerate() {
            let src = &net.connectivity.layers[0][n][0];
            let w = &neuron.subs[0].weights;
            let z = w[0] + w[1] * x[src[0] as usize] + w[2] * x[src[1] as usize];
            let (a, c) = fold_batchnorm(&neuron.bn);
            h.push((a * z + c).max(0.0));
        }
        let mut out = Vec::new();
        for (n, neuron) in net.layers[1].neurons.iter().enumerate() {
            let src = &net.connectivity.layers[1][n][0];
            let w = &neuron.subs[0].weights;
            let z = w[0] + w[1] * h[src[0] as usize] + w[2] * h[src[1] as usize];
            let (a, c) = fold_batchnorm(&neuron.bn);
            out.push(a * z + c);
        }
        let got = ev.forward(&x, false).unwrap();
        for (g, e) in got.iter().zip(&out) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn fake_quant_outputs_are_representable() {
        let net = TrainedNetwork::init(&tiny_config(2, 2)).unwrap();
        let ev = net.evaluator().unwrap();
        let spec = net.layers[1].output_spec;
        for i in 0..50 {
            let x = [i as f64 / 49.0, 1.0 - i as f64 / 49.0];
            for s in ev.forward(&x, true).unwrap() {
                let code = spec.quantize(s);
                assert_eq!(spec.dequantize(code), s);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = TrainedNetwork::init(&tiny_config(2, 1)).unwrap();
        let ev = net.evaluator().unwrap();
        assert!(matches!(ev.forward(&[0.0; 3], false), Err(Error::Dimension(_))));
        assert!(matches!(ev.forward_codes(&[0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut net = TrainedNetwork::init(&tiny_config(3, 2)).unwrap();
        net.layers[0].neurons[1].bn.running_var = 0.1 + 1e-17;
        net.layers[0].neurons[1].subs[0].weights[2] = std::f64::consts::PI / 7.0;
        let back = TrainedNetwork::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut net = TrainedNetwork::init(&tiny_config(1, 1)).unwrap();
        net.version = 99;
        assert!(matches!(
            TrainedNetwork::from_json(&net.to_json()),
            Err(Error::Version { found: 99, .. })
        ));
    }
}
