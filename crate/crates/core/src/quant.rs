//! Uniform quantizers, batch-norm folding and the sub-neuron word-growth rule.
//!
//! Rounding is half away from zero (`f64::round`) followed by saturation.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u32,
    pub signed: bool,
    pub scale: f64,
    pub zero_point: i64,
}

impl QuantSpec {
    pub fn unsigned(bits: u32, scale: f64) -> Self {
        Self { bits, signed: false, scale, zero_point: 0 }
    }

    pub fn signed(bits: u32, scale: f64) -> Self {
        Self { bits, signed: true, scale, zero_point: 0 }
    }

    pub fn min_code(&self) -> i64 {
        if self.signed {
            -(1i64 << (self.bits - 1))
        } else {
            0
        }
    }

    pub fn max_code(&self) -> i64 {
        if self.signed {
            (1i64 << (self.bits - 1)) - 1
        } else {
            (1i64 << self.bits) - 1
        }
    }

    pub fn with_scale(self, scale: f64) -> Self {
        Self { scale, ..self }
    }

    pub fn quantize(&self, v: f64) -> i64 {
        quantize(v, self)
    }

    pub fn dequantize(&self, code: i64) -> f64 {
        (code - self.zero_point) as f64 * self.scale
    }

    /// Raw bit pattern of a code (two's complement when signed).
    pub fn to_bits(&self, code: i64) -> u16 {
        (code as u64 & ((1u64 << self.bits) - 1)) as u16
    }

    pub fn from_bits(&self, raw: u16) -> i64 {
        let raw = raw as i64 & ((1i64 << self.bits) - 1);
        if self.signed && raw >= 1i64 << (self.bits - 1) {
            raw - (1i64 << self.bits)
        } else {
            raw
        }
    }

    /// Dequantized value of a raw bit pattern.
    pub fn value_of_bits(&self, raw: u16) -> f64 {
        self.dequantize(self.from_bits(raw))
    }

    /// Real interval that maps onto codes without saturating.
    pub fn clip_range(&self) -> (f64, f64) {
        (self.dequantize(self.min_code()), self.dequantize(self.max_code()))
    }
}

/// Nearest code, ties away from zero, saturated to the spec's range. NaN maps to
/// the zero point.
pub fn quantize(v: f64, spec: &QuantSpec) -> i64 {
    let (lo, hi) = (spec.min_code(), spec.max_code());
    if v.is_nan() {
        return spec.zero_point.clamp(lo, hi);
    }
    let t = (v / spec.scale).round() + spec.zero_point as f64;
    if t >= hi as f64 {
        hi
    } else if t <= lo as f64 {
        lo
    } else {
        t as i64
    }
}

/// ReLU followed by quantization onto the layer's unsigned activation spec.
pub fn activation_quantized(pre: f64, spec: &QuantSpec) -> i64 {
    quantize(pre.max(0.0), spec)
}

/// Signed word one bit wider than the activation word, used between the
/// poly stage and the adder. Scale defaults to 1 until training fixes it.
pub fn subneuron_output_spec(beta: u32) -> QuantSpec {
    QuantSpec::signed(beta + 1, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormAffine {
    pub gamma: f64,
    pub beta_shift: f64,
    pub running_mean: f64,
    pub running_var: f64,
    pub epsilon: f64,
}

impl Default for BatchNormAffine {
    fn default() -> Self {
        Self { gamma: 1.0, beta_shift: 0.0, running_mean: 0.0, running_var: 1.0, epsilon: 1e-5 }
    }
}

impl BatchNormAffine {
    pub fn identity() -> Self {
        Self { epsilon: 0.0, ..Self::default() }
    }

    pub fn apply(&self, x: f64) -> f64 {
        self.gamma * (x - self.running_mean) / (self.running_var + self.epsilon).sqrt() + self.beta_shift
    }
}

/// `(a, c)` with `a * x + c` equal to the normalized, shifted value.
pub fn fold_batchnorm(bn: &BatchNormAffine) -> (f64, f64) {
    let a = bn.gamma / (bn.running_var + bn.epsilon).sqrt();
    (a, bn.beta_shift - a * bn.running_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, &QuantSpec::unsigned(2, 0.37)), 0);
        assert_eq!(quantize(0.0, &QuantSpec::signed(3, 0.1)), 0);
        assert_eq!(quantize(7.3, &QuantSpec::unsigned(2, 1.0)), 3);
        // 1.26 / 0.5 = 2.52 -> 3
        assert_eq!(quantize(1.26, &QuantSpec::unsigned(3, 0.5)), 3);
        assert_eq!(quantize(-0.5, &QuantSpec::signed(3, 1.0)), -1);
        assert_eq!(quantize(0.5, &QuantSpec::signed(3, 1.0)), 1);
        assert_eq!(quantize(-100.0, &QuantSpec::signed(3, 1.0)), -4);
    }

    #[test]
    fn non_finite_inputs_saturate() {
        let s = QuantSpec::signed(4, 0.25);
        assert_eq!(quantize(f64::INFINITY, &s), 7);
        assert_eq!(quantize(f64::NEG_INFINITY, &s), -8);
        assert_eq!(quantize(f64::NAN, &s), 0);
    }

    #[test]
    fn activation_examples() {
        let s = QuantSpec::unsigned(2, 1.0);
        assert_eq!(activation_quantized(-5.0, &s), 0);
        assert_eq!(activation_quantized(1e300, &s), 3);
        assert_eq!(activation_quantized(1.4, &s), 1);
    }

    #[test]
    fn subneuron_spec_widths() {
        let s = subneuron_output_spec(2);
        assert!(s.signed);
        assert_eq!(s.bits, 3);
        assert_eq!(2 * s.bits, 6);
        assert_eq!(3 * subneuron_output_spec(3).bits, 12);
        assert_eq!(subneuron_output_spec(1).bits, 2);
    }

    #[test]
    fn bit_patterns_round_trip() {
        let s = QuantSpec::signed(3, 1.0);
        for code in -4..=3 {
            assert_eq!(s.from_bits(s.to_bits(code)), code);
        }
        assert_eq!(s.to_bits(-1), 0b111);
    }

    #[test]
    fn fold_examples() {
        assert_eq!(fold_batchnorm(&BatchNormAffine::identity()), (1.0, 0.0));
        let bn = BatchNormAffine {
            gamma: 2.0,
            beta_shift: 0.0,
            running_mean: 1.0,
            running_var: 4.0,
            epsilon: 0.0,
        };
        assert_eq!(fold_batchnorm(&bn), (1.0, -1.0));
    }

    #[test]
    fn folded_matches_unfolded_on_random_draws() {
        let mut rng = SeededRng::new(42);
        for _ in 0..50 {
            let bn = BatchNormAffine {
                gamma: rng.uniform(-3.0, 3.0),
                beta_shift: rng.uniform(-2.0, 2.0),
                running_mean: rng.uniform(-5.0, 5.0),
                running_var: rng.uniform(0.0, 10.0),
                epsilon: 1e-5,
            };
            let (a, c) = fold_batchnorm(&bn);
            for _ in 0..1000 {
                let x = rng.uniform(-50.0, 50.0);
                let direct = bn.apply(x);
                let folded = a * x + c;
                let denom = direct.abs().max(1.0);
                assert!((direct - folded).abs() / denom < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn quantization_is_monotone(a in -1e3f64..1e3, b in -1e3f64..1e3, bits in 1u32..9, signed: bool, scale in 0.01f64..4.0) {
            let s = QuantSpec { bits, signed, scale, zero_point: 0 };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.quantize(lo) <= s.quantize(hi));
        }

        #[test]
        fn codes_stay_in_range(v in proptest::num::f64::ANY, bits in 1u32..12, signed: bool, scale in 0.001f64..8.0) {
            let s = QuantSpec { bits, signed, scale, zero_point: 0 };
            let c = s.quantize(v);
            prop_assert!(c >= s.min_code() && c <= s.max_code());
        }

        #[test]
        fn dequantize_within_half_step(v in -100f64..100.0, bits in 2u32..10, signed: bool, scale in 0.01f64..2.0) {
            let s = QuantSpec { bits, signed, scale, zero_point: 0 };
            let (lo, hi) = s.clip_range();
            let clamped = v.clamp(lo, hi);
            let back = s.dequantize(s.quantize(v));
            prop_assert!((back - clamped).abs() <= scale / 2.0 + 1e-9);
        }

        #[test]
        fn adder_sum_fits_accumulator(beta in 1u32..8, a in 1usize..5) {
            let s = subneuron_output_spec(beta);
            let width = s.bits + (usize::BITS - (a - 1).leading_zeros());
            let acc_min = -(1i64 << (width - 1));
            let acc_max = (1i64 << (width - 1)) - 1;
            prop_assert_eq!(a as u32 * s.bits, a as u32 * (beta + 1));
            prop_assert!(a as i64 * s.min_code() >= acc_min);
            prop_assert!(a as i64 * s.max_code() <= acc_max);
        }
    }
}
