//! Monomial bases and polynomial neuron arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All exponent vectors over `fanin` variables with total degree at most `degree`.
///
/// Order is graded: ascending total degree, and within one degree descending
/// lexicographic order of the exponent vector. For two variables and degree two
/// this gives `1, x0, x1, x0^2, x0*x1, x1^2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonomialBasis {
    fanin: usize,
    degree: u32,
    exponents: Vec<Vec<u32>>,
}

/// C(fanin + degree, degree), or `None` on overflow.
pub fn monomial_count(fanin: usize, degree: u32) -> Option<usize> {
    // C(n, k) built incrementally as C(n-k+i, i); every partial is an integer
    let n = fanin.checked_add(degree as usize)?;
    let k = degree as usize;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul((n - k + i) as u128)? / i as u128;
    }
    usize::try_from(acc).ok()
}

/// Largest basis we are willing to materialize.
const MAX_BASIS_LEN: usize = 1 << 24;

pub fn enumerate_monomials(fanin: usize, degree: u32) -> Result<MonomialBasis> {
    if fanin == 0 || degree == 0 {
        return Err(Error::Invalid(format!(
            "monomial basis needs F >= 1 and D >= 1 (got F={fanin}, D={degree})"
        )));
    }
    let count = monomial_count(fanin, degree)
        .filter(|&c| c <= MAX_BASIS_LEN)
        .ok_or(Error::MonomialOverflow { fanin, degree })?;
    let mut exponents = Vec::with_capacity(count);
    let mut current = vec![0u32; fanin];
    for total in 0..=degree {
        push_degree(&mut exponents, &mut current, 0, total);
    }
    debug_assert_eq!(exponents.len(), count);
    Ok(MonomialBasis { fanin, degree, exponents })
}

// Fills positions `pos..` so the remaining exponents sum to `left`, largest
// leading exponent first.
fn push_degree(out: &mut Vec<Vec<u32>>, current: &mut [u32], pos: usize, left: u32) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(current.to_vec());
        return;
    }
    for e in (0..=left).rev() {
        current[pos] = e;
        push_degree(out, current, pos + 1, left - e);
    }
    current[pos] = 0;
}

impl MonomialBasis {
    pub fn fanin(&self) -> usize {
        self.fanin
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    /// Writes the value of every monomial at `x` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.fanin);
        for (slot, exps) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (&xi, &e) in x.iter().zip(exps) {
                if e > 0 {
                    v *= xi.powi(e as i32);
                }
            }
            *slot = v;
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    /// Partial derivatives of every monomial with respect to `x[var]`.
    pub fn eval_partial_into(&self, x: &[f64], var: usize, out: &mut [f64]) {
        for (slot, exps) in out.iter_mut().zip(&self.exponents) {
            let e = exps[var];
            if e == 0 {
                *slot = 0.0;
                continue;
            }
            let mut v = e as f64 * x[var].powi(e as i32 - 1);
            for (j, (&xj, &ej)) in x.iter().zip(exps).enumerate() {
                if j != var && ej > 0 {
                    v *= xj.powi(ej as i32);
                }
            }
            *slot = v;
        }
    }
}

pub fn eval_monomials(basis: &MonomialBasis, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != basis.fanin {
        return Err(Error::Dimension(format!(
            "basis has {} variables, input has {}",
            basis.fanin,
            x.len()
        )));
    }
    Ok(basis.eval(x))
}

/// One polynomial sub-neuron. The bias is the weight of the constant monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyNeuron {
    pub weights: Vec<f64>,
}

impl PolyNeuron {
    pub fn new(basis: &MonomialBasis, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != basis.len() {
            return Err(Error::Dimension(format!(
                "{} weights for a basis of {} monomials",
                weights.len(),
                basis.len()
            )));
        }
        Ok(Self { weights })
    }

    pub fn bias(&self) -> f64 {
        self.weights[0]
    }
}

/// `sum_i w_i * m_i(x)`, accumulated in basis order starting from 0.0.
///
/// `scratch` must hold `basis.len()` values. Table generation and the reference
/// forward pass both go through this function so their results agree bit for bit.
pub fn preactivation_with(basis: &MonomialBasis, weights: &[f64], x: &[f64], scratch: &mut [f64]) -> f64 {
    basis.eval_into(x, scratch);
    let mut acc = 0.0;
    for (w, m) in weights.iter().zip(scratch.iter()) {
        acc += w * m;
    }
    acc
}

pub fn neuron_preactivation(basis: &MonomialBasis, neuron: &PolyNeuron, x: &[f64]) -> Result<f64> {
    if neuron.weights.len() != basis.len() || x.len() != basis.fanin {
        return Err(Error::Dimension(format!(
            "neuron with {} weights over {} monomials given {} inputs (expected {})",
            neuron.weights.len(),
            basis.len(),
            x.len(),
            basis.fanin
        )));
    }
    let mut scratch = vec![0.0; basis.len()];
    Ok(preactivation_with(basis, &neuron.weights, x, &mut scratch))
}

/// Splits a wide affine neuron `w . x + b` over A*F inputs into A degree-1
/// sub-neurons over consecutive ranges of F inputs. Sub-neuron 0 takes the whole
/// bias; the others get zero.
pub fn decompose_wide_dot(wide_weights: &[f64], bias: f64, groups: usize) -> Result<Vec<PolyNeuron>> {
    if groups == 0 || wide_weights.is_empty() || !wide_weights.len().is_multiple_of(groups) {
        return Err(Error::Indivisible { len: wide_weights.len(), groups });
    }
    let fanin = wide_weights.len() / groups;
    Ok(wide_weights
        .chunks(fanin)
        .enumerate()
        .map(|(a, chunk)| {
            let mut weights = Vec::with_capacity(fanin + 1);
            weights.push(if a == 0 { bias } else { 0.0 });
            weights.extend_from_slice(chunk);
            PolyNeuron { weights }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Brute-force count of exponent vectors with sum <= d.
    fn brute_count(f: usize, d: u32) -> usize {
        fn rec(f: usize, left: u32) -> usize {
            if f == 0 {
                return 1;
            }
            (0..=left).map(|e| rec(f - 1, left - e)).sum()
        }
        rec(f, d)
    }

    #[test]
    fn basis_two_by_two_matches_worked_list() {
        let b = enumerate_monomials(2, 2).unwrap();
        let expected: Vec<Vec<u32>> =
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(b.exponents(), expected.as_slice());
    }

    #[test]
    fn basis_counts() {
        assert_eq!(enumerate_monomials(5, 1).unwrap().len(), 6);
        assert_eq!(enumerate_monomials(6, 2).unwrap().len(), 28);
        for f in 1..=8 {
            for d in 1..=6 {
                let b = enumerate_monomials(f, d).unwrap();
                assert_eq!(b.len(), brute_count(f, d), "F={f} D={d}");
                assert_eq!(Some(b.len()), monomial_count(f, d));
                assert!(b.exponents()[0].iter().all(|&e| e == 0));
                assert_eq!(b.exponents().iter().filter(|e| e.iter().all(|&x| x == 0)).count(), 1);
            }
        }
    }

    #[test]
    fn degree_one_is_affine_basis() {
        let b = enumerate_monomials(4, 1).unwrap();
        for (i, e) in b.exponents().iter().enumerate().skip(1) {
            let mut unit = vec![0; 4];
            unit[i - 1] = 1;
            assert_eq!(e, &unit);
        }
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(
            enumerate_monomials(usize::MAX - 1, 3),
            Err(Error::MonomialOverflow { .. })
        ));
        assert!(matches!(enumerate_monomials(200, 6), Err(Error::MonomialOverflow { .. })));
    }

    #[test]
    fn eval_examples() {
        let b = enumerate_monomials(2, 2).unwrap();
        assert_eq!(b.eval(&[0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(b.eval(&[2.0, 3.0]), vec![1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        let b1 = enumerate_monomials(1, 3).unwrap();
        assert_eq!(b1.eval(&[-1.0]), vec![1.0, -1.0, 1.0, -1.0]);
        assert!(eval_monomials(&b, &[1.0]).is_err());
    }

    #[test]
    fn preactivation_examples() {
        let b = enumerate_monomials(2, 2).unwrap();
        let n = PolyNeuron::new(&b, vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(neuron_preactivation(&b, &n, &[2.0, 3.0]).unwrap(), 14.0);
        let zero = PolyNeuron::new(&b, vec![0.0; 6]).unwrap();
        assert_eq!(neuron_preactivation(&b, &zero, &[-7.5, 3.25]).unwrap(), 0.0);

        let lin = enumerate_monomials(3, 1).unwrap();
        let n = PolyNeuron::new(&lin, vec![0.5, 1.0, -2.0, 4.0]).unwrap();
        assert_eq!(neuron_preactivation(&lin, &n, &[1.0, 2.0, 3.0]).unwrap(), 0.5 + 1.0 - 4.0 + 12.0);
        assert!(PolyNeuron::new(&lin, vec![0.0; 3]).is_err());
    }

    #[test]
    fn partial_derivatives_match_hand_values() {
        let b = enumerate_monomials(2, 2).unwrap();
        let mut d = vec![0.0; 6];
        b.eval_partial_into(&[2.0, 3.0], 0, &mut d);
        // d/dx0 of [1, x0, x1, x0^2, x0 x1, x1^2]
        assert_eq!(d, vec![0.0, 1.0, 0.0, 4.0, 3.0, 0.0]);
    }

    #[test]
    fn decomposition_examples() {
        let one = decompose_wide_dot(&[1.0, 2.0], 3.0, 1).unwrap();
        assert_eq!(one, vec![PolyNeuron { weights: vec![3.0, 1.0, 2.0] }]);

        let parts = decompose_wide_dot(&[1.0, 2.0, 3.0, 4.0], 10.0, 2).unwrap();
        let b = enumerate_monomials(2, 1).unwrap();
        let x = [1.0, 1.0, 1.0, 1.0];
        let total: f64 = parts
            .iter()
            .enumerate()
            .map(|(a, p)| neuron_preactivation(&b, p, &x[a * 2..a * 2 + 2]).unwrap())
            .sum();
        assert_eq!(total, 20.0);
        assert!(matches!(decompose_wide_dot(&[1.0, 2.0, 3.0], 0.0, 2), Err(Error::Indivisible { .. })));
    }

    #[test]
    fn decomposition_is_exact_on_integer_grid() {
        // A=3, F=2 with integer weights: exhaustive over x in {-2..2}^6
        let w = [3.0, -1.0, 2.0, 5.0, -4.0, 1.0];
        let bias = 7.0;
        let parts = decompose_wide_dot(&w, bias, 3).unwrap();
        let b = enumerate_monomials(2, 1).unwrap();
        let mut x = [0.0; 6];
        for code in 0..5usize.pow(6) {
            let mut c = code;
            for xi in x.iter_mut() {
                *xi = (c % 5) as f64 - 2.0;
                c /= 5;
            }
            let wide: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + bias;
            let split: f64 = parts
                .iter()
                .enumerate()
                .map(|(a, p)| neuron_preactivation(&b, p, &x[2 * a..2 * a + 2]).unwrap())
                .sum();
            assert_eq!(wide, split);
        }
    }

    proptest! {
        #[test]
        fn monomials_are_multiplicative(
            f in 1usize..5, d in 1u32..4,
            xs in proptest::collection::vec(-4i32..5, 8),
            ys in proptest::collection::vec(-4i32..5, 8),
        ) {
            // integer-valued inputs keep every product exact
            let b = enumerate_monomials(f, d).unwrap();
            let x: Vec<f64> = xs[..f].iter().map(|&v| v as f64).collect();
            let y: Vec<f64> = ys[..f].iter().map(|&v| v as f64).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
            let mx = b.eval(&x);
            let my = b.eval(&y);
            let mxy = b.eval(&xy);
            for i in 0..b.len() {
                prop_assert_eq!(mxy[i], mx[i] * my[i]);
            }
        }
    }
}
