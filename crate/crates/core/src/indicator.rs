//! Indicator polynomials over a set of nodes and their pairing with
//! contracted moments.
//!
//! For nodes `x_1 ≤ … ≤ x_k` and a window `I = [a, b]` the polynomial
//!
//! ```text
//! p(x) = Π_{j∉I} (1 − Π_{i∈I} (x − x_i) / (x_j − x_i))
//! ```
//!
//! equals 1 on the window's nodes and 0 on the others, with degree
//! `|I|·(k − |I|)`. Coefficients are expanded in the monomial basis using
//! double-double arithmetic because they grow like `(1/Δ)^{O(k²)}` and the
//! expansion cancels heavily. Every constructed polynomial is checked at the
//! nodes against the product form; disagreement beyond
//! [`SENTINEL_TOL`] is reported as [`Error::IllConditioned`].
//!
//! Window indices are zero-based and inclusive.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::moments::ContractedMoment;

pub const SENTINEL_TOL: f64 = 1e-6;

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }

    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Self) -> Self {
        self.add(o.neg())
    }

    fn mul(self, o: Self) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Self::from_f64(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Self::from_f64(q2)));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo }.add(Self::from_f64(q3))
    }
}

fn poly_mul(a: &[DoubleDouble], b: &[DoubleDouble]) -> Vec<DoubleDouble> {
    let mut out = vec![DoubleDouble::ZERO; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(ai.mul(bj));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorPolynomial {
    /// `p_0, …, p_D` in the monomial basis.
    pub coefficients: Vec<f64>,
    pub nodes: Vec<f64>,
    /// Inclusive zero-based window `[a, b]`.
    pub window: (usize, usize),
    pub max_abs_coefficient: f64,
    pub coefficient_l1: f64,
    /// Smallest `|x_j − x_i|` with `i` inside and `j` outside the window.
    pub min_cross_separation: f64,
    /// Worst `|p(x_s) − 1{s∈I}|` over the nodes, monomial form.
    pub node_residual: f64,
}

impl IndicatorPolynomial {
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// `|I|·(k − |I|)`.
    pub fn degree_bound(&self) -> usize {
        let size = self.window.1 - self.window.0 + 1;
        size * (self.nodes.len() - size)
    }

    /// `(3/Δ_min)^D`, a soft reference scale for the coefficients.
    pub fn reference_bound(&self) -> f64 {
        if self.degree() == 0 {
            return 1.0;
        }
        (3.0 / self.min_cross_separation).powi(self.degree() as i32)
    }

    pub fn in_window(&self, s: usize) -> bool {
        self.window.0 <= s && s <= self.window.1
    }

    /// Horner evaluation of the monomial form.
    pub fn eval(&self, t: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Horner evaluation in double-double arithmetic.
    pub fn eval_compensated(&self, t: f64) -> f64 {
        let t = DoubleDouble::from_f64(t);
        self.coefficients
            .iter()
            .rev()
            .fold(DoubleDouble::ZERO, |acc, &c| acc.mul(t).add(DoubleDouble::from_f64(c)))
            .to_f64()
    }

    /// Evaluation from the nodes, without the coefficients.
    pub fn eval_product(&self, t: f64) -> f64 {
        let (a, b) = self.window;
        let inside = &self.nodes[a..=b];
        let mut acc = 1.0;
        for (j, &xj) in self.nodes.iter().enumerate() {
            if self.in_window(j) {
                continue;
            }
            let q: f64 = inside.iter().map(|&xi| (t - xi) / (xj - xi)).product();
            acc *= 1.0 - q;
        }
        acc
    }
}

/// Builds the indicator of window `[a, b]` over sorted nodes in `[−1, 1]`.
pub fn build_indicator(nodes: &[f64], a: usize, b: usize) -> Result<IndicatorPolynomial> {
    let k = nodes.len();
    if a > b || b >= k {
        return invalid(format!("window [{a}, {b}] out of range for {k} nodes"));
    }
    if nodes.iter().any(|x| !x.is_finite() || x.abs() > 1.0) {
        return invalid("nodes must lie in [-1, 1]");
    }
    if nodes.windows(2).any(|w| w[1] < w[0]) {
        return invalid("nodes must be sorted ascending");
    }
    let inside = &nodes[a..=b];
    let mut min_cross_separation = f64::INFINITY;
    for (j, &xj) in nodes.iter().enumerate() {
        if (a..=b).contains(&j) {
            continue;
        }
        for &xi in inside {
            let gap = (xj - xi).abs();
            if gap == 0.0 {
                return invalid(format!("node {j} coincides with a node inside the window"));
            }
            min_cross_separation = min_cross_separation.min(gap);
        }
    }

    let mut p = vec![DoubleDouble::ONE];
    for (j, &xj) in nodes.iter().enumerate() {
        if (a..=b).contains(&j) {
            continue;
        }
        let mut q = vec![DoubleDouble::ONE];
        for &xi in inside {
            let denom = DoubleDouble::from_f64(xj).sub(DoubleDouble::from_f64(xi));
            let root = DoubleDouble::from_f64(xi).neg().div(denom);
            let slope = DoubleDouble::ONE.div(denom);
            q = poly_mul(&q, &[root, slope]);
        }
        for c in q.iter_mut() {
            *c = c.neg();
        }
        q[0] = q[0].add(DoubleDouble::ONE);
        p = poly_mul(&p, &q);
    }
    let coefficients: Vec<f64> = p.iter().map(|c| c.to_f64()).collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::IllConditioned("indicator coefficients overflowed".into()));
    }
    let mut poly = IndicatorPolynomial {
        max_abs_coefficient: coefficients.iter().fold(0.0, |m, c| m.max(c.abs())),
        coefficient_l1: coefficients.iter().map(|c| c.abs()).sum(),
        coefficients,
        nodes: nodes.to_vec(),
        window: (a, b),
        min_cross_separation: if min_cross_separation.is_finite() { min_cross_separation } else { 2.0 },
        node_residual: 0.0,
    };
    let mut residual = 0.0f64;
    for (s, &x) in nodes.iter().enumerate() {
        let mono = poly.eval_compensated(x);
        let prod = poly.eval_product(x);
        if (mono - prod).abs() > SENTINEL_TOL {
            return Err(Error::IllConditioned(format!("monomial form gives {mono} at node {s}, product form {prod}")));
        }
        let target = if poly.in_window(s) { 1.0 } else { 0.0 };
        residual = residual.max((mono - target).abs());
    }
    poly.node_residual = residual;
    Ok(poly)
}

/// `Σ_ℓ p_ℓ M_{2+2ℓ}`.
pub fn cluster_moment_combination(
    p: &IndicatorPolynomial,
    moments: &BTreeMap<usize, ContractedMoment>,
) -> Result<DMatrix<f64>> {
    let first = moments.values().next().ok_or_else(|| Error::InvalidArgument("no moments supplied".into()))?;
    let d = first.matrix.nrows();
    let mut acc = DMatrix::zeros(d, d);
    for (l, &c) in p.coefficients.iter().enumerate() {
        let order = 2 + 2 * l;
        let m =
            moments.get(&order).ok_or_else(|| Error::InvalidArgument(format!("moment of order {order} missing")))?;
        if m.g.len() != first.g.len() || (&m.g - &first.g).amax() > 1e-12 {
            return invalid("moments were contracted along different directions");
        }
        acc += &m.matrix * c;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_example() {
        let p = build_indicator(&[0.0, 0.5], 1, 1).unwrap();
        assert_eq!(p.degree(), 1);
        assert!((p.coefficients[0]).abs() < 1e-15);
        assert!((p.coefficients[1] - 2.0).abs() < 1e-15);
        assert!((p.eval(0.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_node_example() {
        let p = build_indicator(&[0.0, 0.5, 1.0], 0, 0).unwrap();
        // (1 − 2x)(1 − x) = 1 − 3x + 2x²
        let want = [1.0, -3.0, 2.0];
        for (c, w) in p.coefficients.iter().zip(want) {
            assert!((c - w).abs() < 1e-14);
        }
        assert_eq!(p.degree(), p.degree_bound());
        for (x, v) in [(0.0, 1.0), (0.5, 0.0), (1.0, 0.0)] {
            assert!((p.eval(x) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn full_window_is_constant() {
        let p = build_indicator(&[-0.3, 0.1, 0.7], 0, 2).unwrap();
        assert_eq!(p.coefficients, vec![1.0]);
        assert_eq!(p.eval(0.42), 1.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_indicator(&[0.0, 0.5], 1, 2).is_err());
        assert!(build_indicator(&[0.0, 0.5], 1, 0).is_err());
        assert!(build_indicator(&[0.0, 1.5], 0, 0).is_err());
        assert!(build_indicator(&[0.5, 0.0], 0, 0).is_err());
        assert!(build_indicator(&[0.2, 0.2], 0, 0).is_err());
        // coincident nodes inside the window are fine
        assert!(build_indicator(&[0.2, 0.2, 0.6], 0, 1).is_ok());
    }

    #[test]
    fn double_double_division_is_accurate() {
        let third = DoubleDouble::ONE.div(DoubleDouble::from_f64(3.0));
        let back = third.mul(DoubleDouble::from_f64(3.0)).sub(DoubleDouble::ONE);
        assert!(back.to_f64().abs() < 1e-30);
    }
}
