//! Probabilist's Hermite polynomials, the normalized Hermite tensor `S_ℓ`,
//! and its contraction `S_ℓ(x)(g, …, g, :, :)`.
//!
//! `S_ℓ(x)` is the order-`ℓ` tensor with entry
//! `Π_j He_{ℓ_j}(x_j) / √(ℓ!)`, where `ℓ_j` counts the occurrences of `j` in
//! the multi-index. With this normalization `E[|⟨u,x⟩| S_ℓ(x)] = 2 C_ℓ u^{⊗ℓ}`
//! for every unit `u`, which is what makes the moment estimator unbiased.
//!
//! The contraction along `g` in the first `ℓ − 2` modes has the closed form
//! (`z = ⟨g, x⟩`, `He_m ≡ 0` for `m < 0`)
//!
//! ```text
//! √(ℓ!) · S_ℓ(x)(g,…,g,:,:) = He_{ℓ−2}(z)(xxᵀ − I)
//!                            − (ℓ−2) He_{ℓ−3}(z)(xgᵀ + gxᵀ)
//!                            + (ℓ−2)(ℓ−3) He_{ℓ−4}(z) ggᵀ
//! ```
//!
//! which costs `O(d²)` per sample. [`dense_hermite_tensor`] materializes the
//! full tensor for small cases and is kept as the oracle for that formula.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest order for which double precision is trusted at `|z| ≤ O(√log d)`.
pub const MAX_STABLE_ORDER: usize = 60;

/// Entry cap for [`dense_hermite_tensor`].
pub const DENSE_ENTRY_CAP: f64 = 1e8;

/// A moment order `ℓ ∈ {1, 2, 4, 6, …}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct HermiteOrder(usize);

impl HermiteOrder {
    pub fn new(order: usize) -> Result<Self> {
        if order == 1 || (order >= 2 && order.is_multiple_of(2)) {
            Ok(Self(order))
        } else {
            invalid(format!("moment order must be 1 or even and >= 2, got {order}"))
        }
    }

    /// An even order `ℓ ≥ 2`.
    pub fn even(order: usize) -> Result<Self> {
        if order >= 2 && order.is_multiple_of(2) {
            Ok(Self(order))
        } else {
            invalid(format!("expected an even order >= 2, got {order}"))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for HermiteOrder {
    type Error = Error;
    fn try_from(v: usize) -> Result<Self> {
        Self::new(v)
    }
}

impl From<HermiteOrder> for usize {
    fn from(o: HermiteOrder) -> usize {
        o.0
    }
}

/// `He_n(t)` via `He_{n+1} = t·He_n − n·He_{n−1}`.
pub fn he(n: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if n == 0 {
        return prev;
    }
    for m in 1..n {
        let next = t * cur - m as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[m] = He_m(t)` for `m < out.len()`.
pub fn he_table(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = t;
    }
    for m in 2..out.len() {
        out[m] = t * out[m - 1] - (m - 1) as f64 * out[m - 2];
    }
}

/// `He_n(0)`: zero for odd `n`, `(−1)^{n/2}(n−1)!!` for even `n`.
pub fn he_zero(n: usize) -> f64 {
    if n % 2 == 1 {
        return 0.0;
    }
    let mut v = 1.0;
    let mut m = n as i64 - 1;
    while m > 1 {
        v *= m as f64;
        m -= 2;
    }
    if (n / 2) % 2 == 1 {
        -v
    } else {
        v
    }
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// The normalizing constant of the order-`ℓ` moment estimator:
/// `1/2` for `ℓ = 1`, `(He_ℓ(0) + ℓ·He_{ℓ−2}(0)) / √(2π·ℓ!)` for even `ℓ`.
pub fn c_ell(order: HermiteOrder) -> Result<f64> {
    let l = order.get();
    let c = if l == 1 { 0.5 } else { (he_zero(l) + l as f64 * he_zero(l - 2)) / (2.0 * PI * factorial(l)).sqrt() };
    if c == 0.0 || !c.is_finite() {
        return Err(Error::Internal(format!("C_{l} evaluated to {c}")));
    }
    Ok(c)
}

fn check_unit(g: &[f64], tol: f64) -> Result<()> {
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (n - 1.0).abs() > tol {
        return invalid(format!("direction must be a unit vector (norm {n})"));
    }
    Ok(())
}

/// Scalar weights `(He_{ℓ−2}(z), (ℓ−2)He_{ℓ−3}(z), (ℓ−2)(ℓ−3)He_{ℓ−4}(z))`
/// of the closed-form contraction, read from a table of `He_m(z)`.
#[inline]
pub(crate) fn contraction_weights(l: usize, table: &[f64]) -> (f64, f64, f64) {
    let a = table[l - 2];
    let b = if l >= 3 { (l - 2) as f64 * table[l - 3] } else { 0.0 };
    let c = if l >= 4 { ((l - 2) * (l - 3)) as f64 * table[l - 4] } else { 0.0 };
    (a, b, c)
}

/// `S_ℓ(x)(g, …, g, :, :)` for even `ℓ` via the closed form.
pub fn contracted_hermite_matrix(x: &[f64], g: &DVector<f64>, order: usize) -> Result<DMatrix<f64>> {
    let d = g.len();
    if x.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    let l = HermiteOrder::even(order)?.get();
    check_unit(g.as_slice(), 1e-9)?;
    let z: f64 = g.iter().zip(x).map(|(a, b)| a * b).sum();
    let mut table = vec![0.0; l - 1];
    he_table(z, &mut table);
    let (a, b, c) = contraction_weights(l, &table);
    let scale = 1.0 / factorial(l).sqrt();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut v = a * x[i] * x[j] - b * (x[i] * g[j] + g[i] * x[j]) + c * g[i] * g[j];
            if i == j {
                v -= a;
            }
            m[(i, j)] = v * scale;
        }
    }
    Ok(m)
}

/// Row-major order-`ℓ` tensor over `R^d` (first index most significant).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    pub dim: usize,
    pub order: usize,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn entry(&self, index: &[usize]) -> f64 {
        let flat = index.iter().fold(0, |acc, &i| acc * self.dim + i);
        self.data[flat]
    }

    /// Contracts the first `ℓ − 2` modes with `g`, leaving a `d × d` matrix.
    pub fn contract_leading(&self, g: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.order < 2 {
            return invalid("contraction needs order >= 2");
        }
        if g.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: g.len() });
        }
        let d = self.dim;
        let mut cur = self.data.clone();
        for _ in 0..self.order - 2 {
            let inner = cur.len() / d;
            let mut next = vec![0.0; inner];
            for (i, gi) in g.iter().enumerate() {
                for (n, c) in next.iter_mut().zip(&cur[i * inner..(i + 1) * inner]) {
                    *n += gi * c;
                }
            }
            cur = next;
        }
        Ok(DMatrix::from_row_slice(d, d, &cur))
    }
}

/// Materializes `S_ℓ(x)` entry by entry. Rejects tensors with more than
/// [`DENSE_ENTRY_CAP`] entries.
pub fn dense_hermite_tensor(x: &[f64], order: usize) -> Result<DenseTensor> {
    let d = x.len();
    if d == 0 {
        return invalid("dimension must be positive");
    }
    let entries = (d as f64).powi(order as i32);
    if entries > DENSE_ENTRY_CAP {
        return Err(Error::SizeCap { entries, cap: DENSE_ENTRY_CAP });
    }
    let tables: Vec<Vec<f64>> = x
        .iter()
        .map(|&t| {
            let mut tab = vec![0.0; order + 1];
            he_table(t, &mut tab);
            tab
        })
        .collect();
    let scale = 1.0 / factorial(order).sqrt();
    let total = entries as usize;
    let mut data = Vec::with_capacity(total);
    let mut index = vec![0usize; order];
    let mut counts = vec![0usize; d];
    for _ in 0..total {
        counts.iter_mut().for_each(|c| *c = 0);
        for &i in &index {
            counts[i] += 1;
        }
        let v: f64 = counts.iter().enumerate().map(|(j, &c)| tables[j][c]).product();
        data.push(v * scale);
        // odometer increment, last index fastest
        for pos in (0..order).rev() {
            index[pos] += 1;
            if index[pos] < d {
                break;
            }
            index[pos] = 0;
        }
    }
    Ok(DenseTensor { dim: d, order, data })
}
