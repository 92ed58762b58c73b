//! Empirical moment estimators, their population counterparts, and the
//! random-direction utilities they are contracted along.
//!
//! For even `ℓ` the contracted moment of a network is
//! `M_ℓ^g = Σᵢ λᵢ ⟨uᵢ, g⟩^{ℓ−2} uᵢuᵢᵀ`; it is estimated from labeled samples
//! by `(1 / (2 C_ℓ N)) Σ y · S_ℓ(x)(g, …, g, :, :)`. The linear term `w` is
//! estimated by `(1/N) Σ y·x`.
//!
//! Estimation is one pass over the data. Rows are split into contiguous
//! batches whose partial sums are merged in batch order, so the result does
//! not depend on the thread count; the spread of the batch means also yields
//! a standard-error estimate for each matrix.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hermite::{self, c_ell, contraction_weights, HermiteOrder};
use crate::network::{AbsNetwork, Dataset};
use crate::rng;

/// Number of contiguous batches used for accumulation and error estimates.
pub const ESTIMATION_BATCHES: usize = 32;

/// Default lower constant of the anti-concentration check.
pub const DEFAULT_ANTI_C: f64 = 0.01;
/// Default upper constant of the anti-concentration check.
pub const DEFAULT_ANTI_C_PRIME: f64 = 10.0;

/// Uniform direction on `S^{d−1}`, deterministic in `seed`.
pub fn sample_direction(d: usize, seed: u64) -> Result<DVector<f64>> {
    if d == 0 {
        return invalid("dimension must be positive");
    }
    let mut block = 0;
    loop {
        let mut rng = rng::block_rng(seed, block);
        let mut v = vec![0.0; d];
        rng::fill_gaussian(&mut rng, &mut v);
        let v = DVector::from_vec(v);
        let n = v.norm();
        if n > 0.0 {
            return Ok(v / n);
        }
        block += 1;
    }
}

/// Projections of the (sign-flipped) weight vectors onto `g`, sorted
/// ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionContext {
    pub g: Vec<f64>,
    /// `z[s] = ⟨σ_s u_{π(s)}, g⟩ ≥ 0`, ascending.
    pub z: Vec<f64>,
    /// `permutation[s]` is the original neuron index at sorted position `s`.
    pub permutation: Vec<usize>,
    /// `σ_s ∈ {±1}` for sorted position `s`.
    pub sign_flips: Vec<f64>,
}

impl ContractionContext {
    pub fn direction(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.g)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Coefficients in sorted order.
    pub fn sorted_lambdas(&self, net: &AbsNetwork) -> Vec<f64> {
        self.permutation.iter().map(|&i| net.neurons()[i].lambda).collect()
    }

    /// `σ_s u_{π(s)}`.
    pub fn flipped_u(&self, net: &AbsNetwork, s: usize) -> DVector<f64> {
        &net.neurons()[self.permutation[s]].u * self.sign_flips[s]
    }

    /// The same function with neurons sorted and flipped.
    pub fn flipped_network(&self, net: &AbsNetwork) -> Result<AbsNetwork> {
        let us = (0..self.len()).map(|s| self.flipped_u(net, s)).collect();
        AbsNetwork::new(net.linear_term().clone(), self.sorted_lambdas(net), us, net.norm_bound())
    }
}

/// Flips each `uᵢ` so that `⟨uᵢ, g⟩ ≥ 0` and sorts by the projection, ties
/// broken by original index.
pub fn make_context(net: &AbsNetwork, g: &DVector<f64>) -> Result<ContractionContext> {
    if g.len() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: g.len() });
    }
    let raw: Vec<f64> = net.neurons().iter().map(|n| n.u.dot(g)).collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].abs().total_cmp(&raw[b].abs()).then(a.cmp(&b)));
    Ok(ContractionContext {
        g: g.iter().copied().collect(),
        z: order.iter().map(|&i| raw[i].abs()).collect(),
        sign_flips: order.iter().map(|&i| if raw[i] < 0.0 { -1.0 } else { 1.0 }).collect(),
        permutation: order,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundSide {
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairViolation {
    pub i: usize,
    pub j: usize,
    pub sigma: f64,
    pub ratio: f64,
    pub side: BoundSide,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntiConcentrationReport {
    pub passed: bool,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub pairs_checked: usize,
    pub pairs_skipped: usize,
    pub violations: Vec<PairViolation>,
}

/// Checks `c/(√d k²) ≤ |⟨uᵢ + σuⱼ, g⟩| / ‖uᵢ + σuⱼ‖ ≤ c′√(ln k)/√d` over all
/// pairs `i < j` and `σ = ±1`, skipping `uᵢ + σuⱼ = 0`.
pub fn anti_concentration_ok(
    ctx: &ContractionContext,
    net: &AbsNetwork,
    c: f64,
    c_prime: f64,
) -> Result<AntiConcentrationReport> {
    if !(c > 0.0 && c_prime > 0.0) {
        return invalid("anti-concentration constants must be positive");
    }
    let g = ctx.direction();
    if g.len() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: g.len() });
    }
    let k = net.width();
    let sqrt_d = (net.dim() as f64).sqrt();
    let kf = k.max(1) as f64;
    let lower_bound = c / (sqrt_d * kf * kf);
    let upper_bound = c_prime * kf.ln().sqrt() / sqrt_d;
    let mut report = AntiConcentrationReport {
        passed: true,
        lower_bound,
        upper_bound,
        pairs_checked: 0,
        pairs_skipped: 0,
        violations: Vec::new(),
    };
    let us: Vec<&DVector<f64>> = net.neurons().iter().map(|n| &n.u).collect();
    for i in 0..k {
        for j in (i + 1)..k {
            for sigma in [1.0, -1.0] {
                let v = us[i] + us[j] * sigma;
                let norm = v.norm();
                if norm <= 1e-12 {
                    report.pairs_skipped += 1;
                    continue;
                }
                report.pairs_checked += 1;
                let ratio = v.dot(&g).abs() / norm;
                let side = if ratio < lower_bound {
                    Some(BoundSide::Lower)
                } else if ratio > upper_bound {
                    Some(BoundSide::Upper)
                } else {
                    None
                };
                if let Some(side) = side {
                    report.passed = false;
                    report.violations.push(PairViolation { i, j, sigma, ratio, side });
                }
            }
        }
    }
    Ok(report)
}

/// An estimated (or exact) contracted moment matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractedMoment {
    pub order: HermiteOrder,
    pub g: DVector<f64>,
    pub matrix: DMatrix<f64>,
    /// Zero for population matrices.
    pub n_samples: usize,
    /// Batch-means standard error of the matrix in Frobenius norm.
    pub std_error: Option<f64>,
}

/// Serialized form of [`ContractedMoment`]; the matrix is row-major.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractedMomentRecord {
    pub order: usize,
    pub g: Vec<f64>,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub matrix: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

impl ContractedMoment {
    pub fn exact(net: &AbsNetwork, g: &DVector<f64>, order: usize) -> Result<Self> {
        Ok(Self {
            order: HermiteOrder::even(order)?,
            g: g.clone(),
            matrix: true_contracted_moment(net, g, order)?,
            n_samples: 0,
            std_error: None,
        })
    }

    pub fn to_record(&self) -> ContractedMomentRecord {
        let d = self.matrix.nrows();
        let mut row_major = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                row_major.push(self.matrix[(i, j)]);
            }
        }
        ContractedMomentRecord {
            order: self.order.get(),
            g: self.g.iter().copied().collect(),
            n_samples: self.n_samples,
            matrix: row_major,
            std_error: self.std_error,
        }
    }

    pub fn from_record(rec: ContractedMomentRecord) -> Result<Self> {
        let d = rec.g.len();
        if rec.matrix.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, got: rec.matrix.len() });
        }
        Ok(Self {
            order: HermiteOrder::even(rec.order)?,
            g: DVector::from_vec(rec.g),
            matrix: DMatrix::from_row_slice(d, d, &rec.matrix),
            n_samples: rec.n_samples,
            std_error: rec.std_error,
        })
    }
}

/// Streaming accumulator for `ŵ` and `M̂_ℓ` over a fixed set of even orders.
///
/// Per order it keeps `Σ a·xxᵀ` (upper triangle), `Σ a`, `Σ b·x` and `Σ c`
/// with `(a, b, c)` the closed-form contraction weights scaled by `y`; the
/// matrix is assembled once in [`MomentAccumulator::finish`].
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    d: usize,
    g: DVector<f64>,
    orders: Vec<usize>,
    n: usize,
    sxx: Vec<Vec<f64>>,
    sa: Vec<f64>,
    sbx: Vec<Vec<f64>>,
    sc: Vec<f64>,
    syx: Vec<f64>,
    max_abs_he: f64,
    table: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(g: &DVector<f64>, orders: &[usize]) -> Result<Self> {
        let d = g.len();
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if ((g.norm()) - 1.0).abs() > 1e-9 {
            return invalid("direction must be a unit vector");
        }
        for &l in orders {
            HermiteOrder::even(l)?;
        }
        let max_order = orders.iter().copied().max().unwrap_or(2);
        let lo = orders.len();
        Ok(Self {
            d,
            g: g.clone(),
            orders: orders.to_vec(),
            n: 0,
            sxx: vec![vec![0.0; d * d]; lo],
            sa: vec![0.0; lo],
            sbx: vec![vec![0.0; d]; lo],
            sc: vec![0.0; lo],
            syx: vec![0.0; d],
            max_abs_he: 0.0,
            table: vec![0.0; max_order - 1],
        })
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        let d = self.d;
        debug_assert_eq!(x.len(), d);
        self.n += 1;
        for (s, xi) in self.syx.iter_mut().zip(x) {
            *s += y * xi;
        }
        if y == 0.0 {
            return;
        }
        let z: f64 = self.g.iter().zip(x).map(|(a, b)| a * b).sum();
        hermite::he_table(z, &mut self.table);
        for h in &self.table {
            self.max_abs_he = self.max_abs_he.max(h.abs());
        }
        for (o, &l) in self.orders.iter().enumerate() {
            let (a, b, c) = contraction_weights(l, &self.table);
            let (a, b, c) = (a * y, b * y, c * y);
            self.sa[o] += a;
            self.sc[o] += c;
            for (s, xi) in self.sbx[o].iter_mut().zip(x) {
                *s += b * xi;
            }
            let sxx = &mut self.sxx[o];
            for i in 0..d {
                let axi = a * x[i];
                let row = &mut sxx[i * d..(i + 1) * d];
                for j in i..d {
                    row[j] += axi * x[j];
                }
            }
        }
    }

    /// Adds another accumulator's partial sums (same direction and orders).
    pub fn merge(&mut self, other: &MomentAccumulator) {
        self.n += other.n;
        for (a, b) in self.syx.iter_mut().zip(&other.syx) {
            *a += b;
        }
        for o in 0..self.orders.len() {
            self.sa[o] += other.sa[o];
            self.sc[o] += other.sc[o];
            for (a, b) in self.sbx[o].iter_mut().zip(&other.sbx[o]) {
                *a += b;
            }
            for (a, b) in self.sxx[o].iter_mut().zip(&other.sxx[o]) {
                *a += b;
            }
        }
        self.max_abs_he = self.max_abs_he.max(other.max_abs_he);
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn max_abs_hermite(&self) -> f64 {
        self.max_abs_he
    }

    pub fn linear_term(&self) -> Result<DVector<f64>> {
        if self.n == 0 {
            return invalid("no samples accumulated");
        }
        Ok(DVector::from_iterator(self.d, self.syx.iter().map(|s| s / self.n as f64)))
    }

    /// Assembles the symmetrized matrices `M̂_ℓ`, in the order given at
    /// construction.
    pub fn finish(&self) -> Result<Vec<DMatrix<f64>>> {
        if self.n == 0 {
            return invalid("no samples accumulated");
        }
        if !self.max_abs_he.is_finite() {
            return Err(Error::Internal("Hermite polynomial overflow during accumulation".into()));
        }
        let d = self.d;
        let g = &self.g;
        let mut out = Vec::with_capacity(self.orders.len());
        for (o, &l) in self.orders.iter().enumerate() {
            let c_l = c_ell(HermiteOrder::even(l)?)?;
            let scale = 1.0 / (hermite::factorial(l).sqrt() * 2.0 * c_l * self.n as f64);
            let mut m = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in i..d {
                    let mut v = self.sxx[o][i * d + j] - (self.sbx[o][i] * g[j] + g[i] * self.sbx[o][j])
                        + self.sc[o] * g[i] * g[j];
                    if i == j {
                        v -= self.sa[o];
                    }
                    m[(i, j)] = v * scale;
                    m[(j, i)] = v * scale;
                }
            }
            out.push(crate::linalg::symmetrize(&m));
        }
        Ok(out)
    }
}

/// Everything a single estimation pass produces.
#[derive(Clone, Debug)]
pub struct MomentEstimate {
    pub linear_term: DVector<f64>,
    pub linear_std_error: Option<f64>,
    pub moments: Vec<ContractedMoment>,
    pub max_abs_hermite: f64,
    pub n_samples: usize,
}

impl MomentEstimate {
    /// Largest per-order standard error (zero if none are available).
    pub fn max_std_error(&self) -> f64 {
        self.moments.iter().filter_map(|m| m.std_error).fold(0.0, f64::max)
    }
}

/// `√(B/(B−1) Σ_b (n_b/N)² ‖X_b − X‖²)` for batch estimates `X_b`.
fn batch_std_error<'a>(parts: impl Iterator<Item = (f64, f64)> + 'a, batches: usize) -> Option<f64> {
    if batches < 2 {
        return None;
    }
    let b = batches as f64;
    let total: f64 = parts.map(|(w, dist_sq)| w * w * dist_sq).sum();
    Some((total * b / (b - 1.0)).sqrt())
}

/// One pass over `samples` producing `ŵ` and `M̂_ℓ` for each order.
pub fn estimate_moments(samples: &Dataset, g: &DVector<f64>, orders: &[usize]) -> Result<MomentEstimate> {
    let n = samples.len();
    if n == 0 {
        return invalid("sample list is empty");
    }
    if samples.dim() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: samples.dim() });
    }
    let proto = MomentAccumulator::new(g, orders)?;
    let batches = ESTIMATION_BATCHES.min(n);
    let bounds: Vec<(usize, usize)> = (0..batches).map(|b| (b * n / batches, (b + 1) * n / batches)).collect();
    let parts: Vec<MomentAccumulator> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = proto.clone();
            for i in lo..hi {
                acc.push(samples.x(i), samples.y(i));
            }
            acc
        })
        .collect();
    let mut total = proto.clone();
    for p in &parts {
        total.merge(p);
    }
    let matrices = total.finish()?;
    let linear = total.linear_term()?;

    let part_matrices: Vec<Vec<DMatrix<f64>>> =
        if batches >= 2 { parts.iter().map(|p| p.finish()).collect::<Result<_>>()? } else { Vec::new() };
    let nf = n as f64;
    let weights: Vec<f64> = parts.iter().map(|p| p.n_samples() as f64 / nf).collect();

    let moments = orders
        .iter()
        .enumerate()
        .map(|(o, &l)| {
            let std_error = batch_std_error(
                part_matrices.iter().zip(&weights).map(|(pm, &w)| (w, (&pm[o] - &matrices[o]).norm_squared())),
                batches,
            );
            Ok(ContractedMoment {
                order: HermiteOrder::even(l)?,
                g: g.clone(),
                matrix: matrices[o].clone(),
                n_samples: n,
                std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let linear_std_error = if batches >= 2 {
        let lin_parts: Vec<DVector<f64>> = parts.iter().map(|p| p.linear_term()).collect::<Result<_>>()?;
        batch_std_error(lin_parts.iter().zip(&weights).map(|(v, &w)| (w, (v - &linear).norm_squared())), batches)
    } else {
        None
    };
    Ok(MomentEstimate {
        linear_term: linear,
        linear_std_error,
        moments,
        max_abs_hermite: total.max_abs_hermite(),
        n_samples: n,
    })
}

/// `M̂_ℓ^g` for a single even order.
pub fn estimate_contracted_moment(samples: &Dataset, g: &DVector<f64>, order: usize) -> Result<ContractedMoment> {
    let mut est = estimate_moments(samples, g, &[order])?;
    Ok(est.moments.remove(0))
}

/// `ŵ = (1/N) Σ yᵢ xᵢ`.
pub fn estimate_linear_term(samples: &Dataset) -> Result<DVector<f64>> {
    if samples.is_empty() {
        return invalid("sample list is empty");
    }
    let d = samples.dim();
    let mut acc = vec![0.0; d];
    for (x, y) in samples.iter() {
        for (a, xi) in acc.iter_mut().zip(x) {
            *a += y * xi;
        }
    }
    let n = samples.len() as f64;
    Ok(DVector::from_iterator(d, acc.into_iter().map(|a| a / n)))
}

/// Population matrix `Σᵢ λᵢ ⟨uᵢ, g⟩^{ℓ−2} uᵢuᵢᵀ`.
pub fn true_contracted_moment(net: &AbsNetwork, g: &DVector<f64>, order: usize) -> Result<DMatrix<f64>> {
    let l = HermiteOrder::even(order)?.get();
    if g.len() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: g.len() });
    }
    let d = net.dim();
    let mut m = DMatrix::zeros(d, d);
    for n in net.neurons() {
        let z = n.u.dot(g);
        let coef = n.lambda * z.powi((l - 2) as i32);
        m.ger(coef, &n.u, &n.u, 1.0);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::sample_dataset;

    fn e(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    fn single(d: usize) -> AbsNetwork {
        AbsNetwork::new(DVector::zeros(d), vec![1.0], vec![e(d, 0)], 1.0).unwrap()
    }

    #[test]
    fn direction_examples() {
        for s in 0..10 {
            let g = sample_direction(1, s).unwrap();
            assert_eq!(g[0].abs(), 1.0);
        }
        for s in 0..100 {
            assert!((sample_direction(7, s).unwrap().norm() - 1.0).abs() < 1e-12);
        }
        let mean: f64 = (0..10_000).map(|s| sample_direction(5, s).unwrap()[0]).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.05);
        assert!(sample_direction(0, 1).is_err());
        assert_eq!(sample_direction(4, 9).unwrap(), sample_direction(4, 9).unwrap());
    }

    #[test]
    fn context_flips_and_sorts() {
        let net = AbsNetwork::new(DVector::zeros(2), vec![1.0], vec![-e(2, 0)], 1.0).unwrap();
        let ctx = make_context(&net, &e(2, 0)).unwrap();
        assert_eq!(ctx.sign_flips, vec![-1.0]);
        assert_eq!(ctx.z, vec![1.0]);

        let g = e(3, 0);
        let us = vec![
            DVector::from_vec(vec![0.5, (0.75f64).sqrt(), 0.0]),
            DVector::from_vec(vec![-0.1, 0.0, (0.99f64).sqrt()]),
            DVector::from_vec(vec![0.3, 0.0, -(0.91f64).sqrt()]),
        ];
        let net = AbsNetwork::new(DVector::zeros(3), vec![0.2, 0.3, 0.4], us, 1.0).unwrap();
        let ctx = make_context(&net, &g).unwrap();
        assert_eq!(ctx.permutation, vec![1, 2, 0]);
        for (got, want) in ctx.z.iter().zip([0.1, 0.3, 0.5]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(ctx.sorted_lambdas(&net), vec![0.3, 0.4, 0.2]);
    }

    #[test]
    fn flipped_network_is_pointwise_equal() {
        let g = sample_direction(6, 3).unwrap();
        let us: Vec<DVector<f64>> = (0..4).map(|s| sample_direction(6, 100 + s).unwrap()).collect();
        let net = AbsNetwork::new(DVector::from_element(6, 0.1), vec![0.5, -0.4, 0.3, 0.2], us, 2.0).unwrap();
        let ctx = make_context(&net, &g).unwrap();
        let flipped = ctx.flipped_network(&net).unwrap();
        let data = sample_dataset(&AbsNetwork::zero(6), 100, 4).unwrap();
        for (x, _) in data.iter() {
            assert!((net.evaluate(x).unwrap() - flipped.evaluate(x).unwrap()).abs() < 1e-10);
        }
        assert!(ctx.z.windows(2).all(|w| w[0] <= w[1]));
        assert!(ctx.z.iter().all(|&z| z >= 0.0));
    }

    #[test]
    fn anti_concentration_edge_cases() {
        let net = single(4);
        let ctx = make_context(&net, &sample_direction(4, 1).unwrap()).unwrap();
        let rep = anti_concentration_ok(&ctx, &net, 0.01, 10.0).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.pairs_checked, 0);

        let twin = AbsNetwork::new(DVector::zeros(4), vec![0.5, 0.5], vec![e(4, 0), e(4, 0)], 1.0).unwrap();
        let ctx = make_context(&twin, &sample_direction(4, 1).unwrap()).unwrap();
        let rep = anti_concentration_ok(&ctx, &twin, 0.01, 10.0).unwrap();
        assert_eq!(rep.pairs_skipped, 1);
        assert_eq!(rep.pairs_checked, 1);
        assert!(anti_concentration_ok(&ctx, &twin, 0.0, 10.0).is_err());
    }

    #[test]
    fn zero_labels_give_zero_estimates() {
        let data = sample_dataset(&AbsNetwork::zero(3), 500, 1).unwrap();
        let g = e(3, 1);
        let m = estimate_contracted_moment(&data, &g, 4).unwrap();
        assert_eq!(m.matrix.amax(), 0.0);
        assert_eq!(estimate_linear_term(&data).unwrap().amax(), 0.0);
    }

    #[test]
    fn empty_samples_rejected() {
        let empty = Dataset::new(2, vec![], vec![]).unwrap();
        assert!(estimate_linear_term(&empty).is_err());
        assert!(estimate_contracted_moment(&empty, &e(2, 0), 2).is_err());
    }

    #[test]
    fn estimator_is_linear_in_labels() {
        let g = sample_direction(4, 8).unwrap();
        let a = AbsNetwork::new(DVector::zeros(4), vec![0.7], vec![e(4, 0)], 1.0).unwrap();
        let b = AbsNetwork::new(DVector::zeros(4), vec![-0.4], vec![e(4, 2)], 1.0).unwrap();
        let data = sample_dataset(&AbsNetwork::zero(4), 2000, 9).unwrap();
        let ya: Vec<f64> = data.iter().map(|(x, _)| a.evaluate(x).unwrap()).collect();
        let yb: Vec<f64> = data.iter().map(|(x, _)| b.evaluate(x).unwrap()).collect();
        let ysum: Vec<f64> = ya.iter().zip(&yb).map(|(p, q)| p + q).collect();
        let orders = [2, 4, 6];
        let ea = estimate_moments(&data.with_labels(ya).unwrap(), &g, &orders).unwrap();
        let eb = estimate_moments(&data.with_labels(yb).unwrap(), &g, &orders).unwrap();
        let es = estimate_moments(&data.with_labels(ysum).unwrap(), &g, &orders).unwrap();
        for o in 0..orders.len() {
            let diff = &es.moments[o].matrix - (&ea.moments[o].matrix + &eb.moments[o].matrix);
            assert!(diff.amax() < 1e-12);
        }
    }

    #[test]
    fn accumulation_is_order_independent() {
        let us: Vec<DVector<f64>> = (0..2).map(|s| sample_direction(5, 40 + s).unwrap()).collect();
        let net = AbsNetwork::new(DVector::zeros(5), vec![0.6, -0.4], us, 1.0).unwrap();
        let g = sample_direction(5, 2).unwrap();
        let data = sample_dataset(&net, 20_000, 5).unwrap();
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.reverse();
        order.rotate_left(777);
        let perm = data.permuted(&order);
        let a = estimate_moments(&data, &g, &[2, 4, 6, 8]).unwrap();
        let b = estimate_moments(&perm, &g, &[2, 4, 6, 8]).unwrap();
        for (ma, mb) in a.moments.iter().zip(&b.moments) {
            assert!((&ma.matrix - &mb.matrix).amax() <= 1e-9);
        }
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let g = sample_direction(3, 1).unwrap();
        let data = sample_dataset(&single(3), 300, 2).unwrap();
        let mut whole = MomentAccumulator::new(&g, &[2, 4]).unwrap();
        let mut left = whole.clone();
        let mut right = whole.clone();
        for (i, (x, y)) in data.iter().enumerate() {
            whole.push(x, y);
            if i < 100 {
                left.push(x, y);
            } else {
                right.push(x, y);
            }
        }
        left.merge(&right);
        for (a, b) in whole.finish().unwrap().iter().zip(left.finish().unwrap().iter()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn true_moment_examples() {
        let g = e(3, 0);
        for l in [2, 4, 6, 10] {
            let m = true_contracted_moment(&single(3), &g, l).unwrap();
            assert_eq!(m, e(3, 0) * e(3, 0).transpose());
        }
        let cancel = AbsNetwork::new(DVector::zeros(3), vec![1.0, -1.0], vec![e(3, 1), e(3, 1)], 2.0).unwrap();
        for l in [2, 4, 8] {
            assert_eq!(true_contracted_moment(&cancel, &sample_direction(3, 5).unwrap(), l).unwrap().amax(), 0.0);
        }
        let us: Vec<DVector<f64>> = (0..3).map(|s| sample_direction(3, 10 + s).unwrap()).collect();
        let net = AbsNetwork::new(DVector::zeros(3), vec![0.2, -0.3, 0.4], us, 1.0).unwrap();
        let a = true_contracted_moment(&net, &sample_direction(3, 1).unwrap(), 2).unwrap();
        let b = true_contracted_moment(&net, &sample_direction(3, 2).unwrap(), 2).unwrap();
        assert!((a - b).amax() < 1e-15);
        assert!(true_contracted_moment(&net, &g, 3).is_err());
    }

    #[test]
    fn moment_record_round_trip() {
        let m = ContractedMoment::exact(&single(2), &e(2, 0), 4).unwrap();
        let rec = m.to_record();
        let back = ContractedMoment::from_record(serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap())
            .unwrap();
        assert_eq!(back, m);
    }
}
