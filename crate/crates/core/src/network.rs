//! ReLU and absolute-value network forms, Gaussian sampling, and
//! `L2(γ)` distances.
//!
//! The learner works exclusively with the absolute-value form
//!
//! ```text
//! f(x) = ⟨w, x⟩ + Σᵢ λᵢ |⟨uᵢ, x⟩|
//! ```
//!
//! which every ReLU combination can be rewritten into via
//! `relu(t) = (t + |t|) / 2`.

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{self, BLOCK_ROWS};

/// Tolerance used when checking unit norms after normalization.
pub const UNIT_TOL: f64 = 1e-12;

fn normalized(u: DVector<f64>) -> Result<DVector<f64>> {
    let n = u.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(u / n)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn dot(a: &DVector<f64>, x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(p, q)| p * q).sum()
}

/// `Σ μᵢ relu(⟨uᵢ, x⟩)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluNetwork {
    mu: Vec<f64>,
    u: Vec<DVector<f64>>,
    d: usize,
}

impl ReluNetwork {
    /// Builds a ReLU network; weight vectors are normalized, zero vectors
    /// rejected.
    pub fn new(mu: Vec<f64>, u: Vec<DVector<f64>>) -> Result<Self> {
        if mu.is_empty() {
            return invalid("a ReLU network needs at least one neuron");
        }
        if mu.len() != u.len() {
            return invalid(format!("{} output weights for {} weight vectors", mu.len(), u.len()));
        }
        let d = u[0].len();
        if d == 0 {
            return invalid("dimension must be positive");
        }
        let mut units = Vec::with_capacity(u.len());
        for v in u {
            check_dim(d, v.len())?;
            units.push(normalized(v)?);
        }
        if mu.iter().any(|m| !m.is_finite()) {
            return invalid("output weights must be finite");
        }
        Ok(Self { mu, u: units, d })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.mu.len()
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.mu
    }

    pub fn weight_vectors(&self) -> &[DVector<f64>] {
        &self.u
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.d, x.len())?;
        Ok(self.mu.iter().zip(&self.u).map(|(m, u)| m * dot(u, x).max(0.0)).sum())
    }

    /// Rewrites the network as `⟨w,·⟩ + Σ λᵢ|⟨uᵢ,·⟩|` with `w = ½ Σ μᵢ uᵢ`
    /// and `λᵢ = μᵢ / 2`. The norm bound is `max(1, Σ|μᵢ|)`.
    pub fn to_abs_form(&self) -> AbsNetwork {
        let mut w = DVector::zeros(self.d);
        for (m, u) in self.mu.iter().zip(&self.u) {
            w.axpy(0.5 * m, u, 1.0);
        }
        let neurons = self.mu.iter().zip(&self.u).map(|(m, u)| Neuron { lambda: 0.5 * m, u: u.clone() }).collect();
        let bound = self.mu.iter().map(|m| m.abs()).sum::<f64>().max(1.0);
        AbsNetwork { w, neurons, norm_bound: bound }
    }
}

/// One signed absolute-value unit `λ |⟨u, ·⟩|`.
#[derive(Clone, Debug, PartialEq)]
pub struct Neuron {
    pub lambda: f64,
    pub u: DVector<f64>,
}

/// `⟨w, x⟩ + Σᵢ λᵢ |⟨uᵢ, x⟩|` with unit `uᵢ` and `Σ|λᵢ| ≤ R`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsNetwork {
    w: DVector<f64>,
    neurons: Vec<Neuron>,
    norm_bound: f64,
}

impl AbsNetwork {
    /// Weight vectors are normalized (zero vectors rejected); requires
    /// `R ≥ 1` and `Σ|λᵢ| ≤ R` up to rounding.
    pub fn new(w: DVector<f64>, lambdas: Vec<f64>, u: Vec<DVector<f64>>, norm_bound: f64) -> Result<Self> {
        let d = w.len();
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if lambdas.len() != u.len() {
            return invalid(format!("{} coefficients for {} weight vectors", lambdas.len(), u.len()));
        }
        if !(norm_bound >= 1.0) || !norm_bound.is_finite() {
            return invalid(format!("norm bound must be finite and >= 1, got {norm_bound}"));
        }
        if w.iter().chain(&lambdas).any(|v| !v.is_finite()) {
            return invalid("network parameters must be finite");
        }
        let l1: f64 = lambdas.iter().map(|l| l.abs()).sum();
        if l1 > norm_bound * (1.0 + 1e-12) {
            return invalid(format!("sum |lambda| = {l1} exceeds norm bound {norm_bound}"));
        }
        let mut neurons = Vec::with_capacity(u.len());
        for (lambda, v) in lambdas.into_iter().zip(u) {
            check_dim(d, v.len())?;
            neurons.push(Neuron { lambda, u: normalized(v)? });
        }
        Ok(Self { w, neurons, norm_bound })
    }

    /// Purely linear network.
    pub fn linear(w: DVector<f64>, norm_bound: f64) -> Result<Self> {
        Self::new(w, Vec::new(), Vec::new(), norm_bound)
    }

    /// The zero function in dimension `d`.
    pub fn zero(d: usize) -> Self {
        Self { w: DVector::zeros(d), neurons: Vec::new(), norm_bound: 1.0 }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn width(&self) -> usize {
        self.neurons.len()
    }

    pub fn linear_term(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.neurons.iter().map(|n| n.lambda).collect()
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn lambda_l1(&self) -> f64 {
        self.neurons.iter().map(|n| n.lambda.abs()).sum()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = dot(&self.w, x);
        for n in &self.neurons {
            acc += n.lambda * dot(&n.u, x).abs();
        }
        acc
    }

    /// `self − other` as a single signed network (norm bound not enforced).
    fn difference(&self, other: &AbsNetwork) -> (DVector<f64>, Vec<Neuron>) {
        let w = &self.w - &other.w;
        let mut neurons = self.neurons.clone();
        neurons.extend(other.neurons.iter().map(|n| Neuron { lambda: -n.lambda, u: n.u.clone() }));
        (w, neurons)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            format: NETWORK_FORMAT.to_string(),
            version: FORMAT_VERSION,
            d: self.dim(),
            k: self.width(),
            norm_bound: self.norm_bound,
            w: self.w.iter().copied().collect(),
            neurons: self
                .neurons
                .iter()
                .map(|n| NeuronRecord { lambda: n.lambda, u: n.u.iter().copied().collect() })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.into_network()
    }
}

pub const NETWORK_FORMAT: &str = "netlearn/network";
pub const SAMPLES_FORMAT: &str = "netlearn/samples";
pub const FORMAT_VERSION: u32 = 1;

/// On-disk form of an [`AbsNetwork`]; instance and model files share it.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub k: usize,
    #[serde(rename = "R")]
    pub norm_bound: f64,
    pub w: Vec<f64>,
    pub neurons: Vec<NeuronRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NeuronRecord {
    pub lambda: f64,
    pub u: Vec<f64>,
}

impl NetworkFile {
    pub fn into_network(self) -> Result<AbsNetwork> {
        if self.format != NETWORK_FORMAT {
            return invalid(format!("expected format {NETWORK_FORMAT:?}, found {:?}", self.format));
        }
        if self.version != FORMAT_VERSION {
            return invalid(format!("unsupported network file version {}", self.version));
        }
        check_dim(self.d, self.w.len())?;
        if self.k != self.neurons.len() {
            return invalid(format!("k = {} but {} neurons listed", self.k, self.neurons.len()));
        }
        let (lambdas, us): (Vec<f64>, Vec<DVector<f64>>) =
            self.neurons.into_iter().map(|n| (n.lambda, DVector::from_vec(n.u))).unzip();
        AbsNetwork::new(DVector::from_vec(self.w), lambdas, us, self.norm_bound)
    }
}

/// A single labeled example.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// A batch of labeled examples stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    d: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset {
    pub fn new(d: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return invalid("dimension must be positive");
        }
        if xs.len() != ys.len() * d {
            return invalid(format!("{} input values for {} labels in dimension {d}", xs.len(), ys.len()));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return invalid("samples must have finite entries");
        }
        Ok(Self { d, xs, ys })
    }

    pub fn from_samples(d: usize, samples: &[LabeledSample]) -> Result<Self> {
        let mut xs = Vec::with_capacity(samples.len() * d);
        let mut ys = Vec::with_capacity(samples.len());
        for s in samples {
            check_dim(d, s.x.len())?;
            xs.extend_from_slice(&s.x);
            ys.push(s.y);
        }
        Self::new(d, xs, ys)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.ys
    }

    pub fn inputs(&self) -> &[f64] {
        &self.xs
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], f64)> + '_ {
        self.xs.chunks_exact(self.d).zip(self.ys.iter().copied())
    }

    pub fn sample(&self, i: usize) -> LabeledSample {
        LabeledSample { x: self.x(i).to_vec(), y: self.y(i) }
    }

    pub fn to_samples(&self) -> Vec<LabeledSample> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }

    /// Same inputs with labels replaced.
    pub fn with_labels(&self, ys: Vec<f64>) -> Result<Self> {
        Self::new(self.d, self.xs.clone(), ys)
    }

    /// Rows in the given order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut xs = Vec::with_capacity(self.xs.len());
        let mut ys = Vec::with_capacity(self.ys.len());
        for &i in order {
            xs.extend_from_slice(self.x(i));
            ys.push(self.y(i));
        }
        Self { d: self.d, xs, ys }
    }

    /// Contiguous row range as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self { d: self.d, xs: self.xs[range.start * self.d..range.end * self.d].to_vec(), ys: self.ys[range].to_vec() }
    }
}

/// On-disk form of a train/hold-out sample pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplesFile {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub train: Vec<LabeledSample>,
    pub holdout: Vec<LabeledSample>,
}

impl SamplesFile {
    pub fn new(train: &Dataset, holdout: &Dataset) -> Self {
        Self {
            format: SAMPLES_FORMAT.to_string(),
            version: FORMAT_VERSION,
            d: train.dim(),
            train: train.to_samples(),
            holdout: holdout.to_samples(),
        }
    }

    pub fn into_datasets(self) -> Result<(Dataset, Dataset)> {
        if self.format != SAMPLES_FORMAT {
            return invalid(format!("expected format {SAMPLES_FORMAT:?}, found {:?}", self.format));
        }
        if self.version != FORMAT_VERSION {
            return invalid(format!("unsupported samples file version {}", self.version));
        }
        Ok((Dataset::from_samples(self.d, &self.train)?, Dataset::from_samples(self.d, &self.holdout)?))
    }
}

/// Draws `n` noiseless examples `(x, f(x))`, `x ~ N(0, I_d)`.
///
/// Deterministic in `seed`; row `i` depends only on `(seed, i)`.
pub fn sample_dataset(net: &AbsNetwork, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return invalid("sample count must be at least 1");
    }
    let d = net.dim();
    let xs = rng::gaussian_rows(d, n, seed);
    let mut ys = vec![0.0; n];
    ys.par_chunks_mut(BLOCK_ROWS).enumerate().for_each(|(b, chunk)| {
        for (j, y) in chunk.iter_mut().enumerate() {
            let i = b * BLOCK_ROWS + j;
            *y = net.eval_unchecked(&xs[i * d..(i + 1) * d]);
        }
    });
    Ok(Dataset { d, xs, ys })
}

/// `E[|z₁||z₂|]` for standard normals with correlation `ρ`:
/// `(2/π)(√(1−ρ²) + ρ·asin ρ)`.
pub fn abs_correlation_kernel(rho: f64) -> f64 {
    let r = rho.clamp(-1.0, 1.0);
    (2.0 / PI) * ((1.0 - r * r).max(0.0).sqrt() + r * r.asin())
}

fn l2_norm_sq_parts(w: &DVector<f64>, neurons: &[Neuron]) -> f64 {
    // Cross terms E[⟨w,x⟩|⟨v,x⟩|] vanish by odd symmetry.
    let mut total = w.norm_squared();
    for (i, a) in neurons.iter().enumerate() {
        total += a.lambda * a.lambda;
        for b in &neurons[i + 1..] {
            total += 2.0 * a.lambda * b.lambda * abs_correlation_kernel(a.u.dot(&b.u));
        }
    }
    total
}

/// Exact `‖a − b‖_{L2(γ)}` in closed form.
pub fn exact_l2_distance(a: &AbsNetwork, b: &AbsNetwork) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let (w, neurons) = a.difference(b);
    Ok(l2_norm_sq_parts(&w, &neurons).max(0.0).sqrt())
}

/// Exact `‖f‖_{L2(γ)}`.
pub fn exact_l2_norm(net: &AbsNetwork) -> f64 {
    l2_norm_sq_parts(&net.w, &net.neurons).max(0.0).sqrt()
}

/// Monte-Carlo `‖a − b‖_{L2(γ)}` over `n` fresh Gaussian inputs.
pub fn mc_l2_distance(a: &AbsNetwork, b: &AbsNetwork, n: usize, seed: u64) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    if n == 0 {
        return invalid("sample count must be at least 1");
    }
    let d = a.dim();
    let blocks = n.div_ceil(BLOCK_ROWS);
    let partial: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let rows = BLOCK_ROWS.min(n - blk * BLOCK_ROWS);
            let mut rng = rng::block_rng(seed, blk as u64);
            let mut x = vec![0.0; d];
            let mut acc = 0.0;
            for _ in 0..rows {
                rng::fill_gaussian(&mut rng, &mut x);
                let diff = a.eval_unchecked(&x) - b.eval_unchecked(&x);
                acc += diff * diff;
            }
            acc
        })
        .collect();
    Ok((partial.iter().sum::<f64>() / n as f64).sqrt())
}
