#![allow(dead_code)]

use nalgebra::DVector;
use netlearn::network::AbsNetwork;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn unit<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_vec(gaussian_vec(rng, d));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

pub fn basis(d: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[i] = 1.0;
    e
}

/// Random network with `Σ|λ| = R` and a linear term of norm at most 1.
pub fn random_network<R: Rng>(rng: &mut R, d: usize, k: usize, norm_bound: f64) -> AbsNetwork {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let l1: f64 = raw.iter().map(|v| v.abs()).sum::<f64>().max(1e-12);
    let lambdas = raw.iter().map(|v| v * norm_bound / l1).collect();
    let us = (0..k).map(|_| unit(rng, d)).collect();
    let w = DVector::from_vec(gaussian_vec(rng, d)) * (0.5 / (d as f64).sqrt());
    AbsNetwork::new(w, lambdas, us, norm_bound).unwrap()
}
