//! Δ-clusters of the sorted projections `z`, cluster weights `λ̄_j` and the
//! learnable set `J_big`.
//!
//! The learner never needs the partition; it is an analysis object used by
//! diagnostics and tests. Indices in this module refer to sorted positions in
//! a [`ContractionContext`] unless stated otherwise.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::moments::{anti_concentration_ok, ContractionContext, DEFAULT_ANTI_C, DEFAULT_ANTI_C_PRIME};
use crate::network::AbsNetwork;

/// Contiguous intervals over sorted `z`: a new interval starts whenever the
/// gap to the previous value exceeds `delta`.
pub fn partition_clusters(z: &[f64], delta: f64) -> Result<Vec<Range<usize>>> {
    if !(delta > 0.0) {
        return invalid("cluster scale must be positive");
    }
    if z.iter().any(|v| !v.is_finite()) {
        return invalid("projections must be finite");
    }
    if z.windows(2).any(|w| w[1] < w[0]) {
        return invalid("projections must be sorted ascending");
    }
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..z.len() {
        if z[i] - z[i - 1] > delta {
            out.push(start..i);
            start = i;
        }
    }
    if !z.is_empty() {
        out.push(start..z.len());
    }
    Ok(out)
}

/// `λ̄_j = Σ_{i∈I_j} λᵢ` and `J_big = {j : |λ̄_j| > τ}`.
pub fn cluster_weights_and_big(
    lambdas: &[f64],
    intervals: &[Range<usize>],
    tau: f64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let covered: usize = intervals.iter().map(|r| r.len()).sum();
    if covered != lambdas.len() || intervals.iter().any(|r| r.end > lambdas.len()) {
        return invalid("intervals do not partition the coefficient list");
    }
    let weights: Vec<f64> = intervals.iter().map(|r| lambdas[r.clone()].iter().sum()).collect();
    let big = weights.iter().enumerate().filter(|(_, w)| w.abs() > tau).map(|(j, _)| j).collect();
    Ok((weights, big))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    /// Half-open ranges of sorted positions.
    pub intervals: Vec<Range<usize>>,
    pub delta: f64,
    pub tau: f64,
    pub cluster_weights: Vec<f64>,
    /// Sorted position of each cluster's left endpoint `i*_j`.
    pub left_endpoints: Vec<usize>,
    pub big_set: Vec<usize>,
}

impl ClusterPartition {
    pub fn build(ctx: &ContractionContext, net: &AbsNetwork, delta: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return invalid("tau must be positive");
        }
        let intervals = partition_clusters(&ctx.z, delta)?;
        let (cluster_weights, big_set) = cluster_weights_and_big(&ctx.sorted_lambdas(net), &intervals, tau)?;
        let left_endpoints = intervals.iter().map(|r| r.start).collect();
        Ok(Self { intervals, delta, tau, cluster_weights, left_endpoints, big_set })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Cluster containing sorted position `s`.
    pub fn cluster_of(&self, s: usize) -> Option<usize> {
        self.intervals.iter().position(|r| r.contains(&s))
    }

    pub fn is_big(&self, j: usize) -> bool {
        self.big_set.contains(&j)
    }

    /// Original neuron indices of cluster `j`.
    pub fn members(&self, ctx: &ContractionContext, j: usize) -> Vec<usize> {
        self.intervals[j].clone().map(|s| ctx.permutation[s]).collect()
    }
}

/// `Σ_{j∈J_big} λ̄_j |⟨σ u_{i*_j}, ·⟩| + ⟨w, ·⟩`.
pub fn surrogate_network(
    ctx: &ContractionContext,
    net: &AbsNetwork,
    partition: &ClusterPartition,
) -> Result<AbsNetwork> {
    let mut lambdas = Vec::new();
    let mut us = Vec::new();
    for &j in &partition.big_set {
        lambdas.push(partition.cluster_weights[j]);
        us.push(ctx.flipped_u(net, partition.left_endpoints[j]));
    }
    AbsNetwork::new(net.linear_term().clone(), lambdas, us, net.norm_bound())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiameter {
    pub cluster: usize,
    pub members: Vec<usize>,
    pub diameter: f64,
    pub ratio: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiameterReport {
    /// `Δ k³ √d`.
    pub scale: f64,
    pub clusters: Vec<ClusterDiameter>,
    pub any_flagged: bool,
    pub anti_concentration_passed: bool,
}

/// Ratio above which a cluster diameter is flagged.
pub const DIAMETER_FLAG_RATIO: f64 = 10.0;

/// Largest `‖σu_i − σ′u_{i′}‖` inside each cluster, relative to `Δ k³ √d`.
pub fn cluster_diameter_check(
    ctx: &ContractionContext,
    net: &AbsNetwork,
    partition: &ClusterPartition,
) -> Result<DiameterReport> {
    let k = net.width() as f64;
    let scale = partition.delta * k.powi(3) * (net.dim() as f64).sqrt();
    let anti = anti_concentration_ok(ctx, net, DEFAULT_ANTI_C, DEFAULT_ANTI_C_PRIME)?;
    let mut clusters = Vec::with_capacity(partition.len());
    for (j, range) in partition.intervals.iter().enumerate() {
        let us: Vec<_> = range.clone().map(|s| ctx.flipped_u(net, s)).collect();
        let mut diameter = 0.0f64;
        for a in 0..us.len() {
            for b in (a + 1)..us.len() {
                diameter = diameter.max((&us[a] - &us[b]).norm());
            }
        }
        let ratio = if scale > 0.0 { diameter / scale } else { 0.0 };
        clusters.push(ClusterDiameter {
            cluster: j,
            members: partition.members(ctx, j),
            diameter,
            ratio,
            flagged: ratio > DIAMETER_FLAG_RATIO,
        });
    }
    Ok(DiameterReport {
        scale,
        any_flagged: clusters.iter().any(|c| c.flagged),
        clusters,
        anti_concentration_passed: anti.passed,
    })
}

/// Heuristic cluster scale from the observed gaps of sorted `z`.
///
/// Places Δ at the geometric mean of the two gaps straddling the largest
/// ratio jump between consecutive sorted gaps when that jump is at least 10;
/// otherwise returns half the smallest gap so every neuron is a singleton.
/// `None` when there are no positive gaps.
pub fn suggest_delta(z: &[f64]) -> Option<f64> {
    let mut gaps: Vec<f64> = z.windows(2).map(|w| (w[1] - w[0]).abs()).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let mut best: Option<(f64, usize)> = None;
    for i in 0..gaps.len() - 1 {
        let r = gaps[i + 1] / gaps[i];
        if best.is_none_or(|(b, _)| r > b) {
            best = Some((r, i));
        }
    }
    match best {
        Some((r, i)) if r >= 10.0 => Some((gaps[i] * gaps[i + 1]).sqrt()),
        _ => Some(gaps[0] / 2.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::make_context;
    use nalgebra::DVector;

    #[test]
    fn partition_examples() {
        assert_eq!(partition_clusters(&[0.1, 0.15, 0.5], 0.1).unwrap(), vec![0..2, 2..3]);
        assert_eq!(partition_clusters(&[0.0, 0.5, 1.0], 0.1).unwrap(), vec![0..1, 1..2, 2..3]);
        assert_eq!(partition_clusters(&[0.0, 0.05, 0.1], 0.1).unwrap(), vec![0..3]);
        assert!(partition_clusters(&[0.2, 0.1], 0.1).is_err());
        assert!(partition_clusters(&[0.1], 0.0).is_err());
        assert!(partition_clusters(&[], 0.1).unwrap().is_empty());
    }

    #[test]
    #[allow(clippy::single_range_in_vec_init)]
    fn weights_examples() {
        let (w, big) = cluster_weights_and_big(&[1.0, -1.0], &[0..2], 0.1).unwrap();
        assert_eq!(w, vec![0.0]);
        assert!(big.is_empty());
        let (_, big) = cluster_weights_and_big(&[0.5, 0.05], &[0..1, 1..2], 0.1).unwrap();
        assert_eq!(big, vec![0]);
        let (_, big) = cluster_weights_and_big(&[0.25], &[0..1], 0.25).unwrap();
        assert!(big.is_empty());
        assert!(cluster_weights_and_big(&[0.25, 0.1], &[0..1], 0.25).is_err());
    }

    #[test]
    fn singleton_diameters_are_zero() {
        let us = vec![DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![0.6, 0.8, 0.0])];
        let net = AbsNetwork::new(DVector::zeros(3), vec![0.5, 0.5], us, 1.0).unwrap();
        let g = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let ctx = make_context(&net, &g).unwrap();
        let part = ClusterPartition::build(&ctx, &net, 0.1, 0.01).unwrap();
        let rep = cluster_diameter_check(&ctx, &net, &part).unwrap();
        assert!(rep.clusters.iter().all(|c| c.diameter == 0.0));
        assert_eq!(part.len(), 2);
    }

    #[test]
    fn suggested_delta_splits_at_gap_jump() {
        let z = [0.1, 0.1001, 0.5, 0.50005, 0.9];
        let delta = suggest_delta(&z).unwrap();
        assert_eq!(partition_clusters(&z, delta).unwrap(), vec![0..2, 2..4, 4..5]);
        let spread = [0.1, 0.3, 0.5];
        let delta = suggest_delta(&spread).unwrap();
        assert_eq!(partition_clusters(&spread, delta).unwrap().len(), 3);
        assert_eq!(suggest_delta(&[0.2]), None);
    }
}
