//! Serialized experiment records.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::harness::instance::InstanceDescriptor;
use crate::harness::params::{ParamSet, ResolvedThresholds};
use crate::moments::AntiConcentrationReport;
use crate::network::NetworkFile;
use crate::rng::derive_seed;
use crate::search::{ScoringRule, SearchBudget, SearchStats};
use crate::subspace::ContainmentReport;

pub const RECORD_FORMAT: &str = "netlearn/record";
pub const RECORD_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    /// Estimate moments from samples.
    #[default]
    Sampled,
    /// Use population moments computed from the target's parameters.
    Exact,
}

/// Everything that determines a run besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub params: ParamSet,
    #[serde(default)]
    pub budget: SearchBudget,
    #[serde(default)]
    pub scoring: ScoringRule,
    #[serde(default)]
    pub moment_mode: MomentMode,
    pub seed: u64,
}

impl LearnConfig {
    pub fn new(params: ParamSet, seed: u64) -> Self {
        Self {
            params,
            budget: SearchBudget::default(),
            scoring: ScoringRule::FirstAccept,
            moment_mode: MomentMode::Sampled,
            seed,
        }
    }
}

/// Per-stage seeds, derived from the master seed by label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub direction: u64,
    pub train: u64,
    pub holdout: u64,
    pub net: u64,
    pub evaluation: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        Self {
            master,
            direction: derive_seed(master, "direction"),
            train: derive_seed(master, "train"),
            holdout: derive_seed(master, "holdout"),
            net: derive_seed(master, "net"),
            evaluation: derive_seed(master, "evaluation"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    /// Moment estimation failed or produced unusable thresholds.
    Estimation,
    /// `V` came out empty and the linear model did not validate.
    DegenerateSubspace,
    /// Enumeration finished without an accepted candidate.
    SearchFail,
    /// The search budget stopped the enumeration.
    Budget,
}

impl Status {
    /// Process exit code: 0 success, 2 failure, 3 budget.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Budget => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderError {
    pub order: usize,
    pub std_error: Option<f64>,
    /// `‖M̂_ℓ − M_ℓ‖_F` when the target is known.
    pub error: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub n_samples: usize,
    /// Largest per-order standard error.
    pub measured_error: f64,
    pub max_abs_hermite: f64,
    pub linear_std_error: Option<f64>,
    pub linear_error: Option<f64>,
    pub orders: Vec<OrderError>,
}

impl MomentSummary {
    /// `(ℓ, standard error)` for every order with a measured error.
    pub fn order_errors(&self) -> Vec<(usize, f64)> {
        self.orders.iter().filter_map(|o| o.std_error.map(|e| (o.order, e))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceRecord {
    pub dim: usize,
    pub kappas: Vec<f64>,
    pub spectrum: Vec<f64>,
    /// `(ℓ, rank Π_ℓ)`.
    pub projector_ranks: Vec<(usize, usize)>,
    pub containment: Option<ContainmentReport>,
    pub anti_concentration: Option<AntiConcentrationReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub accepted_index: Option<u64>,
    pub residual: Option<f64>,
    pub best_residual: Option<f64>,
    pub budget_reason: Option<String>,
    pub stats: SearchStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalError {
    pub exact: f64,
    pub monte_carlo: f64,
    pub mc_samples: usize,
}

/// Wall-clock seconds per stage; `total` is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub sampling: f64,
    pub estimation: f64,
    pub spectral: f64,
    pub net: f64,
    pub search: f64,
    pub evaluation: f64,
    pub total: f64,
}

impl Timings {
    pub fn stage_sum(&self) -> f64 {
        self.sampling + self.estimation + self.spectral + self.net + self.search + self.evaluation
    }

    pub fn finalize(&mut self) {
        self.total = self.stage_sum();
    }
}

/// Sample counts per use; `total` is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub train: usize,
    pub holdout: usize,
    pub evaluation: usize,
    pub total: usize,
}

impl SampleCounts {
    pub fn finalize(&mut self) {
        self.total = self.train + self.holdout + self.evaluation;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: LearnConfig,
    pub seeds: Seeds,
    pub instance: Option<InstanceDescriptor>,
    pub direction: Vec<f64>,
    pub resolved: Option<ResolvedThresholds>,
    pub moments: MomentSummary,
    pub subspace: Option<SubspaceRecord>,
    pub search: Option<SearchRecord>,
    pub status: Status,
    pub failure: Option<String>,
    pub model: Option<NetworkFile>,
    pub final_error: Option<FinalError>,
    pub timings: Timings,
    pub sample_counts: SampleCounts,
    pub warnings: Vec<String>,
}

impl ExperimentRecord {
    pub fn accepted_index(&self) -> Option<u64> {
        self.search.as_ref().and_then(|s| s.accepted_index)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// SHA-256 over the canonical JSON of the configuration and instance.
pub fn config_hash(config: &LearnConfig, instance: Option<&InstanceDescriptor>) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(config)?);
    hasher.update(b"\n");
    hasher.update(serde_json::to_vec(&instance)?);
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::params::{practical_params, ParamOverrides};

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = Seeds::derive(7);
        assert_eq!(a, Seeds::derive(7));
        let all = [a.direction, a.train, a.holdout, a.net, a.evaluation];
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
    }

    #[test]
    fn hash_depends_on_config() {
        let p = practical_params(2, 5, 1.0, 0.2, &ParamOverrides::default()).unwrap();
        let a = LearnConfig::new(p.clone(), 1);
        let b = LearnConfig::new(p, 2);
        assert_eq!(config_hash(&a, None).unwrap(), config_hash(&a, None).unwrap());
        assert_ne!(config_hash(&a, None).unwrap(), config_hash(&b, None).unwrap());
        assert_eq!(config_hash(&a, None).unwrap().len(), 64);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Status::Success.exit_code(), 0);
        assert_eq!(Status::SearchFail.exit_code(), 2);
        assert_eq!(Status::DegenerateSubspace.exit_code(), 2);
        assert_eq!(Status::Estimation.exit_code(), 2);
        assert_eq!(Status::Budget.exit_code(), 3);
    }
}
