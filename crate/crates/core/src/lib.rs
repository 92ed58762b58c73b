//! Learning one-hidden-layer ReLU networks from Gaussian examples by
//! moments, spectral thresholding and net search.
//!
//! The target is rewritten in absolute-value form
//! `f(x) = ⟨w, x⟩ + Σ λᵢ |⟨uᵢ, x⟩|` ([`network`]). Contracted Hermite
//! moments along a random direction ([`hermite`], [`moments`]) are
//! thresholded into projectors whose summed span is a small candidate
//! subspace ([`subspace`]). Networks built from a net over that subspace are
//! enumerated until one fits a hold-out set ([`search`]). [`clustering`] and
//! [`indicator`] provide the cluster structure the method relies on, used
//! here for diagnostics. [`harness`] ties it together with parameter
//! schedules, instance generators, an end-to-end pipeline and replayable
//! records.
//!
//! ```
//! use netlearn::harness::{generate_instance, learn, practical_params};
//! use netlearn::harness::{InstanceKind, InstanceKnobs, LearnConfig, MomentMode, Oracle, ParamOverrides, Status};
//!
//! let inst = generate_instance(InstanceKind::Separated, 2, 6, 1.0, 4, &InstanceKnobs::default()).unwrap();
//! let overrides = ParamOverrides { n_val: Some(10_000), ..Default::default() };
//! let params = practical_params(2, 6, 1.0, 0.2, &overrides).unwrap();
//! let config = LearnConfig { moment_mode: MomentMode::Exact, ..LearnConfig::new(params, 1) };
//! let result = learn(&Oracle::Network { net: &inst.network, instance: Some(&inst.descriptor) }, &config).unwrap();
//! assert_eq!(result.status(), Status::Success);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod error;
pub mod harness;
pub mod hermite;
pub mod indicator;
pub mod linalg;
pub mod moments;
pub mod network;
pub mod rng;
pub mod search;
pub mod subspace;

pub use error::{Error, Result};
pub use network::{AbsNetwork, Dataset, ReluNetwork};

/// The guide's chapters, compiled and run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/networks.md")]
    mod networks {}
    #[doc = include_str!("../../../book/src/hermite.md")]
    mod hermite {}
    #[doc = include_str!("../../../book/src/moments.md")]
    mod moments {}
    #[doc = include_str!("../../../book/src/clusters.md")]
    mod clusters {}
    #[doc = include_str!("../../../book/src/subspace.md")]
    mod subspace {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
