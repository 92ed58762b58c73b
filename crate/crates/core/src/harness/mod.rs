//! Parameter schedules, instance generators, the end-to-end pipeline and
//! experiment records.

pub mod bench;
pub mod instance;
pub mod params;
pub mod pipeline;
pub mod record;

pub use instance::{generate_instance, Instance, InstanceDescriptor, InstanceKind, InstanceKnobs};
pub use params::{practical_params, theory_params, Magnitude, ParamMode, ParamOverrides, ParamSet, Thresholds};
pub use pipeline::{diagnose, learn, replay, LearnResult, Oracle};
pub use record::{ExperimentRecord, LearnConfig, MomentMode, Seeds, Status};
