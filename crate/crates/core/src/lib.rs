//! Fragmentation-aware scheduling of Multi-Instance GPU (MIG) profiles.
//!
//! The crate models an A100 cluster as a set of 8-position memory-slice
//! occupancy vectors, scores how badly each GPU is fragmented with respect to
//! the supported MIG profiles, and places incoming workloads with either the
//! Minimum Fragmentation Increment (MFI) heuristic or one of four baseline
//! schedulers. A slot-driven Monte Carlo engine replays synthetic workload
//! traces and records acceptance, utilization, active GPUs and fragmentation
//! severity; the [`report`] module turns batches of runs into CSV/JSON files.

pub mod fragmentation;
pub mod mig_model;
pub mod report;
pub mod schedulers;
pub mod sim;
pub mod validation;
pub mod workload;

pub use fragmentation::{cluster_severity, frag_score, is_fragmented, FragScore};
pub use mig_model::{
    lookup_profile, profile_catalog, ClusterState, GpuState, InstanceId, MigProfile, ModelError, Occupancy, Placement,
    SLICES_PER_GPU,
};
pub use schedulers::{Decision, Scheduler, SchedulerKind, SchedulerPolicy};
pub use sim::{run_batch, run_single, BatchResult, MetricsSnapshot, RunResult, SimConfig};
pub use workload::{ProfileDistribution, TraceConfig, WorkloadRequest};
