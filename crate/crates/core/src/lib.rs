//! # bowlab
//!
//! Scheduling bags of independent workloads over a hybrid cloud: a handful
//! of public resource types billed per accountable time unit (ATU) plus one
//! private, owned type.
//!
//! The crate has two halves that share one cost model:
//!
//! * [`optimal`] finds assignments minimizing `z = sum(cost_m * time_m)`,
//!   exactly, for desk-sized bags ([`cost`] evaluates `z`).
//! * [`edbrs`] and [`baselines`] build timed schedules for workloads made of
//!   ordered operations; [`sim`] checks them and turns them into metrics.
//!
//! [`gen`] produces seeded scenarios and [`experiment`] runs a matrix of
//! algorithms over them and writes CSV/JSON reports.

pub mod baselines;
pub mod cost;
pub mod edbrs;
pub mod experiment;
pub mod gen;
pub mod model;
pub mod optimal;
pub mod sim;
mod timeline;

pub use model::{
    Assignment, BagOfWorkloads, CloudConfig, Fleet, InstanceId, MetricsReport, Operation,
    ResourceKind, ResourceType, Schedule, ScheduleEntry, TypeId, Workload, WorkloadId,
};
