//! Deadline-driven batch scheduling (EDBRS).
//!
//! Workloads are sorted by a four-key priority, cut into delivery-date
//! windows ("batches") and then dispatched operation by operation. Each
//! operation goes to the eligible instance where it can start soonest:
//!
//! * an instance free exactly when the operation becomes ready (case A),
//! * otherwise the instance that became free most recently before that (case B,
//!   shortest resource waiting),
//! * otherwise the instance that frees up first after it (case C).
//!
//! The first operation of a workload is ready at time 0, so it simply lands
//! on the instance that is idle the earliest. Batch `k+1` may not start any
//! operation before the latest dispatch time seen in batches `0..=k`.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BagOfWorkloads, CloudConfig, Fleet, InstanceId, MetricsReport, Schedule, Workload, WorkloadId,
};
use crate::sim::{self, SimError};
use crate::timeline::Timeline;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("duplicate workload id {0}")]
    DuplicateWorkloadId(WorkloadId),
    #[error("operation {op_index} of {workload_id} has no eligible instance in the fleet")]
    NoEligibleResource {
        workload_id: WorkloadId,
        op_index: usize,
    },
    #[error("batch window must be > 0 (got {0})")]
    InvalidWindow(f64),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Direction flags for the tie-break keys after delivery date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortOrder {
    pub amount_descending: bool,
    pub time_ascending: bool,
    pub ops_ascending: bool,
}

impl Default for SortOrder {
    fn default() -> Self {
        SortOrder {
            amount_descending: true,
            time_ascending: true,
            ops_ascending: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SortKey {
    pub delivery_date: f64,
    pub required_amount: f64,
    pub total_processing_time: f64,
    pub operation_count: usize,
    pub workload_id: WorkloadId,
}

fn directed(o: Ordering, ascending: bool) -> Ordering {
    if ascending {
        o
    } else {
        o.reverse()
    }
}

impl SortKey {
    pub fn of(w: &Workload) -> Self {
        SortKey {
            delivery_date: w.delivery_date(),
            required_amount: w.required_amount(),
            total_processing_time: w.exec_time(),
            operation_count: w.job_operation_count(),
            workload_id: w.workload_id(),
        }
    }

    pub fn compare(&self, other: &SortKey, order: SortOrder) -> Ordering {
        self.delivery_date
            .total_cmp(&other.delivery_date)
            .then(directed(
                self.required_amount.total_cmp(&other.required_amount),
                !order.amount_descending,
            ))
            .then(directed(
                self.total_processing_time
                    .total_cmp(&other.total_processing_time),
                order.time_ascending,
            ))
            .then(directed(
                self.operation_count.cmp(&other.operation_count),
                order.ops_ascending,
            ))
            .then(self.workload_id.cmp(&other.workload_id))
    }
}

pub fn sort_workloads(workloads: &[Workload]) -> Result<Vec<Workload>, ScheduleError> {
    sort_workloads_by(workloads, SortOrder::default())
}

pub fn sort_workloads_by(
    workloads: &[Workload],
    order: SortOrder,
) -> Result<Vec<Workload>, ScheduleError> {
    let mut seen = BTreeSet::new();
    for w in workloads {
        if !seen.insert(w.workload_id()) {
            return Err(ScheduleError::DuplicateWorkloadId(w.workload_id()));
        }
    }
    let mut sorted = workloads.to_vec();
    sorted.sort_by(|a, b| SortKey::of(a).compare(&SortKey::of(b), order));
    Ok(sorted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub index: usize,
    pub workloads: Vec<Workload>,
    /// Earliest start for any operation of this batch; filled in by [`dispatch`].
    pub release_time: f64,
}

/// Splits a sorted sequence into delivery-date windows
/// `[k * window, (k + 1) * window)`. Empty windows produce no batch.
pub fn partition_batches(sorted: &[Workload], window: f64) -> Result<Vec<Batch>, ScheduleError> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(ScheduleError::InvalidWindow(window));
    }
    let mut batches: Vec<(u64, Vec<Workload>)> = Vec::new();
    for w in sorted {
        let k = (w.delivery_date() / window).floor() as u64;
        match batches.iter_mut().find(|(bk, _)| *bk == k) {
            Some((_, ws)) => ws.push(w.clone()),
            None => batches.push((k, vec![w.clone()])),
        }
    }
    batches.sort_by_key(|(k, _)| *k);
    Ok(batches
        .into_iter()
        .enumerate()
        .map(|(index, (_, workloads))| Batch {
            index,
            workloads,
            release_time: 0.0,
        })
        .collect())
}

/// Places every operation of every batch, in order. Release times of the
/// batches are written back into `batches`.
pub fn dispatch(
    batches: &mut [Batch],
    fleet: &Fleet,
    config: &CloudConfig,
) -> Result<Schedule, ScheduleError> {
    let mut timeline = Timeline::new(fleet, config);
    let mut entries = Vec::new();
    let mut release = 0.0f64;
    for batch in batches.iter_mut() {
        batch.release_time = release;
        let mut last_dispatch = release;
        for w in &batch.workloads {
            let mut prev_end = 0.0f64;
            for op in w.job_operations(fleet) {
                let ready = prev_end.max(batch.release_time);
                let (instance, start) = pick_instance(&timeline, &op, ready).ok_or(
                    ScheduleError::NoEligibleResource {
                        workload_id: w.workload_id(),
                        op_index: op.op_index(),
                    },
                )?;
                let entry = timeline.place(w.workload_id(), &op, instance, start);
                prev_end = entry.end;
                last_dispatch = start;
                entries.push(entry);
            }
        }
        release = release.max(last_dispatch);
    }
    Ok(Schedule { entries })
}

/// Minimum start time; ties go to the smallest resource idle gap, then to
/// the lowest instance id.
fn pick_instance(
    timeline: &Timeline,
    op: &crate::model::Operation,
    ready: f64,
) -> Option<(InstanceId, f64)> {
    timeline
        .eligible(op)
        .map(|i| {
            let avail = timeline.avail(i).expect("eligible filters to fleet");
            let start = avail.max(ready);
            let idle_gap = if avail <= ready { ready - avail } else { 0.0 };
            (start, idle_gap, i)
        })
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        })
        .map(|(start, _, i)| (i, start))
}

/// Sort, batch, dispatch, then measure. `window` defaults to the ATU length.
pub fn schedule(
    bow: &BagOfWorkloads,
    fleet: &Fleet,
    config: &CloudConfig,
    window: Option<f64>,
) -> Result<(Schedule, MetricsReport), ScheduleError> {
    let sorted = sort_workloads(bow.workloads())?;
    let mut batches = partition_batches(&sorted, window.unwrap_or(config.atu_length()))?;
    let schedule = dispatch(&mut batches, fleet, config)?;
    let metrics = sim::compute_metrics(&schedule, bow, fleet, config)?;
    Ok((schedule, metrics))
}
