//! Reference schedulers: first-come-first-served, Min-Min and Max-Min.
//!
//! All three obey the same machine rules as EDBRS and emit the same
//! [`Schedule`] type, so their output goes through the same validator.

use std::collections::BTreeMap;

use crate::edbrs::ScheduleError;
use crate::model::{
    BagOfWorkloads, CloudConfig, Fleet, InstanceId, Operation, Schedule, WorkloadId,
};
use crate::timeline::Timeline;

/// Workloads in id order; every operation goes to its lowest-id eligible
/// instance as soon as both it and the instance are free.
pub fn fcfs_schedule(
    bow: &BagOfWorkloads,
    fleet: &Fleet,
    config: &CloudConfig,
) -> Result<Schedule, ScheduleError> {
    let mut workloads: Vec<_> = bow.workloads().iter().collect();
    workloads.sort_by_key(|w| w.workload_id());
    let mut timeline = Timeline::new(fleet, config);
    let mut entries = Vec::new();
    for w in workloads {
        let mut ready = 0.0f64;
        for op in w.job_operations(fleet) {
            let inst = timeline
                .eligible(&op)
                .next()
                .ok_or(ScheduleError::NoEligibleResource {
                    workload_id: w.workload_id(),
                    op_index: op.op_index(),
                })?;
            let start = timeline.avail(inst).unwrap().max(ready);
            let entry = timeline.place(w.workload_id(), &op, inst, start);
            ready = entry.end;
            entries.push(entry);
        }
    }
    Ok(Schedule { entries })
}

pub fn min_min_schedule(
    bow: &BagOfWorkloads,
    fleet: &Fleet,
    config: &CloudConfig,
) -> Result<Schedule, ScheduleError> {
    list_schedule(bow, fleet, config, Pick::Smallest)
}

pub fn max_min_schedule(
    bow: &BagOfWorkloads,
    fleet: &Fleet,
    config: &CloudConfig,
) -> Result<Schedule, ScheduleError> {
    list_schedule(bow, fleet, config, Pick::Largest)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pick {
    Smallest,
    Largest,
}

struct Candidate {
    ops: Vec<Operation>,
    next: usize,
    ready: f64,
    /// Minimum completion time of the next operation and where it is reached.
    best: (f64, InstanceId),
}

fn min_completion(
    timeline: &Timeline,
    op: &Operation,
    ready: f64,
    workload_id: WorkloadId,
) -> Result<(f64, InstanceId), ScheduleError> {
    timeline
        .eligible(op)
        .map(|i| {
            (
                timeline.avail(i).unwrap().max(ready) + timeline.duration(op, i),
                i,
            )
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .ok_or(ScheduleError::NoEligibleResource {
            workload_id,
            op_index: op.op_index(),
        })
}

/// Min-Min / Max-Min over the next pending operation of every workload.
/// For single-operation workloads this is the textbook algorithm.
fn list_schedule(
    bow: &BagOfWorkloads,
    fleet: &Fleet,
    config: &CloudConfig,
    pick: Pick,
) -> Result<Schedule, ScheduleError> {
    let mut timeline = Timeline::new(fleet, config);
    let mut pending: BTreeMap<WorkloadId, Candidate> = BTreeMap::new();
    for w in bow.workloads() {
        let ops = w.job_operations(fleet);
        let best = min_completion(&timeline, &ops[0], 0.0, w.workload_id())?;
        pending.insert(
            w.workload_id(),
            Candidate {
                ops,
                next: 0,
                ready: 0.0,
                best,
            },
        );
    }
    let mut entries = Vec::new();
    while !pending.is_empty() {
        // ties go to the lowest workload id: BTreeMap order plus strict comparison
        let mut chosen: Option<(WorkloadId, f64)> = None;
        for (&id, c) in &pending {
            let better = match (chosen, pick) {
                (None, _) => true,
                (Some((_, t)), Pick::Smallest) => c.best.0 < t,
                (Some((_, t)), Pick::Largest) => c.best.0 > t,
            };
            if better {
                chosen = Some((id, c.best.0));
            }
        }
        let (id, _) = chosen.expect("pending is non-empty");
        let cand = pending.get_mut(&id).unwrap();
        let op = &cand.ops[cand.next];
        let inst = cand.best.1;
        let start = timeline.avail(inst).unwrap().max(cand.ready);
        let entry = timeline.place(id, op, inst, start);
        entries.push(entry);
        cand.next += 1;
        if cand.next == cand.ops.len() {
            pending.remove(&id);
        } else {
            cand.ready = entry.end;
            cand.best = min_completion(&timeline, &cand.ops[cand.next], cand.ready, id)?;
        }
        // only candidates whose best instance just got busier can change
        for (&other, c) in pending.iter_mut() {
            if other != id && c.best.1 == inst {
                c.best = min_completion(&timeline, &c.ops[c.next], c.ready, other)?;
            }
        }
    }
    Ok(Schedule { entries })
}
