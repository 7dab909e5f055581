//! Schedule replay: rule checking and metrics.
//!
//! Nothing in here trusts the scheduler that produced a [`Schedule`]. Entries
//! are re-derived from the workload definitions and the fleet.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost;
use crate::model::{
    approx_eq, BagOfWorkloads, CloudConfig, Fleet, InstanceId, InstanceMetrics, MetricsReport,
    Schedule, ScheduleEntry, WorkloadId, WorkloadMetrics,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Overlap,
    Precedence,
    DurationMismatch,
    NegativeTime,
    UnknownReference,
    Ineligible,
    Duplicate,
    /// An operation with no entry. Cites the workload's other entries, if any.
    MissingOperation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// Indices into `schedule.entries`.
    pub entries: Vec<usize>,
    pub description: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("schedule has {} violation(s); first: {}", .0.len(), .0.first().map(|v| v.description.as_str()).unwrap_or(""))]
    InvalidSchedule(Vec<Violation>),
}

fn tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Every rule the schedule breaks. Empty means the schedule is valid.
pub fn validate_schedule(
    schedule: &Schedule,
    bow: &BagOfWorkloads,
    fleet: &Fleet,
    config: &CloudConfig,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let ops: HashMap<WorkloadId, Vec<crate::model::Operation>> = bow
        .workloads()
        .iter()
        .map(|w| (w.workload_id(), w.job_operations(fleet)))
        .collect();
    let mut seen: BTreeMap<(WorkloadId, usize), usize> = BTreeMap::new();
    let mut resolved = vec![false; schedule.entries.len()];

    for (idx, e) in schedule.entries.iter().enumerate() {
        if !(e.start >= 0.0 && e.start.is_finite() && e.end.is_finite() && e.end > e.start) {
            out.push(Violation {
                kind: ViolationKind::NegativeTime,
                entries: vec![idx],
                description: format!(
                    "{}/op{} has interval [{}, {}]",
                    e.workload_id, e.op_index, e.start, e.end
                ),
            });
        }
        let Some(op) = ops.get(&e.workload_id).and_then(|v| v.get(e.op_index)) else {
            out.push(Violation {
                kind: ViolationKind::UnknownReference,
                entries: vec![idx],
                description: format!("{}/op{} does not exist", e.workload_id, e.op_index),
            });
            continue;
        };
        let Some(rtype) = fleet
            .contains(e.instance_id)
            .then(|| config.resource_type(e.instance_id.type_id))
            .flatten()
        else {
            out.push(Violation {
                kind: ViolationKind::UnknownReference,
                entries: vec![idx],
                description: format!("instance {} is not in the fleet", e.instance_id),
            });
            continue;
        };
        resolved[idx] = true;
        if !op.eligible().contains(&e.instance_id) {
            out.push(Violation {
                kind: ViolationKind::Ineligible,
                entries: vec![idx],
                description: format!(
                    "{}/op{} may not run on {}",
                    e.workload_id, e.op_index, e.instance_id
                ),
            });
        }
        let expected = op.base_time() / rtype.speed();
        if !approx_eq(e.end - e.start, expected) {
            out.push(Violation {
                kind: ViolationKind::DurationMismatch,
                entries: vec![idx],
                description: format!(
                    "{}/op{} lasts {}, expected {expected}",
                    e.workload_id,
                    e.op_index,
                    e.end - e.start
                ),
            });
        }
        if let Some(&first) = seen.get(&(e.workload_id, e.op_index)) {
            out.push(Violation {
                kind: ViolationKind::Duplicate,
                entries: vec![first, idx],
                description: format!(
                    "{}/op{} scheduled more than once",
                    e.workload_id, e.op_index
                ),
            });
        } else {
            seen.insert((e.workload_id, e.op_index), idx);
        }
    }

    for w in bow.workloads() {
        let id = w.workload_id();
        let n = ops[&id].len();
        let present: Vec<usize> = (0..n).filter_map(|k| seen.get(&(id, k)).copied()).collect();
        for k in 0..n {
            if !seen.contains_key(&(id, k)) {
                out.push(Violation {
                    kind: ViolationKind::MissingOperation,
                    entries: present.clone(),
                    description: format!("{id}/op{k} is never scheduled"),
                });
            }
        }
        for k in 1..n {
            if let (Some(&a), Some(&b)) = (seen.get(&(id, k - 1)), seen.get(&(id, k))) {
                let (prev, next) = (&schedule.entries[a], &schedule.entries[b]);
                if next.start < prev.end - tol(prev.end) {
                    out.push(Violation {
                        kind: ViolationKind::Precedence,
                        entries: vec![a, b],
                        description: format!(
                            "{id}/op{k} starts at {} before op{} ends at {}",
                            next.start,
                            k - 1,
                            prev.end
                        ),
                    });
                }
            }
        }
    }

    let mut per_instance: BTreeMap<InstanceId, Vec<usize>> = BTreeMap::new();
    for (idx, e) in schedule.entries.iter().enumerate() {
        if resolved[idx] {
            per_instance.entry(e.instance_id).or_default().push(idx);
        }
    }
    for (inst, mut idxs) in per_instance {
        idxs.sort_by(|&a, &b| {
            let (ea, eb) = (&schedule.entries[a], &schedule.entries[b]);
            ea.start
                .total_cmp(&eb.start)
                .then(ea.end.total_cmp(&eb.end))
                .then(a.cmp(&b))
        });
        let mut latest: Option<usize> = None;
        for idx in idxs {
            let e = &schedule.entries[idx];
            if let Some(p) = latest {
                let prev = &schedule.entries[p];
                if e.start < prev.end - tol(prev.end) {
                    out.push(Violation {
                        kind: ViolationKind::Overlap,
                        entries: vec![p, idx],
                        description: format!(
                            "{inst} runs [{}, {}] and [{}, {}] at once",
                            prev.start, prev.end, e.start, e.end
                        ),
                    });
                }
                if e.end > prev.end {
                    latest = Some(idx);
                }
            } else {
                latest = Some(idx);
            }
        }
    }
    out
}

fn canonical(entries: &mut [&ScheduleEntry]) {
    entries.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(a.end.total_cmp(&b.end))
            .then(a.workload_id.cmp(&b.workload_id))
            .then(a.op_index.cmp(&b.op_index))
    });
}

/// Busy time, billed lease and objective per instance, plus schedule-wide
/// and per-workload figures. Public instances are billed whole ATUs over the
/// wall-clock span from their first start to their last end, idle gaps
/// included.
pub fn compute_metrics(
    schedule: &Schedule,
    bow: &BagOfWorkloads,
    fleet: &Fleet,
    config: &CloudConfig,
) -> Result<MetricsReport, SimError> {
    let violations = validate_schedule(schedule, bow, fleet, config);
    if !violations.is_empty() {
        return Err(SimError::InvalidSchedule(violations));
    }
    let atu = config.atu_length();

    let mut by_instance: BTreeMap<InstanceId, Vec<&ScheduleEntry>> = BTreeMap::new();
    let mut by_workload: BTreeMap<WorkloadId, Vec<&ScheduleEntry>> = BTreeMap::new();
    for e in &schedule.entries {
        by_instance.entry(e.instance_id).or_default().push(e);
        by_workload.entry(e.workload_id).or_default().push(e);
    }

    let mut per_instance = Vec::with_capacity(by_instance.len());
    for (inst, mut es) in by_instance {
        canonical(&mut es);
        let rtype = config.resource_type(inst.type_id).expect("validated");
        let busy_time: f64 = es.iter().map(|e| e.end - e.start).sum();
        let first = es.iter().map(|e| e.start).fold(f64::INFINITY, f64::min);
        let last = es.iter().map(|e| e.end).fold(0.0, f64::max);
        let span = last - first;
        let cost = cost::cost_for_time(span, rtype, atu);
        per_instance.push(InstanceMetrics {
            instance_id: inst,
            busy_time,
            span,
            atus_billed: cost::billed_atus(span, rtype, atu),
            cost,
            z_contribution: cost * busy_time,
        });
    }

    let mut per_workload = Vec::with_capacity(bow.len());
    for (id, es) in by_workload {
        let w = bow.get(id).expect("validated");
        let first_start = es.iter().map(|e| e.start).fold(f64::INFINITY, f64::min);
        let completion = es.iter().map(|e| e.end).fold(0.0, f64::max);
        per_workload.push(WorkloadMetrics {
            workload_id: id,
            first_start,
            completion,
            flow_time: completion - first_start,
            lateness: (completion - w.delivery_date()).max(0.0),
        });
    }

    let total_cost: f64 = per_instance.iter().map(|p| p.cost).sum();
    let objective_z: f64 = per_instance.iter().map(|p| p.z_contribution).sum();
    let n = per_workload.len();
    let mean_exec_time = if n == 0 {
        0.0
    } else {
        per_workload.iter().map(|w| w.flow_time).sum::<f64>() / n as f64
    };
    Ok(MetricsReport {
        per_instance,
        makespan: schedule.makespan(),
        total_cost,
        objective_z,
        mean_exec_time,
        cost_per_workload: if bow.is_empty() {
            0.0
        } else {
            total_cost / bow.len() as f64
        },
        per_workload,
    })
}
