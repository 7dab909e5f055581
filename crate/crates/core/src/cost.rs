//! ATU-billed cost model and the cost-times-time objective.
//!
//! A public instance is billed whole accountable time units (ATUs): its
//! cost is `CO * ceil(time / atu)`. The private type is owned capacity and
//! is billed pro rata, `CO * time / atu`. An instance contributes
//! `cost * time` to the objective `z`; idle instances contribute nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Assignment, BagOfWorkloads, CloudConfig, InstanceId, ResourceType, SizeClasses, TypeId,
    WorkloadId,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("workload {0} is not assigned")]
    UnassignedWorkload(WorkloadId),
    #[error("assignment refers to unknown workload {0}")]
    UnknownWorkload(WorkloadId),
    #[error("assignment refers to unknown resource type {0}")]
    UnknownResourceType(TypeId),
    #[error("instance {instance} exceeds lease limit {limit}")]
    LeaseLimitExceeded { instance: InstanceId, limit: u32 },
    #[error("plan infeasible: {0}")]
    PlanInfeasible(String),
}

/// `ceil` that forgives floating-point noise just above an integer, so a
/// time of exactly three ATUs computed as `3.0000000000000004` bills three.
pub(crate) fn ceil_units(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Time one instance of `rtype` needs for `load` work units.
pub fn resource_time(load: f64, rtype: &ResourceType) -> f64 {
    load / rtype.speed()
}

/// ATUs charged for keeping an instance busy (or leased) for `time`.
pub fn billed_atus(time: f64, rtype: &ResourceType, atu_length: f64) -> f64 {
    if time <= 0.0 {
        return 0.0;
    }
    let units = time / atu_length;
    if rtype.is_public() {
        ceil_units(units)
    } else {
        units
    }
}

/// Cost of leasing an instance of `rtype` for `time`.
pub fn cost_for_time(time: f64, rtype: &ResourceType, atu_length: f64) -> f64 {
    rtype.cost_per_atu() * billed_atus(time, rtype, atu_length)
}

/// Cost of running `load` work units on one instance of `rtype`.
pub fn resource_cost(load: f64, rtype: &ResourceType, atu_length: f64) -> f64 {
    cost_for_time(resource_time(load, rtype), rtype, atu_length)
}

/// `cost * time` of one instance carrying `load`.
pub fn instance_z(load: f64, rtype: &ResourceType, atu_length: f64) -> f64 {
    if load <= 0.0 {
        return 0.0;
    }
    resource_cost(load, rtype, atu_length) * resource_time(load, rtype)
}

/// Per-instance loads of an assignment, summed in bag order.
pub fn instance_loads(
    assignment: &Assignment,
    bow: &BagOfWorkloads,
    config: &CloudConfig,
) -> Result<BTreeMap<InstanceId, f64>, CostError> {
    for &w in assignment.mapping().keys() {
        if bow.get(w).is_none() {
            return Err(CostError::UnknownWorkload(w));
        }
    }
    let mut loads = BTreeMap::new();
    for w in bow.workloads() {
        let inst = assignment
            .instance_of(w.workload_id())
            .ok_or(CostError::UnassignedWorkload(w.workload_id()))?;
        let rtype = config
            .resource_type(inst.type_id)
            .ok_or(CostError::UnknownResourceType(inst.type_id))?;
        if inst.slot >= rtype.lease_limit() {
            return Err(CostError::LeaseLimitExceeded {
                instance: inst,
                limit: rtype.lease_limit(),
            });
        }
        *loads.entry(inst).or_insert(0.0) += w.exec_time();
    }
    Ok(loads)
}

/// Sum of per-instance `cost * time` for a complete, lease-feasible assignment.
pub fn objective_z(
    assignment: &Assignment,
    bow: &BagOfWorkloads,
    config: &CloudConfig,
) -> Result<f64, CostError> {
    let loads = instance_loads(assignment, bow, config)?;
    Ok(z_of_loads(
        loads.iter().map(|(i, &l)| (i.type_id, l)),
        config,
    ))
}

pub(crate) fn z_of_loads(loads: impl Iterator<Item = (TypeId, f64)>, config: &CloudConfig) -> f64 {
    let atu = config.atu_length();
    loads
        .map(|(t, load)| {
            let rtype = config.resource_type(t).expect("type checked by caller");
            instance_z(load, rtype, atu)
        })
        .sum()
}

/// Equal-length plan: for every type, the number of workloads on each leased
/// instance. The balanced form (every instance of a type carries the same
/// count) is built with [`EqualLengthPlan::balanced`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EqualLengthPlan {
    pub per_type_q: BTreeMap<TypeId, Vec<u32>>,
}

impl EqualLengthPlan {
    /// `(type, leased count n, workloads per instance q)` triples.
    pub fn balanced(entries: impl IntoIterator<Item = (TypeId, u32, u32)>) -> Self {
        let per_type_q = entries
            .into_iter()
            .filter(|&(_, n, _)| n > 0)
            .map(|(t, n, q)| (t, vec![q; n as usize]))
            .collect();
        EqualLengthPlan { per_type_q }
    }

    pub fn leased(&self, t: TypeId) -> u32 {
        self.per_type_q.get(&t).map_or(0, |v| v.len() as u32)
    }

    pub fn total_workloads(&self) -> u64 {
        self.per_type_q.values().flatten().map(|&q| q as u64).sum()
    }

    /// `Some((n, q))` when every leased instance of `t` carries the same count.
    pub fn balanced_entry(&self, t: TypeId) -> Option<(u32, u32)> {
        let v = self.per_type_q.get(&t)?;
        let q = *v.first()?;
        v.iter().all(|&x| x == q).then_some((v.len() as u32, q))
    }

    pub fn to_varying(&self) -> VaryingLengthPlan {
        VaryingLengthPlan {
            per_type_rows: self
                .per_type_q
                .iter()
                .map(|(&t, qs)| (t, qs.iter().map(|&q| vec![q]).collect()))
                .collect(),
        }
    }
}

/// Varying-length plan: for every type and leased instance, how many
/// workloads of each size class it carries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VaryingLengthPlan {
    pub per_type_rows: BTreeMap<TypeId, Vec<Vec<u32>>>,
}

impl VaryingLengthPlan {
    /// `(type, leased count n, per-class counts q_{m,a})`.
    pub fn balanced(entries: impl IntoIterator<Item = (TypeId, u32, Vec<u32>)>) -> Self {
        let per_type_rows = entries
            .into_iter()
            .filter(|(_, n, _)| *n > 0)
            .map(|(t, n, q)| (t, vec![q; n as usize]))
            .collect();
        VaryingLengthPlan { per_type_rows }
    }

    pub fn leased(&self, t: TypeId) -> u32 {
        self.per_type_rows.get(&t).map_or(0, |v| v.len() as u32)
    }

    /// Instances that carry at least one workload.
    pub fn used_instances(&self) -> usize {
        self.per_type_rows
            .values()
            .flatten()
            .filter(|r| r.iter().any(|&q| q > 0))
            .count()
    }

    fn class_totals(&self, classes: usize) -> Result<Vec<u64>, CostError> {
        let mut out = vec![0u64; classes];
        for row in self.per_type_rows.values().flatten() {
            for (a, &q) in row.iter().enumerate() {
                match out.get_mut(a) {
                    Some(slot) => *slot += q as u64,
                    None if q == 0 => {}
                    None => {
                        return Err(CostError::PlanInfeasible(format!(
                            "class {a} does not exist"
                        )))
                    }
                }
            }
        }
        Ok(out)
    }

    fn check(&self, classes: &SizeClasses, config: &CloudConfig) -> Result<(), CostError> {
        for (&t, rows) in &self.per_type_rows {
            let rtype = config
                .resource_type(t)
                .ok_or_else(|| CostError::PlanInfeasible(format!("unknown type {t}")))?;
            if rows.len() > rtype.lease_limit() as usize {
                return Err(CostError::PlanInfeasible(format!(
                    "{t}: {} instances leased, limit {}",
                    rows.len(),
                    rtype.lease_limit()
                )));
            }
        }
        let totals = self.class_totals(classes.counts.len())?;
        for (a, (&got, &want)) in totals.iter().zip(&classes.counts).enumerate() {
            if got != want as u64 {
                return Err(CostError::PlanInfeasible(format!(
                    "class {a}: plan places {got} workloads, bag has {want}"
                )));
            }
        }
        Ok(())
    }

    /// Deals the bag onto concrete instances: slot `k` of a type takes row `k`,
    /// and the workloads of each class are handed out in bag order.
    pub fn materialize(
        &self,
        bow: &BagOfWorkloads,
        classes: &SizeClasses,
        config: &CloudConfig,
    ) -> Result<Assignment, CostError> {
        self.check(classes, config)?;
        let class_of = bow.class_of_each(classes);
        let mut queues: Vec<Vec<WorkloadId>> = vec![Vec::new(); classes.sizes.len()];
        for (w, &a) in bow.workloads().iter().zip(&class_of) {
            queues[a].push(w.workload_id());
        }
        let mut cursor = vec![0usize; queues.len()];
        let mut mapping = BTreeMap::new();
        for (&t, rows) in &self.per_type_rows {
            for (slot, row) in rows.iter().enumerate() {
                let inst = InstanceId::new(t, slot as u32);
                for (a, &q) in row.iter().enumerate() {
                    for _ in 0..q {
                        mapping.insert(queues[a][cursor[a]], inst);
                        cursor[a] += 1;
                    }
                }
            }
        }
        Ok(Assignment::new(mapping))
    }
}

/// Objective of an equal-length plan over `d` workloads of size `exec_time`.
pub fn equal_length_z(
    plan: &EqualLengthPlan,
    d: usize,
    exec_time: f64,
    config: &CloudConfig,
) -> Result<f64, CostError> {
    if plan.total_workloads() != d as u64 {
        return Err(CostError::PlanInfeasible(format!(
            "plan places {} workloads, bag has {d}",
            plan.total_workloads()
        )));
    }
    let classes = SizeClasses {
        sizes: vec![exec_time],
        counts: vec![d],
    };
    let varying = plan.to_varying();
    if d == 0 {
        // a zero-workload bag has no classes
        return Ok(0.0);
    }
    varying_length_z(&varying, &classes, config)
}

/// Objective of a varying-length plan; each instance's load is
/// `sum_a q_{m,a} * E_a`.
pub fn varying_length_z(
    plan: &VaryingLengthPlan,
    classes: &SizeClasses,
    config: &CloudConfig,
) -> Result<f64, CostError> {
    plan.check(classes, config)?;
    let loads = plan.per_type_rows.iter().flat_map(|(&t, rows)| {
        rows.iter().map(move |row| {
            let load: f64 = row
                .iter()
                .zip(&classes.sizes)
                .map(|(&q, &e)| q as f64 * e)
                .sum();
            (t, load)
        })
    });
    Ok(z_of_loads(loads, config))
}
