//! Exact bag-of-workloads assignment.
//!
//! Workloads of the same size are interchangeable, so an assignment is fully
//! described (up to its objective) by how many workloads of each size class
//! every instance carries. [`solve_varying_length`] searches that space with
//! depth-first branch and bound; [`solve_equal_length`] is the single-class
//! case. [`brute_force_oracle`] enumerates raw workload-to-instance mappings
//! and shares nothing with the search beyond the cost functions.
//!
//! The bound: an instance of type `m` carrying load `L` contributes at least
//! `CO_m * L^2 / (SP_m^2 * atu)` (ceilings only add cost), and spreading the
//! remaining work `W` over instances with those coefficients costs at least
//! `W^2 / sum(1/c)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{self, CostError, EqualLengthPlan, VaryingLengthPlan};
use crate::model::{
    Assignment, BagOfWorkloads, CloudConfig, InstanceId, ModelError, ResourceType, SizeClasses,
    TypeId, WorkloadId,
};

pub const DEFAULT_NODE_LIMIT: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no feasible plan: {0}")]
    Infeasible(String),
    #[error("search budget of {0} nodes exhausted before any plan was found")]
    SearchBudgetExceeded(u64),
    #[error("instance too large for the oracle: {workloads} workloads (cap {max_workloads}), {instances} instances (cap {max_instances})")]
    TooLargeForOracle {
        workloads: usize,
        instances: usize,
        max_workloads: usize,
        max_instances: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult<P> {
    pub best: P,
    pub best_z: f64,
    pub nodes_explored: u64,
    /// The search ran to completion, so `best_z` is the global minimum.
    pub proven_optimal: bool,
}

impl<P> SolveResult<P> {
    /// Turns an unproven incumbent into [`SolveError::SearchBudgetExceeded`].
    pub fn into_proven(self) -> Result<Self, SolveError> {
        if self.proven_optimal {
            Ok(self)
        } else {
            Err(SolveError::SearchBudgetExceeded(self.nodes_explored))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub node_limit: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            node_limit: DEFAULT_NODE_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleCaps {
    pub max_workloads: usize,
    pub max_instances: usize,
}

impl Default for OracleCaps {
    fn default() -> Self {
        OracleCaps {
            max_workloads: 8,
            max_instances: 6,
        }
    }
}

/// Lease slot `slot` of `rtype`, in TypeId order.
struct Slot<'a> {
    type_id: TypeId,
    rtype: &'a ResourceType,
}

fn slots(config: &CloudConfig) -> Vec<Slot<'_>> {
    let mut types: Vec<&ResourceType> = config.types().collect();
    types.sort_by_key(|t| t.type_id());
    types
        .into_iter()
        .flat_map(|t| {
            (0..t.lease_limit()).map(move |_| Slot {
                type_id: t.type_id(),
                rtype: t,
            })
        })
        .collect()
}

#[derive(Clone)]
struct Incumbent {
    z: f64,
    used: usize,
    rows: Vec<Vec<u32>>,
}

impl Incumbent {
    /// Total order used for tie-breaking: objective, then instances in use,
    /// then the flattened per-instance counts.
    fn better_than(&self, other: &Incumbent) -> bool {
        match self.z.total_cmp(&other.z) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => (self.used, &self.rows) < (other.used, &other.rows),
        }
    }
}

struct Search<'a> {
    sizes: &'a [f64],
    slots: Vec<Slot<'a>>,
    atu: f64,
    /// Sum of `1/c` over slots `i..`, infinite when some slot is free.
    inv_coef_suffix: Vec<f64>,
    node_limit: u64,
    nodes: u64,
    exhausted: bool,
    best: Option<Incumbent>,
    rows: Vec<Vec<u32>>,
}

fn row_load(row: &[u32], sizes: &[f64]) -> f64 {
    row.iter().zip(sizes).map(|(&q, &e)| q as f64 * e).sum()
}

/// Every vector `v` with `v <= remaining` componentwise and, when `cap` is
/// given, `v <= cap` lexicographically. Returned in descending lex order.
fn candidate_rows(remaining: &[u32], cap: Option<&[u32]>) -> Vec<Vec<u32>> {
    fn rec(
        a: usize,
        remaining: &[u32],
        cap: Option<&[u32]>,
        tight: bool,
        cur: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if a == remaining.len() {
            out.push(cur.clone());
            return;
        }
        let hi = match (tight, cap) {
            (true, Some(c)) => remaining[a].min(c[a]),
            _ => remaining[a],
        };
        for q in (0..=hi).rev() {
            let still_tight = tight && cap.is_some_and(|c| q == c[a]);
            cur.push(q);
            rec(a + 1, remaining, cap, still_tight, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, remaining, cap, cap.is_some(), &mut Vec::new(), &mut out);
    out
}

impl<'a> Search<'a> {
    fn new(sizes: &'a [f64], config: &'a CloudConfig, node_limit: u64) -> Self {
        let slots = slots(config);
        let atu = config.atu_length();
        let mut inv_coef_suffix = vec![0.0; slots.len() + 1];
        for i in (0..slots.len()).rev() {
            let t = slots[i].rtype;
            let c = t.cost_per_atu() / (t.speed() * t.speed() * atu);
            let inv = if c > 0.0 { 1.0 / c } else { f64::INFINITY };
            inv_coef_suffix[i] = inv_coef_suffix[i + 1] + inv;
        }
        Search {
            sizes,
            rows: vec![Vec::new(); slots.len()],
            slots,
            atu,
            inv_coef_suffix,
            node_limit,
            nodes: 0,
            exhausted: false,
            best: None,
        }
    }

    fn slot_z(&self, i: usize, load: f64) -> f64 {
        cost::instance_z(load, self.slots[i].rtype, self.atu)
    }

    fn lower_bound(&self, from: usize, work: f64) -> f64 {
        if work <= 0.0 {
            return 0.0;
        }
        let inv = self.inv_coef_suffix[from];
        if inv.is_infinite() || inv <= 0.0 {
            0.0
        } else {
            work * work / inv
        }
    }

    fn prunes(&self, bound: f64) -> bool {
        match &self.best {
            Some(b) => bound > b.z + 1e-9 * b.z.abs().max(1.0),
            None => false,
        }
    }

    fn offer(&mut self, candidate: Incumbent) {
        if self.best.as_ref().is_none_or(|b| candidate.better_than(b)) {
            self.best = Some(candidate);
        }
    }

    fn record_current(&mut self, upto: usize, z: f64) {
        let n = self.slots.len();
        let width = self.sizes.len();
        let rows: Vec<Vec<u32>> = (0..n)
            .map(|i| {
                if i < upto {
                    self.rows[i].clone()
                } else {
                    vec![0; width]
                }
            })
            .collect();
        let used = rows.iter().filter(|r| r.iter().any(|&q| q > 0)).count();
        self.offer(Incumbent { z, used, rows });
    }

    fn dfs(&mut self, i: usize, remaining: &mut Vec<u32>, z: f64) {
        if self.exhausted {
            return;
        }
        if remaining.iter().all(|&q| q == 0) {
            self.record_current(i, z);
            return;
        }
        if i == self.slots.len() {
            return;
        }
        let work = row_load(remaining, self.sizes);
        if self.prunes(z + self.lower_bound(i, work)) {
            return;
        }
        let cap = (i > 0 && self.slots[i - 1].type_id == self.slots[i].type_id)
            .then(|| self.rows[i - 1].clone());
        let is_last = i + 1 == self.slots.len();
        for row in candidate_rows(remaining, cap.as_deref()) {
            if is_last && row != *remaining {
                continue;
            }
            self.nodes += 1;
            if self.nodes > self.node_limit {
                self.exhausted = true;
                return;
            }
            let load = row_load(&row, self.sizes);
            let z_here = z + self.slot_z(i, load);
            let rest = work - load;
            if self.prunes(z_here + self.lower_bound(i + 1, rest)) {
                continue;
            }
            for (r, q) in remaining.iter_mut().zip(&row) {
                *r -= q;
            }
            self.rows[i] = row;
            self.dfs(i + 1, remaining, z_here);
            for (r, q) in remaining.iter_mut().zip(&self.rows[i]) {
                *r += q;
            }
        }
    }

    /// Largest workloads first, each onto the slot whose objective grows least.
    fn greedy_seed(&mut self, counts: &[u32]) {
        let n = self.slots.len();
        let width = self.sizes.len();
        let mut rows = vec![vec![0u32; width]; n];
        let mut loads = vec![0.0; n];
        let mut order: Vec<usize> = (0..width).collect();
        order.sort_by(|&a, &b| self.sizes[b].total_cmp(&self.sizes[a]));
        for a in order {
            for _ in 0..counts[a] {
                let mut best_i = 0;
                let mut best_delta = f64::INFINITY;
                for (i, &load) in loads.iter().enumerate() {
                    let delta = self.slot_z(i, load + self.sizes[a]) - self.slot_z(i, load);
                    if delta < best_delta {
                        best_delta = delta;
                        best_i = i;
                    }
                }
                rows[best_i][a] += 1;
                loads[best_i] += self.sizes[a];
            }
        }
        // canonical form: rows of one type in descending lex order
        let mut start = 0;
        while start < n {
            let mut end = start;
            while end < n && self.slots[end].type_id == self.slots[start].type_id {
                end += 1;
            }
            rows[start..end].sort_by(|a, b| b.cmp(a));
            start = end;
        }
        let z = rows.iter().enumerate().fold(0.0, |acc, (i, r)| {
            acc + self.slot_z(i, row_load(r, self.sizes))
        });
        let used = rows.iter().filter(|r| r.iter().any(|&q| q > 0)).count();
        self.offer(Incumbent { z, used, rows });
    }

    fn into_plan(self) -> (Option<VaryingLengthPlan>, u64, bool) {
        let proven = !self.exhausted;
        let nodes = self.nodes;
        let slots = self.slots;
        let plan = self.best.map(|b| {
            let mut plan = VaryingLengthPlan::default();
            for (slot, row) in slots.iter().zip(b.rows) {
                if row.iter().any(|&q| q > 0) {
                    plan.per_type_rows
                        .entry(slot.type_id)
                        .or_default()
                        .push(row);
                }
            }
            plan
        });
        (plan, nodes, proven)
    }
}

fn check_classes(counts: &[usize], sizes: &[f64]) -> Result<(), SolveError> {
    if counts.len() != sizes.len() {
        return Err(SolveError::InvalidInput(format!(
            "{} class counts for {} class sizes",
            counts.len(),
            sizes.len()
        )));
    }
    if let Some(e) = sizes.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        return Err(SolveError::InvalidInput(format!(
            "class size must be > 0 (got {e})"
        )));
    }
    Ok(())
}

/// Minimum-`z` placement of `class_counts[a]` workloads of size `sizes[a]`.
pub fn solve_varying_length(
    class_counts: &[usize],
    sizes: &[f64],
    config: &CloudConfig,
) -> Result<SolveResult<VaryingLengthPlan>, SolveError> {
    solve_varying_length_with(class_counts, sizes, config, SolveOptions::default())
}

pub fn solve_varying_length_with(
    class_counts: &[usize],
    sizes: &[f64],
    config: &CloudConfig,
    options: SolveOptions,
) -> Result<SolveResult<VaryingLengthPlan>, SolveError> {
    check_classes(class_counts, sizes)?;
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Ok(SolveResult {
            best: VaryingLengthPlan::default(),
            best_z: 0.0,
            nodes_explored: 0,
            proven_optimal: true,
        });
    }
    if config.total_lease_limit() == 0 {
        return Err(SolveError::Infeasible(format!(
            "{total} workloads but every lease limit is 0"
        )));
    }
    let counts: Vec<u32> = class_counts.iter().map(|&c| c as u32).collect();
    let mut search = Search::new(sizes, config, options.node_limit);
    search.greedy_seed(&counts);
    let mut remaining = counts;
    search.dfs(0, &mut remaining, 0.0);
    let (plan, nodes, proven) = search.into_plan();
    let plan = plan.ok_or(SolveError::SearchBudgetExceeded(nodes))?;
    let classes = SizeClasses {
        sizes: sizes.to_vec(),
        counts: class_counts.to_vec(),
    };
    let best_z = cost::varying_length_z(&plan, &classes, config)?;
    Ok(SolveResult {
        best: plan,
        best_z,
        nodes_explored: nodes,
        proven_optimal: proven,
    })
}

/// Minimum-`z` placement of `d` workloads that all need `exec_time`.
pub fn solve_equal_length(
    d: usize,
    exec_time: f64,
    config: &CloudConfig,
) -> Result<SolveResult<EqualLengthPlan>, SolveError> {
    let r = solve_varying_length(&[d], &[exec_time], config)?;
    let per_type_q = r
        .best
        .per_type_rows
        .into_iter()
        .map(|(t, rows)| (t, rows.into_iter().map(|row| row[0]).collect()))
        .collect();
    Ok(SolveResult {
        best: EqualLengthPlan { per_type_q },
        best_z: r.best_z,
        nodes_explored: r.nodes_explored,
        proven_optimal: r.proven_optimal,
    })
}

/// Optimal assignment of an arbitrary bag: group by size, solve, deal out.
pub fn solve_general(
    bow: &BagOfWorkloads,
    config: &CloudConfig,
) -> Result<SolveResult<Assignment>, SolveError> {
    solve_general_with(bow, config, SolveOptions::default())
}

pub fn solve_general_with(
    bow: &BagOfWorkloads,
    config: &CloudConfig,
    options: SolveOptions,
) -> Result<SolveResult<Assignment>, SolveError> {
    if bow.is_empty() {
        return Ok(SolveResult {
            best: Assignment::default(),
            best_z: 0.0,
            nodes_explored: 0,
            proven_optimal: true,
        });
    }
    let classes = bow.size_classes()?;
    let r = solve_varying_length_with(&classes.counts, &classes.sizes, config, options)?;
    let assignment = r.best.materialize(bow, &classes, config)?;
    let best_z = cost::objective_z(&assignment, bow, config)?;
    Ok(SolveResult {
        best: assignment,
        best_z,
        nodes_explored: r.nodes_explored,
        proven_optimal: r.proven_optimal,
    })
}

/// Exhaustive search over every workload-to-instance mapping on the full
/// lease fleet. Exponential; guarded by `caps`.
pub fn brute_force_oracle(
    bow: &BagOfWorkloads,
    config: &CloudConfig,
    caps: OracleCaps,
) -> Result<SolveResult<Assignment>, SolveError> {
    let instances: Vec<InstanceId> = config.full_fleet().instances().to_vec();
    let d = bow.len();
    if d > caps.max_workloads || instances.len() > caps.max_instances {
        return Err(SolveError::TooLargeForOracle {
            workloads: d,
            instances: instances.len(),
            max_workloads: caps.max_workloads,
            max_instances: caps.max_instances,
        });
    }
    if d == 0 {
        return Ok(SolveResult {
            best: Assignment::default(),
            best_z: 0.0,
            nodes_explored: 1,
            proven_optimal: true,
        });
    }
    if instances.is_empty() {
        return Err(SolveError::Infeasible(format!(
            "{d} workloads but every lease limit is 0"
        )));
    }
    let rtypes: Vec<&ResourceType> = instances
        .iter()
        .map(|i| {
            config
                .resource_type(i.type_id)
                .expect("fleet built from config")
        })
        .collect();
    let exec: Vec<f64> = bow.workloads().iter().map(|w| w.exec_time()).collect();
    let atu = config.atu_length();
    let k = instances.len();

    let mut choice = vec![0usize; d];
    let mut loads = vec![0.0; k];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut visited = 0u64;
    loop {
        visited += 1;
        loads.iter_mut().for_each(|l| *l = 0.0);
        for (w, &i) in choice.iter().enumerate() {
            loads[i] += exec[w];
        }
        let z: f64 = (0..k)
            .map(|i| cost::instance_z(loads[i], rtypes[i], atu))
            .sum();
        if best.as_ref().is_none_or(|(bz, _)| z < *bz) {
            best = Some((z, choice.clone()));
        }
        // odometer
        let mut pos = 0;
        while pos < d {
            choice[pos] += 1;
            if choice[pos] < k {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
        if pos == d {
            break;
        }
    }
    let (_, best_choice) = best.expect("at least one mapping");
    let assignment: Assignment = bow
        .workloads()
        .iter()
        .zip(best_choice)
        .map(|(w, i)| (w.workload_id(), instances[i]))
        .collect::<Vec<(WorkloadId, InstanceId)>>()
        .into_iter()
        .collect();
    let best_z = cost::objective_z(&assignment, bow, config)?;
    Ok(SolveResult {
        best: assignment,
        best_z,
        nodes_explored: visited,
        proven_optimal: true,
    })
}
