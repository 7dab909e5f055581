//! Domain types shared by every other module.
//!
//! Everything here is immutable once built. Constructors validate their
//! invariants, so downstream code never has to re-check a speed or a lease
//! limit. The one exception is [`Schedule`]: it is plain data because the
//! validator in [`crate::sim`] has to be able to look at broken schedules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used when comparing derived real-valued quantities.
pub const REL_TOL: f64 = 1e-9;

pub(crate) fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid resource type: {0}")]
    InvalidResourceType(String),
    #[error("invalid cloud config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("invalid operation: {0}")]
    InvalidOperation(String),
    #[error("invalid workload {id}: {reason}")]
    InvalidWorkload { id: WorkloadId, reason: String },
    #[error("duplicate workload id {0}")]
    DuplicateWorkloadId(WorkloadId),
    #[error("bag of workloads is empty")]
    EmptyBag,
    #[error("invalid fleet: {0}")]
    InvalidFleet(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkloadId(pub u32);

/// A concrete leasable machine: slot `slot` of resource type `type_id`.
///
/// Slots are numbered from zero, so a fleet respects a type's lease limit
/// exactly when every slot of that type is below the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceId {
    pub type_id: TypeId,
    pub slot: u32,
}

impl InstanceId {
    pub fn new(type_id: TypeId, slot: u32) -> Self {
        InstanceId { type_id, slot }
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

impl fmt::Display for WorkloadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.type_id, self.slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Public,
    Private,
}

/// A class of machines: speed, price per accountable time unit and how many
/// of them may be leased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResourceType")]
pub struct ResourceType {
    type_id: TypeId,
    kind: ResourceKind,
    speed: f64,
    cost_per_atu: f64,
    lease_limit: u32,
}

#[derive(Deserialize)]
struct RawResourceType {
    type_id: TypeId,
    kind: ResourceKind,
    speed: f64,
    cost_per_atu: f64,
    lease_limit: u32,
}

impl TryFrom<RawResourceType> for ResourceType {
    type Error = ModelError;

    fn try_from(raw: RawResourceType) -> Result<Self, Self::Error> {
        ResourceType::new(
            raw.type_id,
            raw.kind,
            raw.speed,
            raw.cost_per_atu,
            raw.lease_limit,
        )
    }
}

fn resource_type_violations(type_id: TypeId, speed: f64, cost_per_atu: f64) -> Vec<String> {
    let mut out = Vec::new();
    if !(speed > 0.0 && speed.is_finite()) {
        out.push(format!("{type_id}: speed must be > 0 (got {speed})"));
    }
    if !(cost_per_atu >= 0.0 && cost_per_atu.is_finite()) {
        out.push(format!(
            "{type_id}: cost_per_atu must be >= 0 (got {cost_per_atu})"
        ));
    }
    out
}

impl ResourceType {
    pub fn new(
        type_id: TypeId,
        kind: ResourceKind,
        speed: f64,
        cost_per_atu: f64,
        lease_limit: u32,
    ) -> Result<Self, ModelError> {
        let violations = resource_type_violations(type_id, speed, cost_per_atu);
        if !violations.is_empty() {
            return Err(ModelError::InvalidResourceType(violations.join("; ")));
        }
        Ok(ResourceType {
            type_id,
            kind,
            speed,
            cost_per_atu,
            lease_limit,
        })
    }

    pub fn public(
        type_id: u32,
        speed: f64,
        cost_per_atu: f64,
        lease_limit: u32,
    ) -> Result<Self, ModelError> {
        Self::new(
            TypeId(type_id),
            ResourceKind::Public,
            speed,
            cost_per_atu,
            lease_limit,
        )
    }

    pub fn private(
        type_id: u32,
        speed: f64,
        cost_per_atu: f64,
        lease_limit: u32,
    ) -> Result<Self, ModelError> {
        Self::new(
            TypeId(type_id),
            ResourceKind::Private,
            speed,
            cost_per_atu,
            lease_limit,
        )
    }

    pub fn type_id(&self) -> TypeId {
        self.type_id
    }
    pub fn kind(&self) -> ResourceKind {
        self.kind
    }
    pub fn is_public(&self) -> bool {
        self.kind == ResourceKind::Public
    }
    pub fn speed(&self) -> f64 {
        self.speed
    }
    pub fn cost_per_atu(&self) -> f64 {
        self.cost_per_atu
    }
    pub fn lease_limit(&self) -> u32 {
        self.lease_limit
    }
}

/// Unchecked description of a cloud, as read from a file or built by hand.
///
/// Turn it into a [`CloudConfig`] with [`CloudConfig::try_from`]; use
/// [`validate_config`] to list every problem at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudConfigDraft {
    pub types: Vec<DraftType>,
    #[serde(default = "default_atu")]
    pub atu_length: f64,
}

/// A resource type that has not been checked yet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftType {
    pub type_id: TypeId,
    pub kind: ResourceKind,
    pub speed: f64,
    pub cost_per_atu: f64,
    pub lease_limit: u32,
}

fn default_atu() -> f64 {
    1.0
}

/// Lists every invariant the draft violates. An empty list means the draft
/// can be turned into a [`CloudConfig`].
pub fn validate_config(draft: &CloudConfigDraft) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for t in &draft.types {
        if !seen.insert(t.type_id) {
            out.push(format!("type ids must be distinct ({} repeats)", t.type_id));
        }
        out.extend(resource_type_violations(t.type_id, t.speed, t.cost_per_atu));
    }
    let private = draft
        .types
        .iter()
        .filter(|t| t.kind == ResourceKind::Private)
        .count();
    if private != 1 {
        out.push(format!(
            "exactly one private type required (found {private})"
        ));
    }
    if !(draft.atu_length > 0.0 && draft.atu_length.is_finite()) {
        out.push(format!("atu_length must be > 0 (got {})", draft.atu_length));
    }
    out
}

/// The public types Γ (in order) plus the single private type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CloudConfigDraft", into = "CloudConfigDraft")]
pub struct CloudConfig {
    public_types: Vec<ResourceType>,
    private_type: ResourceType,
    atu_length: f64,
}

impl TryFrom<CloudConfigDraft> for CloudConfig {
    type Error = ModelError;

    fn try_from(draft: CloudConfigDraft) -> Result<Self, Self::Error> {
        let violations = validate_config(&draft);
        if !violations.is_empty() {
            return Err(ModelError::InvalidConfig(violations));
        }
        let mut public_types = Vec::new();
        let mut private_type = None;
        for t in draft.types {
            let rt = ResourceType::new(t.type_id, t.kind, t.speed, t.cost_per_atu, t.lease_limit)?;
            match t.kind {
                ResourceKind::Public => public_types.push(rt),
                ResourceKind::Private => private_type = Some(rt),
            }
        }
        Ok(CloudConfig {
            public_types,
            private_type: private_type.expect("validated: one private type"),
            atu_length: draft.atu_length,
        })
    }
}

impl From<CloudConfig> for CloudConfigDraft {
    fn from(c: CloudConfig) -> Self {
        CloudConfigDraft {
            types: c
                .types()
                .map(|t| DraftType {
                    type_id: t.type_id,
                    kind: t.kind,
                    speed: t.speed,
                    cost_per_atu: t.cost_per_atu,
                    lease_limit: t.lease_limit,
                })
                .collect(),
            atu_length: c.atu_length,
        }
    }
}

impl CloudConfig {
    pub fn new(
        public_types: Vec<ResourceType>,
        private_type: ResourceType,
        atu_length: f64,
    ) -> Result<Self, ModelError> {
        let draft = CloudConfig {
            public_types,
            private_type,
            atu_length,
        };
        Self::try_from(CloudConfigDraft::from(draft))
    }

    pub fn public_types(&self) -> &[ResourceType] {
        &self.public_types
    }

    pub fn private_type(&self) -> &ResourceType {
        &self.private_type
    }

    pub fn atu_length(&self) -> f64 {
        self.atu_length
    }

    /// Public types in order, then the private type.
    pub fn types(&self) -> impl Iterator<Item = &ResourceType> {
        self.public_types
            .iter()
            .chain(std::iter::once(&self.private_type))
    }

    pub fn resource_type(&self, id: TypeId) -> Option<&ResourceType> {
        self.types().find(|t| t.type_id == id)
    }

    /// One instance for every lease slot of every type, in type order.
    pub fn full_fleet(&self) -> Fleet {
        let instances = self
            .types()
            .flat_map(|t| (0..t.lease_limit).map(move |s| InstanceId::new(t.type_id, s)))
            .collect();
        Fleet { instances }
    }

    pub fn total_lease_limit(&self) -> usize {
        self.types().map(|t| t.lease_limit as usize).sum()
    }
}

/// One step of a workload. Operations of a workload run in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOperation")]
pub struct Operation {
    op_index: usize,
    base_time: f64,
    eligible: BTreeSet<InstanceId>,
}

#[derive(Deserialize)]
struct RawOperation {
    op_index: usize,
    base_time: f64,
    eligible: BTreeSet<InstanceId>,
}

impl TryFrom<RawOperation> for Operation {
    type Error = ModelError;

    fn try_from(raw: RawOperation) -> Result<Self, Self::Error> {
        Operation::new(raw.op_index, raw.base_time, raw.eligible)
    }
}

impl Operation {
    pub fn new(
        op_index: usize,
        base_time: f64,
        eligible: impl IntoIterator<Item = InstanceId>,
    ) -> Result<Self, ModelError> {
        let eligible: BTreeSet<_> = eligible.into_iter().collect();
        if !(base_time > 0.0 && base_time.is_finite()) {
            return Err(ModelError::InvalidOperation(format!(
                "op {op_index}: base_time must be > 0 (got {base_time})"
            )));
        }
        if eligible.is_empty() {
            return Err(ModelError::InvalidOperation(format!(
                "op {op_index}: eligible resource set is empty"
            )));
        }
        Ok(Operation {
            op_index,
            base_time,
            eligible,
        })
    }

    pub fn op_index(&self) -> usize {
        self.op_index
    }
    pub fn base_time(&self) -> f64 {
        self.base_time
    }
    pub fn eligible(&self) -> &BTreeSet<InstanceId> {
        &self.eligible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWorkload")]
pub struct Workload {
    workload_id: WorkloadId,
    exec_time: f64,
    delivery_date: f64,
    required_amount: f64,
    operations: Vec<Operation>,
}

#[derive(Deserialize)]
struct RawWorkload {
    workload_id: WorkloadId,
    exec_time: f64,
    delivery_date: f64,
    #[serde(default)]
    required_amount: f64,
    #[serde(default)]
    operations: Vec<Operation>,
}

impl TryFrom<RawWorkload> for Workload {
    type Error = ModelError;

    fn try_from(raw: RawWorkload) -> Result<Self, Self::Error> {
        Workload::new(
            raw.workload_id,
            raw.exec_time,
            raw.delivery_date,
            raw.required_amount,
            raw.operations,
        )
    }
}

impl Workload {
    pub fn new(
        workload_id: WorkloadId,
        exec_time: f64,
        delivery_date: f64,
        required_amount: f64,
        operations: Vec<Operation>,
    ) -> Result<Self, ModelError> {
        let bad = |reason: String| ModelError::InvalidWorkload {
            id: workload_id,
            reason,
        };
        if !(exec_time > 0.0 && exec_time.is_finite()) {
            return Err(bad(format!("exec_time must be > 0 (got {exec_time})")));
        }
        if !(delivery_date >= 0.0 && delivery_date.is_finite()) {
            return Err(bad(format!(
                "delivery_date must be >= 0 (got {delivery_date})"
            )));
        }
        if !(required_amount >= 0.0 && required_amount.is_finite()) {
            return Err(bad(format!(
                "required_amount must be >= 0 (got {required_amount})"
            )));
        }
        for (i, op) in operations.iter().enumerate() {
            if op.op_index != i {
                return Err(bad(format!(
                    "operation at position {i} has op_index {}",
                    op.op_index
                )));
            }
        }
        if !operations.is_empty() {
            let total: f64 = operations.iter().map(|o| o.base_time).sum();
            if !approx_eq(total, exec_time) {
                return Err(bad(format!(
                    "operation base times sum to {total}, exec_time is {exec_time}"
                )));
            }
        }
        Ok(Workload {
            workload_id,
            exec_time,
            delivery_date,
            required_amount,
            operations,
        })
    }

    /// A bag-of-workloads entry: no operation list.
    pub fn simple(id: u32, exec_time: f64) -> Result<Self, ModelError> {
        Self::new(WorkloadId(id), exec_time, 0.0, 0.0, Vec::new())
    }

    pub fn workload_id(&self) -> WorkloadId {
        self.workload_id
    }
    pub fn exec_time(&self) -> f64 {
        self.exec_time
    }
    pub fn delivery_date(&self) -> f64 {
        self.delivery_date
    }
    pub fn required_amount(&self) -> f64 {
        self.required_amount
    }
    pub fn operations(&self) -> &[Operation] {
        &self.operations
    }

    /// The same workload without its operation list.
    pub fn to_bow(&self) -> Workload {
        Workload {
            operations: Vec::new(),
            ..self.clone()
        }
    }

    /// Operations as seen by a job-shop scheduler. A workload without an
    /// operation list is a single operation eligible on the whole fleet.
    pub fn job_operations(&self, fleet: &Fleet) -> Vec<Operation> {
        if self.operations.is_empty() {
            vec![Operation {
                op_index: 0,
                base_time: self.exec_time,
                eligible: fleet.instances().iter().copied().collect(),
            }]
        } else {
            self.operations.clone()
        }
    }

    /// Number of operations in the job-shop view.
    pub fn job_operation_count(&self) -> usize {
        self.operations.len().max(1)
    }
}

/// Distinct execution-time classes of a bag and how many workloads fall in each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeClasses {
    /// Strictly increasing.
    pub sizes: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SizeClasses {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Workload>", into = "Vec<Workload>")]
pub struct BagOfWorkloads {
    workloads: Vec<Workload>,
}

impl TryFrom<Vec<Workload>> for BagOfWorkloads {
    type Error = ModelError;

    fn try_from(workloads: Vec<Workload>) -> Result<Self, Self::Error> {
        BagOfWorkloads::new(workloads)
    }
}

impl From<BagOfWorkloads> for Vec<Workload> {
    fn from(b: BagOfWorkloads) -> Self {
        b.workloads
    }
}

impl BagOfWorkloads {
    pub fn new(workloads: Vec<Workload>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for w in &workloads {
            if !seen.insert(w.workload_id) {
                return Err(ModelError::DuplicateWorkloadId(w.workload_id));
            }
        }
        Ok(BagOfWorkloads { workloads })
    }

    /// Convenience for tests and the solvers: ids 0.. in order.
    pub fn from_exec_times(times: &[f64]) -> Result<Self, ModelError> {
        let ws = times
            .iter()
            .enumerate()
            .map(|(i, &e)| Workload::simple(i as u32, e))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(ws)
    }

    pub fn workloads(&self) -> &[Workload] {
        &self.workloads
    }

    pub fn len(&self) -> usize {
        self.workloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workloads.is_empty()
    }

    pub fn get(&self, id: WorkloadId) -> Option<&Workload> {
        self.workloads.iter().find(|w| w.workload_id == id)
    }

    /// Groups workloads by exact execution time.
    pub fn size_classes(&self) -> Result<SizeClasses, ModelError> {
        if self.workloads.is_empty() {
            return Err(ModelError::EmptyBag);
        }
        let mut times: Vec<f64> = self.workloads.iter().map(|w| w.exec_time).collect();
        times.sort_by(f64::total_cmp);
        let mut sizes: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for t in times {
            match sizes.last() {
                Some(&last) if last == t => *counts.last_mut().unwrap() += 1,
                _ => {
                    sizes.push(t);
                    counts.push(1);
                }
            }
        }
        Ok(SizeClasses { sizes, counts })
    }

    /// Index into `classes.sizes` for every workload, in bag order.
    pub(crate) fn class_of_each(&self, classes: &SizeClasses) -> Vec<usize> {
        self.workloads
            .iter()
            .map(|w| {
                classes
                    .sizes
                    .iter()
                    .position(|&s| s == w.exec_time)
                    .expect("size classes derived from this bag")
            })
            .collect()
    }
}

/// The set of machines a scheduler may use. Every instance refers to a known
/// type and stays within that type's lease limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fleet {
    instances: Vec<InstanceId>,
}

impl Fleet {
    pub fn new(mut instances: Vec<InstanceId>, config: &CloudConfig) -> Result<Self, ModelError> {
        instances.sort();
        for pair in instances.windows(2) {
            if pair[0] == pair[1] {
                return Err(ModelError::InvalidFleet(format!(
                    "instance {} listed twice",
                    pair[0]
                )));
            }
        }
        for inst in &instances {
            let t = config.resource_type(inst.type_id).ok_or_else(|| {
                ModelError::InvalidFleet(format!("instance {inst} refers to unknown type"))
            })?;
            if inst.slot >= t.lease_limit {
                return Err(ModelError::InvalidFleet(format!(
                    "instance {inst} exceeds lease limit {} of {}",
                    t.lease_limit, t.type_id
                )));
            }
        }
        Ok(Fleet { instances })
    }

    /// Sorted by id.
    pub fn instances(&self) -> &[InstanceId] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn contains(&self, id: InstanceId) -> bool {
        self.instances.binary_search(&id).is_ok()
    }

    /// Re-checks a deserialized fleet against a config.
    pub fn checked(self, config: &CloudConfig) -> Result<Self, ModelError> {
        Fleet::new(self.instances, config)
    }
}

/// Workload to instance mapping for the bag-of-workloads problem.
///
/// Totality and lease feasibility are checked against a bag and a config by
/// the functions that consume it (see [`crate::cost::objective_z`]).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    mapping: BTreeMap<WorkloadId, InstanceId>,
}

impl Assignment {
    pub fn new(mapping: BTreeMap<WorkloadId, InstanceId>) -> Self {
        Assignment { mapping }
    }

    pub fn mapping(&self) -> &BTreeMap<WorkloadId, InstanceId> {
        &self.mapping
    }

    pub fn instance_of(&self, w: WorkloadId) -> Option<InstanceId> {
        self.mapping.get(&w).copied()
    }

    /// The workloads placed on each instance (R_m).
    pub fn preimages(&self) -> BTreeMap<InstanceId, Vec<WorkloadId>> {
        let mut out: BTreeMap<InstanceId, Vec<WorkloadId>> = BTreeMap::new();
        for (&w, &i) in &self.mapping {
            out.entry(i).or_default().push(w);
        }
        out
    }
}

impl FromIterator<(WorkloadId, InstanceId)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (WorkloadId, InstanceId)>>(iter: T) -> Self {
        Assignment {
            mapping: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub workload_id: WorkloadId,
    pub op_index: usize,
    pub instance_id: InstanceId,
    pub start: f64,
    pub end: f64,
}

/// Timed operation intervals. Entries are kept in the order the scheduler
/// placed them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<ScheduleEntry>,
}

impl Schedule {
    pub fn makespan(&self) -> f64 {
        self.entries.iter().map(|e| e.end).fold(0.0, f64::max)
    }

    /// Back-to-back placement of an assignment: every instance runs its
    /// workloads in id order from time zero without gaps.
    pub fn from_assignment(
        assignment: &Assignment,
        bow: &BagOfWorkloads,
        config: &CloudConfig,
    ) -> Option<Schedule> {
        let mut entries = Vec::new();
        for (inst, ws) in assignment.preimages() {
            let speed = config.resource_type(inst.type_id)?.speed();
            let mut t = 0.0;
            for w in ws {
                let e = bow.get(w)?.exec_time() / speed;
                entries.push(ScheduleEntry {
                    workload_id: w,
                    op_index: 0,
                    instance_id: inst,
                    start: t,
                    end: t + e,
                });
                t += e;
            }
        }
        Some(Schedule { entries })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub instance_id: InstanceId,
    pub busy_time: f64,
    /// Wall-clock lease from first start to last end.
    pub span: f64,
    /// Whole ATUs for public instances; fractional for the private type.
    pub atus_billed: f64,
    pub cost: f64,
    pub z_contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMetrics {
    pub workload_id: WorkloadId,
    pub first_start: f64,
    pub completion: f64,
    pub flow_time: f64,
    pub lateness: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_instance: Vec<InstanceMetrics>,
    pub per_workload: Vec<WorkloadMetrics>,
    pub makespan: f64,
    pub total_cost: f64,
    pub objective_z: f64,
    pub mean_exec_time: f64,
    pub cost_per_workload: f64,
}
