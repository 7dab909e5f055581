//! Seeded synthetic scenarios.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, a portable
//! stream cipher generator, and values are drawn in a fixed order:
//!
//! 1. per public type, then the private type: speed, then cost per ATU;
//! 2. per instance: its type, uniform over all types;
//! 3. per workload: exec time, delivery date (uniform over
//!    `[0, delivery_window + delivery_per_workload * n_workloads]`), required amount (integer in
//!    `0..=9`), operation count, operation weights, then per operation the
//!    eligibility coin for every instance and, if none came up, one forced pick.
//!
//! Lease limits equal the number of instances drawn for each type.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    BagOfWorkloads, CloudConfig, Fleet, InstanceId, ModelError, Operation, ResourceType, TypeId,
    Workload, WorkloadId,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("infeasible spec: {0}")]
    InfeasibleSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenSpec {
    pub seed: u64,
    pub n_workloads: usize,
    pub n_instances: usize,
    pub n_public_types: usize,
    pub exec_time_range: [f64; 2],
    pub delivery_window: f64,
    /// Widens the delivery window by this much per workload, so larger bags
    /// arrive over a longer horizon at the same rate.
    pub delivery_per_workload: f64,
    /// `[0, 0]` produces plain bag-of-workloads entries without operations.
    pub ops_per_workload_range: [usize; 2],
    pub speed_range: [f64; 2],
    pub cost_range: [f64; 2],
    pub eligibility_density: f64,
    pub atu_length: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 0,
            n_workloads: 300,
            n_instances: 50,
            n_public_types: 3,
            exec_time_range: [1.0, 10.0],
            delivery_window: 0.0,
            delivery_per_workload: 0.1,
            ops_per_workload_range: [1, 4],
            speed_range: [1.0, 4.0],
            cost_range: [0.5, 4.0],
            eligibility_density: 0.3,
            atu_length: 1.0,
        }
    }
}

/// Workload counts swept by the experiment defaults.
pub const DEFAULT_WORKLOAD_SCALES: [usize; 3] = [100, 200, 300];
/// Instance counts swept by the experiment defaults.
pub const DEFAULT_INSTANCE_SCALES: [usize; 3] = [50, 60, 70];
pub const DEFAULT_SEED_COUNT: u64 = 50;

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::InfeasibleSpec(m));
        if self.n_workloads > 0 && self.n_instances == 0 {
            return bad(format!("{} workloads but no instances", self.n_workloads));
        }
        let [elo, ehi] = self.exec_time_range;
        if !(elo > 0.0 && elo <= ehi && ehi.is_finite()) {
            return bad(format!(
                "exec_time_range {elo}..{ehi} must satisfy 0 < lo <= hi"
            ));
        }
        let [slo, shi] = self.speed_range;
        if !(slo > 0.0 && slo <= shi && shi.is_finite()) {
            return bad(format!(
                "speed_range {slo}..{shi} must satisfy 0 < lo <= hi"
            ));
        }
        let [clo, chi] = self.cost_range;
        if !(clo >= 0.0 && clo <= chi && chi.is_finite()) {
            return bad(format!(
                "cost_range {clo}..{chi} must satisfy 0 <= lo <= hi"
            ));
        }
        let [olo, ohi] = self.ops_per_workload_range;
        if olo > ohi {
            return bad(format!(
                "ops_per_workload_range {olo}..{ohi} must satisfy lo <= hi"
            ));
        }
        if !(self.delivery_window >= 0.0 && self.delivery_window.is_finite()) {
            return bad(format!(
                "delivery_window must be >= 0 (got {})",
                self.delivery_window
            ));
        }
        if !(self.delivery_per_workload >= 0.0 && self.delivery_per_workload.is_finite()) {
            return bad(format!(
                "delivery_per_workload must be >= 0 (got {})",
                self.delivery_per_workload
            ));
        }
        if !(self.eligibility_density > 0.0 && self.eligibility_density <= 1.0) {
            return bad(format!(
                "eligibility_density must be in (0, 1] (got {})",
                self.eligibility_density
            ));
        }
        if !(self.atu_length > 0.0 && self.atu_length.is_finite()) {
            return bad(format!("atu_length must be > 0 (got {})", self.atu_length));
        }
        Ok(())
    }
}

/// A complete scheduling problem: cloud, machines and workloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: CloudConfig,
    pub fleet: Fleet,
    pub workloads: BagOfWorkloads,
}

impl Scenario {
    /// Re-checks cross references after deserialization: the fleet against
    /// the config, and every eligible instance against the fleet.
    pub fn check(self) -> Result<Self, ModelError> {
        let fleet = self.fleet.checked(&self.config)?;
        for w in self.workloads.workloads() {
            for op in w.operations() {
                if let Some(i) = op.eligible().iter().find(|i| !fleet.contains(**i)) {
                    return Err(ModelError::InvalidFleet(format!(
                        "{}/op{} lists {i}, which is not in the fleet",
                        w.workload_id(),
                        op.op_index()
                    )));
                }
            }
        }
        Ok(Scenario { fleet, ..self })
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

pub fn generate(spec: &GenSpec) -> Result<Scenario, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_types = spec.n_public_types + 1;
    let mut drawn = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        let speed = uniform(&mut rng, spec.speed_range);
        let cost = uniform(&mut rng, spec.cost_range);
        drawn.push((speed, cost));
    }
    let mut counts = vec![0u32; n_types];
    for _ in 0..spec.n_instances {
        counts[rng.gen_range(0..n_types)] += 1;
    }
    let mut public = Vec::with_capacity(spec.n_public_types);
    for (t, &(speed, cost)) in drawn.iter().enumerate().take(spec.n_public_types) {
        public.push(ResourceType::public(t as u32, speed, cost, counts[t])?);
    }
    let (pspeed, pcost) = drawn[spec.n_public_types];
    let private = ResourceType::private(
        spec.n_public_types as u32,
        pspeed,
        pcost,
        counts[spec.n_public_types],
    )?;
    let config = CloudConfig::new(public, private, spec.atu_length)?;
    let fleet = config.full_fleet();
    let instances: Vec<InstanceId> = fleet.instances().to_vec();

    let horizon = spec.delivery_window + spec.delivery_per_workload * spec.n_workloads as f64;
    let mut workloads = Vec::with_capacity(spec.n_workloads);
    for id in 0..spec.n_workloads {
        let exec_time = uniform(&mut rng, spec.exec_time_range);
        let delivery_date = uniform(&mut rng, [0.0, horizon]);
        let required_amount = rng.gen_range(0..=9u32) as f64;
        let [olo, ohi] = spec.ops_per_workload_range;
        let n_ops = rng.gen_range(olo..=ohi);
        let weights: Vec<f64> = (0..n_ops).map(|_| rng.gen_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        let mut ops = Vec::with_capacity(n_ops);
        let mut used = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let base = if k + 1 == n_ops {
                exec_time - used
            } else {
                exec_time * w / total
            };
            used += base;
            let mut eligible: Vec<InstanceId> = instances
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(spec.eligibility_density))
                .collect();
            if eligible.is_empty() {
                eligible.push(instances[rng.gen_range(0..instances.len())]);
            }
            ops.push(Operation::new(k, base, eligible)?);
        }
        workloads.push(Workload::new(
            WorkloadId(id as u32),
            exec_time,
            delivery_date,
            required_amount,
            ops,
        )?);
    }
    Ok(Scenario {
        config,
        fleet,
        workloads: BagOfWorkloads::new(workloads)?,
    })
}

/// Types are numbered `0..n_public_types`, then the private type.
pub fn private_type_id(spec: &GenSpec) -> TypeId {
    TypeId(spec.n_public_types as u32)
}
