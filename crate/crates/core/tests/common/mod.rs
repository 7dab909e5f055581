//! Instance builders and property checks shared by the property suite and
//! the acceptance report.
#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bowlab_core::cost::{self, EqualLengthPlan, VaryingLengthPlan};
use bowlab_core::edbrs::{self, SortKey, SortOrder};
use bowlab_core::gen::{self, GenSpec, Scenario};
use bowlab_core::model::SizeClasses;
use bowlab_core::sim;
use bowlab_core::{
    Assignment, BagOfWorkloads, CloudConfig, InstanceId, ResourceType, Schedule, TypeId, Workload,
    WorkloadId,
};

/// Small instance whose every intermediate value is a dyadic rational, so
/// float sums do not depend on evaluation order.
#[derive(Debug, Clone)]
pub struct DyadicCase {
    pub bow: BagOfWorkloads,
    pub config: CloudConfig,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T]) -> T {
    *xs.choose(rng).unwrap()
}

/// One to three public types plus a private one, at most `max_instances`
/// lease slots in total (at least one), and `1..=max_workloads` workloads.
pub fn dyadic_cloud(rng: &mut ChaCha8Rng, max_instances: u32) -> CloudConfig {
    loop {
        let n_public = rng.gen_range(1..=3u32);
        let mut public = Vec::new();
        for t in 0..n_public {
            let limit = rng.gen_range(0..=3);
            public.push(
                ResourceType::public(
                    t,
                    pick(rng, &[1.0, 2.0, 4.0]),
                    pick(rng, &[1.0, 2.0, 3.0, 4.0]),
                    limit,
                )
                .unwrap(),
            );
        }
        let private = ResourceType::private(
            n_public,
            pick(rng, &[1.0, 2.0, 4.0]),
            pick(rng, &[1.0, 2.0, 3.0]),
            rng.gen_range(0..=2),
        )
        .unwrap();
        let atu = pick(rng, &[0.5, 1.0, 2.0]);
        let config = CloudConfig::new(public, private, atu).unwrap();
        let total = config.total_lease_limit();
        if total >= 1 && total <= max_instances as usize {
            return config;
        }
    }
}

pub fn dyadic_case(seed: u64, max_workloads: usize, max_instances: u32) -> DyadicCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = dyadic_cloud(&mut rng, max_instances);
    let d = rng.gen_range(1..=max_workloads);
    let times: Vec<f64> = (0..d).map(|_| rng.gen_range(1..=6) as f64).collect();
    DyadicCase {
        bow: BagOfWorkloads::from_exec_times(&times).unwrap(),
        config,
    }
}

pub fn check_oracle_equivalence(case: &DyadicCase) -> Result<(f64, f64), String> {
    let solved =
        bowlab_core::optimal::solve_general(&case.bow, &case.config).map_err(|e| e.to_string())?;
    let oracle =
        bowlab_core::optimal::brute_force_oracle(&case.bow, &case.config, Default::default())
            .map_err(|e| e.to_string())?;
    if !solved.proven_optimal {
        return Err("solver hit its node limit".into());
    }
    // the returned assignment must be feasible and score what the solver claims
    let z = cost::objective_z(&solved.best, &case.bow, &case.config).map_err(|e| e.to_string())?;
    if z != solved.best_z {
        return Err(format!(
            "reported z {} but assignment scores {z}",
            solved.best_z
        ));
    }
    if solved.best_z != oracle.best_z {
        return Err(format!(
            "solver {} vs oracle {}",
            solved.best_z, oracle.best_z
        ));
    }
    Ok((solved.best_z, oracle.best_z))
}

/// Non-dyadic cloud for tolerance-based agreement checks.
fn real_cloud(rng: &mut ChaCha8Rng) -> CloudConfig {
    let mut public = Vec::new();
    for t in 0..2 {
        public.push(
            ResourceType::public(
                t,
                rng.gen_range(0.5..4.0),
                rng.gen_range(0.5..4.0),
                rng.gen_range(1..=4),
            )
            .unwrap(),
        );
    }
    let private = ResourceType::private(
        2,
        rng.gen_range(0.5..4.0),
        rng.gen_range(0.5..4.0),
        rng.gen_range(1..=3),
    )
    .unwrap();
    CloudConfig::new(public, private, pick(rng, &[0.5, 1.0, 1.5, 3.0])).unwrap()
}

pub struct EqualCase {
    pub config: CloudConfig,
    pub plan: EqualLengthPlan,
    pub d: usize,
    pub exec_time: f64,
}

pub fn random_balanced_equal(seed: u64) -> EqualCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let config = real_cloud(&mut rng);
        let entries: Vec<(TypeId, u32, u32)> = config
            .types()
            .map(|t| {
                (
                    t.type_id(),
                    rng.gen_range(0..=t.lease_limit()),
                    rng.gen_range(0..=4),
                )
            })
            .collect();
        let d: u32 = entries.iter().map(|&(_, n, q)| n * q).sum();
        if d == 0 {
            continue;
        }
        let exec_time = rng.gen_range(0.25..5.0);
        return EqualCase {
            config,
            plan: EqualLengthPlan::balanced(entries),
            d: d as usize,
            exec_time,
        };
    }
}

pub fn check_equal_agreement(c: &EqualCase) -> Result<(), String> {
    let closed =
        cost::equal_length_z(&c.plan, c.d, c.exec_time, &c.config).map_err(|e| e.to_string())?;
    let bow = BagOfWorkloads::from_exec_times(&vec![c.exec_time; c.d]).unwrap();
    let classes = bow.size_classes().unwrap();
    let assignment = c
        .plan
        .to_varying()
        .materialize(&bow, &classes, &c.config)
        .map_err(|e| e.to_string())?;
    let direct = cost::objective_z(&assignment, &bow, &c.config).map_err(|e| e.to_string())?;
    within_rel(closed, direct, 1e-9)
}

pub struct VaryingCase {
    pub config: CloudConfig,
    pub plan: VaryingLengthPlan,
    pub bow: BagOfWorkloads,
    pub classes: SizeClasses,
}

pub fn random_balanced_varying(seed: u64) -> VaryingCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let config = real_cloud(&mut rng);
        let n_classes = rng.gen_range(1..=3);
        let mut sizes: Vec<f64> = (0..n_classes).map(|_| rng.gen_range(0.25..5.0)).collect();
        sizes.sort_by(f64::total_cmp);
        sizes.dedup();
        let entries: Vec<(TypeId, u32, Vec<u32>)> = config
            .types()
            .map(|t| {
                let q = (0..sizes.len()).map(|_| rng.gen_range(0..=3)).collect();
                (t.type_id(), rng.gen_range(0..=t.lease_limit()), q)
            })
            .collect();
        let counts: Vec<usize> = (0..sizes.len())
            .map(|a| entries.iter().map(|(_, n, q)| (*n * q[a]) as usize).sum())
            .collect();
        if counts.contains(&0) {
            continue;
        }
        let mut times = Vec::new();
        for (&s, &c) in sizes.iter().zip(&counts) {
            times.extend(std::iter::repeat_n(s, c));
        }
        times.shuffle(&mut rng);
        let bow = BagOfWorkloads::from_exec_times(&times).unwrap();
        let classes = SizeClasses { sizes, counts };
        return VaryingCase {
            config,
            plan: VaryingLengthPlan::balanced(entries),
            bow,
            classes,
        };
    }
}

pub fn check_varying_agreement(c: &VaryingCase) -> Result<(), String> {
    if c.bow.size_classes().unwrap() != c.classes {
        return Err("size classes disagree with the bag".into());
    }
    let closed =
        cost::varying_length_z(&c.plan, &c.classes, &c.config).map_err(|e| e.to_string())?;
    let assignment = c
        .plan
        .materialize(&c.bow, &c.classes, &c.config)
        .map_err(|e| e.to_string())?;
    let direct = cost::objective_z(&assignment, &c.bow, &c.config).map_err(|e| e.to_string())?;
    within_rel(closed, direct, 1e-9)
}

pub fn within_rel(a: f64, b: f64, tol: f64) -> Result<(), String> {
    if (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0) {
        Ok(())
    } else {
        Err(format!("{a} vs {b}"))
    }
}

// ---- property checks over proptest inputs ----

pub fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

pub fn public_type_strategy() -> impl Strategy<Value = (ResourceType, f64)> {
    (
        0.25f64..8.0,
        0.0f64..10.0,
        prop_oneof![Just(0.5), Just(1.0), Just(2.0), 0.1f64..5.0],
    )
        .prop_map(|(speed, cost, atu)| (ResourceType::public(0, speed, cost, 1).unwrap(), atu))
}

/// `resource_cost` never decreases as the load grows.
pub fn prop_atu_monotone(
    rtype: &ResourceType,
    atu: f64,
    a: f64,
    b: f64,
) -> Result<(), TestCaseError> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let (c_lo, c_hi) = (
        cost::resource_cost(lo, rtype, atu),
        cost::resource_cost(hi, rtype, atu),
    );
    if c_lo > c_hi {
        return Err(fail(format!("cost({lo}) = {c_lo} > cost({hi}) = {c_hi}")));
    }
    Ok(())
}

/// On a public type the cost is flat on `(k-1, k] * SP * atu` and rises by
/// exactly `CO` just past `k * SP * atu`.
pub fn prop_ceiling_step(
    rtype: &ResourceType,
    atu: f64,
    k: u32,
    frac: f64,
) -> Result<(), TestCaseError> {
    let width = rtype.speed() * atu;
    let k = k as f64;
    let step = |load: f64| cost::resource_cost(load, rtype, atu);
    let top = step(k * width);
    let expected = rtype.cost_per_atu() * k;
    if (top - expected).abs() > 1e-9 * expected.max(1.0) {
        return Err(fail(format!(
            "cost at {k} steps is {top}, expected {expected}"
        )));
    }
    // an interior point of the k-th interval, kept away from both ends
    let inside = ((k - 1.0) + 0.01 + 0.98 * frac) * width;
    if step(inside) != top {
        return Err(fail(format!(
            "cost at {inside} is {}, expected {top}",
            step(inside)
        )));
    }
    let past = (k + 0.01 + 0.98 * frac) * width;
    let jump = step(past) - top;
    if (jump - rtype.cost_per_atu()).abs() > 1e-9 * rtype.cost_per_atu().max(1.0) {
        return Err(fail(format!(
            "jump after step {k} is {jump}, expected {}",
            rtype.cost_per_atu()
        )));
    }
    Ok(())
}

/// Sort keys drawn from tiny domains so ties on every field are common.
pub fn sort_key_strategy() -> impl Strategy<Value = SortKey> {
    (0u8..3, 0u8..3, 0u8..3, 1usize..3, 0u32..4).prop_map(|(dd, amt, t, ops, id)| SortKey {
        delivery_date: dd as f64,
        required_amount: amt as f64,
        total_processing_time: t as f64 * 0.5,
        operation_count: ops,
        workload_id: WorkloadId(id),
    })
}

pub fn sort_order_strategy() -> impl Strategy<Value = SortOrder> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(a, t, o)| SortOrder {
        amount_descending: a,
        time_ascending: t,
        ops_ascending: o,
    })
}

/// Reflexivity, antisymmetry, transitivity and "equal means identical".
pub fn prop_total_order(
    a: &SortKey,
    b: &SortKey,
    c: &SortKey,
    order: SortOrder,
) -> Result<(), TestCaseError> {
    use std::cmp::Ordering::*;
    let cmp = |x: &SortKey, y: &SortKey| x.compare(y, order);
    if cmp(a, a) != Equal {
        return Err(fail("a key does not equal itself"));
    }
    if cmp(a, b) != cmp(b, a).reverse() {
        return Err(fail(format!("antisymmetry fails for {a:?} and {b:?}")));
    }
    if (cmp(a, b) == Equal) != (a == b) {
        return Err(fail(format!("{a:?} and {b:?} compare equal but differ")));
    }
    for (x, y, z) in [
        (a, b, c),
        (a, c, b),
        (b, a, c),
        (b, c, a),
        (c, a, b),
        (c, b, a),
    ] {
        if cmp(x, y) != Greater && cmp(y, z) != Greater && cmp(x, z) == Greater {
            return Err(fail(format!(
                "transitivity fails for {x:?} <= {y:?} <= {z:?}"
            )));
        }
    }
    Ok(())
}

/// A generated scenario plus a seed for shuffling its pieces.
pub fn scenario_strategy(
    max_workloads: usize,
    max_instances: usize,
) -> impl Strategy<Value = (Scenario, u64)> {
    (
        any::<u64>(),
        1..=max_workloads,
        1..=max_instances,
        0.1f64..=1.0,
        0usize..3,
        any::<u64>(),
    )
        .prop_map(
            |(seed, n_workloads, n_instances, density, max_ops_extra, shuffle)| {
                let spec = GenSpec {
                    seed,
                    n_workloads,
                    n_instances,
                    eligibility_density: density,
                    ops_per_workload_range: [1, 1 + max_ops_extra],
                    // few distinct delivery dates and amounts, so the later keys matter
                    delivery_per_workload: 0.5,
                    ..GenSpec::default()
                };
                (gen::generate(&spec).unwrap(), shuffle)
            },
        )
}

pub fn shuffled<T: Clone>(xs: &[T], seed: u64) -> Vec<T> {
    let mut v = xs.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Workloads with coarse keys so ties on delivery date are frequent.
pub fn tied_workloads(n: usize, seed: u64) -> Vec<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let e = rng.gen_range(1..=3) as f64;
            Workload::new(
                WorkloadId(i as u32),
                e,
                rng.gen_range(0..=2) as f64,
                rng.gen_range(0..=1) as f64,
                vec![],
            )
            .unwrap()
        })
        .collect()
}

pub fn prop_sort_permutation_invariant(
    workloads: &[Workload],
    seed: u64,
) -> Result<(), TestCaseError> {
    let base = edbrs::sort_workloads(workloads).map_err(|e| fail(e.to_string()))?;
    let other =
        edbrs::sort_workloads(&shuffled(workloads, seed)).map_err(|e| fail(e.to_string()))?;
    if base != other {
        return Err(fail("sorted order depends on input order"));
    }
    Ok(())
}

pub fn prop_metrics_permutation_invariant(
    scenario: &Scenario,
    seed: u64,
) -> Result<(), TestCaseError> {
    let (schedule, _) =
        edbrs::schedule(&scenario.workloads, &scenario.fleet, &scenario.config, None)
            .map_err(|e| fail(e.to_string()))?;
    let shuffled_schedule = Schedule {
        entries: shuffled(&schedule.entries, seed),
    };
    let a = sim::compute_metrics(
        &schedule,
        &scenario.workloads,
        &scenario.fleet,
        &scenario.config,
    )
    .map_err(|e| fail(e.to_string()))?;
    let b = sim::compute_metrics(
        &shuffled_schedule,
        &scenario.workloads,
        &scenario.fleet,
        &scenario.config,
    )
    .map_err(|e| fail(e.to_string()))?;
    if a != b {
        return Err(fail("metrics depend on entry order"));
    }
    Ok(())
}

/// Random total assignment of a bag onto the full lease fleet.
pub fn random_assignment(bow: &BagOfWorkloads, config: &CloudConfig, seed: u64) -> Assignment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fleet: Vec<InstanceId> = config.full_fleet().instances().to_vec();
    let mapping: BTreeMap<WorkloadId, InstanceId> = bow
        .workloads()
        .iter()
        .map(|w| (w.workload_id(), pick(&mut rng, &fleet)))
        .collect();
    Assignment::new(mapping)
}
