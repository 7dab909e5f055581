mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use bowlab_core::baselines;
use bowlab_core::cost;
use bowlab_core::edbrs::{self, Batch};
use bowlab_core::gen::{self, GenSpec, Scenario};
use bowlab_core::optimal;
use bowlab_core::sim;
use bowlab_core::{BagOfWorkloads, CloudConfig, InstanceId, ResourceType, Schedule, WorkloadId};

use common::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn atu_billing_is_monotone_in_load((rtype, atu) in public_type_strategy(), a in 0.0f64..100.0, b in 0.0f64..100.0) {
        prop_atu_monotone(&rtype, atu, a, b)?;
        let private = ResourceType::private(1, rtype.speed(), rtype.cost_per_atu(), 1).unwrap();
        prop_atu_monotone(&private, atu, a, b)?;
    }

    #[test]
    fn public_cost_is_a_staircase((rtype, atu) in public_type_strategy(), k in 1u32..1000, frac in 0.0f64..1.0) {
        prop_ceiling_step(&rtype, atu, k, frac)?;
    }

    #[test]
    fn comparator_is_a_total_order(
        a in sort_key_strategy(), b in sort_key_strategy(), c in sort_key_strategy(), order in sort_order_strategy()
    ) {
        prop_total_order(&a, &b, &c, order)?;
    }

    #[test]
    fn sorting_ignores_input_order(n in 0usize..30, seed in any::<u64>(), shuffle in any::<u64>()) {
        prop_sort_permutation_invariant(&tied_workloads(n, seed), shuffle)?;
    }

    #[test]
    fn metrics_ignore_entry_order((scenario, shuffle) in scenario_strategy(20, 6)) {
        prop_metrics_permutation_invariant(&scenario, shuffle)?;
    }
}

proptest! {
    #![proptest_config(cases(256))]

    #[test]
    fn solver_matches_oracle(seed in any::<u64>()) {
        let case = dyadic_case(seed, 6, 5);
        check_oracle_equivalence(&case).map_err(fail)?;
    }

    #[test]
    fn balanced_plans_agree_with_direct_evaluation(seed in any::<u64>()) {
        check_equal_agreement(&random_balanced_equal(seed)).map_err(fail)?;
        check_varying_agreement(&random_balanced_varying(seed)).map_err(fail)?;
    }

    #[test]
    fn scaling_costs_and_speeds(seed in any::<u64>(), a_seed in any::<u64>()) {
        let case = dyadic_case(seed, 8, 6);
        let assignment = random_assignment(&case.bow, &case.config, a_seed);
        let z = cost::objective_z(&assignment, &case.bow, &case.config).unwrap();
        let scale = |cost_factor: f64, speed_factor: f64| {
            let map = |t: &ResourceType| {
                ResourceType::new(t.type_id(), t.kind(), t.speed() * speed_factor, t.cost_per_atu() * cost_factor, t.lease_limit()).unwrap()
            };
            CloudConfig::new(
                case.config.public_types().iter().map(map).collect(),
                map(case.config.private_type()),
                case.config.atu_length(),
            ).unwrap()
        };
        let doubled_cost = cost::objective_z(&assignment, &case.bow, &scale(2.0, 1.0)).unwrap();
        prop_assert_eq!(doubled_cost, 2.0 * z);
        let fast = scale(1.0, 2.0);
        for t in case.config.types() {
            let f = fast.resource_type(t.type_id()).unwrap();
            prop_assert_eq!(cost::resource_time(7.0, f), cost::resource_time(7.0, t) / 2.0);
        }
    }

    #[test]
    fn size_classes_ignore_bag_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let case = dyadic_case(seed, 8, 6);
        let reordered = BagOfWorkloads::new(shuffled(case.bow.workloads(), shuffle)).unwrap();
        prop_assert_eq!(case.bow.size_classes().unwrap(), reordered.size_classes().unwrap());
    }

    #[test]
    fn extra_type_never_hurts(seed in any::<u64>(), speed in 0usize..3, price in 1u32..5, limit in 1u32..3) {
        let case = dyadic_case(seed, 6, 4);
        let before = optimal::solve_general(&case.bow, &case.config).unwrap();
        let mut public = case.config.public_types().to_vec();
        let new_id = case.config.types().map(|t| t.type_id().0).max().unwrap() + 1;
        public.push(ResourceType::public(new_id, [1.0, 2.0, 4.0][speed], price as f64, limit).unwrap());
        let bigger = CloudConfig::new(public, case.config.private_type().clone(), case.config.atu_length()).unwrap();
        let after = optimal::solve_general(&case.bow, &bigger).unwrap();
        prop_assert!(after.best_z <= before.best_z, "{} > {}", after.best_z, before.best_z);
    }

    #[test]
    fn solver_is_deterministic(seed in any::<u64>()) {
        let case = dyadic_case(seed, 8, 6);
        let a = optimal::solve_general(&case.bow, &case.config).unwrap();
        let b = optimal::solve_general(&case.bow, &case.config).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bow_metrics_match_objective(seed in any::<u64>(), a_seed in any::<u64>()) {
        let case = dyadic_case(seed, 8, 6);
        let assignment = random_assignment(&case.bow, &case.config, a_seed);
        let schedule = Schedule::from_assignment(&assignment, &case.bow, &case.config).unwrap();
        let fleet = case.config.full_fleet();
        prop_assert!(sim::validate_schedule(&schedule, &case.bow, &fleet, &case.config).is_empty());
        let metrics = sim::compute_metrics(&schedule, &case.bow, &fleet, &case.config).unwrap();
        prop_assert_eq!(metrics.objective_z, cost::objective_z(&assignment, &case.bow, &case.config).unwrap());
    }

    #[test]
    fn min_min_on_one_machine_is_spt(times in prop::collection::vec(1u32..20, 0..25)) {
        let config = CloudConfig::new(
            vec![ResourceType::public(0, 1.0, 1.0, 1).unwrap()],
            ResourceType::private(1, 1.0, 1.0, 0).unwrap(),
            1.0,
        ).unwrap();
        let fleet = config.full_fleet();
        let times: Vec<f64> = times.into_iter().map(f64::from).collect();
        let bow = BagOfWorkloads::from_exec_times(&times).unwrap();
        let s = baselines::min_min_schedule(&bow, &fleet, &config).unwrap();
        let got: Vec<WorkloadId> = s.entries.iter().map(|e| e.workload_id).collect();
        let mut spt: Vec<(f64, WorkloadId)> = bow.workloads().iter().map(|w| (w.exec_time(), w.workload_id())).collect();
        spt.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        prop_assert_eq!(got, spt.into_iter().map(|(_, id)| id).collect::<Vec<_>>());
    }

    #[test]
    fn every_scheduler_emits_valid_schedules((scenario, _) in scenario_strategy(25, 8)) {
        let Scenario { config, fleet, workloads } = &scenario;
        let schedules = [
            edbrs::schedule(workloads, fleet, config, None).unwrap().0,
            baselines::fcfs_schedule(workloads, fleet, config).unwrap(),
            baselines::min_min_schedule(workloads, fleet, config).unwrap(),
            baselines::max_min_schedule(workloads, fleet, config).unwrap(),
        ];
        for s in &schedules {
            let v = sim::validate_schedule(s, workloads, fleet, config);
            prop_assert!(v.is_empty(), "{:?}", v);
            let m = sim::compute_metrics(s, workloads, fleet, config).unwrap();
            for w in &m.per_workload {
                prop_assert!(w.completion <= m.makespan);
            }
            for i in &m.per_instance {
                prop_assert!(i.busy_time <= m.makespan + 1e-9 * m.makespan.max(1.0));
            }
        }
    }

    #[test]
    fn edbrs_is_non_delay((scenario, _) in scenario_strategy(25, 8)) {
        let Scenario { config, fleet, workloads } = &scenario;
        let sorted = edbrs::sort_workloads(workloads.workloads()).unwrap();
        let mut batches = edbrs::partition_batches(&sorted, config.atu_length()).unwrap();
        let schedule = edbrs::dispatch(&mut batches, fleet, config).unwrap();
        let release: BTreeMap<WorkloadId, f64> = batches
            .iter()
            .flat_map(|b| b.workloads.iter().map(move |w| (w.workload_id(), b.release_time)))
            .collect();
        let mut avail: BTreeMap<InstanceId, f64> = BTreeMap::new();
        let mut prev_end: BTreeMap<WorkloadId, f64> = BTreeMap::new();
        for e in &schedule.entries {
            let w = workloads.get(e.workload_id).unwrap();
            let op = &w.job_operations(fleet)[e.op_index];
            let ready = prev_end.get(&e.workload_id).copied().unwrap_or(0.0).max(release[&e.workload_id]);
            let best = op
                .eligible()
                .iter()
                .filter(|i| fleet.contains(**i))
                .map(|i| avail.get(i).copied().unwrap_or(0.0).max(ready))
                .fold(f64::INFINITY, f64::min);
            prop_assert_eq!(e.start, best, "entry {:?}", e);
            avail.insert(e.instance_id, e.end);
            prev_end.insert(e.workload_id, e.end);
        }
    }

    #[test]
    fn edbrs_ignores_input_order((scenario, shuffle) in scenario_strategy(25, 8)) {
        let Scenario { config, fleet, workloads } = &scenario;
        let reordered = BagOfWorkloads::new(shuffled(workloads.workloads(), shuffle)).unwrap();
        let a = edbrs::schedule(workloads, fleet, config, None).unwrap();
        let b = edbrs::schedule(&reordered, fleet, config, None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn earlier_rank_starts_no_later(seed in any::<u64>(), n in 2usize..10, m in 1usize..5, pick in any::<prop::sample::Index>()) {
        // full eligibility: a swap changes only which workload takes the slot
        let spec = GenSpec { seed, n_workloads: n, n_instances: m, eligibility_density: 1.0, ..GenSpec::default() };
        let Scenario { config, fleet, workloads } = gen::generate(&spec).unwrap();
        let sorted = edbrs::sort_workloads(workloads.workloads()).unwrap();
        let batches = edbrs::partition_batches(&sorted, config.atu_length()).unwrap();
        let pairs: Vec<(usize, usize)> = batches
            .iter()
            .enumerate()
            .flat_map(|(b, batch)| (1..batch.workloads.len()).map(move |k| (b, k)))
            .collect();
        prop_assume!(!pairs.is_empty());
        let (b, k) = pairs[pick.index(pairs.len())];
        let first_start = |bs: &mut Vec<Batch>, id: WorkloadId| {
            let s = edbrs::dispatch(bs, &fleet, &config).unwrap();
            s.entries.iter().find(|e| e.workload_id == id && e.op_index == 0).unwrap().start
        };
        let u = batches[b].workloads[k - 1].workload_id();
        let v = batches[b].workloads[k].workload_id();
        let u_start = first_start(&mut batches.clone(), u);
        let mut swapped = batches.clone();
        swapped[b].workloads.swap(k - 1, k);
        let v_in_u_slot = first_start(&mut swapped, v);
        prop_assert!(u_start <= v_in_u_slot, "u {} starts at {}, v {} would start at {}", u, u_start, v, v_in_u_slot);
    }
}

#[test]
fn generator_defaults_match_the_experiment_grid() {
    assert_eq!(gen::DEFAULT_WORKLOAD_SCALES, [100, 200, 300]);
    assert_eq!(gen::DEFAULT_INSTANCE_SCALES, [50, 60, 70]);
    assert_eq!(gen::DEFAULT_SEED_COUNT, 50);
    let spec = GenSpec::default();
    assert_eq!(spec.n_public_types, 3);
}
