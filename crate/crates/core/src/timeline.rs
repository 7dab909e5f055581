use std::collections::BTreeMap;

use crate::model::{CloudConfig, Fleet, InstanceId, Operation, ScheduleEntry, WorkloadId};

/// When each instance of a fleet becomes free. Instances start idle at 0 and
/// only ever append intervals at their tail.
pub(crate) struct Timeline {
    avail: BTreeMap<InstanceId, f64>,
    speed: BTreeMap<InstanceId, f64>,
}

impl Timeline {
    pub(crate) fn new(fleet: &Fleet, config: &CloudConfig) -> Self {
        let avail = fleet.instances().iter().map(|&i| (i, 0.0)).collect();
        let speed = fleet
            .instances()
            .iter()
            .map(|&i| {
                let t = config
                    .resource_type(i.type_id)
                    .expect("fleet checked against config");
                (i, t.speed())
            })
            .collect();
        Timeline { avail, speed }
    }

    pub(crate) fn avail(&self, i: InstanceId) -> Option<f64> {
        self.avail.get(&i).copied()
    }

    pub(crate) fn duration(&self, op: &Operation, i: InstanceId) -> f64 {
        op.base_time() / self.speed[&i]
    }

    /// Eligible instances that belong to this fleet, in id order.
    pub(crate) fn eligible<'a>(
        &'a self,
        op: &'a Operation,
    ) -> impl Iterator<Item = InstanceId> + 'a {
        op.eligible()
            .iter()
            .copied()
            .filter(|i| self.avail.contains_key(i))
    }

    pub(crate) fn place(
        &mut self,
        workload_id: WorkloadId,
        op: &Operation,
        instance_id: InstanceId,
        start: f64,
    ) -> ScheduleEntry {
        let end = start + self.duration(op, instance_id);
        self.avail.insert(instance_id, end);
        ScheduleEntry {
            workload_id,
            op_index: op.op_index(),
            instance_id,
            start,
            end,
        }
    }
}
