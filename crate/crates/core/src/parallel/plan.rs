#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Circuit,
    Device,
    /// Reserved: a device split along a weakly coupled cut. Never produced
    /// by [`plan_partition`].
    DeviceSubdomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanTask {
    pub kind: TaskKind,
    /// Device index for device tasks; 0 for the circuit.
    pub payload: usize,
    /// Estimated cost: number of device unknowns.
    pub cost: usize,
}

/// Tasks of one coupled system and their assignment to worker groups. The
/// circuit task has no group: it runs on the coordinator in Stage 1.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub tasks: Vec<PlanTask>,
    /// Group of each task, `None` for the circuit task.
    pub assignment: Vec<Option<usize>>,
    pub groups: usize,
}

impl PartitionPlan {
    /// Device indices assigned to `group`, in ascending order.
    pub fn devices_of(&self, group: usize) -> Vec<usize> {
        self.tasks
            .iter()
            .zip(&self.assignment)
            .filter(|(t, g)| t.kind == TaskKind::Device && **g == Some(group))
            .map(|(t, _)| t.payload)
            .collect()
    }

    /// Group of a device.
    pub fn group_of(&self, device: usize) -> usize {
        self.tasks
            .iter()
            .zip(&self.assignment)
            .find(|(t, _)| t.kind == TaskKind::Device && t.payload == device)
            .and_then(|(_, g)| *g)
            .expect("device is part of the plan")
    }

    pub fn load(&self, group: usize) -> usize {
        self.tasks
            .iter()
            .zip(&self.assignment)
            .filter(|(_, g)| **g == Some(group))
            .map(|(t, _)| t.cost)
            .sum()
    }
}

/// One circuit task plus one task per device with cost `3 × vertices`,
/// assigned to `groups` worker groups by longest-processing-time first.
/// Ties go to the lower device index and the lower group index.
pub fn plan_partition(device_vertices: &[usize], groups: usize) -> PartitionPlan {
    let groups = groups.max(1);
    let mut tasks = vec![PlanTask {
        kind: TaskKind::Circuit,
        payload: 0,
        cost: 0,
    }];
    tasks.extend(device_vertices.iter().enumerate().map(|(i, &v)| PlanTask {
        kind: TaskKind::Device,
        payload: i,
        cost: 3 * v,
    }));
    let mut order: Vec<usize> = (1..tasks.len()).collect();
    order.sort_by(|&a, &b| tasks[b].cost.cmp(&tasks[a].cost).then(a.cmp(&b)));
    let mut load = vec![0usize; groups];
    let mut assignment = vec![None; tasks.len()];
    for t in order {
        let g = (0..groups).min_by_key(|&g| (load[g], g)).unwrap_or(0);
        load[g] += tasks[t].cost;
        assignment[t] = Some(g);
    }
    PartitionPlan {
        tasks,
        assignment,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_device_gives_two_tasks() {
        let p = plan_partition(&[40], 4);
        assert_eq!(p.tasks.len(), 2);
        assert_eq!(p.tasks[0].kind, TaskKind::Circuit);
        assert_eq!(p.assignment[0], None);
        assert_eq!(p.tasks[1].cost, 120);
    }

    #[test]
    fn equal_devices_balance() {
        let p = plan_partition(&[50; 8], 4);
        for g in 0..4 {
            assert_eq!(p.devices_of(g).len(), 2);
        }
    }

    #[test]
    fn lpt_hand_trace() {
        let p = plan_partition(&[100, 50, 50], 2);
        assert_eq!(p.devices_of(0), vec![0]);
        assert_eq!(p.devices_of(1), vec![1, 2]);
        assert_eq!(p.load(0), p.load(1));
        assert_eq!(p.group_of(2), 1);
    }
}
