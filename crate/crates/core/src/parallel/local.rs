use std::collections::BTreeMap;

use super::plan_partition;
use crate::device::{DeviceError, DeviceTask, SolveReply, SolveRequest};

/// Device tasks held by one process, split into groups that run
/// concurrently. Tasks inside a group run one after another, so a result
/// never depends on how groups are scheduled.
pub struct LocalExecutor {
    groups: Vec<Vec<(usize, DeviceTask)>>,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

pub type LocalResult = (usize, Result<SolveReply, DeviceError>);

impl LocalExecutor {
    /// `tasks` are keyed by global device index. Groups follow the LPT plan
    /// over `threads` groups.
    pub fn new(tasks: Vec<(usize, DeviceTask)>, threads: usize) -> Self {
        let threads = threads.max(1).min(tasks.len().max(1));
        let vertices: Vec<usize> = tasks.iter().map(|(_, t)| t.device().vertex_count()).collect();
        let plan = plan_partition(&vertices, threads);
        let mut slots: Vec<Option<(usize, DeviceTask)>> = tasks.into_iter().map(Some).collect();
        let groups = (0..plan.groups)
            .map(|g| {
                plan.devices_of(g)
                    .into_iter()
                    .filter_map(|k| slots[k].take())
                    .collect()
            })
            .collect();
        Self {
            groups,
            #[cfg(feature = "parallel")]
            pool: (threads > 1)
                .then(|| rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok())
                .flatten(),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.groups.iter().flatten().map(|(i, _)| *i).collect();
        ids.sort_unstable();
        ids
    }

    pub fn task(&self, id: usize) -> Option<&DeviceTask> {
        self.groups.iter().flatten().find(|(i, _)| *i == id).map(|(_, t)| t)
    }

    pub fn threads(&self) -> usize {
        self.groups.len()
    }

    fn each_group<F>(&mut self, f: F) -> Vec<LocalResult>
    where
        F: Fn(usize, &mut DeviceTask) -> Result<SolveReply, DeviceError> + Sync,
    {
        let run = |g: &mut Vec<(usize, DeviceTask)>| -> Vec<LocalResult> {
            g.iter_mut().map(|(i, t)| (*i, f(*i, t))).collect()
        };
        #[cfg(feature = "parallel")]
        let nested: Vec<Vec<LocalResult>> = match &self.pool {
            Some(pool) => {
                use rayon::prelude::*;
                let groups = &mut self.groups;
                pool.install(|| groups.par_iter_mut().map(run).collect())
            }
            None => self.groups.iter_mut().map(run).collect(),
        };
        #[cfg(not(feature = "parallel"))]
        let nested: Vec<Vec<LocalResult>> = self.groups.iter_mut().map(run).collect();
        let mut out: Vec<LocalResult> = nested.into_iter().flatten().collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }

    /// Solves every task that has a request; results in ascending id order.
    pub fn solve(&mut self, requests: &[(usize, SolveRequest)]) -> Vec<LocalResult> {
        let map: BTreeMap<usize, &SolveRequest> = requests.iter().map(|(i, r)| (*i, r)).collect();
        self.each_group(|i, t| match map.get(&i) {
            Some(r) => t.solve(r),
            None => Err(DeviceError::MissingBias {
                expected: t.device().electrode_count(),
                got: 0,
            }),
        })
        .into_iter()
        .filter(|(i, _)| map.contains_key(i))
        .collect()
    }

    pub fn commit(&mut self, restart: bool) -> Result<(), DeviceError> {
        for (_, t) in self.groups.iter_mut().flatten() {
            t.commit(restart)?;
        }
        Ok(())
    }

    pub fn rollback(&mut self) {
        for (_, t) in self.groups.iter_mut().flatten() {
            t.rollback();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::bdf_context;
    use crate::device::fixtures::pn_diode;
    use crate::device::{LteTolerances, NewtonOptions};

    fn tasks(k: usize) -> Vec<(usize, DeviceTask)> {
        (0..k)
            .map(|i| {
                let d = pn_diode(1e16, 2e-4, 21 + 4 * i);
                let t = DeviceTask::new(d, NewtonOptions::default(), LteTolerances::default(), 0.0)
                    .unwrap();
                (i, t)
            })
            .collect()
    }

    #[test]
    fn grouping_does_not_change_results() {
        let mut one = LocalExecutor::new(tasks(3), 1);
        let mut three = LocalExecutor::new(tasks(3), 3);
        assert_eq!(three.ids(), vec![0, 1, 2]);
        let ctx = bdf_context(&[0.0], 1e-9, 2).unwrap();
        let reqs: Vec<(usize, SolveRequest)> = (0..3)
            .map(|i| {
                (
                    i,
                    SolveRequest {
                        voltages: vec![0.1 * i as f64, 0.0],
                        ctx,
                    },
                )
            })
            .collect();
        let a = one.solve(&reqs);
        let b = three.solve(&reqs);
        assert_eq!(a.len(), 3);
        for ((ia, ra), (ib, rb)) in a.into_iter().zip(b) {
            assert_eq!(ia, ib);
            assert_eq!(ra.unwrap(), rb.unwrap());
        }
        one.commit(false).unwrap();
        assert_eq!(one.task(2).unwrap().history().len(), 2);
    }
}
