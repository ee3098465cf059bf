//! Stage 2 runtime: partitioning, in-process groups, worker processes and
//! their wire protocol.

mod local;
mod plan;
mod pool;
pub mod protocol;
mod worker;

pub use local::LocalExecutor;
pub use plan::{plan_partition, PartitionPlan, PlanTask, TaskKind};
pub use pool::{PoolConfig, PoolStats, Stage2Error, WorkerPool};
pub use worker::run_worker;
