use std::path::{Path, PathBuf};

use cosim_core::circuit::{bdf_context, BdfCoefficients};
use cosim_core::cosim::{SimOptions, Simulator};
use cosim_core::device::{Device, LteTolerances, NewtonOptions, SolveReply, SolveRequest};
use cosim_core::io::{load_netlist, parse_device_config};
use cosim_core::parallel::{PoolConfig, WorkerPool};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn exe() -> Option<PathBuf> {
    Some(PathBuf::from(env!("CARGO_BIN_EXE_cosim")))
}

fn diodes(count: usize) -> Vec<Device> {
    let text = std::fs::read_to_string(configs().join("diode.toml")).unwrap();
    let dev = parse_device_config(&text).unwrap().build().unwrap();
    vec![dev; count]
}

fn pool(config: &PoolConfig) -> WorkerPool {
    WorkerPool::new(diodes(3), NewtonOptions::default(), LteTolerances::default(), config).unwrap()
}

fn requests(ctx: BdfCoefficients, v: f64) -> Vec<SolveRequest> {
    (0..3)
        .map(|k| SolveRequest {
            voltages: vec![v + 0.05 * k as f64, 0.0],
            ctx,
        })
        .collect()
}

/// Steady solve, one rejected and one accepted BDF-1 step, then a BDF-2
/// step; `between` runs before the last solve.
fn script(pool: &mut WorkerPool, between: impl FnOnce(&mut WorkerPool)) -> Vec<SolveReply> {
    pool.solve(&requests(BdfCoefficients::steady(0.0), 0.3)).unwrap();
    pool.commit(false).unwrap();
    pool.solve(&requests(bdf_context(&[0.0], 1e-9, 1).unwrap(), 0.9)).unwrap();
    pool.rollback().unwrap();
    pool.solve(&requests(bdf_context(&[0.0], 5e-10, 1).unwrap(), 0.4)).unwrap();
    pool.commit(false).unwrap();
    between(pool);
    pool.solve(&requests(bdf_context(&[5e-10, 0.0], 1e-9, 2).unwrap(), 0.45)).unwrap()
}

#[test]
fn worker_processes_match_local_solves() {
    let local = script(&mut pool(&PoolConfig::threads(1)), |_| {});
    let remote = script(&mut pool(&PoolConfig::processes(2, 1, exe())), |_| {});
    assert_eq!(local, remote);
}

#[test]
fn killed_worker_is_replaced_without_changing_results() {
    let local = script(&mut pool(&PoolConfig::threads(1)), |_| {});
    let mut remote = pool(&PoolConfig::processes(2, 1, exe()));
    let replies = script(&mut remote, |p| assert!(p.kill_worker(0)));
    assert_eq!(local, replies);
    assert_eq!(remote.stats().failovers, 1);
}

#[test]
fn missing_worker_executable_is_reported() {
    let config = PoolConfig::processes(1, 1, Some("/nonexistent/cosim".into()));
    let err = WorkerPool::new(diodes(1), NewtonOptions::default(), LteTolerances::default(), &config)
        .err()
        .unwrap();
    assert!(err.to_string().contains("cannot start"), "{err}");
}

#[test]
fn transient_through_worker_processes_is_identical() {
    let loaded = load_netlist(&configs().join("diode_turn_on.cir")).unwrap();
    let run = |pool: PoolConfig| {
        let opts = SimOptions {
            pool,
            ..SimOptions::default()
        };
        let mut sim = Simulator::new(loaded.system.clone(), opts).unwrap();
        let rec = sim.transient(1e-7, false).unwrap();
        (rec, sim.stats().gs_iterations)
    };
    let (a, ga) = run(PoolConfig::threads(1));
    let (b, gb) = run(PoolConfig::processes(1, 2, exe()));
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let loaded = load_netlist(&configs().join("diode_turn_on.cir")).unwrap();
    let csv = || {
        let mut sim = Simulator::new(loaded.system.clone(), SimOptions::default()).unwrap();
        let mut out = Vec::new();
        sim.transient(1e-7, false).unwrap().write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(csv(), csv());
}
