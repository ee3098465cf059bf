//! The eight-diode bridge used for scaling measurements, and a runner that
//! times one transient per worker configuration.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use crate::cosim::{CoupledSystem, SimError, SimOptions, Simulator, TransientRecord};
use crate::io::{parse_device_config, parse_netlist};
use crate::parallel::PoolConfig;

pub const BRIDGE_NETLIST: &str = include_str!("../../../configs/bridge8.cir");
pub const DIODE_CONFIG: &str = include_str!("../../../configs/diode.toml");

/// Full-wave bridge of eight PN diodes driven by a 1 MHz, 5 V sine.
pub fn bridge_system() -> CoupledSystem {
    let netlist = parse_netlist(BRIDGE_NETLIST).expect("bundled netlist parses");
    let diode = parse_device_config(DIODE_CONFIG)
        .and_then(|s| s.build())
        .expect("bundled diode builds");
    let devices = BTreeMap::from([("pn".to_string(), diode)]);
    netlist.build(&devices).expect("bundled netlist builds")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub config: PoolConfig,
    /// Whole transient (s).
    pub wall: f64,
    /// Time spent in device solves (s).
    pub stage2: f64,
    pub gs_iterations: usize,
    pub accepted_steps: usize,
}

impl BenchRow {
    /// Workers that solve devices concurrently.
    pub fn workers(&self) -> usize {
        self.config.threads.max(1) * self.config.processes.max(1)
    }
}

/// Runs the same transient once per configuration and returns the timings
/// with the last record.
pub fn run_bench(
    system: &CoupledSystem,
    t_end: f64,
    opts: &SimOptions,
    configs: &[PoolConfig],
) -> Result<(Vec<BenchRow>, TransientRecord), SimError> {
    let mut rows = Vec::new();
    let mut last = TransientRecord::default();
    for config in configs {
        let opts = SimOptions {
            pool: config.clone(),
            ..opts.clone()
        };
        let start = Instant::now();
        let mut sim = Simulator::new(system.clone(), opts)?;
        last = sim.transient(t_end, false)?;
        let wall = start.elapsed().as_secs_f64();
        let stats = sim.stats();
        log::info!(
            "bench: {} threads x {} processes: {wall:.3} s, stage 2 {:.3} s",
            config.threads,
            config.processes,
            stats.stage2_time.as_secs_f64()
        );
        rows.push(BenchRow {
            config: config.clone(),
            wall,
            stage2: stats.stage2_time.as_secs_f64(),
            gs_iterations: stats.gs_iterations,
            accepted_steps: stats.accepted_steps,
        });
    }
    Ok((rows, last))
}

/// `workers,threads,processes,wall_s,stage2_s,speedup,stage2_speedup,gs_iterations,steps`,
/// speedups relative to the first row.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "workers",
        "threads",
        "processes",
        "wall_s",
        "stage2_s",
        "speedup",
        "stage2_speedup",
        "gs_iterations",
        "steps",
    ])?;
    let Some(base) = rows.first() else {
        return out.flush().map_err(Into::into);
    };
    for r in rows {
        out.write_record([
            r.workers().to_string(),
            r.config.threads.to_string(),
            r.config.processes.to_string(),
            format!("{:.6}", r.wall),
            format!("{:.6}", r.stage2),
            format!("{:.4}", base.wall / r.wall),
            format!("{:.4}", base.stage2 / r.stage2),
            r.gs_iterations.to_string(),
            r.accepted_steps.to_string(),
        ])?;
    }
    out.flush().map_err(Into::into)
}
