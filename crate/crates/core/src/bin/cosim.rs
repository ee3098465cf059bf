use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use cosim_core::bench::{bridge_system, run_bench, write_bench_csv};
use cosim_core::cosim::{SimError, SimOptions, Simulator};
use cosim_core::io::{load_netlist, options_table, parse_spice_number, set_option, RunConfig};
use cosim_core::parallel::{run_worker, PoolConfig};

#[derive(Parser)]
#[command(name = "cosim", version, about = "Drift-diffusion device and circuit co-simulation")]
struct Cli {
    /// Log more to stderr (-v: per-step info, -vv: debug). RUST_LOG also works.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// DC operating point, printed as a table.
    Dcop {
        netlist: PathBuf,
        /// Hold capacitors and inductors at their IC= values.
        #[arg(long)]
        uic: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Transient analysis, written as CSV.
    Tran {
        netlist: PathBuf,
        /// End time (s); SPICE suffixes allowed. Defaults to the netlist's `.tran`.
        #[arg(long, value_parser = spice)]
        t_end: Option<f64>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from the IC= values instead of a DC operating point
        /// (also enabled by `.tran ... uic`).
        #[arg(long)]
        uic: bool,
        /// Comma-separated signals to record, e.g. `v(a),i(X1.anode)`.
        #[arg(long, value_delimiter = ',')]
        signals: Vec<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Times one transient per worker count and prints a speedup CSV.
    Bench {
        /// Netlist to time; the built-in eight-diode bridge when omitted.
        netlist: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        workers: Vec<usize>,
        /// Spread workers over threads of this process or over processes.
        #[arg(long, value_enum, default_value_t = Mode::Threads)]
        mode: Mode,
        #[arg(long, value_parser = spice, default_value = "1u")]
        t_end: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Serves device solves on stdin/stdout (started by the coordinator).
    Worker {
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Prints every solver setting with its default value.
    Defaults,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Threads,
    Processes,
}

#[derive(Args)]
struct SolverArgs {
    /// Device-solve threads (per worker process when --processes > 0).
    #[arg(long, env = "COSIM_THREADS", default_value_t = 1)]
    threads: usize,
    /// Worker processes; 0 solves devices in this process.
    #[arg(long, env = "COSIM_PROCESSES", default_value_t = 0)]
    processes: usize,
    #[arg(long, value_parser = spice)]
    dt_min: Option<f64>,
    #[arg(long, value_parser = spice)]
    dt_max: Option<f64>,
    #[arg(long, value_parser = spice)]
    dt_initial: Option<f64>,
    /// Override any solver setting, e.g. `--set gs.abs=1e-6` (see `cosim defaults`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn spice(s: &str) -> Result<f64, String> {
    parse_spice_number(s).ok_or_else(|| format!("`{s}` is not a number"))
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Usage(m) => Failure::Usage(m),
            e => Failure::Solver(e.to_string()),
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

impl SolverArgs {
    fn options(&self) -> Result<SimOptions, Failure> {
        let mut o = SimOptions::default();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| usage(format!("--set {kv}: expected KEY=VALUE")))?;
            set_option(&mut o, k.trim(), v.trim()).map_err(usage)?;
        }
        if let Some(v) = self.dt_min {
            o.step.dt_min = v;
        }
        if let Some(v) = self.dt_max {
            o.step.dt_max = v;
        }
        if let Some(v) = self.dt_initial {
            o.step.dt_initial = v;
        }
        if self.threads == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        o.pool = if self.processes > 0 {
            PoolConfig::processes(self.processes, self.threads, None)
        } else {
            PoolConfig::threads(self.threads)
        };
        Ok(o)
    }

    fn config(&self, netlist: PathBuf) -> Result<RunConfig, Failure> {
        Ok(RunConfig {
            options: self.options()?,
            ..RunConfig::new(netlist)
        })
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn dcop(cfg: RunConfig) -> Result<(), Failure> {
    cfg.validate(false).map_err(usage)?;
    let loaded = load_netlist(&cfg.netlist).map_err(usage)?;
    let mut sim = Simulator::new(loaded.system, cfg.options)?;
    let op = sim.operating_point(cfg.uic)?;
    let width = op.signals.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = io::stdout().lock();
    let w = |e: io::Error| Failure::Solver(e.to_string());
    writeln!(out, "{:<width$}  value", "signal").map_err(w)?;
    for (s, v) in op.signals.iter().zip(&op.values) {
        writeln!(out, "{s:<width$}  {v:.9e}").map_err(w)?;
    }
    log::info!(
        "operating point: {} GS iterations, {} ramp points, KCL residual {:.3e} A",
        op.gs_iterations,
        op.ramp_points,
        op.kcl_residual
    );
    Ok(())
}

fn tran(mut cfg: RunConfig, t_end: Option<f64>) -> Result<(), Failure> {
    cfg.validate(false).map_err(usage)?;
    let loaded = load_netlist(&cfg.netlist).map_err(usage)?;
    let spec = loaded.netlist.tran;
    cfg.t_end = t_end
        .or(spec.map(|s| s.t_stop))
        .ok_or_else(|| usage("no --t-end and no .tran line in the netlist"))?;
    cfg.uic |= spec.is_some_and(|s| s.uic);
    cfg.validate(true).map_err(usage)?;
    let mut sim = Simulator::new(loaded.system, cfg.options)?;
    let available = sim.signal_names();
    if let Some(bad) = cfg.signals.iter().find(|s| !available.contains(s)) {
        return Err(usage(format!("unknown signal `{bad}` (available: {})", available.join(", "))));
    }
    let mut rec = sim.transient(cfg.t_end, cfg.uic)?;
    if !cfg.signals.is_empty() {
        rec = rec.select(&cfg.signals).map_err(usage)?;
    }
    let stats = sim.stats();
    log::info!(
        "{} steps accepted, {} rejected, {} GS iterations; stage 1 {:.3} s, stage 2 {:.3} s",
        stats.accepted_steps,
        stats.rejected_steps,
        stats.gs_iterations,
        stats.stage1_time.as_secs_f64(),
        stats.stage2_time.as_secs_f64()
    );
    rec.write_csv(output(&cfg.output)?).map_err(|e| Failure::Solver(e.to_string()))
}

fn bench(
    netlist: Option<PathBuf>,
    workers: &[usize],
    mode: Mode,
    t_end: f64,
    out: &Option<PathBuf>,
    solver: &SolverArgs,
) -> Result<(), Failure> {
    let opts = solver.options()?;
    if !(t_end > 0.0) {
        return Err(usage("--t-end must be positive"));
    }
    if workers.is_empty() || workers.contains(&0) {
        return Err(usage("--workers needs positive counts"));
    }
    let system = match netlist {
        Some(p) => load_netlist(&p).map_err(usage)?.system,
        None => bridge_system(),
    };
    let configs: Vec<PoolConfig> = workers
        .iter()
        .map(|&w| match mode {
            Mode::Threads => PoolConfig::threads(w),
            Mode::Processes => PoolConfig::processes(w, 1, None),
        })
        .collect();
    let (rows, _) = run_bench(&system, t_end, &opts, &configs)?;
    write_bench_csv(&rows, output(out)?).map_err(|e| Failure::Solver(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Dcop { netlist, uic, solver } => dcop(RunConfig {
            uic,
            ..solver.config(netlist)?
        }),
        Command::Tran {
            netlist,
            t_end,
            out,
            uic,
            signals,
            solver,
        } => tran(
            RunConfig {
                output: out,
                uic,
                signals,
                ..solver.config(netlist)?
            },
            t_end,
        ),
        Command::Bench {
            netlist,
            workers,
            mode,
            t_end,
            out,
            solver,
        } => bench(netlist, &workers, mode, t_end, &out, &solver),
        Command::Worker { threads } => {
            run_worker(io::stdin().lock(), io::stdout().lock(), threads.max(1)).map_err(|e| Failure::Solver(e.to_string()))
        }
        Command::Defaults => {
            let mut out = io::stdout().lock();
            for (k, v, meaning) in options_table(&SimOptions::default()) {
                if writeln!(out, "{k:<28} {v:>10}  {meaning}").is_err() {
                    break;
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
