//! Run settings, the table of solver defaults, and loading a netlist together
//! with its device files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::device_config::{parse_device_config, ConfigError, DeviceSpec};
use super::netlist::{parse_netlist, Netlist, NetlistError};
use crate::circuit::CircuitTolerances;
use crate::cosim::{CoupledSystem, GsOptions, SimOptions, StepOptions};
use crate::device::{LteTolerances, NewtonOptions};

/// Everything a `tran` or `dcop` run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub netlist: PathBuf,
    /// End time (s); zero for an operating point only.
    pub t_end: f64,
    pub options: SimOptions,
    /// CSV destination; standard output when absent.
    pub output: Option<PathBuf>,
    /// Recorded signals; all when empty.
    pub signals: Vec<String>,
    /// Start from capacitor and inductor initial conditions.
    pub uic: bool,
}

impl RunConfig {
    pub fn new(netlist: impl Into<PathBuf>) -> Self {
        Self {
            netlist: netlist.into(),
            t_end: 0.0,
            options: SimOptions::default(),
            output: None,
            signals: Vec::new(),
            uic: false,
        }
    }

    pub fn validate(&self, transient: bool) -> Result<(), String> {
        let s = &self.options.step;
        if !(s.dt_min > 0.0 && s.dt_min <= s.dt_max) {
            return Err(format!("need 0 < dt_min <= dt_max, got {} and {}", s.dt_min, s.dt_max));
        }
        if !(s.dt_initial >= s.dt_min && s.dt_initial <= s.dt_max) {
            return Err(format!("dt_initial {} outside [{}, {}]", s.dt_initial, s.dt_min, s.dt_max));
        }
        if transient && !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(format!("t_end must be positive, got {}", self.t_end));
        }
        if !self.netlist.is_file() {
            return Err(format!("{}: no such file", self.netlist.display()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Tunables {
    newton: NewtonOptions,
    circuit: CircuitTolerances,
    gs: GsOptions,
    step: StepOptions,
    lte: LteTolerances,
}

const DESCRIPTIONS: &[(&str, &str)] = &[
    ("newton.max_iterations", "device Newton iteration limit"),
    ("newton.poisson_abs", "absolute residual tolerance of Poisson rows (C)"),
    ("newton.continuity_abs", "absolute residual tolerance of continuity rows (A)"),
    ("newton.rel", "relative residual tolerance"),
    ("newton.update_tol", "bound on the last scaled Newton update"),
    ("newton.psi_clamp", "largest potential change per Newton step (thermal voltages)"),
    ("newton.positivity_fraction", "largest fractional density decrease per step"),
    ("newton.max_halvings", "line-search halvings per Newton step"),
    ("newton.scaling", "equilibrate device linear systems"),
    ("newton.max_bisections", "bisection depth of the device bias continuation"),
    ("circuit.abs", "circuit Newton absolute tolerance (V, A)"),
    ("circuit.rel", "circuit Newton relative tolerance"),
    ("circuit.max_refinements", "circuit Newton refinement limit"),
    ("gs.max_iterations", "Gauss-Seidel iterations per time point"),
    ("gs.dc_max_iterations", "Gauss-Seidel iterations of the operating point"),
    ("gs.abs", "Gauss-Seidel absolute tolerance (V, A)"),
    ("gs.rel", "Gauss-Seidel relative tolerance"),
    ("gs.voltage_floor", "floor added to the relative voltage tolerance (V)"),
    ("gs.current_floor", "floor added to the relative current tolerance (A)"),
    ("gs.divergence_window", "growing iterations that abort a Gauss-Seidel solve"),
    ("gs.ramp_steps", "source-ramping steps of a failed operating point"),
    ("gs.ramp_bisections", "halvings per ramp increment"),
    ("step.dt_min", "smallest time step (s)"),
    ("step.dt_max", "largest time step (s)"),
    ("step.dt_initial", "first step and first step after a breakpoint (s)"),
    ("step.max_order", "highest BDF order"),
    ("lte.rel", "relative truncation-error tolerance"),
    ("lte.voltage_abs", "absolute truncation-error tolerance of potentials (V)"),
    ("lte.current_abs", "absolute truncation-error tolerance of branch currents (A)"),
    ("lte.density_abs", "absolute density tolerance as a fraction of peak doping"),
];

fn tunables(opts: &SimOptions) -> toml::Table {
    let t = Tunables {
        newton: opts.newton.clone(),
        circuit: opts.circuit,
        gs: opts.gs,
        step: opts.step,
        lte: opts.lte,
    };
    toml::Table::try_from(t).expect("options serialize")
}

/// `(key, value, meaning)` for every solver setting that `set_option`
/// accepts, with the values of `opts`.
pub fn options_table(opts: &SimOptions) -> Vec<(String, String, &'static str)> {
    let table = tunables(opts);
    let mut out = Vec::new();
    for (section, values) in &table {
        let toml::Value::Table(values) = values else { continue };
        for (k, v) in values {
            let key = format!("{section}.{k}");
            let meaning = DESCRIPTIONS.iter().find(|d| d.0 == key).map_or("", |d| d.1);
            let value = match v {
                toml::Value::Float(x) if *x != 0.0 && !(1e-3..1e4).contains(&x.abs()) => format!("{x:e}"),
                v => v.to_string(),
            };
            out.push((key, value, meaning));
        }
    }
    out
}

/// Overrides one setting given as `section.key` (see [`options_table`]).
pub fn set_option(opts: &mut SimOptions, key: &str, value: &str) -> Result<(), String> {
    let mut table = tunables(opts);
    let (section, field) = key.split_once('.').ok_or_else(|| format!("`{key}`: expected <section>.<name>"))?;
    let slot = table
        .get_mut(section)
        .and_then(|s| s.as_table_mut())
        .and_then(|s| s.get_mut(field))
        .ok_or_else(|| format!("unknown option `{key}`"))?;
    let bad = || format!("`{key}`: bad value `{value}`");
    *slot = match slot {
        toml::Value::Integer(_) => toml::Value::Integer(value.parse().map_err(|_| bad())?),
        toml::Value::Float(_) => toml::Value::Float(super::parse_spice_number(value).ok_or_else(bad)?),
        toml::Value::Boolean(_) => toml::Value::Boolean(value.parse().map_err(|_| bad())?),
        _ => return Err(bad()),
    };
    let t: Tunables = table.try_into().map_err(|e: toml::de::Error| format!("`{key}`: {e}"))?;
    opts.newton = t.newton;
    opts.circuit = t.circuit;
    opts.gs = t.gs;
    opts.step = t.step;
    opts.lte = t.lte;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{}:{}: {}", .error.line, .error.column, .error.message)]
    Netlist { path: PathBuf, error: NetlistError },
    #[error("{path}: {error}")]
    Device { path: PathBuf, error: ConfigError },
}

/// A parsed netlist, its device descriptions and the assembled system.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub netlist: Netlist,
    pub devices: BTreeMap<String, DeviceSpec>,
    pub system: CoupledSystem,
}

fn read(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a netlist file and the device files it declares; device paths are
/// relative to the netlist's directory.
pub fn load_netlist(path: &Path) -> Result<Loaded, LoadError> {
    let netlist = parse_netlist(&read(path)?).map_err(|error| LoadError::Netlist {
        path: path.to_path_buf(),
        error,
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut devices = BTreeMap::new();
    let mut built = BTreeMap::new();
    for decl in &netlist.devices {
        let file = dir.join(&decl.path);
        let device_err = |error| LoadError::Device {
            path: file.clone(),
            error,
        };
        let spec = parse_device_config(&read(&file)?).map_err(device_err)?;
        built.insert(decl.name.clone(), spec.build().map_err(device_err)?);
        devices.insert(decl.name.clone(), spec);
    }
    let system = netlist.build(&built).map_err(|error| LoadError::Netlist {
        path: path.to_path_buf(),
        error,
    })?;
    Ok(Loaded {
        netlist,
        devices,
        system,
    })
}
