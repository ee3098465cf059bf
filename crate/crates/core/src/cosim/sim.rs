use std::time::{Duration, Instant};

use super::control::{adapt_step, fit_to_target, StepDecision, StepOptions};
use super::record::{StepInfo, TransientRecord};
use super::system::CoupledSystem;
use crate::circuit::{
    bdf_context, mna_assemble, newton_solve_circuit, AnalysisMode, BdfCoefficients, CircuitError,
    CircuitHistory, CircuitTolerances, ErrorEstimator, MnaInputs, MnaLayout,
};
use crate::device::{LteTolerances, NewtonOptions, NortonEquivalent, SolveReply, SolveRequest};
use crate::parallel::{PoolConfig, PoolStats, Stage2Error, WorkerPool};

/// Gauss-Seidel coupling between the circuit and the devices.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GsOptions {
    /// Iteration limit per time point; exceeding it rejects the step.
    pub max_iterations: usize,
    /// Iteration limit of an operating-point solve.
    pub dc_max_iterations: usize,
    /// Electrode voltage and current changes must stay below `abs` and
    /// below `rel` times the largest electrode value (plus a floor).
    pub abs: f64,
    pub rel: f64,
    pub voltage_floor: f64,
    pub current_floor: f64,
    /// Consecutive growing iterations that count as divergence.
    pub divergence_window: usize,
    /// Source-ramping steps used when the direct operating point fails.
    pub ramp_steps: usize,
    /// Halvings allowed for one ramp increment.
    pub ramp_bisections: usize,
}

impl Default for GsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            dc_max_iterations: 100,
            abs: 1e-5,
            rel: 1e-5,
            voltage_floor: 1e-9,
            current_floor: 1e-15,
            divergence_window: 3,
            ramp_steps: 10,
            ramp_bisections: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOptions {
    pub newton: NewtonOptions,
    pub circuit: CircuitTolerances,
    pub gs: GsOptions,
    pub step: StepOptions,
    pub lte: LteTolerances,
    pub pool: PoolConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Stage2(#[from] Stage2Error),
    #[error("no operating point: {0}")]
    OperatingPoint(String),
    #[error("time step fell below {dt_min:e} s at t = {time:e} s ({reason})")]
    StepTooSmall { time: f64, dt_min: f64, reason: String },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub gs_iterations: usize,
    pub stage1_time: Duration,
    pub stage2_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub signals: Vec<String>,
    pub values: Vec<f64>,
    pub gs_iterations: usize,
    /// Source-ramp points used; zero when the direct solve converged.
    pub ramp_points: usize,
    pub kcl_residual: f64,
}

/// Result of one converged coupled iteration.
#[derive(Debug, Clone)]
pub struct GsOutcome {
    pub x: Vec<f64>,
    /// Port-ordered stamps linearized at the final voltages.
    pub stamps: Vec<NortonEquivalent>,
    /// Port-ordered device currents at the final voltages.
    pub currents: Vec<Vec<f64>>,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub device_lte: Option<f64>,
    pub kcl_residual: f64,
}

enum GsFailure {
    /// Non-convergence of this time point; the caller may retry.
    Retry(String),
    Fatal(SimError),
}

/// Drives a coupled system through an operating point and a transient.
pub struct Simulator {
    system: CoupledSystem,
    opts: SimOptions,
    pool: WorkerPool,
    layout: MnaLayout,
    history: Option<CircuitHistory>,
    stamps: Vec<NortonEquivalent>,
    currents: Vec<Vec<f64>>,
    stats: RunStats,
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

impl Simulator {
    /// Starts the Stage 2 executor and brings every device to equilibrium.
    pub fn new(system: CoupledSystem, opts: SimOptions) -> Result<Self, SimError> {
        let pool = WorkerPool::new(system.devices().to_vec(), opts.newton.clone(), opts.lte, &opts.pool)?;
        let layout = MnaLayout::new(system.circuit(), AnalysisMode::Transient);
        Ok(Self {
            system,
            opts,
            pool,
            layout,
            history: None,
            stamps: Vec::new(),
            currents: Vec::new(),
            stats: RunStats::default(),
        })
    }

    pub fn system(&self) -> &CoupledSystem {
        &self.system
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    pub fn stats(&self) -> RunStats {
        self.stats
    }

    pub fn pool_stats(&self) -> PoolStats {
        self.pool.stats()
    }

    pub fn pool(&self) -> &WorkerPool {
        &self.pool
    }

    #[doc(hidden)]
    pub fn pool_mut(&mut self) -> &mut WorkerPool {
        &mut self.pool
    }

    /// Signal names of transient records.
    pub fn signal_names(&self) -> Vec<String> {
        self.system.signal_names(&self.layout)
    }

    fn requests(&self, layout: &MnaLayout, x: &[f64], ctx: &BdfCoefficients) -> (Vec<Vec<f64>>, Vec<SolveRequest>) {
        let v: Vec<Vec<f64>> = self.system.ports().iter().map(|p| p.voltages(layout, x)).collect();
        let reqs = self
            .system
            .ports()
            .iter()
            .zip(&v)
            .map(|(p, v)| SolveRequest {
                voltages: p.to_device(v),
                ctx: *ctx,
            })
            .collect();
        (v, reqs)
    }

    fn stage2(&mut self, reqs: &[SolveRequest]) -> Result<Vec<SolveReply>, GsFailure> {
        let start = Instant::now();
        let replies = self.pool.solve(reqs);
        self.stats.stage2_time += start.elapsed();
        replies.map_err(|e| {
            if e.is_solver_failure() {
                GsFailure::Retry(e.to_string())
            } else {
                GsFailure::Fatal(e.into())
            }
        })
    }

    fn port_stamps(&self, replies: &[SolveReply]) -> Vec<NortonEquivalent> {
        self.system
            .ports()
            .iter()
            .zip(replies)
            .map(|(p, r)| p.stamp(&r.norton))
            .collect()
    }

    fn reject(&mut self, t: f64, h: f64, reason: String, retry: f64) -> Result<f64, SimError> {
        self.pool.rollback()?;
        self.stats.rejected_steps += 1;
        log::debug!("step {h:e} at t = {t:e} rejected: {reason}");
        if retry < self.opts.step.dt_min {
            return Err(SimError::StepTooSmall {
                time: t,
                dt_min: self.opts.step.dt_min,
                reason,
            });
        }
        Ok(retry)
    }

    /// Gauss-Seidel iteration at one time point: circuit solve with frozen
    /// device stamps, then all devices at the new electrode voltages, until
    /// electrode voltages and currents stop changing.
    fn gs_solve(
        &mut self,
        layout: &MnaLayout,
        history: &CircuitHistory,
        ctx: &BdfCoefficients,
        source_scale: f64,
        x0: Vec<f64>,
        max_iterations: usize,
    ) -> Result<GsOutcome, GsFailure> {
        let gs = self.opts.gs;
        let mut stamps = self.stamps.clone();
        let mut x = x0;
        let mut prev_v: Vec<Vec<f64>> = stamps.iter().map(|s| s.voltages.clone()).collect();
        let mut last_metric = f64::INFINITY;
        let mut growth = 0;
        for k in 1..=max_iterations {
            let start = Instant::now();
            let inp = MnaInputs {
                circuit: self.system.circuit(),
                layout,
                history,
                stamps: &stamps,
                ctx,
                source_scale,
            };
            let sol = newton_solve_circuit(&inp, &x, &self.opts.circuit);
            self.stats.stage1_time += start.elapsed();
            x = sol.map_err(|e| GsFailure::Retry(format!("circuit solve: {e}")))?.x;

            let (v, reqs) = self.requests(layout, &x, ctx);
            let replies = self.stage2(&reqs)?;
            let newton_max = replies.iter().map(|r| r.newton_iterations).max().unwrap_or(0);
            let device_lte = replies.iter().fold(None, |m, r| max_opt(m, r.lte));
            let new = self.port_stamps(&replies);

            let v_scale = v.iter().flatten().fold(0.0f64, |m, a| m.max(a.abs()));
            let i_scale = new.iter().flat_map(|s| &s.currents).fold(0.0f64, |m, a| m.max(a.abs()));
            let tol_v = gs.abs.min(gs.rel * v_scale + gs.voltage_floor);
            let tol_i = gs.abs.min(gs.rel * i_scale + gs.current_floor);
            let mut metric = 0.0f64;
            for p in 0..new.len() {
                let predicted = stamps[p].current_at(&v[p]);
                for (a, b) in v[p].iter().zip(&prev_v[p]) {
                    metric = metric.max((a - b).abs() / tol_v);
                }
                for (a, b) in new[p].currents.iter().zip(&predicted) {
                    metric = metric.max((a - b).abs() / tol_i);
                }
            }
            log::trace!("GS iteration {k} at t = {:e}: change {metric:.3e} of tolerance", ctx.time);
            stamps = new;
            prev_v = v;
            if metric <= 1.0 {
                let inp = MnaInputs {
                    circuit: self.system.circuit(),
                    layout,
                    history,
                    stamps: &stamps,
                    ctx,
                    source_scale,
                };
                let sys = mna_assemble(&inp, &x).map_err(|e| GsFailure::Fatal(e.into()))?;
                let kcl = sys.residual[..layout.node_count()]
                    .iter()
                    .fold(0.0f64, |m, r| m.max(r.abs()));
                self.stats.gs_iterations += k;
                return Ok(GsOutcome {
                    x,
                    currents: stamps.iter().map(|s| s.currents.clone()).collect(),
                    stamps,
                    iterations: k,
                    newton_iterations: newton_max,
                    device_lte,
                    kcl_residual: kcl,
                });
            }
            if metric > last_metric {
                growth += 1;
                if growth >= gs.divergence_window {
                    return Err(GsFailure::Retry(format!("coupling iteration diverging at iteration {k}")));
                }
            } else {
                growth = 0;
            }
            last_metric = metric;
        }
        Err(GsFailure::Retry(format!(
            "coupling iteration not converged after {max_iterations} iterations"
        )))
    }

    /// Operating point at `t = 0`. With `uic`, capacitors and inductors are
    /// held at their initial conditions instead of being opened and shorted.
    /// Falls back to ramping all sources from zero when the direct coupled
    /// iteration fails.
    pub fn operating_point(&mut self, uic: bool) -> Result<OperatingPoint, SimError> {
        let mode = if uic {
            AnalysisMode::InitialCondition
        } else {
            AnalysisMode::Steady
        };
        let layout = MnaLayout::new(self.system.circuit(), mode);
        let hist = CircuitHistory::new(0.0, vec![0.0; layout.size()]);
        let ctx = BdfCoefficients::steady(0.0);
        let zero = vec![0.0; layout.size()];
        if self.stamps.is_empty() {
            let (_, reqs) = self.requests(&layout, &zero, &ctx);
            self.stamps = match self.stage2(&reqs) {
                Ok(r) => self.port_stamps(&r),
                Err(GsFailure::Fatal(e)) => return Err(e),
                Err(GsFailure::Retry(m)) => return Err(SimError::OperatingPoint(m)),
            };
            self.pool.commit(false)?;
        }
        let max_it = self.opts.gs.dc_max_iterations;
        let (out, ramp_points, iterations) =
            match self.gs_solve(&layout, &hist, &ctx, 1.0, zero.clone(), max_it) {
                Ok(o) => {
                    let it = o.iterations;
                    (o, 0, it)
                }
                Err(GsFailure::Fatal(e)) => return Err(e),
                Err(GsFailure::Retry(msg)) => {
                    log::info!("direct operating point failed ({msg}); ramping sources");
                    self.pool.rollback()?;
                    self.source_ramp(&layout, &hist, &ctx)?
                }
            };
        self.pool.commit(false)?;
        let x_tran = layout.transfer(&out.x, &self.layout);
        self.history = Some(CircuitHistory::new(0.0, x_tran));
        self.stamps = out.stamps;
        self.currents = out.currents;
        let mut values = out.x;
        values.extend(self.currents.iter().flatten());
        Ok(OperatingPoint {
            signals: self.system.signal_names(&layout),
            values,
            gs_iterations: iterations,
            ramp_points,
            kcl_residual: out.kcl_residual,
        })
    }

    fn source_ramp(
        &mut self,
        layout: &MnaLayout,
        hist: &CircuitHistory,
        ctx: &BdfCoefficients,
    ) -> Result<(GsOutcome, usize, usize), SimError> {
        let gs = self.opts.gs;
        let mut scale = 0.0;
        let mut ds = 1.0 / gs.ramp_steps.max(1) as f64;
        let mut halvings = 0;
        let mut x = vec![0.0; layout.size()];
        let mut points = 0;
        let mut iterations = 0;
        loop {
            let next = (scale + ds).min(1.0);
            match self.gs_solve(layout, hist, ctx, next, x.clone(), gs.dc_max_iterations) {
                Ok(o) => {
                    points += 1;
                    iterations += o.iterations;
                    scale = next;
                    if scale >= 1.0 {
                        return Ok((o, points, iterations));
                    }
                    self.pool.commit(false)?;
                    self.stamps = o.stamps;
                    x = o.x;
                }
                Err(GsFailure::Fatal(e)) => return Err(e),
                Err(GsFailure::Retry(msg)) => {
                    self.pool.rollback()?;
                    halvings += 1;
                    if halvings > gs.ramp_bisections {
                        return Err(SimError::OperatingPoint(format!(
                            "source ramp stalled at {:.4} of full value: {msg}",
                            scale
                        )));
                    }
                    ds *= 0.5;
                }
            }
        }
    }

    fn circuit_lte(&self, history: &CircuitHistory, ctx: &BdfCoefficients, x: &[f64]) -> Option<f64> {
        let est = ErrorEstimator::new(&history.times(), ctx)?;
        let nodes = self.layout.node_count();
        let tol = &self.opts.lte;
        let mut worst = 0.0f64;
        let mut hist = Vec::with_capacity(history.len());
        for (i, &xi) in x.iter().enumerate() {
            hist.clear();
            hist.extend((0..history.len()).filter_map(|k| history.get(k)).map(|h| h[i]));
            let abs = if i < nodes { tol.voltage_abs } else { tol.current_abs };
            worst = worst.max(est.error(xi, &hist).abs() / (abs + tol.rel * xi.abs()));
        }
        Some(worst)
    }

    fn row(&self, x: &[f64]) -> Vec<f64> {
        let mut values = x.to_vec();
        values.extend(self.currents.iter().flatten());
        values
    }

    /// Operating point followed by adaptive BDF time stepping to `t_stop`.
    pub fn transient(&mut self, t_stop: f64, uic: bool) -> Result<TransientRecord, SimError> {
        if !(t_stop > 0.0 && t_stop.is_finite()) {
            return Err(SimError::Usage(format!("stop time must be positive, got {t_stop}")));
        }
        if self.history.is_some() {
            return Err(SimError::Usage("a simulator runs one transient".into()));
        }
        let op = self.operating_point(uic)?;
        let step = self.opts.step;
        let mut hist = self.history.take().expect("operating point sets the history");
        let mut rec = TransientRecord {
            signals: self.signal_names(),
            ..TransientRecord::default()
        };
        rec.times.push(0.0);
        rec.values.push(self.row(hist.latest()));
        rec.steps.push(StepInfo {
            dt: 0.0,
            gs_iterations: op.gs_iterations,
            newton_iterations: 0,
            order: 0,
            lte: None,
            kcl_residual: op.kcl_residual,
        });

        let layout = self.layout.clone();
        let mut t = 0.0;
        let mut dt = step.dt_initial.clamp(step.dt_min, step.dt_max);
        while t < t_stop {
            // Breakpoints closer than dt_min are stepped over.
            let breakpoint = self
                .system
                .circuit()
                .next_breakpoint(t + step.dt_min)
                .filter(|&b| b < t_stop);
            let target = breakpoint.unwrap_or(t_stop);
            let (h, hits) = fit_to_target(t, dt, target);
            let t_new = if hits { target } else { t + h };
            let h = t_new - t;
            let ctx = bdf_context(&hist.times(), t_new, step.max_order)?;
            let x0 = hist.latest().to_vec();
            let out = match self.gs_solve(&layout, &hist, &ctx, 1.0, x0, self.opts.gs.max_iterations) {
                Ok(o) => o,
                Err(GsFailure::Fatal(e)) => return Err(e),
                Err(GsFailure::Retry(msg)) => {
                    rec.rejected_steps += 1;
                    dt = self.reject(t, h, msg, 0.5 * h)?;
                    continue;
                }
            };
            let err = max_opt(self.circuit_lte(&hist, &ctx, &out.x), out.device_lte);
            match adapt_step(h, err, &step) {
                StepDecision::Reject { retry_dt } => {
                    rec.rejected_steps += 1;
                    let reason = format!("error estimate {:.3}", err.unwrap_or(f64::NAN));
                    dt = self.reject(t, h, reason, retry_dt)?;
                }
                StepDecision::Accept { next_dt } => {
                    let event = hits && breakpoint.is_some();
                    self.pool.commit(event)?;
                    hist.push(t_new, out.x.clone());
                    if event {
                        hist.restart();
                    }
                    self.stamps = out.stamps;
                    self.currents = out.currents;
                    rec.times.push(t_new);
                    rec.values.push(self.row(&out.x));
                    rec.steps.push(StepInfo {
                        dt: h,
                        gs_iterations: out.iterations,
                        newton_iterations: out.newton_iterations,
                        order: ctx.order,
                        lte: err,
                        kcl_residual: out.kcl_residual,
                    });
                    self.stats.accepted_steps += 1;
                    log::info!(
                        "t = {t_new:.6e} dt = {h:.3e} order {} gs {} newton {}",
                        ctx.order,
                        out.iterations,
                        out.newton_iterations
                    );
                    t = t_new;
                    dt = if event { next_dt.min(step.dt_initial) } else { next_dt };
                }
            }
        }
        self.history = Some(hist);
        Ok(rec)
    }
}
