use super::{
    bias_sensitivities, norton_from_sensitivities, solve_predicted, Device, DeviceError, NewtonOptions,
    NortonEquivalent,
};
use crate::circuit::{BdfCoefficients, ErrorEstimator};
use crate::physics::{Carriers, History, Snapshot};

/// Weights of the normalized local-truncation-error measure. Each unknown
/// contributes `|lte| / (abs + rel·|x|)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LteTolerances {
    pub rel: f64,
    /// Potentials and node voltages (V).
    pub voltage_abs: f64,
    /// Branch currents (A).
    pub current_abs: f64,
    /// Carrier densities, as a fraction of the device's largest doping.
    pub density_abs: f64,
}

impl Default for LteTolerances {
    fn default() -> Self {
        Self {
            rel: 1e-3,
            voltage_abs: 1e-4,
            current_abs: 1e-7,
            density_abs: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveRequest {
    pub voltages: Vec<f64>,
    pub ctx: BdfCoefficients,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReply {
    pub norton: NortonEquivalent,
    pub newton_iterations: usize,
    /// Normalized error of the device unknowns; `None` for steady solves or
    /// when too little history exists.
    pub lte: Option<f64>,
}

#[derive(Debug, Clone)]
struct Pending {
    carriers: Carriers,
    bias: Vec<f64>,
    sensitivities: Vec<Vec<f64>>,
    time: f64,
}

/// One device with its accepted history and the iterate of the step in
/// progress. All device-side work of the coupled iteration goes through
/// this type, so in-process and remote execution run the same code.
#[derive(Debug, Clone)]
pub struct DeviceTask {
    device: Device,
    history: History,
    bias: Vec<f64>,
    /// Bias of the second-newest accepted state, while it is in the history.
    prev_bias: Option<Vec<f64>>,
    /// Bias sensitivities of the newest accepted state.
    sensitivities: Vec<Vec<f64>>,
    pending: Option<Pending>,
    opts: NewtonOptions,
    lte: LteTolerances,
}

impl DeviceTask {
    /// Starts from thermal equilibrium at `time`.
    pub fn new(
        device: Device,
        opts: NewtonOptions,
        lte: LteTolerances,
        time: f64,
    ) -> Result<Self, DeviceError> {
        let eq = super::equilibrium(&device, &opts)?;
        let bias = vec![0.0; device.electrode_count()];
        let sensitivities = bias_sensitivities(&eq)?;
        Ok(Self {
            prev_bias: None,
            sensitivities,
            history: History::new(Snapshot {
                time,
                carriers: eq.carriers,
            }),
            device,
            bias,
            pending: None,
            opts,
            lte,
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    /// Bias of the newest accepted state.
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn carriers(&self) -> &Carriers {
        &self.history.latest().carriers
    }

    /// Start state of a solve at time `t` with the bias it corresponds to
    /// and its bias sensitivities. A new time point extrapolates linearly
    /// from the two newest accepted states.
    fn initial_guess(&self, t: f64) -> (Carriers, Vec<f64>, &[Vec<f64>]) {
        if let Some(p) = &self.pending {
            if p.time == t {
                return (p.carriers.clone(), p.bias.clone(), &p.sensitivities);
            }
        }
        let latest = &self.history.latest().carriers;
        if let (Some(prev), Some(prev_bias)) = (self.history.get(1), &self.prev_bias) {
            if t > self.history.latest().time {
                let (t0, t1) = (self.history.latest().time, prev.time);
                let w = (t - t0) / (t0 - t1);
                let lerp = |a: &[f64], b: &[f64]| -> Vec<f64> {
                    a.iter().zip(b).map(|(a, b)| a + w * (a - b)).collect()
                };
                let c = Carriers {
                    psi: lerp(&latest.psi, &prev.carriers.psi),
                    n: lerp(&latest.n, &prev.carriers.n),
                    p: lerp(&latest.p, &prev.carriers.p),
                };
                if c.n.iter().chain(&c.p).all(|&v| v > 0.0) {
                    return (c, lerp(&self.bias, prev_bias), &self.sensitivities);
                }
            }
        }
        (latest.clone(), self.bias.clone(), &self.sensitivities)
    }

    /// Solves at the requested electrode voltages and returns the Norton
    /// equivalent. The result is kept as the pending iterate of the step.
    pub fn solve(&mut self, req: &SolveRequest) -> Result<SolveReply, DeviceError> {
        let (guess, from_bias, sens) = self.initial_guess(req.ctx.time);
        let sol = solve_predicted(
            &self.device,
            &guess,
            sens,
            &from_bias,
            &self.history,
            &req.voltages,
            &req.ctx,
            &self.opts,
        )?;
        let sensitivities = bias_sensitivities(&sol)?;
        let norton = norton_from_sensitivities(self.device.electrode_names(), &sol, &sensitivities);
        let lte = self.error_estimate(&sol.carriers, &req.ctx);
        let iterations = sol.iterations;
        self.pending = Some(Pending {
            carriers: sol.carriers,
            bias: req.voltages.clone(),
            sensitivities,
            time: req.ctx.time,
        });
        Ok(SolveReply {
            norton,
            newton_iterations: iterations,
            lte,
        })
    }

    fn error_estimate(&self, x: &Carriers, ctx: &BdfCoefficients) -> Option<f64> {
        let est = ErrorEstimator::new(&self.history.times(), ctx)?;
        let scale = self.device.density_scale();
        let tol = &self.lte;
        let mut worst = 0.0f64;
        let fields: [(&[f64], fn(&Carriers) -> &[f64], f64); 3] = [
            (&x.psi, |c| &c.psi, tol.voltage_abs),
            (&x.n, |c| &c.n, tol.density_abs * scale),
            (&x.p, |c| &c.p, tol.density_abs * scale),
        ];
        let mut hist = Vec::with_capacity(est.weights.len());
        for (now, get, abs) in fields {
            for (i, &v) in now.iter().enumerate() {
                hist.clear();
                hist.extend(self.history.iter().map(|s| get(&s.carriers)[i]));
                let e = est.error(v, &hist).abs() / (abs + tol.rel * v.abs());
                worst = worst.max(e);
            }
        }
        Some(worst)
    }

    /// Accepts the pending iterate as the state at its time. With `restart`
    /// the older history is dropped so the next step starts with BDF-1.
    pub fn commit(&mut self, restart: bool) -> Result<(), DeviceError> {
        let p = self
            .pending
            .take()
            .ok_or_else(|| DeviceError::Time("commit without a pending solve".into()))?;
        if p.time == self.history.latest().time {
            // Steady re-solve at the same time point replaces the state.
            self.history = History::new(Snapshot {
                time: p.time,
                carriers: p.carriers,
            });
            self.prev_bias = None;
        } else {
            self.history.push(Snapshot {
                time: p.time,
                carriers: p.carriers,
            });
            self.prev_bias = Some(std::mem::take(&mut self.bias));
        }
        if restart {
            self.history.restart();
            self.prev_bias = None;
        }
        self.bias = p.bias;
        self.sensitivities = p.sensitivities;
        Ok(())
    }

    /// Discards the pending iterate.
    pub fn rollback(&mut self) {
        self.pending = None;
    }

    /// Drops history older than the newest accepted point.
    pub fn restart_history(&mut self) {
        self.history.restart();
        self.prev_bias = None;
    }
}
