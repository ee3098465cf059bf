use super::{assemble, Device, DeviceError, DeviceResidualSystem};
use crate::circuit::BdfCoefficients;
use crate::physics::{Carriers, History};
use crate::sparse::{Factorization, SparseMatrix};

/// Smallest density kept after an update (cm⁻³).
pub const DENSITY_FLOOR: f64 = 1e-30;

/// Consecutive iterations with an exhausted line search after which the
/// iteration is abandoned.
const STALL_LIMIT: usize = 3;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Absolute tolerance on Poisson rows (C).
    pub poisson_abs: f64,
    /// Absolute tolerance on continuity rows (A).
    pub continuity_abs: f64,
    /// Relative tolerance against the row magnitude.
    pub rel: f64,
    /// Bound on the last scaled update.
    pub update_tol: f64,
    /// Largest potential change per step, in thermal voltages.
    pub psi_clamp: f64,
    /// Fraction of the distance to zero a density may move in one step.
    pub positivity_fraction: f64,
    pub max_halvings: usize,
    /// Row/column equilibration of the linear systems.
    pub scaling: bool,
    /// Bisection depth of the bias continuation.
    pub max_bisections: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            poisson_abs: 1e-26,
            continuity_abs: 5e-18,
            rel: 1e-5,
            update_tol: 1e-8,
            psi_clamp: 2.0,
            positivity_fraction: 0.99,
            max_halvings: 10,
            scaling: true,
            max_bisections: 6,
        }
    }
}

/// Factorized Jacobian at a converged state, together with the scaling used
/// to factor it.
#[derive(Debug, Clone)]
pub struct LinearizedDevice {
    factorization: Factorization,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
}

impl LinearizedDevice {
    pub fn new(jacobian: &SparseMatrix, col_scale: Vec<f64>) -> Result<Self, DeviceError> {
        let n = jacobian.n_rows();
        let mut row_max = vec![0.0f64; n];
        for (r, c, v) in jacobian.iter() {
            row_max[r] = row_max[r].max((v * col_scale[c]).abs());
        }
        let row_scale: Vec<f64> = row_max
            .iter()
            .map(|&m| if m > 0.0 { 1.0 / m } else { 1.0 })
            .collect();
        let factorization = Factorization::new(&jacobian.scaled(&row_scale, &col_scale))?;
        Ok(Self {
            factorization,
            row_scale,
            col_scale,
        })
    }

    /// Without equilibration.
    pub fn unscaled(jacobian: &SparseMatrix) -> Result<Self, DeviceError> {
        let n = jacobian.n_rows();
        Ok(Self {
            factorization: Factorization::new(jacobian)?,
            row_scale: vec![1.0; n],
            col_scale: vec![1.0; n],
        })
    }

    /// Solves `J·y = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, DeviceError> {
        let rhs: Vec<f64> = b.iter().zip(&self.row_scale).map(|(b, s)| b * s).collect();
        let y = self.factorization.solve(&rhs)?;
        Ok(y.iter().zip(&self.col_scale).map(|(y, s)| y * s).collect())
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub carriers: Carriers,
    /// System assembled at `carriers`.
    pub system: DeviceResidualSystem,
    /// Jacobian of `system`, factorized.
    pub linear: LinearizedDevice,
    pub iterations: usize,
    /// Total line-search halvings over all iterations.
    pub halvings: usize,
}

/// Largest residual per equation class: (Poisson, electron, hole).
pub fn residual_norms(residual: &[f64]) -> (f64, f64, f64) {
    let mut out = [0.0f64; 3];
    for (k, r) in residual.iter().enumerate() {
        out[k % 3] = out[k % 3].max(r.abs());
    }
    (out[0], out[1], out[2])
}

fn residual_converged(sys: &DeviceResidualSystem, opts: &NewtonOptions) -> bool {
    sys.residual
        .iter()
        .zip(&sys.magnitude)
        .enumerate()
        .all(|(k, (&r, &m))| {
            let abs = if k % 3 == 0 {
                opts.poisson_abs
            } else {
                opts.continuity_abs
            };
            r.abs() <= abs || r.abs() <= opts.rel * m
        })
}

fn column_scale(device: &Device, opts: &NewtonOptions) -> Vec<f64> {
    let n = device.unknown_count();
    if !opts.scaling {
        return vec![1.0; n];
    }
    let vt = device.thermal_voltage();
    let c0 = device.density_scale();
    (0..n).map(|k| if k % 3 == 0 { vt } else { c0 }).collect()
}

fn linearize(
    device: &Device,
    jacobian: &SparseMatrix,
    opts: &NewtonOptions,
) -> Result<LinearizedDevice, DeviceError> {
    if opts.scaling {
        LinearizedDevice::new(jacobian, column_scale(device, opts))
    } else {
        LinearizedDevice::unscaled(jacobian)
    }
}

/// Weighted sum of squares used by the line search; weights are frozen at
/// the start of the iteration so trial points are compared on one scale.
fn merit(residual: &[f64], weights: &[f64]) -> f64 {
    residual
        .iter()
        .zip(weights)
        .map(|(r, w)| (r / w) * (r / w))
        .sum()
}

/// `x + alpha·dx`, except that no density falls below `(1 − fraction)` of
/// its current value. Returns whether any density was limited.
fn apply(x: &[f64], dx: &[f64], alpha: f64, fraction: f64) -> (Vec<f64>, bool) {
    let mut limited = false;
    let out = x
        .iter()
        .zip(dx)
        .enumerate()
        .map(|(k, (&x, &d))| {
            let v = x + alpha * d;
            if k % 3 == 0 {
                return v;
            }
            let floor = (x * (1.0 - fraction)).max(DENSITY_FLOOR);
            if v < floor {
                limited = true;
                floor
            } else {
                v
            }
        })
        .collect();
    (out, limited)
}

/// Damped Newton iteration on the device equations at fixed bias.
///
/// Converged when every row meets its absolute or relative tolerance and the
/// last update was undamped and below `update_tol` in scaled units. At least
/// one update is always taken.
pub fn newton_solve(
    device: &Device,
    initial: &Carriers,
    history: &History,
    bias: &[f64],
    ctx: &BdfCoefficients,
    opts: &NewtonOptions,
) -> Result<NewtonSolution, DeviceError> {
    initial.validate(device.vertex_count())?;
    let vt = device.thermal_voltage();
    let ni = device.intrinsic_density();
    let clamp = opts.psi_clamp * vt;
    let mut x = initial.to_vector();
    let mut last_update: Option<f64> = None;
    let mut halvings = 0;
    let mut stalled = 0;
    let mut taken = opts.max_iterations;
    let mut sys = assemble(device, &Carriers::from_vector(&x), history, bias, ctx)?;

    for iteration in 0..=opts.max_iterations {
        let res_ok = residual_converged(&sys, opts);
        if res_ok && last_update.is_some_and(|u| u <= opts.update_tol) {
            let linear = linearize(device, &sys.jacobian, opts)?;
            return Ok(NewtonSolution {
                carriers: Carriers::from_vector(&x),
                system: sys,
                linear,
                iterations: iteration,
                halvings,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }

        let linear = linearize(device, &sys.jacobian, opts)?;
        let rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
        let mut dx = linear.solve(&rhs)?;

        let mut damped = false;
        for k in (0..dx.len()).step_by(3) {
            if dx[k].abs() > clamp {
                dx[k] = clamp.copysign(dx[k]);
                damped = true;
            }
        }
        let mut alpha = 1.0f64;
        let (mut trial, limited) = apply(&x, &dx, alpha, opts.positivity_fraction);
        damped |= limited;
        let mut trial_sys = assemble(device, &Carriers::from_vector(&trial), history, bias, ctx)?;
        if !res_ok {
            let weights: Vec<f64> = sys
                .magnitude
                .iter()
                .enumerate()
                .map(|(k, &m)| {
                    let abs = if k % 3 == 0 {
                        opts.poisson_abs
                    } else {
                        opts.continuity_abs
                    };
                    m.max(abs)
                })
                .collect();
            let m0 = merit(&sys.residual, &weights);
            let mut tries = 0;
            while merit(&trial_sys.residual, &weights) >= m0 && tries < opts.max_halvings {
                alpha *= 0.5;
                tries += 1;
                damped = true;
                trial = apply(&x, &dx, alpha, opts.positivity_fraction).0;
                trial_sys = assemble(device, &Carriers::from_vector(&trial), history, bias, ctx)?;
            }
            halvings += tries;
            stalled = if tries == opts.max_halvings { stalled + 1 } else { 0 };
        }

        if log::log_enabled!(log::Level::Trace) {
            let (rp, rn, rh) = residual_norms(&trial_sys.residual);
            log::trace!("newton {iteration}: alpha {alpha:.3e} damped {damped} residuals {rp:.3e} {rn:.3e} {rh:.3e}");
        }
        last_update = if damped {
            None
        } else {
            let mut u = 0.0f64;
            for k in 0..dx.len() {
                let s = if k % 3 == 0 {
                    vt
                } else {
                    trial[k].abs() + ni
                };
                u = u.max((alpha * dx[k]).abs() / s);
            }
            Some(u)
        };
        x = trial;
        sys = trial_sys;
        if stalled >= STALL_LIMIT {
            log::trace!("newton stalled after {iteration} iterations");
            taken = iteration + 1;
            break;
        }
    }

    let (poisson, electron, hole) = residual_norms(&sys.residual);
    Err(DeviceError::NonConvergence {
        iterations: taken,
        poisson,
        electron,
        hole,
    })
}

/// Newton solve from a state converged at `from_bias`; when the direct
/// attempt fails the bias step is bisected recursively.
pub fn solve_continued(
    device: &Device,
    start: &Carriers,
    from_bias: &[f64],
    history: &History,
    bias: &[f64],
    ctx: &BdfCoefficients,
    opts: &NewtonOptions,
) -> Result<NewtonSolution, DeviceError> {
    continue_rec(device, start, None, from_bias, history, bias, ctx, opts, 0)
}

/// As [`solve_continued`], starting from the first-order prediction
/// `x + Σ_j y_j·ΔV_j` built from the bias sensitivities `y` of `start`
/// (see [`bias_sensitivities`](super::bias_sensitivities)).
#[allow(clippy::too_many_arguments)]
pub fn solve_predicted(
    device: &Device,
    start: &Carriers,
    sensitivities: &[Vec<f64>],
    from_bias: &[f64],
    history: &History,
    bias: &[f64],
    ctx: &BdfCoefficients,
    opts: &NewtonOptions,
) -> Result<NewtonSolution, DeviceError> {
    continue_rec(device, start, Some(sensitivities), from_bias, history, bias, ctx, opts, 0)
}

/// Densities move multiplicatively so the guess stays positive; to first
/// order this equals the linear prediction.
pub fn predict(start: &Carriers, sensitivities: &[Vec<f64>], from_bias: &[f64], bias: &[f64]) -> Carriers {
    let mut x = start.to_vector();
    let mut delta = vec![0.0; x.len()];
    for ((y, a), b) in sensitivities.iter().zip(from_bias).zip(bias) {
        let dv = b - a;
        if dv != 0.0 {
            for (d, y) in delta.iter_mut().zip(y) {
                *d += y * dv;
            }
        }
    }
    for (k, (x, d)) in x.iter_mut().zip(&delta).enumerate() {
        if k % 3 == 0 {
            *x += d;
        } else if *x > 0.0 {
            *x *= (d / *x).clamp(-40.0, 40.0).exp();
        }
    }
    Carriers::from_vector(&x)
}

#[allow(clippy::too_many_arguments)]
fn continue_rec(
    device: &Device,
    start: &Carriers,
    sensitivities: Option<&[Vec<f64>]>,
    from_bias: &[f64],
    history: &History,
    bias: &[f64],
    ctx: &BdfCoefficients,
    opts: &NewtonOptions,
    depth: usize,
) -> Result<NewtonSolution, DeviceError> {
    let guess = match sensitivities {
        Some(y) if from_bias != bias => predict(start, y, from_bias, bias),
        _ => start.clone(),
    };
    match newton_solve(device, &guess, history, bias, ctx, opts) {
        Ok(sol) => Ok(sol),
        Err(e @ (DeviceError::NonConvergence { .. } | DeviceError::Linear(_)))
            if depth < opts.max_bisections && from_bias != bias =>
        {
            log::debug!("device Newton failed ({e}); bisecting bias step at depth {depth}");
            let mid: Vec<f64> = from_bias
                .iter()
                .zip(bias)
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let half = continue_rec(device, start, sensitivities, from_bias, history, &mid, ctx, opts, depth + 1)?;
            let y = super::bias_sensitivities(&half)?;
            continue_rec(device, &half.carriers, Some(&y), &mid, history, bias, ctx, opts, depth + 1)
        }
        Err(e) => Err(e),
    }
}

/// Thermal-equilibrium state at zero bias.
///
/// The nonlinear Poisson equation with Boltzmann densities is solved first;
/// its solution is an equilibrium of the full system up to discretization
/// of the densities, and the coupled Newton iteration polishes it.
pub fn equilibrium(device: &Device, opts: &NewtonOptions) -> Result<NewtonSolution, DeviceError> {
    let guess = boltzmann_poisson(device, opts)?;
    let history = History::new(crate::physics::Snapshot {
        time: 0.0,
        carriers: guess.clone(),
    });
    let bias = vec![0.0; device.electrode_count()];
    newton_solve(device, &guess, &history, &bias, &BdfCoefficients::steady(0.0), opts)
}

fn boltzmann_poisson(device: &Device, opts: &NewtonOptions) -> Result<Carriers, DeviceError> {
    let mesh = device.mesh();
    let m = mesh.len();
    let vt = device.thermal_voltage();
    let ni = device.intrinsic_density();
    let eps_a = device.models().permittivity() * mesh.area();
    let qa = crate::physics::Q * mesh.area();
    let doping = device.net_doping();
    let mut psi = device.neutral_guess().psi;
    let mut fixed = vec![None; m];
    for c in device.contacts() {
        fixed[c.vertex] = Some(c.built_in);
        psi[c.vertex] = c.built_in;
    }

    let clamp = opts.psi_clamp * vt;
    for _ in 0..opts.max_iterations.max(100) {
        let mut f = vec![0.0; m];
        let mut mag = vec![0.0; m];
        let mut trip = Vec::with_capacity(3 * m);
        for i in 0..m {
            if fixed[i].is_some() {
                trip.push((i, i, 1.0));
                continue;
            }
            let qav = qa * mesh.volume(i);
            let n = ni * (psi[i] / vt).exp();
            let p = ni * (-psi[i] / vt).exp();
            f[i] += qav * (p - n + doping[i]);
            mag[i] += qav * (p + n + doping[i].abs());
            trip.push((i, i, -qav * (p + n) / vt));
            for j in mesh.neighbors(i) {
                let c = eps_a / (mesh.vertices()[j] - mesh.vertices()[i]).abs();
                f[i] += c * (psi[j] - psi[i]);
                mag[i] += (c * (psi[j] - psi[i])).abs();
                trip.push((i, i, -c));
                trip.push((i, j, c));
            }
        }
        let jac = SparseMatrix::assemble(m, m, &trip)?;
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dpsi = Factorization::new(&jac)?.solve(&rhs)?;
        let mut largest = 0.0f64;
        for i in 0..m {
            let d = dpsi[i].clamp(-clamp, clamp);
            psi[i] += d;
            largest = largest.max(d.abs());
        }
        let converged = f
            .iter()
            .zip(&mag)
            .all(|(f, m)| f.abs() <= opts.poisson_abs || f.abs() <= opts.rel * m);
        if converged && largest <= opts.update_tol * vt {
            let n = psi.iter().map(|v| ni * (v / vt).exp()).collect();
            let p = psi.iter().map(|v| ni * (-v / vt).exp()).collect();
            return Ok(Carriers { psi, n, p });
        }
    }
    Err(DeviceError::NonConvergence {
        iterations: opts.max_iterations.max(100),
        poisson: f64::NAN,
        electron: 0.0,
        hole: 0.0,
    })
}
