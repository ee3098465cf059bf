/// Bounds and start values of the adaptive time step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StepOptions {
    pub dt_min: f64,
    pub dt_max: f64,
    /// First step, and first step after every breakpoint.
    pub dt_initial: f64,
    pub max_order: u8,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            dt_min: 1e-12,
            dt_max: 1e-5,
            dt_initial: 1e-9,
            max_order: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepDecision {
    Accept { next_dt: f64 },
    Reject { retry_dt: f64 },
}

/// Step-size rule for a normalized error estimate `err`: accept when
/// `err ≤ 1` and scale by `clamp(err^(−1/3), 0.2, 2)`, otherwise retry at
/// half the step. Steps without an estimate keep their size.
pub fn adapt_step(dt: f64, err: Option<f64>, opts: &StepOptions) -> StepDecision {
    match err {
        Some(e) if e > 1.0 || e.is_nan() => StepDecision::Reject { retry_dt: 0.5 * dt },
        Some(e) => {
            let factor = if e > 0.0 { e.powf(-1.0 / 3.0).clamp(0.2, 2.0) } else { 2.0 };
            StepDecision::Accept {
                next_dt: (dt * factor).clamp(opts.dt_min, opts.dt_max),
            }
        }
        None => StepDecision::Accept {
            next_dt: dt.clamp(opts.dt_min, opts.dt_max),
        },
    }
}

/// Shortens a step so it lands on `target` (the next breakpoint or the end
/// of the run) and avoids leaving a sliver shorter than a quarter step.
/// Returns the step and whether it ends exactly at `target`.
pub fn fit_to_target(t: f64, dt: f64, target: f64) -> (f64, bool) {
    let remaining = target - t;
    if dt >= remaining {
        (remaining, true)
    } else if remaining - dt < 0.25 * dt {
        (0.5 * remaining, false)
    } else {
        (dt, false)
    }
}
