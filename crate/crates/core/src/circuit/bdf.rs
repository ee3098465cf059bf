//! Variable-step BDF coefficients and the matching local-truncation-error
//! estimate.

use super::CircuitError;

/// `dx/dt ≈ a[0]·x_new + a[1]·x_{n} + a[2]·x_{n-1}`.
///
/// `order == 0` denotes a steady-state solve (all coefficients zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdfCoefficients {
    pub order: u8,
    pub a: [f64; 3],
    /// Target time of the step (s).
    pub time: f64,
    /// Step size (s); zero for steady state.
    pub dt: f64,
}

impl BdfCoefficients {
    pub fn steady(time: f64) -> Self {
        Self {
            order: 0,
            a: [0.0; 3],
            time,
            dt: 0.0,
        }
    }

    pub fn is_steady(&self) -> bool {
        self.order == 0
    }

    /// Applies the formula to a value and its history (newest first).
    pub fn derivative(&self, x: f64, history: &[f64]) -> f64 {
        match self.order {
            0 => 0.0,
            1 => self.a[0] * x + self.a[1] * history[0],
            _ => self.a[0] * x + self.a[1] * history[0] + self.a[2] * history[1],
        }
    }
}

/// Coefficients for a step to `t_new` given accepted times (newest first).
///
/// BDF-2 is used when two history points are available and `max_order`
/// allows it; otherwise BDF-1.
pub fn bdf_context(
    history_times: &[f64],
    t_new: f64,
    max_order: u8,
) -> Result<BdfCoefficients, CircuitError> {
    let t_n = *history_times
        .first()
        .ok_or_else(|| CircuitError::Time("empty history".into()))?;
    let h = t_new - t_n;
    if !(h > 0.0) {
        return Err(CircuitError::Time(format!("step size must be positive, got {h:e}")));
    }
    if max_order >= 2 && history_times.len() >= 2 {
        let h1 = t_n - history_times[1];
        if !(h1 > 0.0) {
            return Err(CircuitError::Time(format!(
                "history times not increasing ({h1:e})"
            )));
        }
        let w = h / h1;
        Ok(BdfCoefficients {
            order: 2,
            a: [
                (1.0 + 2.0 * w) / ((1.0 + w) * h),
                -(1.0 + w) / h,
                w * w / ((1.0 + w) * h),
            ],
            time: t_new,
            dt: h,
        })
    } else {
        Ok(BdfCoefficients {
            order: 1,
            a: [1.0 / h, -1.0 / h, 0.0],
            time: t_new,
            dt: h,
        })
    }
}

/// Predictor weights and error constant for one step.
///
/// The local truncation error of the corrector is estimated as
/// `factor · (x_new − Σ weights[k]·x_hist[k])`, where the predictor is the
/// polynomial through the available history points evaluated at `t_new`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimator {
    pub weights: Vec<f64>,
    pub factor: f64,
}

impl ErrorEstimator {
    /// `None` when fewer than two history points exist.
    pub fn new(history_times: &[f64], ctx: &BdfCoefficients) -> Option<Self> {
        if ctx.is_steady() || history_times.len() < 2 {
            return None;
        }
        let t_new = ctx.time;
        let h = ctx.dt;
        let h1 = history_times[0] - history_times[1];
        if ctx.order >= 2 && history_times.len() >= 3 {
            let pts = &history_times[..3];
            let h2 = history_times[1] - history_times[2];
            let [a0, a1, a2] = ctx.a;
            let num = a1 * h.powi(3) + a2 * (h + h1).powi(3);
            let den = a0 * h * (h + h1) * (h + h1 + h2);
            Some(Self {
                weights: lagrange_weights(pts, t_new),
                factor: (num / den).abs(),
            })
        } else {
            Some(Self {
                weights: lagrange_weights(&history_times[..2], t_new),
                factor: h / (h + h1),
            })
        }
    }

    pub fn predict(&self, history: &[f64]) -> f64 {
        self.weights.iter().zip(history).map(|(w, x)| w * x).sum()
    }

    pub fn error(&self, x_new: f64, history: &[f64]) -> f64 {
        self.factor * (x_new - self.predict(history))
    }
}

fn lagrange_weights(points: &[f64], t: f64) -> Vec<f64> {
    (0..points.len())
        .map(|k| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &tj)| (t - tj) / (points[k] - tj))
                .product()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_step_bdf2() {
        let c = bdf_context(&[2.0, 1.0], 3.0, 2).unwrap();
        assert_eq!(c.order, 2);
        assert!((c.a[0] - 1.5).abs() < 1e-15);
        assert!((c.a[1] + 2.0).abs() < 1e-15);
        assert!((c.a[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn startup_is_bdf1() {
        let c = bdf_context(&[0.0], 0.5, 2).unwrap();
        assert_eq!(c.order, 1);
        assert_eq!(c.a, [2.0, -2.0, 0.0]);
        let forced = bdf_context(&[1.0, 0.0], 1.5, 1).unwrap();
        assert_eq!(forced.order, 1);
    }

    #[test]
    fn variable_step_exact_on_quadratics() {
        // steps of 2 then 1
        let (t0, t1, t2) = (0.0, 2.0, 3.0);
        let c = bdf_context(&[t1, t0], t2, 2).unwrap();
        let polys: [fn(f64) -> (f64, f64); 3] = [
            |_| (1.0, 0.0),
            |t| (t, 1.0),
            |t| (t * t, 2.0 * t),
        ];
        for f in polys {
            let approx = c.a[0] * f(t2).0 + c.a[1] * f(t1).0 + c.a[2] * f(t0).0;
            assert!((approx - f(t2).1).abs() < 1e-13, "{approx} vs {}", f(t2).1);
        }
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(bdf_context(&[1.0], 1.0, 2).is_err());
    }

    #[test]
    fn constant_step_error_constant() {
        let c = bdf_context(&[2.0, 1.0], 3.0, 2).unwrap();
        let e = ErrorEstimator::new(&[2.0, 1.0, 0.0], &c).unwrap();
        assert!((e.factor - 2.0 / 9.0).abs() < 1e-14);
        // quadratic predictor is exact on t²
        let hist = [4.0, 1.0, 0.0];
        assert!((e.predict(&hist) - 9.0).abs() < 1e-12);
    }
}
