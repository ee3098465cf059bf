use std::f64::consts::PI;

/// Time-dependent value of an independent source.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Dc(f64),
    /// Trapezoidal pulse train. `fall`, `width` and `period` default to
    /// `rise`, infinity and infinity.
    Pulse {
        low: f64,
        high: f64,
        delay: f64,
        rise: f64,
        fall: f64,
        width: f64,
        period: f64,
    },
    /// `offset + amplitude·e^{−damping·τ}·sin(2π·freq·τ + phase)` for
    /// `τ = t − delay ≥ 0`; phase in degrees.
    Sin {
        offset: f64,
        amplitude: f64,
        freq: f64,
        delay: f64,
        damping: f64,
        phase: f64,
    },
    /// Piecewise linear through `(t, value)` points, held constant outside.
    Pwl(Vec<(f64, f64)>),
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Waveform::Dc(v) => v,
            Waveform::Pulse {
                low,
                high,
                delay,
                rise,
                fall,
                width,
                period,
            } => {
                if t < delay {
                    return low;
                }
                let mut tau = t - delay;
                if period.is_finite() && period > 0.0 {
                    tau %= period;
                }
                if tau < rise {
                    low + (high - low) * tau / rise
                } else if tau < rise + width {
                    high
                } else if tau < rise + width + fall {
                    high + (low - high) * (tau - rise - width) / fall
                } else {
                    low
                }
            }
            Waveform::Sin {
                offset,
                amplitude,
                freq,
                delay,
                damping,
                phase,
            } => {
                let ph = phase * PI / 180.0;
                if t < delay {
                    offset + amplitude * ph.sin()
                } else {
                    let tau = t - delay;
                    offset + amplitude * (-damping * tau).exp() * (2.0 * PI * freq * tau + ph).sin()
                }
            }
            Waveform::Pwl(ref pts) => {
                let Some(first) = pts.first() else {
                    return 0.0;
                };
                if t <= first.0 {
                    return first.1;
                }
                for w in pts.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        return if t1 > t0 {
                            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
                        } else {
                            v1
                        };
                    }
                }
                pts[pts.len() - 1].1
            }
        }
    }

    /// First slope discontinuity strictly after `t`.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        match *self {
            Waveform::Dc(_) => None,
            Waveform::Pulse {
                delay,
                rise,
                fall,
                width,
                period,
                ..
            } => {
                let corners = [0.0, rise, rise + width, rise + width + fall];
                let periodic = period.is_finite() && period > 0.0;
                let first_cycle = if periodic && t > delay {
                    ((t - delay) / period).floor()
                } else {
                    0.0
                };
                let cycles = if periodic { 2 } else { 1 };
                (0..cycles)
                    .flat_map(|k| {
                        let base = delay + (first_cycle + k as f64) * if periodic { period } else { 0.0 };
                        corners.iter().map(move |c| base + c)
                    })
                    .filter(|&b| b.is_finite() && b > t)
                    .min_by(f64::total_cmp)
            }
            Waveform::Sin { delay, .. } => (delay > t).then_some(delay),
            Waveform::Pwl(ref pts) => pts.iter().map(|p| p.0).find(|&b| b > t),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> Waveform {
        Waveform::Pulse {
            low: 0.0,
            high: 5.0,
            delay: 1e-6,
            rise: 10e-9,
            fall: 10e-9,
            width: f64::INFINITY,
            period: f64::INFINITY,
        }
    }

    #[test]
    fn pulse_shape_and_breakpoints() {
        let w = pulse();
        assert_eq!(w.value(0.0), 0.0);
        assert!((w.value(1e-6 + 5e-9) - 2.5).abs() < 1e-9);
        assert_eq!(w.value(1.0), 5.0);
        assert_eq!(w.next_breakpoint(0.0), Some(1e-6));
        assert_eq!(w.next_breakpoint(1e-6), Some(1e-6 + 10e-9));
        assert_eq!(w.next_breakpoint(2e-6), None);
    }

    #[test]
    fn periodic_pulse_repeats() {
        let w = Waveform::Pulse {
            low: 0.0,
            high: 1.0,
            delay: 0.0,
            rise: 1.0,
            fall: 1.0,
            width: 2.0,
            period: 10.0,
        };
        assert_eq!(w.value(13.0), 1.0);
        assert_eq!(w.value(18.0), 0.0);
        assert_eq!(w.next_breakpoint(12.0), Some(13.0));
        assert_eq!(w.next_breakpoint(14.5), Some(20.0));
        assert_eq!(w.next_breakpoint(19.0), Some(20.0));
    }

    #[test]
    fn sin_and_pwl() {
        let s = Waveform::Sin {
            offset: 1.0,
            amplitude: 2.0,
            freq: 50.0,
            delay: 0.0,
            damping: 0.0,
            phase: 90.0,
        };
        assert!((s.value(0.0) - 3.0).abs() < 1e-12);
        assert!((s.value(0.01) + 1.0).abs() < 1e-12);
        let p = Waveform::Pwl(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 2.0)]);
        assert_eq!(p.value(0.5), 1.0);
        assert_eq!(p.value(5.0), 2.0);
        assert_eq!(p.next_breakpoint(0.0), Some(1.0));
        assert_eq!(p.next_breakpoint(3.0), None);
    }
}
