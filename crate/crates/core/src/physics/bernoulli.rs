/// Below this magnitude the series expansion is used.
const SERIES_CUTOFF: f64 = 1e-4;
const DERIVATIVE_SERIES_CUTOFF: f64 = 1e-2;

/// Bernoulli function `B(x) = x / (exp(x) - 1)`, with `B(0) = 1`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        1.0 - x * (0.5 - x / 12.0)
    } else if x > 700.0 {
        x * (-x).exp()
    } else {
        x / x.exp_m1()
    }
}

/// `dB/dx`.
pub fn bernoulli_derivative(x: f64) -> f64 {
    if x.abs() < DERIVATIVE_SERIES_CUTOFF {
        let x2 = x * x;
        -0.5 + x / 6.0 - x * x2 / 180.0 + x * x2 * x2 / 5040.0
    } else {
        let b = bernoulli(x);
        b / x * (1.0 - b - x)
    }
}
