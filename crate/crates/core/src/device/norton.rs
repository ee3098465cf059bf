use super::{DeviceError, NewtonSolution};

/// Linear model of a device at its linearization bias: electrode currents
/// `I = companion + G·V`.
#[derive(Debug, Clone, PartialEq)]
pub struct NortonEquivalent {
    pub electrodes: Vec<String>,
    /// Electrode voltages the model was linearized at (V).
    pub voltages: Vec<f64>,
    /// `g[i][j] = ∂I_i/∂V_j` (S).
    pub g: Vec<Vec<f64>>,
    /// Companion current sources (A).
    pub companion: Vec<f64>,
    /// Converged electrode currents at `voltages` (A).
    pub currents: Vec<f64>,
}

impl NortonEquivalent {
    /// Model currents at voltages `v`.
    pub fn current_at(&self, v: &[f64]) -> Vec<f64> {
        self.g
            .iter()
            .zip(&self.companion)
            .map(|(row, c)| c + row.iter().zip(v).map(|(g, v)| g * v).sum::<f64>())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }
}

/// Response `y_j = −J⁻¹·∂f/∂V_j` of the unknowns to a unit change of each
/// electrode voltage, computed with the factorization of the converged
/// Newton iterate.
pub fn bias_sensitivities(solution: &NewtonSolution) -> Result<Vec<Vec<f64>>, DeviceError> {
    let sys = &solution.system;
    let n = sys.residual.len();
    sys.bias_sensitivity
        .iter()
        .map(|col| {
            let mut rhs = vec![0.0; n];
            for &(r, v) in col {
                rhs[r] -= v;
            }
            solution.linear.solve(&rhs)
        })
        .collect()
}

/// Reduces a converged device to its Norton equivalent:
/// `G_ij = ∇I_i·y_j + ∂I_i/∂V_j` with `y` from [`bias_sensitivities`].
pub fn norton_reduce(
    electrodes: Vec<String>,
    solution: &NewtonSolution,
) -> Result<NortonEquivalent, DeviceError> {
    Ok(norton_from_sensitivities(electrodes, solution, &bias_sensitivities(solution)?))
}

pub fn norton_from_sensitivities(
    electrodes: Vec<String>,
    solution: &NewtonSolution,
    y: &[Vec<f64>],
) -> NortonEquivalent {
    let sys = &solution.system;
    let ne = sys.currents.len();
    let mut g = vec![vec![0.0; ne]; ne];
    for (j, y) in y.iter().enumerate() {
        for i in 0..ne {
            let dot: f64 = sys.current_gradients[i]
                .iter()
                .map(|&(c, v)| v * y[c])
                .sum();
            g[i][j] = dot + sys.current_bias_derivative[i][j];
        }
    }
    let companion = (0..ne)
        .map(|i| {
            sys.currents[i]
                - g[i]
                    .iter()
                    .zip(&sys.bias)
                    .map(|(g, v)| g * v)
                    .sum::<f64>()
        })
        .collect();
    NortonEquivalent {
        electrodes,
        voltages: sys.bias.clone(),
        g,
        companion,
        currents: sys.currents.clone(),
    }
}
