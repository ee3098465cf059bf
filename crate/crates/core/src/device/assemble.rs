use std::collections::BTreeMap;

use super::{Device, DeviceError};
use crate::circuit::BdfCoefficients;
use crate::physics::{bernoulli, bernoulli_derivative, Carriers, History, Q};
use crate::sparse::{SparseMatrix, Triplet};

/// Index of unknown `var` (0 = ψ, 1 = n, 2 = p) at vertex `i`.
#[inline]
pub fn unknown(i: usize, var: usize) -> usize {
    3 * i + var
}

#[derive(Debug, Clone, Default)]
struct Row {
    value: f64,
    magnitude: f64,
    entries: Vec<(usize, f64)>,
}

impl Row {
    fn add(&mut self, value: f64) {
        self.value += value;
        self.magnitude += value.abs();
    }

    fn d(&mut self, col: usize, v: f64) {
        self.entries.push((col, v));
    }
}

/// Discrete device equations at one state.
///
/// Residual rows are control-volume integrals: Poisson rows in coulombs,
/// continuity rows in amperes. Contact vertices carry weighted Dirichlet rows
/// in the same units.
#[derive(Debug, Clone)]
pub struct DeviceResidualSystem {
    pub residual: Vec<f64>,
    /// Sum of absolute values of the terms that make up each row; the
    /// reference for relative tolerances.
    pub magnitude: Vec<f64>,
    pub jacobian: SparseMatrix,
    pub bias: Vec<f64>,
    /// `∂f/∂V_j` for each electrode `j`, as sparse `(row, value)` lists.
    pub bias_sensitivity: Vec<Vec<(usize, f64)>>,
    /// Current flowing into the device at each electrode (A).
    pub currents: Vec<f64>,
    /// `∂I_i/∂x` as sparse `(col, value)` lists.
    pub current_gradients: Vec<Vec<(usize, f64)>>,
    /// Direct `∂I_i/∂V_j` (no internal-state path).
    pub current_bias_derivative: Vec<Vec<f64>>,
}

fn history_values<'a>(
    history: &'a History,
    ctx: &BdfCoefficients,
) -> Result<Vec<&'a Carriers>, DeviceError> {
    let needed = ctx.order as usize;
    (0..needed)
        .map(|k| {
            history.get(k).map(|s| &s.carriers).ok_or_else(|| {
                DeviceError::Time(format!(
                    "BDF order {} needs {} history points, have {}",
                    ctx.order,
                    needed,
                    history.len()
                ))
            })
        })
        .collect()
}

/// Free (non-Dirichlet) Poisson row value at vertex `i`: the net
/// electric-displacement flux out of its control volume minus its charge.
fn poisson_value(device: &Device, x: &Carriers, i: usize) -> f64 {
    let mesh = device.mesh();
    let eps_a = device.models().permittivity() * mesh.area();
    let mut v = Q * mesh.area() * mesh.volume(i) * (x.p[i] - x.n[i] + device.net_doping()[i]);
    for j in mesh.neighbors(i) {
        let h = (mesh.vertices()[j] - mesh.vertices()[i]).abs();
        v += eps_a * (x.psi[j] - x.psi[i]) / h;
    }
    v
}

pub fn assemble(
    device: &Device,
    x: &Carriers,
    history: &History,
    bias: &[f64],
    ctx: &BdfCoefficients,
) -> Result<DeviceResidualSystem, DeviceError> {
    let contacts = device.contacts();
    if bias.len() != contacts.len() {
        return Err(DeviceError::MissingBias {
            expected: contacts.len(),
            got: bias.len(),
        });
    }
    let mesh = device.mesh();
    let m = mesh.len();
    x.validate(m)?;
    let hist = history_values(history, ctx)?;
    let models = device.models();
    let vt = device.thermal_voltage();
    let area = mesh.area();
    let eps_a = models.permittivity() * area;
    let qa = Q * area;
    let doping = device.net_doping();
    let a0 = ctx.a[0];

    let mut rows: Vec<Row> = vec![Row::default(); 3 * m];

    for i in 0..m {
        let qav = qa * mesh.volume(i);
        let (n, p) = (x.n[i], x.p[i]);

        let rp = &mut rows[unknown(i, 0)];
        rp.value += qav * (p - n + doping[i]);
        rp.magnitude += qav * (p.abs() + n.abs() + doping[i].abs());
        rp.d(unknown(i, 2), qav);
        rp.d(unknown(i, 1), -qav);

        let hn: Vec<f64> = hist.iter().map(|s| s.n[i]).collect();
        let hp: Vec<f64> = hist.iter().map(|s| s.p[i]).collect();
        let dn_dt = ctx.derivative(n, &hn);
        let dp_dt = ctx.derivative(p, &hp);
        let time_mag = |v: f64, h: &[f64]| -> f64 {
            (ctx.a[0] * v).abs() + h.iter().zip(&ctx.a[1..]).map(|(x, a)| (a * x).abs()).sum::<f64>()
        };

        let r = models.recombination(n, p, device.tau_n()[i], device.tau_p()[i]);
        let g = models.generation(n, p);
        let net = r.rate - g.rate;
        let dnet_dn = r.d_dn - g.d_dn;
        let dnet_dp = r.d_dp - g.d_dp;

        let re = &mut rows[unknown(i, 1)];
        re.value += qav * (dn_dt + net);
        re.magnitude += qav * (time_mag(n, &hn) + r.rate.abs() + g.rate.abs());
        re.d(unknown(i, 1), qav * (a0 + dnet_dn));
        re.d(unknown(i, 2), qav * dnet_dp);

        let rh = &mut rows[unknown(i, 2)];
        rh.value += qav * (dp_dt + net);
        rh.magnitude += qav * (time_mag(p, &hp) + r.rate.abs() + g.rate.abs());
        rh.d(unknown(i, 2), qav * (a0 + dnet_dp));
        rh.d(unknown(i, 1), qav * dnet_dn);
    }

    let (mu_n0, mu_p0) = device.edge_mobility();
    for e in 0..mesh.edge_count() {
        let (i, j) = (e, e + 1);
        let h = mesh.edge_length(e);

        // Poisson flux
        let c = eps_a / h;
        let flux = c * (x.psi[j] - x.psi[i]);
        {
            let ri = &mut rows[unknown(i, 0)];
            ri.add(flux);
            ri.d(unknown(i, 0), -c);
            ri.d(unknown(j, 0), c);
        }
        {
            let rj = &mut rows[unknown(j, 0)];
            rj.add(-flux);
            rj.d(unknown(j, 0), -c);
            rj.d(unknown(i, 0), c);
        }

        let dpsi = x.psi[j] - x.psi[i];
        let field = dpsi.abs() / h;
        let sign = if dpsi > 0.0 {
            1.0
        } else if dpsi < 0.0 {
            -1.0
        } else {
            0.0
        };
        let u = dpsi / vt;
        let (bp, bm) = (bernoulli(u), bernoulli(-u));
        let (dbp, dbm) = (bernoulli_derivative(u), bernoulli_derivative(-u));

        // Electron particle flux i → j: (D/h)(n_i B(−u) − n_j B(u)).
        {
            let (mu, dmu) = models.electron.with_field(mu_n0[e], field);
            let d = mu * vt;
            let dd_dpsij = vt * dmu * sign / h;
            let bracket = x.n[i] * bm - x.n[j] * bp;
            let gam = d / h * bracket;
            let dg_du = d / h * (-x.n[i] * dbm - x.n[j] * dbp);
            let dg_dpsij = dg_du / vt + bracket / h * dd_dpsij;
            let dg_dpsii = -dg_du / vt - bracket / h * dd_dpsij;
            let dg_dni = d / h * bm;
            let dg_dnj = -d / h * bp;
            let mag = qa * d / h * ((x.n[i] * bm).abs() + (x.n[j] * bp).abs());
            for (row_v, s) in [(i, 1.0), (j, -1.0)] {
                let r = &mut rows[unknown(row_v, 1)];
                r.value += s * qa * gam;
                r.magnitude += mag;
                r.d(unknown(i, 0), s * qa * dg_dpsii);
                r.d(unknown(j, 0), s * qa * dg_dpsij);
                r.d(unknown(i, 1), s * qa * dg_dni);
                r.d(unknown(j, 1), s * qa * dg_dnj);
            }
        }
        // Hole particle flux i → j: (D/h)(p_i B(u) − p_j B(−u)).
        {
            let (mu, dmu) = models.hole.with_field(mu_p0[e], field);
            let d = mu * vt;
            let dd_dpsij = vt * dmu * sign / h;
            let bracket = x.p[i] * bp - x.p[j] * bm;
            let gam = d / h * bracket;
            let dg_du = d / h * (x.p[i] * dbp + x.p[j] * dbm);
            let dg_dpsij = dg_du / vt + bracket / h * dd_dpsij;
            let dg_dpsii = -dg_du / vt - bracket / h * dd_dpsij;
            let dg_dpi = d / h * bp;
            let dg_dpj = -d / h * bm;
            let mag = qa * d / h * ((x.p[i] * bp).abs() + (x.p[j] * bm).abs());
            for (row_v, s) in [(i, 1.0), (j, -1.0)] {
                let r = &mut rows[unknown(row_v, 2)];
                r.value += s * qa * gam;
                r.magnitude += mag;
                r.d(unknown(i, 0), s * qa * dg_dpsii);
                r.d(unknown(j, 0), s * qa * dg_dpsij);
                r.d(unknown(i, 2), s * qa * dg_dpi);
                r.d(unknown(j, 2), s * qa * dg_dpj);
            }
        }
    }

    // Electrode currents from the free contact rows, then Dirichlet rows.
    let ne = contacts.len();
    let mut currents = Vec::with_capacity(ne);
    let mut current_gradients = Vec::with_capacity(ne);
    let mut bias_sensitivity = Vec::with_capacity(ne);
    for (k, c) in contacts.iter().enumerate() {
        let v = c.vertex;
        let fpsi = rows[unknown(v, 0)].clone();
        let fn_ = rows[unknown(v, 1)].clone();
        let fp = rows[unknown(v, 2)].clone();

        let hist_psi: Vec<f64> = hist.iter().map(|s| poisson_value(device, s, v)).collect();
        let displacement = ctx.derivative(fpsi.value, &hist_psi);
        currents.push(fp.value - fn_.value - displacement);

        let mut grad: BTreeMap<usize, f64> = BTreeMap::new();
        for &(col, val) in &fp.entries {
            *grad.entry(col).or_default() += val;
        }
        for &(col, val) in &fn_.entries {
            *grad.entry(col).or_default() -= val;
        }
        if !ctx.is_steady() {
            for &(col, val) in &fpsi.entries {
                *grad.entry(col).or_default() -= a0 * val;
            }
        }
        current_gradients.push(grad.into_iter().filter(|&(_, g)| g != 0.0).collect());

        let h = (mesh.vertices()[c.neighbor] - mesh.vertices()[v]).abs();
        let w_psi = eps_a / h;
        let edge = v.min(c.neighbor);
        let w_n = qa * mu_n0[edge] * vt / h;
        let w_p = qa * mu_p0[edge] * vt / h;
        let target_psi = bias[k] + c.built_in;

        rows[unknown(v, 0)] = Row {
            value: w_psi * (x.psi[v] - target_psi),
            magnitude: w_psi * (x.psi[v].abs() + target_psi.abs()),
            entries: vec![(unknown(v, 0), w_psi)],
        };
        rows[unknown(v, 1)] = Row {
            value: w_n * (x.n[v] - c.n0),
            magnitude: w_n * (x.n[v].abs() + c.n0),
            entries: vec![(unknown(v, 1), w_n)],
        };
        rows[unknown(v, 2)] = Row {
            value: w_p * (x.p[v] - c.p0),
            magnitude: w_p * (x.p[v].abs() + c.p0),
            entries: vec![(unknown(v, 2), w_p)],
        };
        bias_sensitivity.push(vec![(unknown(v, 0), -w_psi)]);
    }

    let n_unknowns = 3 * m;
    let mut triplets: Vec<Triplet> = Vec::with_capacity(n_unknowns * 8);
    let mut residual = Vec::with_capacity(n_unknowns);
    let mut magnitude = Vec::with_capacity(n_unknowns);
    for (r, row) in rows.into_iter().enumerate() {
        residual.push(row.value);
        magnitude.push(row.magnitude);
        triplets.extend(row.entries.into_iter().map(|(c, v)| (r, c, v)));
    }
    let jacobian = SparseMatrix::assemble(n_unknowns, n_unknowns, &triplets)?;

    Ok(DeviceResidualSystem {
        residual,
        magnitude,
        jacobian,
        bias: bias.to_vec(),
        bias_sensitivity,
        currents,
        current_gradients,
        current_bias_derivative: vec![vec![0.0; ne]; ne],
    })
}

/// Electrode currents (A, positive into the device) at a given state.
pub fn electrode_currents(
    device: &Device,
    x: &Carriers,
    history: &History,
    bias: &[f64],
    ctx: &BdfCoefficients,
) -> Result<Vec<f64>, DeviceError> {
    Ok(assemble(device, x, history, bias, ctx)?.currents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::bdf_context;
    use crate::device::fixtures::{n_bar, pn_diode};
    use crate::physics::Snapshot;

    fn history_of(states: &[(f64, Carriers)]) -> History {
        let mut h = History::new(Snapshot {
            time: states[0].0,
            carriers: states[0].1.clone(),
        });
        for (t, c) in &states[1..] {
            h.push(Snapshot {
                time: *t,
                carriers: c.clone(),
            });
        }
        h
    }

    fn perturbed(c: &Carriers, seed: u64) -> Carriers {
        let mut s = seed;
        let mut rnd = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        Carriers {
            psi: c.psi.iter().map(|v| v + 0.2 * rnd()).collect(),
            n: c.n.iter().map(|v| v * (1.0 + 0.4 * rnd())).collect(),
            p: c.p.iter().map(|v| v * (1.0 + 0.4 * rnd())).collect(),
        }
    }

    #[test]
    fn uniform_state_has_zero_continuity_residual() {
        let dev = n_bar(1e16, 1e-3, 1e-4, 11);
        let c = dev.neutral_guess();
        let h = history_of(&[(0.0, c.clone())]);
        let sys = assemble(&dev, &c, &h, &[0.0, 0.0], &BdfCoefficients::steady(0.0)).unwrap();
        for (k, r) in sys.residual.iter().enumerate() {
            if k % 3 != 0 {
                assert_eq!(*r, 0.0, "row {k}");
            }
        }
    }

    #[test]
    fn missing_bias_is_rejected() {
        let dev = n_bar(1e16, 1e-3, 1e-4, 5);
        let c = dev.neutral_guess();
        let h = history_of(&[(0.0, c.clone())]);
        let err = assemble(&dev, &c, &h, &[0.0], &BdfCoefficients::steady(0.0)).unwrap_err();
        assert!(matches!(err, DeviceError::MissingBias { expected: 2, got: 1 }));
    }

    #[test]
    fn jacobian_and_current_gradients_match_finite_differences() {
        let dev = pn_diode(1e16, 1e-4, 20);
        // Injected carriers lift the minority densities so that every entry,
        // including recombination cross terms in majority rows, lies above
        // the rounding resolution of a difference quotient.
        let mut base = dev.neutral_guess();
        for v in base.n.iter_mut().chain(base.p.iter_mut()) {
            *v += 1e13;
        }
        let h = history_of(&[
            (0.0, perturbed(&base, 1)),
            (1e-9, perturbed(&base, 2)),
            (2e-9, perturbed(&base, 3)),
        ]);
        let ctx = bdf_context(&h.times(), 3.5e-9, 2).unwrap();
        let x = perturbed(&base, 4);
        let bias = [0.3, -0.1];
        let sys = assemble(&dev, &x, &h, &bias, &ctx).unwrap();
        let dense = sys.jacobian.to_dense();
        let v = x.to_vector();
        let vt = dev.thermal_voltage();
        let c0 = dev.density_scale();
        for col in 0..v.len() {
            // Densities enter linearly except through recombination, so the
            // step can be large; it is capped to keep the density positive.
            let step = if col % 3 == 0 {
                1e-4 * vt
            } else {
                (0.5 * v[col]).min(1e-6 * c0)
            };
            let eval = |s: f64| {
                let mut w = v.clone();
                w[col] += s;
                assemble(&dev, &Carriers::from_vector(&w), &h, &bias, &ctx).unwrap()
            };
            let (p1, m1) = (eval(step), eval(-step));
            let (p2, m2) = (eval(0.5 * step), eval(-0.5 * step));
            let richardson = |f: &dyn Fn(&DeviceResidualSystem) -> f64| {
                let d1 = (f(&p1) - f(&m1)) / (2.0 * step);
                let d2 = (f(&p2) - f(&m2)) / step;
                (4.0 * d2 - d1) / 3.0
            };
            let scale = dense.iter().map(|r| r[col].abs()).fold(0.0, f64::max);
            for row in 0..v.len() {
                let fd = richardson(&|s| s.residual[row]);
                assert!(
                    (fd - dense[row][col]).abs() <= 1e-5 * scale,
                    "J[{row}][{col}] = {} vs fd {fd}",
                    dense[row][col]
                );
            }
            for (e, grad) in sys.current_gradients.iter().enumerate() {
                let an = grad.iter().find(|g| g.0 == col).map_or(0.0, |g| g.1);
                let fd = richardson(&|s| s.currents[e]);
                let gscale = grad.iter().map(|g| g.1.abs()).fold(0.0, f64::max);
                assert!((fd - an).abs() <= 1e-5 * gscale, "dI{e}/dx{col}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn bias_sensitivity_matches_finite_differences() {
        let dev = pn_diode(1e16, 1e-4, 12);
        let x = perturbed(&dev.neutral_guess(), 9);
        let h = history_of(&[(0.0, x.clone())]);
        let ctx = BdfCoefficients::steady(0.0);
        let bias = [0.2, 0.05];
        let sys = assemble(&dev, &x, &h, &bias, &ctx).unwrap();
        for j in 0..2 {
            let mut bp = bias;
            let mut bm = bias;
            bp[j] += 1e-4;
            bm[j] -= 1e-4;
            let fp = assemble(&dev, &x, &h, &bp, &ctx).unwrap().residual;
            let fm = assemble(&dev, &x, &h, &bm, &ctx).unwrap().residual;
            let mut an = vec![0.0; fp.len()];
            for &(r, v) in &sys.bias_sensitivity[j] {
                an[r] += v;
            }
            for r in 0..fp.len() {
                let fd = (fp[r] - fm[r]) / 2e-4;
                assert!((fd - an[r]).abs() <= 1e-8 * an[r].abs().max(1e-30), "row {r}");
            }
        }
    }
}
