use super::{PhysicsError, EPS0, K_B, Q};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carrier {
    Electron,
    Hole,
}

/// Caughey-Thomas doping dependence combined with the Caughey-Thomas
/// velocity-saturation law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MobilityParams {
    /// cm²/V·s
    pub mu_min: f64,
    /// cm²/V·s
    pub mu_max: f64,
    /// cm⁻³
    pub n_ref: f64,
    pub alpha: f64,
    /// cm/s
    pub v_sat: f64,
    pub beta: f64,
}

impl MobilityParams {
    pub fn low_field(&self, total_doping: f64) -> f64 {
        self.mu_min + (self.mu_max - self.mu_min) / (1.0 + (total_doping / self.n_ref).powf(self.alpha))
    }

    /// Field-saturated mobility and its derivative with respect to the field.
    pub fn with_field(&self, mu0: f64, field: f64) -> (f64, f64) {
        let e = field.abs();
        let k = mu0 / self.v_sat;
        let s = (k * e).powf(self.beta);
        let mu = mu0 * (1.0 + s).powf(-1.0 / self.beta);
        // s / e, written to stay finite at e = 0
        let s_over_e = if e > 0.0 {
            s / e
        } else if self.beta == 1.0 {
            k
        } else {
            0.0
        };
        let dmu = -mu * s_over_e / (1.0 + s);
        (mu, dmu)
    }
}

/// Net recombination rate `R − G` and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recombination {
    /// cm⁻³ s⁻¹
    pub rate: f64,
    pub d_dn: f64,
    pub d_dp: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicalModels {
    /// K
    pub temperature: f64,
    /// Conduction / valence band effective densities of states at the
    /// configured temperature (cm⁻³).
    pub nc: f64,
    pub nv: f64,
    /// Band gap (eV).
    pub eg: f64,
    pub eps_r: f64,
    pub electron: MobilityParams,
    pub hole: MobilityParams,
    /// Default SRH lifetimes (s); regions may override.
    pub tau_n: f64,
    pub tau_p: f64,
    /// Auger coefficients (cm⁶/s).
    pub auger_n: f64,
    pub auger_p: f64,
}

impl PhysicalModels {
    /// Silicon at 300 K.
    pub fn silicon() -> Self {
        Self {
            temperature: 300.0,
            nc: 2.86e19,
            nv: 3.10e19,
            eg: 1.12,
            eps_r: 11.7,
            electron: MobilityParams {
                mu_min: 68.5,
                mu_max: 1414.0,
                n_ref: 9.2e16,
                alpha: 0.711,
                v_sat: 1.07e7,
                beta: 2.0,
            },
            hole: MobilityParams {
                mu_min: 44.9,
                mu_max: 470.5,
                n_ref: 2.23e17,
                alpha: 0.719,
                v_sat: 8.37e6,
                beta: 2.0,
            },
            tau_n: 1e-6,
            tau_p: 1e-6,
            auger_n: 2.8e-31,
            auger_p: 9.9e-32,
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let mut checks: Vec<(String, f64)> = [
            ("temperature", self.temperature),
            ("nc", self.nc),
            ("nv", self.nv),
            ("eg", self.eg),
            ("eps_r", self.eps_r),
            ("tau_n", self.tau_n),
            ("tau_p", self.tau_p),
            ("auger_n", self.auger_n),
            ("auger_p", self.auger_p),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for (prefix, m) in [("electron", &self.electron), ("hole", &self.hole)] {
            for (k, v) in [
                ("mu_min", m.mu_min),
                ("mu_max", m.mu_max),
                ("n_ref", m.n_ref),
                ("alpha", m.alpha),
                ("v_sat", m.v_sat),
                ("beta", m.beta),
            ] {
                checks.push((format!("{prefix}.{k}"), v));
            }
        }
        for (name, value) in checks {
            if !(value > 0.0) || !value.is_finite() {
                return Err(PhysicsError::NonPositiveParameter { name, value,
                });
            }
        }
        Ok(())
    }

    /// `kT/q` (V).
    pub fn thermal_voltage(&self) -> f64 {
        K_B * self.temperature / Q
    }

    /// Intrinsic density from the band parameters (cm⁻³).
    pub fn intrinsic_density(&self) -> f64 {
        (self.nc * self.nv).sqrt() * (-self.eg / (2.0 * self.thermal_voltage())).exp()
    }

    /// F/cm
    pub fn permittivity(&self) -> f64 {
        self.eps_r * EPS0
    }

    pub fn params(&self, carrier: Carrier) -> &MobilityParams {
        match carrier {
            Carrier::Electron => &self.electron,
            Carrier::Hole => &self.hole,
        }
    }

    /// `(μ_n, μ_p)` at the given total impurity concentration and field.
    pub fn mobility(&self, total_doping: f64, field: f64) -> (f64, f64) {
        let mun = self.electron.with_field(self.electron.low_field(total_doping), field).0;
        let mup = self.hole.with_field(self.hole.low_field(total_doping), field).0;
        (mun, mup)
    }

    /// SRH (midgap trap) plus Auger recombination.
    pub fn recombination(&self, n: f64, p: f64, tau_n: f64, tau_p: f64) -> Recombination {
        let ni = self.intrinsic_density();
        let excess = n * p - ni * ni;
        let den = tau_p * (n + ni) + tau_n * (p + ni);
        let srh = excess / den;
        let srh_dn = p / den - excess * tau_p / (den * den);
        let srh_dp = n / den - excess * tau_n / (den * den);

        let coeff = self.auger_n * n + self.auger_p * p;
        let auger = coeff * excess;
        let auger_dn = self.auger_n * excess + coeff * p;
        let auger_dp = self.auger_p * excess + coeff * n;

        Recombination {
            rate: srh + auger,
            d_dn: srh_dn + auger_dn,
            d_dp: srh_dp + auger_dp,
        }
    }

    /// Generation term of the continuity equations. Impact ionisation is not
    /// modelled, so this is identically zero.
    pub fn generation(&self, _n: f64, _p: f64) -> Recombination {
        Recombination {
            rate: 0.0,
            d_dn: 0.0,
            d_dp: 0.0,
        }
    }
}
