use crate::physics::{
    Carriers, DeviceMesh, DopingProfile, PhysicalModels, PhysicsError, Side,
};

/// Ohmic boundary values of one electrode.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactBc {
    pub name: String,
    pub vertex: usize,
    /// Vertex across the contact edge.
    pub neighbor: usize,
    /// Equilibrium potential of the contact vertex at zero bias (V).
    pub built_in: f64,
    pub n0: f64,
    pub p0: f64,
}

/// Immutable description of one drift-diffusion device: mesh, per-vertex
/// material data and contact boundary values.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    mesh: DeviceMesh,
    models: PhysicalModels,
    net_doping: Vec<f64>,
    total_doping: Vec<f64>,
    tau_n: Vec<f64>,
    tau_p: Vec<f64>,
    edge_mu_n: Vec<f64>,
    edge_mu_p: Vec<f64>,
    contacts: Vec<ContactBc>,
    vt: f64,
    ni: f64,
    density_scale: f64,
}

/// Electron and hole lifetimes (s) of one doping region.
pub type Lifetimes = (f64, f64);

impl Device {
    /// Samples the doping profile and region lifetimes onto the mesh.
    ///
    /// `lifetimes` is indexed like `profile.regions()`; `None` entries fall
    /// back to the model defaults.
    pub fn new(
        mesh: DeviceMesh,
        profile: &DopingProfile,
        models: PhysicalModels,
        lifetimes: &[Option<Lifetimes>],
    ) -> Result<Self, PhysicsError> {
        let mut net = Vec::with_capacity(mesh.len());
        let mut total = Vec::with_capacity(mesh.len());
        let mut tau_n = Vec::with_capacity(mesh.len());
        let mut tau_p = Vec::with_capacity(mesh.len());
        let origin = mesh.vertices()[0];
        for &x in mesh.vertices() {
            let x = x - origin;
            net.push(profile.net_doping(x)?);
            total.push(profile.total_doping(x)?);
            let region = profile.region_index(x)?;
            let (tn, tp) = lifetimes
                .get(region)
                .copied()
                .flatten()
                .unwrap_or((models.tau_n, models.tau_p));
            tau_n.push(tn);
            tau_p.push(tp);
        }
        Self::from_parts(mesh, models, net, total, tau_n, tau_p)
    }

    /// Builds a device from per-vertex data. Used when a device description
    /// is shipped to a worker process.
    pub fn from_parts(
        mesh: DeviceMesh,
        models: PhysicalModels,
        net_doping: Vec<f64>,
        total_doping: Vec<f64>,
        tau_n: Vec<f64>,
        tau_p: Vec<f64>,
    ) -> Result<Self, PhysicsError> {
        models.validate()?;
        let m = mesh.len();
        if [net_doping.len(), total_doping.len(), tau_n.len(), tau_p.len()]
            .iter()
            .any(|&l| l != m)
        {
            return Err(PhysicsError::BadState("per-vertex data length mismatch".into()));
        }
        for (name, v) in tau_n.iter().chain(&tau_p).map(|v| ("lifetime", *v)) {
            if !(v > 0.0) {
                return Err(PhysicsError::NonPositiveParameter {
                    name: name.into(),
                    value: v,
                });
            }
        }
        if mesh.contacts().is_empty() {
            return Err(PhysicsError::BadContact("-".into(), "device has no contacts".into()));
        }
        let vt = models.thermal_voltage();
        let ni = models.intrinsic_density();
        let edge_mu = |params: &crate::physics::MobilityParams| -> Vec<f64> {
            (0..mesh.edge_count())
                .map(|e| params.low_field(0.5 * (total_doping[e] + total_doping[e + 1])))
                .collect()
        };
        let edge_mu_n = edge_mu(&models.electron);
        let edge_mu_p = edge_mu(&models.hole);
        let last = m - 1;
        let contacts = mesh
            .contacts()
            .iter()
            .map(|c| {
                let (n0, p0) = neutral_densities(net_doping[c.vertex], ni);
                ContactBc {
                    name: c.name.clone(),
                    vertex: c.vertex,
                    neighbor: match c.side {
                        Side::Left => 1,
                        Side::Right => last - 1,
                    },
                    built_in: vt * (n0 / ni).ln(),
                    n0,
                    p0,
                }
            })
            .collect();
        let density_scale = net_doping
            .iter()
            .map(|v| v.abs())
            .fold(ni, f64::max);
        Ok(Self {
            mesh,
            models,
            net_doping,
            total_doping,
            tau_n,
            tau_p,
            edge_mu_n,
            edge_mu_p,
            contacts,
            vt,
            ni,
            density_scale,
        })
    }

    pub fn mesh(&self) -> &DeviceMesh {
        &self.mesh
    }

    pub fn models(&self) -> &PhysicalModels {
        &self.models
    }

    pub fn net_doping(&self) -> &[f64] {
        &self.net_doping
    }

    pub fn total_doping(&self) -> &[f64] {
        &self.total_doping
    }

    pub fn tau_n(&self) -> &[f64] {
        &self.tau_n
    }

    pub fn tau_p(&self) -> &[f64] {
        &self.tau_p
    }

    /// Low-field mobilities per edge.
    pub fn edge_mobility(&self) -> (&[f64], &[f64]) {
        (&self.edge_mu_n, &self.edge_mu_p)
    }

    pub fn contacts(&self) -> &[ContactBc] {
        &self.contacts
    }

    pub fn electrode_names(&self) -> Vec<String> {
        self.contacts.iter().map(|c| c.name.clone()).collect()
    }

    pub fn electrode_count(&self) -> usize {
        self.contacts.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.mesh.len()
    }

    pub fn unknown_count(&self) -> usize {
        3 * self.mesh.len()
    }

    pub fn thermal_voltage(&self) -> f64 {
        self.vt
    }

    pub fn intrinsic_density(&self) -> f64 {
        self.ni
    }

    /// Largest of |net doping| and n_i, used to scale carrier unknowns.
    pub fn density_scale(&self) -> f64 {
        self.density_scale
    }

    /// Charge-neutral, zero-bias initial guess.
    pub fn neutral_guess(&self) -> Carriers {
        let mut c = Carriers {
            psi: Vec::with_capacity(self.vertex_count()),
            n: Vec::with_capacity(self.vertex_count()),
            p: Vec::with_capacity(self.vertex_count()),
        };
        for &nd in &self.net_doping {
            let (n0, p0) = neutral_densities(nd, self.ni);
            c.psi.push(self.vt * (n0 / self.ni).ln());
            c.n.push(n0);
            c.p.push(p0);
        }
        c
    }
}

/// Equilibrium densities of a neutral region with net doping `net`
/// (Boltzmann statistics).
pub fn neutral_densities(net: f64, ni: f64) -> (f64, f64) {
    let half = 0.5 * net.abs();
    let majority = half + (half * half + ni * ni).sqrt();
    let minority = ni * ni / majority;
    if net >= 0.0 {
        (majority, minority)
    } else {
        (minority, majority)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_densities_obey_mass_action() {
        let ni = 1e10;
        for net in [1e16, -1e16, 0.0, 3e12, -5e18] {
            let (n, p) = neutral_densities(net, ni);
            assert!((n * p / (ni * ni) - 1.0).abs() < 1e-12);
            assert!(((n - p) - net).abs() <= 1e-9 * net.abs().max(ni));
        }
    }
}
