use std::collections::BTreeMap;

use crate::circuit::{Circuit, CircuitError, ElementKind, MnaLayout};
use crate::device::{Device, NortonEquivalent};

/// A circuit together with one device instance per device port. Ports and
/// instances share the canonical port order of the circuit.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    circuit: Circuit,
    instances: Vec<Device>,
    ports: Vec<Port>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub element: String,
    /// Circuit node of each port terminal.
    pub nodes: Vec<String>,
    /// Device electrode index of each port terminal.
    pub electrode: Vec<usize>,
    pub electrode_names: Vec<String>,
}

impl CoupledSystem {
    /// `devices` maps declared device names to their descriptions; every
    /// port gets its own copy with independent state.
    pub fn new(circuit: Circuit, devices: &BTreeMap<String, Device>) -> Result<Self, CircuitError> {
        let mut instances = Vec::new();
        let mut ports = Vec::new();
        for e in circuit.ports() {
            let ElementKind::DevicePort { device, electrodes } = &e.kind else {
                unreachable!()
            };
            let d = devices
                .get(device)
                .ok_or_else(|| CircuitError::Element(e.name.clone(), format!("undeclared device `{device}`")))?;
            let names = d.electrode_names();
            let electrode = electrodes
                .iter()
                .map(|el| {
                    names.iter().position(|n| n == el).ok_or_else(|| {
                        CircuitError::Element(e.name.clone(), format!("device `{device}` has no electrode `{el}`"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            instances.push(d.clone());
            ports.push(Port {
                element: e.name.clone(),
                nodes: e.nodes.clone(),
                electrode,
                electrode_names: electrodes.clone(),
            });
        }
        Ok(Self {
            circuit,
            instances,
            ports,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    /// Device instances in port order.
    pub fn devices(&self) -> &[Device] {
        &self.instances
    }

    pub fn ports(&self) -> &[Port] {
        &self.ports
    }

    /// Record signal names: circuit unknowns, then `i(<port>.<electrode>)`
    /// for every port terminal.
    pub fn signal_names(&self, layout: &MnaLayout) -> Vec<String> {
        let mut names = layout.signal_names(&self.circuit);
        for p in &self.ports {
            names.extend(p.electrode_names.iter().map(|e| format!("i({}.{e})", p.element)));
        }
        names
    }
}

impl Port {
    /// Terminal voltages in port order.
    pub fn voltages(&self, layout: &MnaLayout, x: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|n| layout.voltage(x, n)).collect()
    }

    /// Port-ordered voltages rearranged into device electrode order.
    pub fn to_device(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for (k, &e) in self.electrode.iter().enumerate() {
            out[e] = v[k];
        }
        out
    }

    /// Device-ordered values rearranged into port order.
    pub fn from_device(&self, v: &[f64]) -> Vec<f64> {
        self.electrode.iter().map(|&e| v[e]).collect()
    }

    /// Norton equivalent with rows and columns in port order.
    pub fn stamp(&self, n: &NortonEquivalent) -> NortonEquivalent {
        NortonEquivalent {
            electrodes: self.circuit_order(&n.electrodes),
            voltages: self.from_device(&n.voltages),
            g: self
                .electrode
                .iter()
                .map(|&i| self.electrode.iter().map(|&j| n.g[i][j]).collect())
                .collect(),
            companion: self.from_device(&n.companion),
            currents: self.from_device(&n.currents),
        }
    }

    fn circuit_order(&self, names: &[String]) -> Vec<String> {
        self.electrode.iter().map(|&e| names[e].clone()).collect()
    }
}
