use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::{CircuitError, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Resistor(f64),
    /// Capacitance (F) and optional initial voltage.
    Capacitor(f64, Option<f64>),
    /// Inductance (H) and optional initial current.
    Inductor(f64, Option<f64>),
    VoltageSource(Waveform),
    CurrentSource(Waveform),
    /// Connection of a device's electrodes to circuit nodes; `nodes` of the
    /// element lists the node of each entry of `electrodes`.
    DevicePort {
        device: String,
        electrodes: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub nodes: Vec<String>,
    pub kind: ElementKind,
}

impl Element {
    pub fn two_terminal(name: &str, a: &str, b: &str, kind: ElementKind) -> Self {
        Self {
            name: name.into(),
            nodes: vec![a.into(), b.into()],
            kind,
        }
    }
}

pub fn is_ground(node: &str) -> bool {
    node == "0" || node.eq_ignore_ascii_case("gnd")
}

/// Orders strings with embedded numbers by value: `n2 < n10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let ord = match (x, y) {
            ((true, dx), (true, dy)) => {
                let (tx, ty) = (dx.trim_start_matches('0'), dy.trim_start_matches('0'));
                tx.len().cmp(&ty.len()).then_with(|| tx.cmp(ty))
            }
            ((_, sx), (_, sy)) => sx.cmp(sy),
        };
        if ord != Ordering::Equal {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}

/// Validated element list. Elements are kept sorted by name so that every
/// derived quantity is independent of netlist line order.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    elements: Vec<Element>,
    nodes: Vec<String>,
}

impl Circuit {
    /// Checks names, values, device ports and connectivity. `devices`
    /// maps each declared device to its electrode names.
    pub fn new(
        mut elements: Vec<Element>,
        devices: &BTreeMap<String, Vec<String>>,
    ) -> Result<Self, CircuitError> {
        let mut names = BTreeSet::new();
        for e in &elements {
            if !names.insert(e.name.to_ascii_lowercase()) {
                return Err(CircuitError::Topology(format!("duplicate element name `{}`", e.name)));
            }
            check_element(e, devices)?;
        }
        elements.sort_by(|a, b| natural_cmp(&a.name, &b.name));

        let mut nodes: Vec<String> = elements
            .iter()
            .flat_map(|e| e.nodes.iter())
            .filter(|n| !is_ground(n))
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        nodes.sort_by(|a, b| natural_cmp(a, b));

        let circuit = Self { elements, nodes };
        circuit.check_connectivity()?;
        Ok(circuit)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Non-ground nodes in canonical order.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    /// Device-port elements in canonical order.
    pub fn ports(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .iter()
            .filter(|e| matches!(e.kind, ElementKind::DevicePort { .. }))
    }

    pub fn waveforms(&self) -> impl Iterator<Item = &Waveform> {
        self.elements.iter().filter_map(|e| match &e.kind {
            ElementKind::VoltageSource(w) | ElementKind::CurrentSource(w) => Some(w),
            _ => None,
        })
    }

    /// Earliest source breakpoint strictly after `t`.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        self.waveforms()
            .filter_map(|w| w.next_breakpoint(t))
            .min_by(f64::total_cmp)
    }

    fn check_connectivity(&self) -> Result<(), CircuitError> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let has_ground = self
            .elements
            .iter()
            .any(|e| e.nodes.iter().any(|n| is_ground(n)));
        if !has_ground {
            return Err(CircuitError::Topology("no ground node (`0` or `gnd`)".into()));
        }
        // Union-find over node names with ground as one representative.
        let key = |n: &str| if is_ground(n) { "0".to_string() } else { n.to_string() };
        let mut parent: BTreeMap<String, String> = BTreeMap::new();
        fn find(p: &mut BTreeMap<String, String>, x: &str) -> String {
            let next = p.get(x).cloned().unwrap_or_else(|| x.to_string());
            if next == x {
                return next;
            }
            let root = find(p, &next);
            p.insert(x.to_string(), root.clone());
            root
        }
        for e in &self.elements {
            let ns: Vec<String> = e.nodes.iter().map(|n| key(n)).collect();
            for w in ns.windows(2) {
                let (a, b) = (find(&mut parent, &w[0]), find(&mut parent, &w[1]));
                if a != b {
                    parent.insert(a, b);
                }
            }
        }
        let ground = find(&mut parent, "0");
        for n in &self.nodes {
            if find(&mut parent, n) != ground {
                return Err(CircuitError::Topology(format!(
                    "node `{n}` has no path to ground"
                )));
            }
        }
        let mut degree: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &self.elements {
            for n in &e.nodes {
                *degree.entry(n.as_str()).or_default() += 1;
            }
        }
        if let Some((n, _)) = degree.iter().find(|(n, d)| **d < 2 && !is_ground(n)) {
            let owner = self
                .elements
                .iter()
                .find(|e| e.nodes.iter().any(|m| m == n))
                .map_or("?", |e| e.name.as_str());
            return Err(CircuitError::Topology(format!(
                "dangling node `{n}` (only connected to `{owner}`)"
            )));
        }
        Ok(())
    }
}

fn check_element(e: &Element, devices: &BTreeMap<String, Vec<String>>) -> Result<(), CircuitError> {
    let bad = |msg: String| Err(CircuitError::Element(e.name.clone(), msg));
    let positive = |v: f64, what: &str| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(CircuitError::Element(
                e.name.clone(),
                format!("{what} must be positive and finite, got {v}"),
            ))
        }
    };
    match &e.kind {
        ElementKind::Resistor(r) => positive(*r, "resistance")?,
        ElementKind::Capacitor(c, _) => positive(*c, "capacitance")?,
        ElementKind::Inductor(l, _) => positive(*l, "inductance")?,
        ElementKind::VoltageSource(_) | ElementKind::CurrentSource(_) => {}
        ElementKind::DevicePort { device, electrodes } => {
            let Some(known) = devices.get(device) else {
                return bad(format!("undeclared device `{device}`"));
            };
            if electrodes.len() != e.nodes.len() {
                return bad("electrode and node lists differ in length".into());
            }
            let mut seen = BTreeSet::new();
            for el in electrodes {
                if !known.contains(el) {
                    return bad(format!("device `{device}` has no electrode `{el}`"));
                }
                if !seen.insert(el) {
                    return bad(format!("electrode `{el}` connected twice"));
                }
            }
            if let Some(missing) = known.iter().find(|k| !seen.contains(k)) {
                return bad(format!("electrode `{missing}` of `{device}` is not connected"));
            }
            return Ok(());
        }
    }
    if e.nodes.len() != 2 {
        return bad(format!("expected 2 nodes, got {}", e.nodes.len()));
    }
    Ok(())
}
