use std::collections::BTreeMap;

use super::{is_ground, BdfCoefficients, Circuit, CircuitError, ElementKind};
use crate::device::NortonEquivalent;
use crate::sparse::{Factorization, SparseMatrix, Triplet};

/// Which physical regime the MNA equations describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisMode {
    /// Operating point: capacitors open, inductors shorted.
    Steady,
    /// Initial-condition point: capacitors held at their initial voltage by
    /// a temporary branch, inductors forced to their initial current.
    InitialCondition,
    /// BDF-discretized dynamics.
    Transient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Source,
    Inductor,
    CapacitorIc,
}

/// Unknown numbering: non-ground node voltages in canonical node order,
/// then branch currents in element-name order.
#[derive(Debug, Clone, PartialEq)]
pub struct MnaLayout {
    nodes: Vec<String>,
    node_index: BTreeMap<String, usize>,
    /// `(element index, kind)` per branch unknown.
    branches: Vec<(usize, BranchKind)>,
    branch_of: BTreeMap<usize, usize>,
    mode: AnalysisMode,
}

impl MnaLayout {
    pub fn new(circuit: &Circuit, mode: AnalysisMode) -> Self {
        let nodes = circuit.nodes().to_vec();
        let node_index = nodes.iter().cloned().enumerate().map(|(i, n)| (n, i)).collect();
        let mut branches = Vec::new();
        for (k, e) in circuit.elements().iter().enumerate() {
            let kind = match e.kind {
                ElementKind::VoltageSource(_) => Some(BranchKind::Source),
                ElementKind::Inductor(..) => Some(BranchKind::Inductor),
                ElementKind::Capacitor(..) if mode == AnalysisMode::InitialCondition => {
                    Some(BranchKind::CapacitorIc)
                }
                _ => None,
            };
            if let Some(kind) = kind {
                branches.push((k, kind));
            }
        }
        let branch_of = branches
            .iter()
            .enumerate()
            .map(|(b, &(k, _))| (k, nodes.len() + b))
            .collect();
        Self {
            nodes,
            node_index,
            branches,
            branch_of,
            mode,
        }
    }

    pub fn mode(&self) -> AnalysisMode {
        self.mode
    }

    pub fn size(&self) -> usize {
        self.nodes.len() + self.branches.len()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Unknown index of a node; `None` for ground.
    pub fn node(&self, name: &str) -> Option<usize> {
        if is_ground(name) {
            None
        } else {
            self.node_index.get(name).copied()
        }
    }

    /// Unknown index of the branch current of element `k`.
    pub fn branch(&self, element: usize) -> Option<usize> {
        self.branch_of.get(&element).copied()
    }

    pub fn branches(&self) -> &[(usize, BranchKind)] {
        &self.branches
    }

    /// Names of the unknowns: `v(node)` then `i(element)`.
    pub fn signal_names(&self, circuit: &Circuit) -> Vec<String> {
        self.nodes
            .iter()
            .map(|n| format!("v({n})"))
            .chain(
                self.branches
                    .iter()
                    .map(|&(k, _)| format!("i({})", circuit.elements()[k].name)),
            )
            .collect()
    }

    /// Voltage of a node in the unknown vector `x` (ground is 0).
    pub fn voltage(&self, x: &[f64], node: &str) -> f64 {
        self.node(node).map_or(0.0, |i| x[i])
    }

    /// Maps a vector in this layout onto `other`; unknowns missing here are
    /// zero.
    pub fn transfer(&self, x: &[f64], other: &MnaLayout) -> Vec<f64> {
        let mut out = vec![0.0; other.size()];
        out[..other.node_count()].copy_from_slice(&x[..self.node_count()]);
        for (&k, &j) in &other.branch_of {
            if let Some(&i) = self.branch_of.get(&k) {
                out[j] = x[i];
            }
        }
        out
    }
}

/// Accepted circuit solutions, newest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CircuitHistory {
    entries: Vec<(f64, Vec<f64>)>,
}

impl CircuitHistory {
    pub const DEPTH: usize = 3;

    pub fn new(time: f64, x: Vec<f64>) -> Self {
        Self {
            entries: vec![(time, x)],
        }
    }

    pub fn push(&mut self, time: f64, x: Vec<f64>) {
        self.entries.insert(0, (time, x));
        self.entries.truncate(Self::DEPTH);
    }

    pub fn restart(&mut self) {
        self.entries.truncate(1);
    }

    pub fn latest(&self) -> &[f64] {
        &self.entries[0].1
    }

    pub fn get(&self, k: usize) -> Option<&[f64]> {
        self.entries.get(k).map(|e| e.1.as_slice())
    }

    pub fn times(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CircuitTolerances {
    pub abs: f64,
    pub rel: f64,
    pub max_refinements: usize,
}

impl Default for CircuitTolerances {
    fn default() -> Self {
        Self {
            abs: 1e-5,
            rel: 1e-5,
            max_refinements: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub residual: Vec<f64>,
    /// Sum of absolute contributions per row.
    pub magnitude: Vec<f64>,
    pub jacobian: SparseMatrix,
}

/// Everything the assembly needs besides the unknowns.
#[derive(Debug, Clone, Copy)]
pub struct MnaInputs<'a> {
    pub circuit: &'a Circuit,
    pub layout: &'a MnaLayout,
    pub history: &'a CircuitHistory,
    /// One Norton equivalent per device port, in `circuit.ports()` order.
    pub stamps: &'a [NortonEquivalent],
    pub ctx: &'a BdfCoefficients,
    /// Multiplier applied to every independent source (source ramping).
    pub source_scale: f64,
}

struct Rows {
    terms: Vec<Vec<f64>>,
    triplets: Vec<Triplet>,
}

impl Rows {
    fn add(&mut self, row: Option<usize>, v: f64) {
        if let Some(r) = row {
            self.terms[r].push(v);
        }
    }

    fn d(&mut self, row: Option<usize>, col: Option<usize>, v: f64) {
        if let (Some(r), Some(c)) = (row, col) {
            self.triplets.push((r, c, v));
        }
    }
}

/// KCL rows (sum of currents leaving each node) and branch equations.
///
/// Sources follow SPICE conventions: a voltage source's branch current flows
/// from its positive node through the source; a current source drives its
/// value from the positive node through itself to the negative node. A
/// device port draws `I_e = companion_e + Σ_j G_ej·V_j` out of the node of
/// electrode `e`.
pub fn mna_assemble(inp: &MnaInputs, x: &[f64]) -> Result<MnaSystem, CircuitError> {
    let MnaInputs {
        circuit,
        layout,
        history,
        stamps,
        ctx,
        source_scale,
    } = *inp;
    let n = layout.size();
    if x.len() != n {
        return Err(CircuitError::Linear(crate::sparse::SparseError::DimensionMismatch {
            expected: n,
            got: x.len(),
        }));
    }
    let port_count = circuit.ports().count();
    if stamps.len() != port_count {
        return Err(CircuitError::MissingStamp(format!(
            "{} device ports but {} stamps",
            port_count,
            stamps.len()
        )));
    }
    let transient = layout.mode == AnalysisMode::Transient;
    if transient && ctx.is_steady() {
        return Err(CircuitError::Time("transient assembly needs a BDF context".into()));
    }
    let t = ctx.time;
    let hist: Vec<&[f64]> = (0..ctx.order as usize)
        .map(|k| {
            history
                .get(k)
                .ok_or_else(|| CircuitError::Time("not enough circuit history for BDF order".into()))
        })
        .collect::<Result<_, _>>()?;
    let val = |i: Option<usize>, v: &[f64]| i.map_or(0.0, |i| v[i]);

    let mut rows = Rows {
        terms: vec![Vec::new(); n],
        triplets: Vec::with_capacity(4 * circuit.elements().len() + n),
    };
    let mut port = 0;
    for (k, e) in circuit.elements().iter().enumerate() {
        let a = e.nodes.first().and_then(|s| layout.node(s));
        let b = e.nodes.get(1).and_then(|s| layout.node(s));
        let br = layout.branch(k);
        match &e.kind {
            ElementKind::Resistor(r) => {
                let g = 1.0 / r;
                let i = g * (val(a, x) - val(b, x));
                rows.add(a, i);
                rows.add(b, -i);
                rows.d(a, a, g);
                rows.d(a, b, -g);
                rows.d(b, a, -g);
                rows.d(b, b, g);
            }
            ElementKind::Capacitor(c, ic) => match layout.mode {
                AnalysisMode::Steady => {}
                AnalysisMode::InitialCondition => {
                    let br = br.expect("capacitor branch in IC layout");
                    let i = x[br];
                    rows.add(a, i);
                    rows.add(b, -i);
                    rows.d(a, Some(br), 1.0);
                    rows.d(b, Some(br), -1.0);
                    let row = Some(br);
                    rows.add(row, val(a, x));
                    rows.add(row, -val(b, x));
                    rows.add(row, -ic.unwrap_or(0.0));
                    rows.d(row, a, 1.0);
                    rows.d(row, b, -1.0);
                }
                AnalysisMode::Transient => {
                    let mut terms = vec![c * ctx.a[0] * (val(a, x) - val(b, x))];
                    for (j, h) in hist.iter().enumerate() {
                        terms.push(c * ctx.a[j + 1] * (val(a, h) - val(b, h)));
                    }
                    for term in terms {
                        rows.add(a, term);
                        rows.add(b, -term);
                    }
                    let g = c * ctx.a[0];
                    rows.d(a, a, g);
                    rows.d(a, b, -g);
                    rows.d(b, a, -g);
                    rows.d(b, b, g);
                }
            },
            ElementKind::Inductor(l, ic) => {
                let br = br.expect("inductor branch");
                let i = x[br];
                rows.add(a, i);
                rows.add(b, -i);
                rows.d(a, Some(br), 1.0);
                rows.d(b, Some(br), -1.0);
                let row = Some(br);
                match layout.mode {
                    AnalysisMode::Steady => {
                        rows.add(row, val(a, x));
                        rows.add(row, -val(b, x));
                        rows.d(row, a, 1.0);
                        rows.d(row, b, -1.0);
                    }
                    AnalysisMode::InitialCondition => {
                        rows.add(row, i);
                        rows.add(row, -ic.unwrap_or(0.0));
                        rows.d(row, row, 1.0);
                    }
                    AnalysisMode::Transient => {
                        rows.add(row, val(a, x));
                        rows.add(row, -val(b, x));
                        rows.add(row, -l * ctx.a[0] * i);
                        for (j, h) in hist.iter().enumerate() {
                            rows.add(row, -l * ctx.a[j + 1] * h[br]);
                        }
                        rows.d(row, a, 1.0);
                        rows.d(row, b, -1.0);
                        rows.d(row, row, -l * ctx.a[0]);
                    }
                }
            }
            ElementKind::VoltageSource(w) => {
                let br = br.expect("source branch");
                let i = x[br];
                rows.add(a, i);
                rows.add(b, -i);
                rows.d(a, Some(br), 1.0);
                rows.d(b, Some(br), -1.0);
                let row = Some(br);
                rows.add(row, val(a, x));
                rows.add(row, -val(b, x));
                rows.add(row, -source_scale * w.value(t));
                rows.d(row, a, 1.0);
                rows.d(row, b, -1.0);
            }
            ElementKind::CurrentSource(w) => {
                let i = source_scale * w.value(t);
                rows.add(a, i);
                rows.add(b, -i);
            }
            ElementKind::DevicePort { .. } => {
                let stamp = &stamps[port];
                port += 1;
                let idx: Vec<Option<usize>> = e.nodes.iter().map(|s| layout.node(s)).collect();
                if stamp.g.len() != idx.len() {
                    return Err(CircuitError::MissingStamp(format!(
                        "stamp for `{}` has {} electrodes, port has {}",
                        e.name,
                        stamp.g.len(),
                        idx.len()
                    )));
                }
                for (ei, &row) in idx.iter().enumerate() {
                    rows.add(row, stamp.companion[ei]);
                    for (ej, &col) in idx.iter().enumerate() {
                        let g = stamp.g[ei][ej];
                        rows.add(row, g * val(col, x));
                        rows.d(row, col, g);
                    }
                }
            }
        }
    }

    let mut residual = Vec::with_capacity(n);
    let mut magnitude = Vec::with_capacity(n);
    for mut terms in rows.terms {
        // Order-independent summation.
        terms.sort_by(f64::total_cmp);
        residual.push(terms.iter().sum());
        magnitude.push(terms.iter().map(|v| v.abs()).sum());
    }
    let jacobian = SparseMatrix::assemble(n, n, &rows.triplets)?;
    Ok(MnaSystem {
        residual,
        magnitude,
        jacobian,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSolution {
    pub x: Vec<f64>,
    /// Jacobian factorizations performed.
    pub iterations: usize,
    /// Largest KCL residual over node rows (A).
    pub kcl_residual: f64,
}

/// Newton solve of the MNA equations. With frozen device stamps the system
/// is linear: one factorization, followed by refinement steps that reuse it
/// until both the residual and the update meet the tolerances.
pub fn newton_solve_circuit(
    inp: &MnaInputs,
    x0: &[f64],
    tol: &CircuitTolerances,
) -> Result<CircuitSolution, CircuitError> {
    let mut x = x0.to_vec();
    let mut sys = mna_assemble(inp, &x)?;
    if inp.layout.size() == 0 {
        return Ok(CircuitSolution {
            x,
            iterations: 0,
            kcl_residual: 0.0,
        });
    }
    let lu = Factorization::new(&sys.jacobian)?;
    let mut last_dx: Option<Vec<f64>> = None;
    for _ in 0..=tol.max_refinements {
        if let Some(dx) = &last_dx {
            let res_ok = sys
                .residual
                .iter()
                .zip(&sys.magnitude)
                .all(|(r, m)| r.abs() <= tol.abs || r.abs() <= tol.rel * m);
            let upd_ok = dx
                .iter()
                .zip(&x)
                .all(|(d, x)| d.abs() <= tol.abs || d.abs() <= tol.rel * x.abs());
            if res_ok && upd_ok {
                let nodes = inp.layout.node_count();
                let kcl = sys.residual[..nodes].iter().fold(0.0f64, |m, r| m.max(r.abs()));
                return Ok(CircuitSolution {
                    x,
                    iterations: 1,
                    kcl_residual: kcl,
                });
            }
        }
        let rhs: Vec<f64> = sys.residual.iter().map(|r| -r).collect();
        let dx = lu.solve(&rhs)?;
        for (x, d) in x.iter_mut().zip(&dx) {
            *x += d;
        }
        last_dx = Some(dx);
        sys = mna_assemble(inp, &x)?;
    }
    Err(CircuitError::NonConvergence(format!(
        "residual {:e} after {} refinements",
        sys.residual.iter().fold(0.0f64, |m, r| m.max(r.abs())),
        tol.max_refinements
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{bdf_context, Element, ElementKind as K, Waveform};

    fn circuit(elements: Vec<Element>) -> Circuit {
        let mut devs = BTreeMap::new();
        devs.insert("d".to_string(), vec!["a".to_string(), "b".to_string()]);
        Circuit::new(elements, &devs).unwrap()
    }

    fn index_of(c: &Circuit, name: &str) -> usize {
        c.elements().iter().position(|e| e.name == name).unwrap()
    }

    fn el(name: &str, a: &str, b: &str, kind: K) -> Element {
        Element::two_terminal(name, a, b, kind)
    }

    fn solve_steady(c: &Circuit, stamps: &[NortonEquivalent]) -> (MnaLayout, CircuitSolution) {
        let layout = MnaLayout::new(c, AnalysisMode::Steady);
        let hist = CircuitHistory::new(0.0, vec![0.0; layout.size()]);
        let ctx = BdfCoefficients::steady(0.0);
        let inp = MnaInputs {
            circuit: c,
            layout: &layout,
            history: &hist,
            stamps,
            ctx: &ctx,
            source_scale: 1.0,
        };
        let sol = newton_solve_circuit(&inp, &vec![0.0; layout.size()], &Default::default()).unwrap();
        (layout, sol)
    }

    /// Fixed-step transient; returns `(t, x)` samples.
    fn run(c: &Circuit, x0: Vec<f64>, dt: f64, steps: usize, order: u8) -> Vec<(f64, Vec<f64>)> {
        let layout = MnaLayout::new(c, AnalysisMode::Transient);
        let mut hist = CircuitHistory::new(0.0, x0);
        let mut out = Vec::new();
        for k in 1..=steps {
            let t = k as f64 * dt;
            let ctx = bdf_context(&hist.times(), t, order).unwrap();
            let inp = MnaInputs {
                circuit: c,
                layout: &layout,
                history: &hist,
                stamps: &[],
                ctx: &ctx,
                source_scale: 1.0,
            };
            let sol = newton_solve_circuit(&inp, hist.latest(), &Default::default()).unwrap();
            assert_eq!(sol.iterations, 1);
            hist.push(t, sol.x.clone());
            out.push((t, sol.x));
        }
        out
    }

    #[test]
    fn resistor_divider() {
        let c = circuit(vec![
            el("V1", "in", "0", K::VoltageSource(Waveform::Dc(1.0))),
            el("R1", "in", "mid", K::Resistor(1e3)),
            el("R2", "mid", "0", K::Resistor(1e3)),
        ]);
        let (layout, sol) = solve_steady(&c, &[]);
        assert_eq!(sol.iterations, 1);
        assert!((layout.voltage(&sol.x, "mid") - 0.5).abs() < 1e-12);
        // Source delivers 0.5 mA, so its branch current is negative.
        let i = sol.x[layout.branch(index_of(&c, "V1")).unwrap()];
        assert!((i + 0.5e-3).abs() < 1e-15, "{i}");
        assert!(sol.kcl_residual <= 1e-5);
    }

    fn stamp(g: f64, companion: [f64; 2]) -> NortonEquivalent {
        NortonEquivalent {
            electrodes: vec!["a".into(), "b".into()],
            voltages: vec![0.0, 0.0],
            g: vec![vec![g, -g], vec![-g, g]],
            companion: companion.to_vec(),
            currents: vec![0.0, 0.0],
        }
    }

    fn port(name: &str, a: &str, b: &str) -> Element {
        Element {
            name: name.into(),
            nodes: vec![a.into(), b.into()],
            kind: K::DevicePort {
                device: "d".into(),
                electrodes: vec!["a".into(), "b".into()],
            },
        }
    }

    #[test]
    fn norton_stamp_divider_and_pattern() {
        let c = circuit(vec![
            el("V1", "1", "0", K::VoltageSource(Waveform::Dc(1.0))),
            el("R1", "1", "2", K::Resistor(100.0)),
            port("X1", "2", "3"),
            el("R2", "3", "0", K::Resistor(1e-9)),
        ]);
        let stamps = [stamp(0.01, [0.0, 0.0])];
        let (layout, sol) = solve_steady(&c, &stamps);
        let v = layout.voltage(&sol.x, "2") - layout.voltage(&sol.x, "3");
        assert!((v - 0.5).abs() < 1e-6, "{v}");

        let hist = CircuitHistory::new(0.0, vec![0.0; layout.size()]);
        let ctx = BdfCoefficients::steady(0.0);
        let lonely = circuit(vec![
            port("X1", "p", "q"),
            el("R1", "p", "0", K::Resistor(1.0)),
            el("R2", "q", "0", K::Resistor(1.0)),
        ]);
        let lay = MnaLayout::new(&lonely, AnalysisMode::Steady);
        let only_port = MnaInputs {
            circuit: &lonely,
            layout: &lay,
            history: &hist,
            stamps: &stamps,
            ctx: &ctx,
            source_scale: 1.0,
        };
        let sys = mna_assemble(&only_port, &[0.0, 0.0]).unwrap();
        let j = sys.jacobian.to_dense();
        // Resistors add 1 S to each diagonal.
        assert_eq!(j, vec![vec![1.01, -0.01], vec![-0.01, 1.01]]);
    }

    #[test]
    fn missing_stamp_is_an_error() {
        let c = circuit(vec![port("X1", "1", "0"), el("R1", "1", "0", K::Resistor(1.0))]);
        let layout = MnaLayout::new(&c, AnalysisMode::Steady);
        let hist = CircuitHistory::new(0.0, vec![0.0]);
        let ctx = BdfCoefficients::steady(0.0);
        let inp = MnaInputs {
            circuit: &c,
            layout: &layout,
            history: &hist,
            stamps: &[],
            ctx: &ctx,
            source_scale: 1.0,
        };
        assert!(matches!(mna_assemble(&inp, &[0.0]), Err(CircuitError::MissingStamp(_))));
    }

    #[test]
    fn rc_step_response() {
        let (r, cap) = (1e3, 1e-6);
        let c = circuit(vec![
            el("V1", "in", "0", K::VoltageSource(Waveform::Dc(1.0))),
            el("R1", "in", "out", K::Resistor(r)),
            el("C1", "out", "0", K::Capacitor(cap, None)),
        ]);
        let layout = MnaLayout::new(&c, AnalysisMode::Transient);
        let mut x0 = vec![0.0; layout.size()];
        x0[layout.node("in").unwrap()] = 1.0;
        let tau = r * cap;
        let dt = tau / 200.0;
        let out = run(&c, x0, dt, 1000, 2);
        let worst = out
            .iter()
            .map(|(t, x)| (x[layout.node("out").unwrap()] - (1.0 - (-t / tau).exp())).abs())
            .fold(0.0, f64::max);
        // Global error of order (dt/tau)^2, including the BDF-1 start.
        assert!(worst < 5e-5, "{worst}");
    }

    #[test]
    fn rl_sine_steady_state_matches_phasor() {
        let (r, l, f) = (10.0, 20e-3, 60.0);
        let c = circuit(vec![
            el(
                "V1",
                "in",
                "0",
                K::VoltageSource(Waveform::Sin {
                    offset: 0.0,
                    amplitude: 1.0,
                    freq: f,
                    delay: 0.0,
                    damping: 0.0,
                    phase: 0.0,
                }),
            ),
            el("R1", "in", "mid", K::Resistor(r)),
            el("L1", "mid", "0", K::Inductor(l, None)),
        ]);
        let layout = MnaLayout::new(&c, AnalysisMode::Transient);
        let period = 1.0 / f;
        let dt = period / 2000.0;
        let cycles = 10;
        let out = run(&c, vec![0.0; layout.size()], dt, 2000 * cycles, 2);
        let il = layout.branch(index_of(&c, "L1")).unwrap();
        // Fourier projection over the last cycle.
        let w = 2.0 * std::f64::consts::PI * f;
        let last = &out[out.len() - 2000..];
        let (mut a, mut b) = (0.0, 0.0);
        for (t, x) in last {
            a += x[il] * (w * t).sin();
            b += x[il] * (w * t).cos();
        }
        a *= 2.0 / 2000.0;
        b *= 2.0 / 2000.0;
        let amp = (a * a + b * b).sqrt();
        let phase = b.atan2(a);
        let z = (r * r + (w * l).powi(2)).sqrt();
        let expected_phase = -(w * l / r).atan();
        assert!((amp * z - 1.0).abs() < 1e-3, "amplitude {amp} vs {}", 1.0 / z);
        assert!((phase / expected_phase - 1.0).abs() < 1e-3, "phase {phase} vs {expected_phase}");
    }

    #[test]
    fn initial_condition_mode_holds_capacitor_and_inductor() {
        let c = circuit(vec![
            el("C1", "1", "0", K::Capacitor(1e-6, Some(2.0))),
            el("R1", "1", "2", K::Resistor(1e3)),
            el("L1", "2", "0", K::Inductor(1e-3, Some(1e-3))),
        ]);
        let layout = MnaLayout::new(&c, AnalysisMode::InitialCondition);
        assert_eq!(layout.size(), 4);
        let hist = CircuitHistory::new(0.0, vec![0.0; 4]);
        let ctx = BdfCoefficients::steady(0.0);
        let inp = MnaInputs {
            circuit: &c,
            layout: &layout,
            history: &hist,
            stamps: &[],
            ctx: &ctx,
            source_scale: 1.0,
        };
        let sol = newton_solve_circuit(&inp, &[0.0; 4], &Default::default()).unwrap();
        assert!((layout.voltage(&sol.x, "1") - 2.0).abs() < 1e-12);
        let l1 = index_of(&c, "L1");
        assert!((sol.x[layout.branch(l1).unwrap()] - 1e-3).abs() < 1e-15);
        // v(2) = 2 V − 1 mA · 1 kΩ
        assert!((layout.voltage(&sol.x, "2") - 1.0).abs() < 1e-12);

        let tran = MnaLayout::new(&c, AnalysisMode::Transient);
        let moved = layout.transfer(&sol.x, &tran);
        assert_eq!(moved.len(), 3);
        assert_eq!(moved[tran.branch(l1).unwrap()], sol.x[layout.branch(l1).unwrap()]);
    }
}
