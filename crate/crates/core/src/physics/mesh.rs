use super::PhysicsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub name: String,
    pub side: Side,
    pub vertex: usize,
}

/// Layer stack of a one-dimensional device.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Thickness of each region, left to right (cm).
    pub region_lengths: Vec<f64>,
    /// Cross-section area (cm²).
    pub area: f64,
    pub contacts: Vec<(String, Side)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Refinement {
    /// `vertices` equally spaced points over the whole device.
    Uniform { vertices: usize },
    /// Geometric grading: spacing starts at `h_min` at each junction and grows
    /// by `growth` per edge up to `h_max`. All lengths in cm.
    Graded {
        h_min: f64,
        h_max: f64,
        growth: f64,
        junctions: Vec<f64>,
    },
}

/// Vertex chain with midpoint control volumes.
///
/// Edge `i` joins vertices `i` and `i + 1`. Every edge facet has measure
/// equal to the cross-section area.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceMesh {
    x: Vec<f64>,
    volumes: Vec<f64>,
    area: f64,
    contacts: Vec<Contact>,
}

impl DeviceMesh {
    pub fn from_vertices(
        x: Vec<f64>,
        area: f64,
        contacts: &[(String, Side)],
    ) -> Result<Self, PhysicsError> {
        if x.len() < 2 {
            return Err(PhysicsError::BadRefinement(
                "at least two vertices required".into(),
            ));
        }
        for w in x.windows(2) {
            if !(w[1] - w[0] > 0.0) {
                return Err(PhysicsError::NonPositiveLength(w[1] - w[0]));
            }
        }
        if !(area > 0.0) {
            return Err(PhysicsError::NonPositiveParameter {
                name: "area".into(),
                value: area,
            });
        }
        let last = x.len() - 1;
        let mut volumes = vec![0.0; x.len()];
        for i in 0..last {
            let half = 0.5 * (x[i + 1] - x[i]);
            volumes[i] += half;
            volumes[i + 1] += half;
        }
        let mut out = Vec::with_capacity(contacts.len());
        for (name, side) in contacts {
            if out.iter().any(|c: &Contact| &c.name == name) {
                return Err(PhysicsError::BadContact(name.clone(), "duplicate name".into()));
            }
            if out.iter().any(|c: &Contact| c.side == *side) {
                return Err(PhysicsError::BadContact(
                    name.clone(),
                    "side already has a contact".into(),
                ));
            }
            let vertex = match side {
                Side::Left => 0,
                Side::Right => last,
            };
            out.push(Contact {
                name: name.clone(),
                side: *side,
                vertex,
            });
        }
        Ok(Self {
            x,
            volumes,
            area,
            contacts: out,
        })
    }

    pub fn vertices(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.x.len() - 1
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        self.x[edge + 1] - self.x[edge]
    }

    /// Control volume length of vertex `i` (cm).
    pub fn volume(&self, i: usize) -> f64 {
        self.volumes[i]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn length(&self) -> f64 {
        self.x[self.x.len() - 1] - self.x[0]
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn contact(&self, name: &str) -> Option<&Contact> {
        self.contacts.iter().find(|c| c.name == name)
    }

    /// Neighbouring vertices of `i` (at most two).
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> {
        let last = self.x.len() - 1;
        let left = (i > 0).then(|| i - 1);
        let right = (i < last).then_some(i + 1);
        left.into_iter().chain(right)
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        i == 0 || i + 1 == self.x.len()
    }
}

pub fn build_mesh(geometry: &Geometry, refinement: &Refinement) -> Result<DeviceMesh, PhysicsError> {
    if geometry.region_lengths.is_empty() {
        return Err(PhysicsError::EmptyGeometry);
    }
    let mut bounds = vec![0.0];
    for &len in &geometry.region_lengths {
        if !(len > 0.0) || !len.is_finite() {
            return Err(PhysicsError::NonPositiveLength(len));
        }
        bounds.push(bounds[bounds.len() - 1] + len);
    }
    let total = bounds[bounds.len() - 1];

    let x = match refinement {
        Refinement::Uniform { vertices } => {
            if *vertices < 2 {
                return Err(PhysicsError::BadRefinement(format!(
                    "uniform mesh needs at least 2 vertices, got {vertices}"
                )));
            }
            let n = *vertices - 1;
            (0..=n).map(|k| total * k as f64 / n as f64).collect()
        }
        Refinement::Graded {
            h_min,
            h_max,
            growth,
            junctions,
        } => graded_vertices(&bounds, *h_min, *h_max, *growth, junctions)?,
    };
    DeviceMesh::from_vertices(x, geometry.area, &geometry.contacts)
}

fn graded_vertices(
    bounds: &[f64],
    h_min: f64,
    h_max: f64,
    growth: f64,
    junctions: &[f64],
) -> Result<Vec<f64>, PhysicsError> {
    if !(h_min > 0.0) || !(h_max >= h_min) {
        return Err(PhysicsError::BadRefinement(format!(
            "need 0 < h_min <= h_max, got h_min = {h_min}, h_max = {h_max}"
        )));
    }
    if !(growth >= 1.0) {
        return Err(PhysicsError::BadRefinement(format!(
            "growth factor must be >= 1, got {growth}"
        )));
    }
    let total = bounds[bounds.len() - 1];
    let mut breaks: Vec<f64> = bounds.to_vec();
    for &j in junctions {
        if !(j > 0.0 && j < total) {
            return Err(PhysicsError::BadRefinement(format!(
                "junction at {j} cm is not inside the device"
            )));
        }
        breaks.push(j);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * total);
    let is_junction = |p: f64| junctions.iter().any(|&j| (j - p).abs() <= 1e-12 * total);

    let mut x = vec![0.0];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = b - a;
        let steps = match (is_junction(a), is_junction(b)) {
            (false, false) => {
                let n = (len / h_max).ceil().max(1.0) as usize;
                vec![len / n as f64; n]
            }
            (true, false) => geometric_steps(len, h_min, h_max, growth),
            (false, true) => {
                let mut s = geometric_steps(len, h_min, h_max, growth);
                s.reverse();
                s
            }
            (true, true) => {
                let mut left = geometric_steps(0.5 * len, h_min, h_max, growth);
                let mut right = left.clone();
                right.reverse();
                left.append(&mut right);
                left
            }
        };
        let mut pos = a;
        for (k, h) in steps.iter().enumerate() {
            pos = if k + 1 == steps.len() { b } else { pos + h };
            x.push(pos);
        }
    }
    Ok(x)
}

/// Steps growing from `h_min` by `growth` (capped at `h_max`), rescaled to
/// cover exactly `len`.
fn geometric_steps(len: f64, h_min: f64, h_max: f64, growth: f64) -> Vec<f64> {
    let mut steps = Vec::new();
    let mut h = h_min;
    let mut sum = 0.0;
    while sum < len {
        steps.push(h);
        sum += h;
        h = (h * growth).min(h_max);
    }
    // Drop a final step that overshoots by more than half of itself, then
    // stretch the rest; otherwise shrink everything.
    if steps.len() > 1 {
        let last = steps[steps.len() - 1];
        if sum - len > 0.5 * last {
            steps.pop();
            sum -= last;
        }
    }
    let scale = len / sum;
    steps.iter().map(|h| h * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = 1e-4;

    fn two_contacts() -> Vec<(String, Side)> {
        vec![("a".into(), Side::Left), ("k".into(), Side::Right)]
    }

    #[test]
    fn uniform_bar_control_volumes() {
        let g = Geometry {
            region_lengths: vec![1.0 * UM],
            area: 1e-8,
            contacts: two_contacts(),
        };
        let m = build_mesh(&g, &Refinement::Uniform { vertices: 11 }).unwrap();
        assert_eq!(m.len(), 11);
        assert!((m.volume(0) - 0.05 * UM).abs() < 1e-18);
        assert!((m.volume(10) - 0.05 * UM).abs() < 1e-18);
        for i in 1..10 {
            assert!((m.volume(i) - 0.1 * UM).abs() < 1e-17);
        }
        assert_eq!(m.contact("k").unwrap().vertex, 10);
    }

    #[test]
    fn graded_mesh_is_finest_at_junction() {
        let g = Geometry {
            region_lengths: vec![10.0 * UM, 10.0 * UM],
            area: 1e-4,
            contacts: two_contacts(),
        };
        let r = Refinement::Graded {
            h_min: 0.01 * UM,
            h_max: 1.0 * UM,
            growth: 1.3,
            junctions: vec![10.0 * UM],
        };
        let m = build_mesh(&g, &r).unwrap();
        let edges: Vec<f64> = (0..m.edge_count()).map(|e| m.edge_length(e)).collect();
        let jv = m
            .vertices()
            .iter()
            .position(|&x| (x - 10.0 * UM).abs() < 1e-15)
            .expect("junction is a vertex");
        let min = edges.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((edges[jv] - min).abs() <= 1e-12 * min || (edges[jv - 1] - min).abs() <= 1e-12 * min);
        for e in jv..edges.len() - 1 {
            assert!(edges[e + 1] >= edges[e] * (1.0 - 1e-12));
        }
        for e in 1..jv {
            assert!(edges[e - 1] >= edges[e] * (1.0 - 1e-12));
        }
        let total: f64 = m.volumes().iter().sum();
        assert!((total - 20.0 * UM).abs() < 1e-12 * 20.0 * UM);
    }

    #[test]
    fn errors() {
        let empty = Geometry {
            region_lengths: vec![],
            area: 1.0,
            contacts: vec![],
        };
        assert_eq!(
            build_mesh(&empty, &Refinement::Uniform { vertices: 3 }),
            Err(PhysicsError::EmptyGeometry)
        );
        let neg = Geometry {
            region_lengths: vec![1.0, -1.0],
            area: 1.0,
            contacts: vec![],
        };
        assert!(matches!(
            build_mesh(&neg, &Refinement::Uniform { vertices: 3 }),
            Err(PhysicsError::NonPositiveLength(_))
        ));
        let ok = Geometry {
            region_lengths: vec![1.0],
            area: 1.0,
            contacts: vec![],
        };
        let bad = Refinement::Graded {
            h_min: 0.0,
            h_max: 1.0,
            growth: 1.2,
            junctions: vec![],
        };
        assert!(matches!(build_mesh(&ok, &bad), Err(PhysicsError::BadRefinement(_))));
    }

    #[test]
    fn neighbors_in_1d() {
        let m = DeviceMesh::from_vertices(vec![0.0, 1.0, 2.0], 1.0, &[]).unwrap();
        assert_eq!(m.neighbors(0).collect::<Vec<_>>(), vec![1]);
        assert_eq!(m.neighbors(1).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(m.neighbors(2).collect::<Vec<_>>(), vec![1]);
    }
}
