use super::PhysicsError;

/// Electrostatic potential (V) and carrier densities (cm⁻³) per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Carriers {
    pub psi: Vec<f64>,
    pub n: Vec<f64>,
    pub p: Vec<f64>,
}

impl Carriers {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn validate(&self, vertices: usize) -> Result<(), PhysicsError> {
        if self.psi.len() != vertices || self.n.len() != vertices || self.p.len() != vertices {
            return Err(PhysicsError::BadState(format!(
                "expected {vertices} values per field, got ({}, {}, {})",
                self.psi.len(),
                self.n.len(),
                self.p.len()
            )));
        }
        if let Some(i) = (0..vertices).find(|&i| !(self.n[i] > 0.0 && self.p[i] > 0.0)) {
            return Err(PhysicsError::BadState(format!(
                "non-positive carrier density at vertex {i}"
            )));
        }
        if self.psi.iter().any(|v| !v.is_finite()) {
            return Err(PhysicsError::BadState("non-finite potential".into()));
        }
        Ok(())
    }

    /// Unknowns interleaved as `(ψ, n, p)` per vertex.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * self.len());
        for i in 0..self.len() {
            x.extend([self.psi[i], self.n[i], self.p[i]]);
        }
        x
    }

    pub fn from_vector(x: &[f64]) -> Self {
        let m = x.len() / 3;
        let mut c = Carriers {
            psi: Vec::with_capacity(m),
            n: Vec::with_capacity(m),
            p: Vec::with_capacity(m),
        };
        for v in x.chunks_exact(3) {
            c.psi.push(v[0]);
            c.n.push(v[1]);
            c.p.push(v[2]);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub carriers: Carriers,
}

/// Accepted time points, newest first. Three are kept: two feed the BDF-2
/// formula and the third the quadratic predictor for error estimation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    snapshots: Vec<Snapshot>,
}

impl History {
    pub const DEPTH: usize = 3;

    pub fn new(initial: Snapshot) -> Self {
        Self {
            snapshots: vec![initial],
        }
    }

    pub fn push(&mut self, snap: Snapshot) {
        self.snapshots.insert(0, snap);
        self.snapshots.truncate(Self::DEPTH);
    }

    /// Drop everything except the newest point (BDF-1 restart).
    pub fn restart(&mut self) {
        self.snapshots.truncate(1);
    }

    pub fn get(&self, k: usize) -> Option<&Snapshot> {
        self.snapshots.get(k)
    }

    pub fn latest(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter()
    }
}

/// Current carrier values together with their accepted history.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub carriers: Carriers,
    pub history: History,
}

impl DeviceState {
    pub fn new(carriers: Carriers, time: f64) -> Self {
        let history = History::new(Snapshot {
            time,
            carriers: carriers.clone(),
        });
        Self { carriers, history }
    }

    pub fn psi(&self) -> &[f64] {
        &self.carriers.psi
    }

    pub fn n(&self) -> &[f64] {
        &self.carriers.n
    }

    pub fn p(&self) -> &[f64] {
        &self.carriers.p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Carriers {
        Carriers {
            psi: vec![v; 2],
            n: vec![1.0; 2],
            p: vec![1.0; 2],
        }
    }

    #[test]
    fn history_keeps_three_newest() {
        let mut h = History::new(Snapshot { time: 0.0, carriers: c(0.0) });
        for k in 1..5 {
            h.push(Snapshot { time: k as f64, carriers: c(k as f64) });
        }
        assert_eq!(h.times(), vec![4.0, 3.0, 2.0]);
        h.restart();
        assert_eq!(h.times(), vec![4.0]);
    }

    #[test]
    fn vector_round_trip_and_validation() {
        let s = Carriers {
            psi: vec![0.1, 0.2],
            n: vec![1e16, 1e15],
            p: vec![1e4, 1e5],
        };
        assert_eq!(Carriers::from_vector(&s.to_vector()), s);
        assert!(s.validate(2).is_ok());
        assert!(s.validate(3).is_err());
        let mut bad = s.clone();
        bad.n[1] = 0.0;
        assert!(bad.validate(2).is_err());
    }
}
