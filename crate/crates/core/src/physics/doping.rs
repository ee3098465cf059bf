use super::PhysicsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DopantKind {
    Donor,
    Acceptor,
}

impl DopantKind {
    fn sign(self) -> f64 {
        match self {
            DopantKind::Donor => 1.0,
            DopantKind::Acceptor => -1.0,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            DopantKind::Donor => DopantKind::Acceptor,
            DopantKind::Acceptor => DopantKind::Donor,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopingRegion {
    /// Span `[start, end)` in cm.
    pub start: f64,
    pub end: f64,
    pub kind: DopantKind,
    /// Plateau concentration (cm⁻³).
    pub peak: f64,
    /// Characteristic width of the error-function edges (cm); zero gives an
    /// abrupt step.
    pub transition: f64,
}

/// Piecewise box profile with error-function edges.
///
/// Each region contributes `peak · ½[erf((x − a)/w_a) − erf((x − b)/w_b)]`.
/// Interior edges share the mean width of the two adjacent regions, which
/// keeps the net doping continuous; the outer device faces are not smoothed.
#[derive(Debug, Clone, PartialEq)]
pub struct DopingProfile {
    regions: Vec<DopingRegion>,
    edge_widths: Vec<f64>,
}

impl DopingProfile {
    pub fn new(regions: Vec<DopingRegion>) -> Result<Self, PhysicsError> {
        if regions.is_empty() {
            return Err(PhysicsError::BadRegions("no regions".into()));
        }
        if regions[0].start != 0.0 {
            return Err(PhysicsError::BadRegions(format!(
                "first region starts at {} cm, expected 0",
                regions[0].start
            )));
        }
        for (k, r) in regions.iter().enumerate() {
            if !(r.end > r.start) {
                return Err(PhysicsError::NonPositiveLength(r.end - r.start));
            }
            if !(r.peak > 0.0) {
                return Err(PhysicsError::NonPositiveParameter {
                    name: format!("region {k} peak"),
                    value: r.peak,
                });
            }
            if !(r.transition >= 0.0) {
                return Err(PhysicsError::NonPositiveParameter {
                    name: format!("region {k} transition"),
                    value: r.transition,
                });
            }
        }
        for (k, w) in regions.windows(2).enumerate() {
            let gap = w[1].start - w[0].end;
            let tol = 1e-12 * w[0].end.abs().max(1e-12);
            if gap < -tol {
                return Err(PhysicsError::BadRegions(format!(
                    "regions {k} and {} overlap",
                    k + 1
                )));
            }
            if gap > tol {
                return Err(PhysicsError::BadRegions(format!(
                    "gap between regions {k} and {}",
                    k + 1
                )));
            }
        }
        let edge_widths = regions
            .windows(2)
            .map(|w| 0.5 * (w[0].transition + w[1].transition))
            .collect();
        Ok(Self {
            regions,
            edge_widths,
        })
    }

    pub fn regions(&self) -> &[DopingRegion] {
        &self.regions
    }

    pub fn length(&self) -> f64 {
        self.regions[self.regions.len() - 1].end
    }

    pub fn region_index(&self, x: f64) -> Result<usize, PhysicsError> {
        self.check(x)?;
        Ok(self
            .regions
            .iter()
            .position(|r| x < r.end)
            .unwrap_or(self.regions.len() - 1))
    }

    fn check(&self, x: f64) -> Result<(), PhysicsError> {
        let length = self.length();
        let slack = 1e-12 * length;
        if x < -slack || x > length + slack || !x.is_finite() {
            return Err(PhysicsError::OutsideDevice { x, length });
        }
        Ok(())
    }

    /// Concentration carried by region `k` at `x`, always non-negative.
    fn contribution(&self, k: usize, x: f64) -> f64 {
        let r = &self.regions[k];
        let lower = if k == 0 {
            1.0
        } else {
            smooth_step(x - r.start, self.edge_widths[k - 1])
        };
        let upper = if k + 1 == self.regions.len() {
            -1.0
        } else {
            smooth_step(x - r.end, self.edge_widths[k])
        };
        r.peak * 0.5 * (lower - upper)
    }

    /// Signed net doping `N_D − N_A` (cm⁻³).
    pub fn net_doping(&self, x: f64) -> Result<f64, PhysicsError> {
        self.check(x)?;
        Ok((0..self.regions.len())
            .map(|k| self.regions[k].kind.sign() * self.contribution(k, x))
            .sum())
    }

    /// Total ionised impurity concentration `N_D + N_A` (cm⁻³).
    pub fn total_doping(&self, x: f64) -> Result<f64, PhysicsError> {
        self.check(x)?;
        Ok((0..self.regions.len()).map(|k| self.contribution(k, x)).sum())
    }

    pub fn max_abs_doping(&self) -> f64 {
        self.regions.iter().map(|r| r.peak).fold(0.0, f64::max)
    }

    /// Same spans with donors and acceptors exchanged.
    pub fn swapped(&self) -> Self {
        let regions = self
            .regions
            .iter()
            .map(|r| DopingRegion {
                kind: r.kind.swapped(),
                ..r.clone()
            })
            .collect();
        Self {
            regions,
            edge_widths: self.edge_widths.clone(),
        }
    }
}

/// `erf(d / w)`, degenerating to `sign(d)` for an abrupt edge.
fn smooth_step(d: f64, width: f64) -> f64 {
    if width == 0.0 {
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    } else {
        libm::erf(d / width)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const UM: f64 = 1e-4;

    fn pn(width: f64) -> DopingProfile {
        DopingProfile::new(vec![
            DopingRegion {
                start: 0.0,
                end: 5.0 * UM,
                kind: DopantKind::Acceptor,
                peak: 1e16,
                transition: width,
            },
            DopingRegion {
                start: 5.0 * UM,
                end: 10.0 * UM,
                kind: DopantKind::Donor,
                peak: 1e16,
                transition: width,
            },
        ])
        .unwrap()
    }

    #[test]
    fn symmetric_junction_midpoint_is_zero() {
        assert_eq!(pn(0.2 * UM).net_doping(5.0 * UM).unwrap(), 0.0);
        assert_eq!(pn(0.0).net_doping(5.0 * UM).unwrap(), 0.0);
    }

    #[test]
    fn plateau_values() {
        let p = pn(0.1 * UM);
        assert!((p.net_doping(1.0 * UM).unwrap() + 1e16).abs() < 1.0);
        assert!((p.net_doping(9.0 * UM).unwrap() - 1e16).abs() < 1.0);
        assert!((p.total_doping(9.0 * UM).unwrap() - 1e16).abs() < 1.0);
    }

    #[test]
    fn outside_is_error() {
        assert!(matches!(
            pn(0.0).net_doping(11.0 * UM),
            Err(PhysicsError::OutsideDevice { .. })
        ));
    }

    #[test]
    fn overlap_and_gap_rejected() {
        let mk = |s2: f64| {
            DopingProfile::new(vec![
                DopingRegion {
                    start: 0.0,
                    end: 1.0,
                    kind: DopantKind::Donor,
                    peak: 1.0,
                    transition: 0.0,
                },
                DopingRegion {
                    start: s2,
                    end: 2.0,
                    kind: DopantKind::Donor,
                    peak: 1.0,
                    transition: 0.0,
                },
            ])
        };
        assert!(matches!(mk(0.5), Err(PhysicsError::BadRegions(m)) if m.contains("overlap")));
        assert!(matches!(mk(1.5), Err(PhysicsError::BadRegions(m)) if m.contains("gap")));
        assert!(mk(1.0).is_ok());
    }

    #[test]
    fn swap_is_odd() {
        let p = pn(0.3 * UM);
        let s = p.swapped();
        for k in 0..=50 {
            let x = 10.0 * UM * k as f64 / 50.0;
            assert_eq!(p.net_doping(x).unwrap(), -s.net_doping(x).unwrap());
        }
    }

    #[test]
    fn continuous_across_edges() {
        let p = pn(0.05 * UM);
        let x = 5.0 * UM;
        let d = 1e-9 * UM;
        let jump = (p.net_doping(x + d).unwrap() - p.net_doping(x - d).unwrap()).abs();
        assert!(jump < 1e16 * 1e-6);
    }
}
