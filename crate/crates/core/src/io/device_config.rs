//! TOML device descriptions.
//!
//! ```toml
//! name = "pn"
//! area = "1e-4 cm^2"
//! temperature = "300 K"      # optional
//! tau_n = "1 us"             # optional defaults for regions without lifetimes
//! tau_p = "1 us"
//!
//! [mesh]
//! vertices = 201             # uniform, or graded:
//! # h_min = "0.01 um"
//! # h_max = "1 um"
//! # growth = 1.2
//!
//! [[region]]
//! name = "p"
//! dopant = "acceptor"
//! peak = "1e16 cm^-3"
//! depth = "5 um"             # thickness of the layer
//! transition = "0.1 um"      # optional, erf edge width
//! tau_n = "500 us"           # optional
//! tau_p = "150 us"
//!
//! [[contact]]
//! name = "anode"
//! side = "left"
//! ```
//!
//! Regions are stacked left to right. A region may give `start`; it must
//! then equal the end of the previous region. Graded meshes refine toward
//! every region boundary.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::units::{parse_quantity, Dimension};
use crate::device::{Device, Lifetimes};
use crate::physics::{
    build_mesh, DopantKind, DopingProfile, DopingRegion, Geometry, PhysicalModels, Refinement, Side,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub name: String,
    pub area: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<String>,
    pub mesh: MeshConfig,
    #[serde(rename = "region")]
    pub regions: Vec<RegionConfig>,
    #[serde(rename = "contact", default)]
    pub contacts: Vec<ContactConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MeshConfig {
    Uniform {
        vertices: usize,
    },
    Graded {
        h_min: String,
        h_max: String,
        growth: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub name: String,
    pub dopant: DopantKind,
    pub peak: String,
    pub depth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_n: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    pub name: String,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Toml(String),
    #[error("{0}")]
    Invalid(String),
}

/// Validated device description in base units (cm, cm⁻³, s, K).
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub name: String,
    pub geometry: Geometry,
    pub refinement: Refinement,
    pub profile: DopingProfile,
    pub models: PhysicalModels,
    /// Per-region lifetimes, indexed like the profile regions.
    pub lifetimes: Vec<Option<Lifetimes>>,
    pub regions: Vec<RegionRow>,
}

/// One row of the region table, echoing the configuration text.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionRow {
    pub name: String,
    pub dopant: DopantKind,
    pub peak: String,
    pub depth: String,
    pub lifetimes: Option<(String, String)>,
}

pub fn parse_device_config(text: &str) -> Result<DeviceSpec, ConfigError> {
    let cfg: DeviceConfig = toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))?;
    cfg.validate()
}

impl DeviceConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("device config serializes")
    }

    pub fn validate(&self) -> Result<DeviceSpec, ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(format!("device `{}`: {m}", self.name));
        let q = |s: &str, d: Dimension, what: &str| -> Result<f64, ConfigError> {
            let v = parse_quantity(s, d).map_err(|e| invalid(format!("{what}: {e}")))?;
            if !(v > 0.0) {
                return Err(invalid(format!("{what} must be positive, got `{s}`")));
            }
            Ok(v)
        };
        let mut models = PhysicalModels::silicon();
        if let Some(t) = &self.temperature {
            let t = q(t, Dimension::Temperature, "temperature")?;
            let s = (t / models.temperature).powf(1.5);
            models.nc *= s;
            models.nv *= s;
            models.temperature = t;
        }
        if let Some(t) = &self.tau_n {
            models.tau_n = q(t, Dimension::Time, "tau_n")?;
        }
        if let Some(t) = &self.tau_p {
            models.tau_p = q(t, Dimension::Time, "tau_p")?;
        }
        if self.regions.is_empty() {
            return Err(invalid("no regions".into()));
        }
        if self.contacts.is_empty() {
            return Err(invalid("no contacts".into()));
        }
        for (k, c) in self.contacts.iter().enumerate() {
            if self.contacts[..k].iter().any(|o| o.name == c.name || o.side == c.side) {
                return Err(invalid(format!("contact `{}` repeats a name or side", c.name)));
            }
        }

        let mut doping = Vec::new();
        let mut lengths = Vec::new();
        let mut lifetimes = Vec::new();
        let mut rows = Vec::new();
        let mut pos = 0.0;
        for r in &self.regions {
            let what = |f: &str| format!("region `{}` {f}", r.name);
            let depth = q(&r.depth, Dimension::Length, &what("depth"))?;
            if let Some(s) = &r.start {
                let start = parse_quantity(s, Dimension::Length).map_err(|e| invalid(what(&e)))?;
                let tol = 1e-9 * (pos + depth);
                if start < pos - tol {
                    return Err(invalid(format!("region `{}` overlaps the previous region", r.name)));
                }
                if start > pos + tol {
                    return Err(invalid(format!("gap before region `{}`", r.name)));
                }
            }
            let transition = match &r.transition {
                Some(s) => parse_quantity(s, Dimension::Length).map_err(|e| invalid(what(&e)))?,
                None => 0.0,
            };
            if transition < 0.0 {
                return Err(invalid(what("transition must not be negative")));
            }
            doping.push(DopingRegion {
                start: pos,
                end: pos + depth,
                kind: r.dopant,
                peak: q(&r.peak, Dimension::Concentration, &what("peak"))?,
                transition,
            });
            let tau = match (&r.tau_n, &r.tau_p) {
                (None, None) => None,
                (n, p) => {
                    let n = n.as_deref().map_or(Ok(models.tau_n), |s| q(s, Dimension::Time, &what("tau_n")))?;
                    let p = p.as_deref().map_or(Ok(models.tau_p), |s| q(s, Dimension::Time, &what("tau_p")))?;
                    Some((n, p))
                }
            };
            lifetimes.push(tau);
            rows.push(RegionRow {
                name: r.name.clone(),
                dopant: r.dopant,
                peak: r.peak.clone(),
                depth: r.depth.clone(),
                lifetimes: tau.map(|_| {
                    let show = |s: &Option<String>, d: f64| s.clone().unwrap_or_else(|| format!("{d} s"));
                    (show(&r.tau_n, models.tau_n), show(&r.tau_p, models.tau_p))
                }),
            });
            lengths.push(depth);
            pos += depth;
        }
        models.validate().map_err(|e| invalid(e.to_string()))?;
        let profile = DopingProfile::new(doping).map_err(|e| invalid(e.to_string()))?;
        let refinement = match &self.mesh {
            MeshConfig::Uniform { vertices } => Refinement::Uniform { vertices: *vertices },
            MeshConfig::Graded { h_min, h_max, growth } => {
                let mut junctions = Vec::new();
                let mut x = 0.0;
                for l in &lengths[..lengths.len() - 1] {
                    x += l;
                    junctions.push(x);
                }
                Refinement::Graded {
                    h_min: q(h_min, Dimension::Length, "mesh h_min")?,
                    h_max: q(h_max, Dimension::Length, "mesh h_max")?,
                    growth: *growth,
                    junctions,
                }
            }
        };
        Ok(DeviceSpec {
            name: self.name.clone(),
            geometry: Geometry {
                region_lengths: lengths,
                area: q(&self.area, Dimension::Area, "area")?,
                contacts: self.contacts.iter().map(|c| (c.name.clone(), c.side)).collect(),
            },
            refinement,
            profile,
            models,
            lifetimes,
            regions: rows,
        })
    }
}

impl DeviceSpec {
    pub fn build(&self) -> Result<Device, ConfigError> {
        let invalid = |e: crate::physics::PhysicsError| ConfigError::Invalid(format!("device `{}`: {e}", self.name));
        let mesh = build_mesh(&self.geometry, &self.refinement).map_err(invalid)?;
        Device::new(mesh, &self.profile, self.models.clone(), &self.lifetimes).map_err(invalid)
    }

    /// Total thickness (cm).
    pub fn length(&self) -> f64 {
        self.geometry.region_lengths.iter().sum()
    }
}

impl fmt::Display for DeviceSpec {
    /// Region table: name, dopant, peak concentration and depth as written
    /// in the configuration, plus lifetimes where given.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<16} {:<9} {:>16} {:>10}  lifetimes (n / p)", "region", "dopant", "peak", "depth")?;
        for r in &self.regions {
            let dopant = match r.dopant {
                DopantKind::Donor => "donor",
                DopantKind::Acceptor => "acceptor",
            };
            let tau = r.lifetimes.as_ref().map_or("-".to_string(), |(n, p)| format!("{n} / {p}"));
            writeln!(f, "{:<16} {:<9} {:>16} {:>10}  {tau}", r.name, dopant, r.peak, r.depth)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BAR: &str = r#"
name = "bar"
area = "1e-4 cm^2"

[mesh]
vertices = 41

[[region]]
name = "n"
dopant = "donor"
peak = "1e16 cm^-3"
depth = "10 um"

[[contact]]
name = "left"
side = "left"

[[contact]]
name = "right"
side = "right"
"#;

    #[test]
    fn uniform_bar() {
        let spec = parse_device_config(BAR).unwrap();
        assert_eq!(spec.length(), 10e-4);
        let d = spec.build().unwrap();
        assert_eq!(d.vertex_count(), 41);
        assert_eq!(d.electrode_names(), ["left", "right"]);
        assert!(d.net_doping().iter().all(|&n| n == 1e16));
    }

    #[test]
    fn roundtrip() {
        let cfg: DeviceConfig = toml::from_str(BAR).unwrap();
        let back: DeviceConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn region_lifetimes_are_stored() {
        let text = BAR.replace("depth = \"10 um\"", "depth = \"10 um\"\ntau_n = \"500 us\"\ntau_p = \"150 us\"");
        let spec = parse_device_config(&text).unwrap();
        assert_eq!(spec.lifetimes, [Some((500e-6, 150e-6))]);
        let d = spec.build().unwrap();
        assert!(d.tau_n().iter().all(|&t| t == 500e-6));
        assert!(d.tau_p().iter().all(|&t| t == 150e-6));
        assert!(spec.to_string().contains("500 us / 150 us"));
    }

    #[test]
    fn errors() {
        let no_contacts = BAR.split("[[contact]]").next().unwrap();
        let e = parse_device_config(no_contacts).unwrap_err();
        assert!(e.to_string().contains("no contacts"), "{e}");

        let e = parse_device_config(&BAR.replace("10 um", "-1 um")).unwrap_err();
        assert!(e.to_string().contains("must be positive"), "{e}");

        let e = parse_device_config(&BAR.replace("1e16 cm^-3", "1e16")).unwrap_err();
        assert!(e.to_string().contains("unit"), "{e}");

        let two = format!(
            "{BAR}\n[[region]]\nname = \"p\"\ndopant = \"acceptor\"\npeak = \"1e16 cm^-3\"\ndepth = \"5 um\"\nstart = \"8 um\"\n"
        );
        let e = parse_device_config(&two).unwrap_err();
        assert!(e.to_string().contains("overlaps"), "{e}");
        assert!(parse_device_config(&two.replace("8 um", "10 um")).is_ok());

        let e = parse_device_config(&BAR.replace("vertices", "verts")).unwrap_err();
        assert!(matches!(e, ConfigError::Toml(_)));
    }
}
