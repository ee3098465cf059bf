//! Netlists, device configurations, run settings and unit handling.

mod device_config;
mod netlist;
mod run;
mod units;

pub use device_config::{
    parse_device_config, ConfigError, ContactConfig, DeviceConfig, DeviceSpec, MeshConfig, RegionConfig, RegionRow,
};
pub use netlist::{parse_netlist, DeviceDecl, Netlist, NetlistError, TranSpec};
pub use units::{parse_quantity, parse_spice_number, Dimension};
pub use run::{load_netlist, options_table, set_option, LoadError, Loaded, RunConfig};
