//! Device power profiles.
//!
//! Every power number used by the evaluator, the MILP builder and the solver
//! comes from a [`Catalog`]. The built-in [`Catalog::default_catalog`] holds the
//! published server and networking-equipment figures; a catalog can also be
//! loaded from (and saved to) a TOML file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hardware class of a physical node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeClass {
    Iot,
    Onu,
    Olt,
    MetroSwitch,
    MetroRouter,
    CoreNode,
    AccessFog,
    MetroFog,
    Cdc,
}

impl NodeClass {
    pub const ALL: [NodeClass; 9] = [
        NodeClass::Iot,
        NodeClass::Onu,
        NodeClass::Olt,
        NodeClass::MetroSwitch,
        NodeClass::MetroRouter,
        NodeClass::CoreNode,
        NodeClass::AccessFog,
        NodeClass::MetroFog,
        NodeClass::Cdc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Iot => "iot",
            NodeClass::Onu => "onu",
            NodeClass::Olt => "olt",
            NodeClass::MetroSwitch => "metro_switch",
            NodeClass::MetroRouter => "metro_router",
            NodeClass::CoreNode => "core",
            NodeClass::AccessFog => "af",
            NodeClass::MetroFog => "mf",
            NodeClass::Cdc => "cdc",
        }
    }

    /// Whether nodes of this class can host VMs.
    pub fn is_processing(self) -> bool {
        matches!(
            self,
            NodeClass::Iot | NodeClass::AccessFog | NodeClass::MetroFog | NodeClass::Cdc
        )
    }
}

impl fmt::Display for NodeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown node class `{s}`")))
    }
}

/// Power profile of one processing server class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingProfile {
    /// Watts at full load, per server.
    pub max_power: f64,
    /// Watts when switched on and idle, per server.
    pub idle_power: f64,
    /// GFLOPS per server.
    pub capacity: f64,
    /// W/GFLOPS. The published efficiency column; it is authoritative even where
    /// it disagrees with `(max - idle) / capacity`.
    pub energy_per_gflops: f64,
    /// Servers available at one site; `None` means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_servers: Option<u32>,
}

impl ProcessingProfile {
    pub fn derived_efficiency(&self) -> f64 {
        (self.max_power - self.idle_power) / self.capacity
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.idle_power >= 0.0 && self.idle_power <= self.max_power) {
            return Err(Error::InvalidParameter(format!(
                "{what}: idle power {} outside [0, {}]",
                self.idle_power, self.max_power
            )));
        }
        if !(self.capacity > 0.0) {
            return Err(Error::InvalidParameter(format!("{what}: capacity must be positive")));
        }
        if !(self.energy_per_gflops >= 0.0) {
            return Err(Error::InvalidParameter(format!("{what}: negative W/GFLOPS")));
        }
        if self.max_servers == Some(0) {
            return Err(Error::InvalidParameter(format!("{what}: max_servers must be at least 1")));
        }
        Ok(())
    }
}

/// How the idle power of a networking device is derived from its maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdleRule {
    /// Idle power as a fraction of maximum power.
    pub fraction: f64,
    /// Share of that idle power attributed to this application.
    pub share: f64,
}

impl IdleRule {
    /// Low-capacity device used by this application only (ONU).
    pub const DEDICATED: IdleRule = IdleRule { fraction: 0.6, share: 1.0 };
    /// High-capacity device shared with other services (OLT, metro, core).
    pub const SHARED: IdleRule = IdleRule { fraction: 0.9, share: 0.03 };
}

/// Idle power attributed to the application: `max * fraction * share`.
pub fn derive_idle(max_power: f64, rule: IdleRule) -> Result<f64> {
    if !(max_power >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "max power must be non-negative, got {max_power}"
        )));
    }
    if !(0.0..=1.0).contains(&rule.fraction) || !(0.0..=1.0).contains(&rule.share) {
        return Err(Error::InvalidParameter(format!(
            "idle rule fractions must lie in [0, 1], got {rule:?}"
        )));
    }
    Ok(max_power * rule.fraction * rule.share)
}

/// Power profile of a networking device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub max_power: f64,
    /// Idle power as a fraction of `max_power`, before sharing.
    pub idle_fraction: f64,
    /// Fraction of the idle power charged to this application.
    pub idle_share: f64,
    /// Effective idle power, `max_power * idle_fraction * idle_share`.
    pub idle_power: f64,
    /// Gbps.
    pub bitrate_capacity: f64,
    /// W/Gbps, published value.
    pub energy_per_gbps: f64,
}

impl NetworkProfile {
    pub fn new(max_power: f64, rule: IdleRule, bitrate_capacity: f64, energy_per_gbps: f64) -> Result<Self> {
        Ok(NetworkProfile {
            max_power,
            idle_fraction: rule.fraction,
            idle_share: rule.share,
            idle_power: derive_idle(max_power, rule)?,
            bitrate_capacity,
            energy_per_gbps,
        })
    }

    /// Device idle power before the application share is applied.
    pub fn raw_idle(&self) -> f64 {
        self.max_power * self.idle_fraction
    }

    pub fn effective_idle(&self) -> f64 {
        self.idle_power
    }

    pub fn derived_efficiency(&self) -> f64 {
        (self.max_power - self.raw_idle()) / self.bitrate_capacity
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.idle_share) || !(0.0..=1.0).contains(&self.idle_fraction) {
            return Err(Error::InvalidParameter(format!("{what}: idle fractions outside [0, 1]")));
        }
        if !(self.idle_power >= 0.0 && self.idle_power <= self.max_power) {
            return Err(Error::InvalidParameter(format!(
                "{what}: idle power {} outside [0, {}]",
                self.idle_power, self.max_power
            )));
        }
        let expected = self.max_power * self.idle_fraction * self.idle_share;
        if (expected - self.idle_power).abs() > 1e-9 * self.max_power.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "{what}: idle power {} does not match max x fraction x share = {expected}",
                self.idle_power
            )));
        }
        if !(self.bitrate_capacity > 0.0) {
            return Err(Error::InvalidParameter(format!("{what}: bitrate capacity must be positive")));
        }
        if !(self.energy_per_gbps >= 0.0) {
            return Err(Error::InvalidParameter(format!("{what}: negative W/Gbps")));
        }
        Ok(())
    }
}

/// Internal LAN of a processing site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanProfile {
    pub idle_power: f64,
    pub energy_per_gbps: f64,
    /// Gbps the LAN can carry; used as the activation big-M.
    pub bitrate_capacity: f64,
}

impl LanProfile {
    fn validate(&self, what: &str) -> Result<()> {
        if !(self.idle_power >= 0.0 && self.energy_per_gbps >= 0.0) {
            return Err(Error::InvalidParameter(format!("{what}: LAN figures must be non-negative")));
        }
        if !(self.bitrate_capacity > 0.0) {
            return Err(Error::InvalidParameter(format!("{what}: LAN capacity must be positive")));
        }
        Ok(())
    }
}

/// PUE multipliers for the networking and processing equipment of a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PueAssignment {
    pub pue_net: f64,
    pub pue_pr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PueTable {
    pub core: f64,
    pub access_fog: f64,
    pub metro_fog: f64,
    pub cdc: f64,
    /// Everything without cooling: IoT, ONU, OLT, metro equipment.
    pub uncooled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessingTable {
    pub iot: ProcessingProfile,
    pub access_fog: ProcessingProfile,
    pub metro_fog: ProcessingProfile,
    pub cdc: ProcessingProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTable {
    pub onu: NetworkProfile,
    pub olt: NetworkProfile,
    pub metro_router: NetworkProfile,
    pub metro_switch: NetworkProfile,
    pub core: NetworkProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanTable {
    pub iot: LanProfile,
    pub access_fog: LanProfile,
    pub metro_fog: LanProfile,
    pub cdc: LanProfile,
}

/// All device parameters. Immutable once built; share it freely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub processing: ProcessingTable,
    pub network: NetworkTable,
    pub lan: LanTable,
    pub pue: PueTable,
}

/// One row of the efficiency audit: published W/unit against the value
/// re-derived from max, idle and capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyCheck {
    pub class: NodeClass,
    pub published: f64,
    pub derived: f64,
    pub consistent: bool,
}

/// Server rows agree when within 2% relative.
pub const SERVER_EFFICIENCY_RTOL: f64 = 0.02;
/// Network rows agree when within rounding of the published two decimals.
pub const NETWORK_EFFICIENCY_ATOL: f64 = 0.01;

impl Catalog {
    /// The published device figures with the idle-share rules applied.
    pub fn default_catalog() -> Catalog {
        Self::with_fog_pue(1.1).expect("built-in catalog is valid")
    }

    /// Default catalog with a specific PUE for the access and metro fog sites.
    pub fn with_fog_pue(pue_af_mf: f64) -> Result<Catalog> {
        if !(1.0..=3.0).contains(&pue_af_mf) {
            return Err(Error::InvalidParameter(format!("fog PUE {pue_af_mf} out of range")));
        }
        let network = NetworkTable {
            onu: NetworkProfile::new(15.0, IdleRule::DEDICATED, 10.0, 0.6)?,
            olt: NetworkProfile::new(1940.0, IdleRule::SHARED, 8600.0, 0.22)?,
            metro_router: NetworkProfile::new(30.0, IdleRule::SHARED, 40.0, 0.08)?,
            metro_switch: NetworkProfile::new(470.0, IdleRule::SHARED, 600.0, 0.08)?,
            core: NetworkProfile::new(878.0, IdleRule::SHARED, 40.0, 0.14)?,
        };
        // LAN figures are not published; metro and cloud sites borrow the
        // metro switch, the access fog a tenth of it, and a single board has none.
        let switch = &network.metro_switch;
        let site_lan = LanProfile {
            idle_power: switch.idle_power,
            energy_per_gbps: switch.energy_per_gbps,
            bitrate_capacity: switch.bitrate_capacity,
        };
        let lan = LanTable {
            iot: LanProfile {
                idle_power: 0.0,
                energy_per_gbps: 0.0,
                bitrate_capacity: network.onu.bitrate_capacity,
            },
            access_fog: LanProfile {
                idle_power: site_lan.idle_power / 10.0,
                energy_per_gbps: site_lan.energy_per_gbps / 10.0,
                bitrate_capacity: site_lan.bitrate_capacity / 10.0,
            },
            metro_fog: site_lan.clone(),
            cdc: site_lan,
        };
        let catalog = Catalog {
            processing: ProcessingTable {
                iot: ProcessingProfile {
                    max_power: 7.3,
                    idle_power: 2.56,
                    capacity: 13.5,
                    energy_per_gflops: 0.35,
                    max_servers: Some(1),
                },
                // Labelled with the same CPU as the access fog in the source table;
                // the numbers are what count.
                access_fog: ProcessingProfile {
                    max_power: 32.6,
                    idle_power: 10.0,
                    capacity: 47.7,
                    energy_per_gflops: 0.47,
                    max_servers: Some(6),
                },
                metro_fog: ProcessingProfile {
                    max_power: 134.0,
                    idle_power: 29.0,
                    capacity: 181.0,
                    energy_per_gflops: 0.58,
                    max_servers: Some(10),
                },
                cdc: ProcessingProfile {
                    max_power: 298.0,
                    idle_power: 58.7,
                    capacity: 428.0,
                    energy_per_gflops: 0.55,
                    max_servers: None,
                },
            },
            network,
            lan,
            pue: PueTable {
                core: 1.5,
                access_fog: pue_af_mf,
                metro_fog: pue_af_mf,
                cdc: 1.1,
                uncooled: 1.0,
            },
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn processing(&self, class: NodeClass) -> Option<&ProcessingProfile> {
        let t = &self.processing;
        match class {
            NodeClass::Iot => Some(&t.iot),
            NodeClass::AccessFog => Some(&t.access_fog),
            NodeClass::MetroFog => Some(&t.metro_fog),
            NodeClass::Cdc => Some(&t.cdc),
            _ => None,
        }
    }

    pub fn network(&self, class: NodeClass) -> Option<&NetworkProfile> {
        let t = &self.network;
        match class {
            NodeClass::Onu => Some(&t.onu),
            NodeClass::Olt => Some(&t.olt),
            NodeClass::MetroRouter => Some(&t.metro_router),
            NodeClass::MetroSwitch => Some(&t.metro_switch),
            NodeClass::CoreNode => Some(&t.core),
            _ => None,
        }
    }

    pub fn lan(&self, class: NodeClass) -> Option<&LanProfile> {
        let t = &self.lan;
        match class {
            NodeClass::Iot => Some(&t.iot),
            NodeClass::AccessFog => Some(&t.access_fog),
            NodeClass::MetroFog => Some(&t.metro_fog),
            NodeClass::Cdc => Some(&t.cdc),
            _ => None,
        }
    }

    pub fn pue_for(&self, class: NodeClass) -> PueAssignment {
        let p = &self.pue;
        let v = match class {
            NodeClass::CoreNode => p.core,
            NodeClass::AccessFog => p.access_fog,
            NodeClass::MetroFog => p.metro_fog,
            NodeClass::Cdc => p.cdc,
            NodeClass::Iot
            | NodeClass::Onu
            | NodeClass::Olt
            | NodeClass::MetroSwitch
            | NodeClass::MetroRouter => p.uncooled,
        };
        PueAssignment { pue_net: v, pue_pr: v }
    }

    pub fn validate(&self) -> Result<()> {
        for class in NodeClass::ALL {
            if let Some(p) = self.processing(class) {
                p.validate(class.as_str())?;
            }
            if let Some(n) = self.network(class) {
                n.validate(class.as_str())?;
            }
            if let Some(l) = self.lan(class) {
                l.validate(class.as_str())?;
            }
        }
        let p = &self.pue;
        for v in [p.core, p.access_fog, p.metro_fog, p.cdc, p.uncooled] {
            if !(v >= 1.0) {
                return Err(Error::InvalidParameter(format!("PUE {v} below 1")));
            }
        }
        Ok(())
    }

    /// Re-derives every efficiency figure and compares it with the stored one.
    /// Rows that disagree are logged; the stored value stays in force.
    pub fn efficiency_audit(&self) -> Vec<EfficiencyCheck> {
        let mut rows = Vec::new();
        for class in NodeClass::ALL {
            if let Some(p) = self.processing(class) {
                let derived = p.derived_efficiency();
                let consistent = ((derived - p.energy_per_gflops) / p.energy_per_gflops).abs()
                    <= SERVER_EFFICIENCY_RTOL;
                rows.push(EfficiencyCheck { class, published: p.energy_per_gflops, derived, consistent });
            }
            if let Some(n) = self.network(class) {
                let derived = n.derived_efficiency();
                let consistent = (derived - n.energy_per_gbps).abs() <= NETWORK_EFFICIENCY_ATOL;
                rows.push(EfficiencyCheck { class, published: n.energy_per_gbps, derived, consistent });
            }
        }
        for row in rows.iter().filter(|r| !r.consistent) {
            log::warn!(
                "{}: published efficiency {} differs from derived {:.4}; keeping the published value",
                row.class,
                row.published,
                row.derived
            );
        }
        rows
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Catalog> {
        let catalog: Catalog = toml::from_str(text)?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Catalog> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::default_catalog()
    }
}

/// Free-function form of [`Catalog::default_catalog`].
pub fn default_catalog() -> Catalog {
    Catalog::default_catalog()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn published_server_rows() {
        let c = default_catalog();
        let iot = &c.processing.iot;
        assert_eq!((iot.max_power, iot.idle_power, iot.capacity), (7.3, 2.56, 13.5));
        assert_eq!(c.processing.access_fog.max_servers, Some(6));
        assert_eq!(c.processing.metro_fog.max_servers, Some(10));
        assert_eq!(c.processing.cdc.max_servers, None);
    }

    #[test]
    fn onu_keeps_full_idle() {
        let c = default_catalog();
        assert!(close(c.network.onu.idle_power, 9.0));
        assert_eq!(c.network.onu.idle_share, 1.0);
    }

    #[test]
    fn shared_devices_carry_three_percent_of_idle() {
        let c = default_catalog();
        // 1940 W x 0.9 = 1746 W raw idle, 3% of it is charged.
        assert!(close(c.network.olt.raw_idle(), 1746.0));
        assert!(close(c.network.olt.effective_idle(), 52.38));
        assert!(close(c.network.core.idle_power, 23.706));
        assert!(close(c.network.metro_switch.idle_power, 12.69));
        assert!(close(c.network.metro_router.idle_power, 0.81));
    }

    #[test]
    fn derive_idle_cases() {
        assert!(close(derive_idle(15.0, IdleRule { fraction: 0.6, share: 1.0 }).unwrap(), 9.0));
        assert_eq!(derive_idle(0.0, IdleRule::SHARED).unwrap(), 0.0);
        assert_eq!(derive_idle(0.0, IdleRule::DEDICATED).unwrap(), 0.0);
        assert!(close(derive_idle(878.0, IdleRule::SHARED).unwrap(), 23.706));
        assert!(matches!(
            derive_idle(-1.0, IdleRule::SHARED),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn pue_by_class() {
        let c = default_catalog();
        assert_eq!(c.pue_for(NodeClass::CoreNode).pue_net, 1.5);
        assert_eq!(c.pue_for(NodeClass::Cdc).pue_pr, 1.1);
        assert_eq!(c.pue_for(NodeClass::Iot), PueAssignment { pue_net: 1.0, pue_pr: 1.0 });
        for class in [NodeClass::Onu, NodeClass::Olt, NodeClass::MetroSwitch, NodeClass::MetroRouter] {
            assert_eq!(c.pue_for(class).pue_net, 1.0);
        }
        let fog = c.pue_for(NodeClass::AccessFog).pue_pr;
        assert!((1.1..=1.25).contains(&fog));
        let c125 = Catalog::with_fog_pue(1.25).unwrap();
        assert_eq!(c125.pue_for(NodeClass::MetroFog).pue_pr, 1.25);
    }

    #[test]
    fn unknown_class_is_rejected() {
        assert!(matches!("router9".parse::<NodeClass>(), Err(Error::InvalidParameter(_))));
        for class in NodeClass::ALL {
            assert_eq!(class.as_str().parse::<NodeClass>().unwrap(), class);
        }
    }

    #[test]
    fn lan_defaults() {
        let c = default_catalog();
        assert!(close(c.lan.metro_fog.idle_power, 12.69));
        assert!(close(c.lan.cdc.energy_per_gbps, 0.08));
        assert!(close(c.lan.access_fog.idle_power, 1.269));
        assert_eq!(c.lan.iot.idle_power, 0.0);
        assert_eq!(c.lan.iot.energy_per_gbps, 0.0);
    }

    #[test]
    fn every_entry_respects_idle_and_capacity() {
        let c = default_catalog();
        c.validate().unwrap();
        for class in NodeClass::ALL {
            if let Some(p) = c.processing(class) {
                assert!(p.idle_power <= p.max_power && p.capacity > 0.0);
            }
            if let Some(n) = c.network(class) {
                assert!(n.idle_power <= n.max_power && n.bitrate_capacity > 0.0);
            }
        }
    }

    #[test]
    fn efficiency_audit_flags_exactly_olt_and_core() {
        let c = default_catalog();
        let audit = c.efficiency_audit();
        assert_eq!(audit.len(), 9);
        let bad: Vec<NodeClass> = audit.iter().filter(|r| !r.consistent).map(|r| r.class).collect();
        // (1940-1746)/8600 = 0.0226 vs 0.22 and (878-790.2)/40 = 2.195 vs 0.14.
        assert_eq!(bad, vec![NodeClass::Olt, NodeClass::CoreNode]);
        let cdc = audit.iter().find(|r| r.class == NodeClass::Cdc).unwrap();
        assert!((cdc.derived - 239.3 / 428.0).abs() < 1e-12);
        // The published value is the one kept.
        assert_eq!(c.network.olt.energy_per_gbps, 0.22);
    }

    #[test]
    fn toml_round_trip_is_bit_exact() {
        let c = Catalog::with_fog_pue(1.17).unwrap();
        let text = c.to_toml().unwrap();
        let back = Catalog::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn rejects_pue_below_one() {
        let mut c = default_catalog();
        c.pue.core = 0.9;
        assert!(c.validate().is_err());
    }
}
