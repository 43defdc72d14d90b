//! Experiment scenarios and their TOML files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use cfn_core::{build_cfn, generate_vsrs, Catalog, InputScenario, PhysicalGraph, TopologyConfig, Vsr, VsrGenConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// Every request reads from the first input device of the topology.
    SingleSource,
    /// Requests take turns over the first IoT device of every zone.
    PerZone,
}

/// One sweep of request counts over a set of seeds. Missing keys in a file
/// take the values of [`Scenario::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub name: String,
    pub input_mode: InputMode,
    /// Overrides `topology.cdc_present`.
    pub cdc_present: bool,
    pub vsr_sweep: Vec<usize>,
    pub seeds: Vec<u64>,
    /// PUE of access and metro fog sites.
    pub pue_af_mf: f64,
    /// Seconds per point for counts up to `exact_up_to`; none proves
    /// optimality.
    pub time_limit: Option<f64>,
    pub exact_up_to: usize,
    /// Seconds per point above `exact_up_to`.
    pub large_time_limit: f64,
    pub topology: TopologyConfig,
    /// `seed` is replaced by each sweep seed.
    pub vsr_gen: VsrGenConfig,
}

impl Default for Scenario {
    /// Single input device, default network and catalog, counts 1..=30.
    fn default() -> Self {
        Scenario {
            name: "single-source".into(),
            input_mode: InputMode::SingleSource,
            cdc_present: true,
            vsr_sweep: (1..=30).collect(),
            seeds: vec![0, 1, 2, 3, 4],
            pue_af_mf: 1.1,
            time_limit: None,
            exact_up_to: 10,
            large_time_limit: 300.0,
            topology: TopologyConfig::paper_default(),
            vsr_gen: VsrGenConfig::default(),
        }
    }
}

impl Scenario {
    pub fn single_source() -> Scenario {
        Scenario::default()
    }

    pub fn per_zone() -> Scenario {
        Scenario { name: "per-zone".into(), input_mode: InputMode::PerZone, ..Scenario::default() }
    }

    pub fn without_cdc(mut self) -> Scenario {
        self.cdc_present = false;
        self.name = format!("{}-no-cdc", self.name);
        self
    }

    pub fn from_toml(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Scenario::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '"', '\n']) {
            bail!("scenario name {:?} must be non-empty without commas, quotes or newlines", self.name);
        }
        if self.vsr_sweep.is_empty() || self.vsr_sweep[0] == 0 || self.vsr_sweep.windows(2).any(|w| w[0] >= w[1]) {
            bail!("vsr_sweep must be positive and strictly increasing");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is needed");
        }
        if !(1.1..=1.25).contains(&self.pue_af_mf) {
            bail!("pue_af_mf {} is outside [1.1, 1.25]", self.pue_af_mf);
        }
        if self.time_limit.is_some_and(|t| !(t >= 0.0)) || !(self.large_time_limit >= 0.0) {
            bail!("time limits must be non-negative");
        }
        self.topology_config().validate()?;
        self.vsr_gen.validate()?;
        Ok(())
    }

    pub fn topology_config(&self) -> TopologyConfig {
        let mut t = self.topology.clone();
        t.cdc_present = self.cdc_present;
        match self.input_mode {
            InputMode::PerZone => t.input_nodes = t.first_iot_per_zone(),
            InputMode::SingleSource => t.input_nodes.truncate(1),
        }
        t
    }

    pub fn catalog(&self) -> Result<Catalog> {
        Ok(Catalog::with_fog_pue(self.pue_af_mf)?)
    }

    pub fn graph(&self) -> Result<PhysicalGraph> {
        Ok(build_cfn(&self.topology_config(), &self.catalog()?)?)
    }

    pub fn inputs(&self, graph: &PhysicalGraph) -> Result<InputScenario> {
        let Some(&first) = graph.inputs().first() else { bail!("the topology has no input device") };
        Ok(match self.input_mode {
            InputMode::SingleSource => InputScenario::SingleSource(first),
            InputMode::PerZone => InputScenario::PerZone(graph.inputs().to_vec()),
        })
    }

    pub fn vsrs(&self, graph: &PhysicalGraph, seed: u64, n: usize) -> Result<Vec<Vsr>> {
        let gen = VsrGenConfig { seed, ..self.vsr_gen.clone() };
        Ok(generate_vsrs(n, &gen, &self.inputs(graph)?, graph)?)
    }

    /// Per-point limit for `n` requests.
    pub fn time_limit_for(&self, n: usize) -> Option<f64> {
        if n > self.exact_up_to {
            Some(self.large_time_limit)
        } else {
            self.time_limit
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let s = Scenario::per_zone().without_cdc();
        assert_eq!(Scenario::from_toml(&s.to_toml().unwrap()).unwrap(), s);
    }

    #[test]
    fn missing_keys_take_defaults() {
        let s = Scenario::from_toml("name = \"short\"\nvsr_sweep = [1, 2]\n").unwrap();
        assert_eq!(s.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.vsr_sweep, vec![1, 2]);
        assert_eq!(s.topology, TopologyConfig::paper_default());
    }

    #[test]
    fn rejects_bad_sweeps() {
        assert!(Scenario::from_toml("vsr_sweep = [2, 1]").is_err());
        assert!(Scenario::from_toml("vsr_sweep = [0, 1]").is_err());
        assert!(Scenario::from_toml("seeds = []").is_err());
        assert!(Scenario::from_toml("pue_af_mf = 1.5").is_err());
    }

    #[test]
    fn per_zone_uses_one_device_per_zone() {
        let s = Scenario::per_zone();
        let g = s.graph().unwrap();
        assert_eq!(g.inputs().len(), s.topology.zones);
        let v = s.vsrs(&g, 0, 3).unwrap();
        let sources: Vec<_> = v.iter().map(|r| r.input().unwrap().pinned_source).collect();
        assert_eq!(sources.len(), 3);
        assert_ne!(sources[0], sources[1]);
    }
}
