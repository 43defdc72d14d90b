use std::fmt;

use crate::topology::NodeId;
use crate::vsr::VmRef;

/// A directed physical link whose load exceeds its capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkOverload {
    pub from: NodeId,
    pub to: NodeId,
    pub load_gbps: f64,
    pub capacity_gbps: f64,
}

impl fmt::Display for LinkOverload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}->{} carries {} Gbps > {} Gbps",
            self.from, self.to, self.load_gbps, self.capacity_gbps
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot build topology: {0}")]
    Construction(String),

    #[error("no path between {from} and {to}")]
    NoPath { from: NodeId, to: NodeId },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incomplete placement: {0} is not placed")]
    IncompletePlacement(VmRef),

    #[error("link capacity exceeded: {}", display_overloads(.0))]
    CapacityViolation(Vec<LinkOverload>),

    #[error("cannot build model: {0}")]
    ModelBuild(String),

    #[error("non-integral solution: {0}")]
    NonIntegral(String),

    #[error("{0} is assigned to {1} hosts instead of exactly one")]
    Assignment(VmRef, usize),

    #[error("enumeration refused: {combinations:e} placements exceed the cap of {cap}")]
    EnumerationCap { combinations: f64, cap: u64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    TomlRead(#[from] toml::de::Error),

    #[error(transparent)]
    TomlWrite(#[from] toml::ser::Error),
}

fn display_overloads(links: &[LinkOverload]) -> String {
    links
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
