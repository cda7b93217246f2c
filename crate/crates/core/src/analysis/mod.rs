//! Drivers that turn a [`NetworkModel`] into [`SolutionReport`]s: power
//! flow, infeasibility analysis with source placement and warm starts,
//! threshold classification, missing power and remediation checks.

mod report;
mod solve;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::model::{BusKind, NetworkModel, Phase};
use crate::stamp::{Circuit, InvalidNetwork};

pub use report::{missing_power, MissingPower, NodeMissingPower, NodePhaseResult, NodeResult, SolutionReport};
pub use solve::{
    remediate_and_validate, solve_power_flow, solve_tpia, warm_start_chain, Objective, RemediationOutcome, WarmStart,
    REMEDIATION_WARM_SCALES,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    InvalidNetwork(#[from] InvalidNetwork),
    #[error("invalid node subset: {0}")]
    Subset(String),
    #[error("warm start belongs to a different network (fingerprint {found}, expected {expected})")]
    WarmStartMismatch { expected: String, found: String },
    #[error("invalid solver settings: {0}")]
    Settings(String),
}

/// Node-phases allowed to carry infeasibility sources.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeSubset {
    pairs: BTreeSet<(String, Phase)>,
}

impl NodeSubset {
    /// Every node-phase of every bus except the slack bus.
    pub fn all_but_slack(network: &NetworkModel) -> NodeSubset {
        let pairs = network
            .buses
            .iter()
            .filter(|b| b.kind != BusKind::Slack)
            .flat_map(|b| b.phases.iter().map(move |p| (b.id.clone(), p)))
            .collect();
        NodeSubset { pairs }
    }

    /// Explicit pairs; checked against the network when resolved.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Phase)>) -> NodeSubset {
        NodeSubset {
            pairs: pairs.into_iter().collect(),
        }
    }

    /// All phases present at each listed bus.
    pub fn from_buses<'a>(network: &NetworkModel, buses: impl IntoIterator<Item = &'a str>) -> Result<NodeSubset, AnalysisError> {
        let mut pairs = BTreeSet::new();
        for id in buses {
            let bus = network
                .bus(id)
                .ok_or_else(|| AnalysisError::Subset(format!("unknown bus '{id}'")))?;
            pairs.extend(bus.phases.iter().map(|p| (id.to_string(), p)));
        }
        Ok(NodeSubset { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, bus: &str, phase: Phase) -> bool {
        self.pairs.contains(&(bus.to_string(), phase))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, Phase)> {
        self.pairs.iter()
    }

    /// Node-phase indices in `circuit`; unknown or slack pairs are errors.
    pub fn resolve(&self, circuit: &Circuit) -> Result<Vec<usize>, AnalysisError> {
        if self.pairs.is_empty() {
            return Err(AnalysisError::Subset("subset is empty".into()));
        }
        let mut out = Vec::with_capacity(self.pairs.len());
        for (bus, phase) in &self.pairs {
            let b = circuit
                .bus_ids
                .iter()
                .position(|id| id == bus)
                .ok_or_else(|| AnalysisError::Subset(format!("unknown bus '{bus}'")))?;
            let k = circuit
                .admittance
                .index
                .get(b, *phase)
                .ok_or_else(|| AnalysisError::Subset(format!("bus '{bus}' has no phase {phase}")))?;
            if circuit.is_slack(k) {
                return Err(AnalysisError::Subset(format!("slack bus '{bus}' cannot host a source")));
            }
            out.push(k);
        }
        out.sort_unstable();
        Ok(out)
    }
}
