//! Newton and primal-dual interior-point solvers for the power-flow and
//! infeasibility-analysis systems.
//!
//! [`iterate_to_convergence`] drives one of three formulations:
//!
//! * power flow: solve `h(X) = 0` where `h` stacks KCL at every node-phase
//!   and the slack voltage-source equations;
//! * least squares: stationarity of `½‖i_f‖² + λᵀ h(X, i_f)`;
//! * L1: stationarity of `Σ i_f± + λᵀ h(X, i_f+ − i_f−) − μᵀ i_f±` together
//!   with the perturbed complementarity `μ_k i_f,k = ε` for every split
//!   component. The inequality term enters with a negative sign so that the
//!   optimum satisfies `μ_R+ = 1 − λ_R`, `μ_R− = 1 + λ_R` and therefore
//!   `|λ| ≤ 1`.
//!
//! The L1 iterate is kept strictly interior by diode limiting: a single step
//! length, shared by all unknowns, that stops any nonnegative variable from
//! losing more than a fraction `σ` of its value.

mod assemble;
mod iterate;
mod layout;
mod newton;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stamp::Circuit;

pub use assemble::{assemble_kkt_l1, assemble_kkt_l2, assemble_tpf, KktSystem};
pub use iterate::{iterate_to_convergence, AuditCheck, SolveFailure, Solution};
pub use layout::{Formulation, VarLayout, SPLIT_COMPONENTS};
pub use newton::{diode_limit, newton_step, Direction, CONDITION_LIMIT};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EngineError {
    #[error("voltage collapse at {node} (|V|² = {magnitude_sq:.3e} pu²)")]
    Collapse { node: String, magnitude_sq: f64 },
    #[error("singular Newton matrix; no usable pivot for {variable}")]
    Singular { variable: String },
    #[error("ill-conditioned Newton matrix (condition estimate {estimate:.3e}); weakest pivot at {variable}")]
    IllConditioned { estimate: f64, variable: String },
    #[error("iterate is not strictly interior: {variable} = {value:e}")]
    NotInterior { variable: String, value: f64 },
    #[error("no convergence within {iterations} iterations (best residual {best_residual:.3e})")]
    MaxIterations { iterations: usize, best_residual: f64 },
    #[error("invalid infeasibility source placement: {0}")]
    InvalidSubset(String),
    #[error("vector length mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Tunables of the Newton / interior-point loop. Tolerances are per-unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// ∞-norm bound on the Newton update; residuals must fall below ten times this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Reporting threshold for |i_f| (per-unit).
    pub if_threshold: f64,
    pub epsilon_initial: f64,
    /// Applied to ε whenever the residual drops below `10 ε`.
    pub epsilon_factor: f64,
    pub epsilon_floor: f64,
    /// Fraction-to-boundary factor of the diode limiter.
    pub sigma: f64,
    pub collapse_floor: f64,
    /// Largest per-node voltage change accepted in one iteration (per-unit).
    pub max_voltage_step: f64,
    /// Added to both halves of every L1 split source at the start.
    pub l1_initial_source: f64,
    /// Magnitude of the starting L1 multipliers, signed like the initial
    /// KCL mismatch. Must lie in (0, 1).
    pub l1_initial_multiplier: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tolerance: 1e-6,
            max_iterations: 500,
            if_threshold: 1e-3,
            epsilon_initial: 1e-1,
            epsilon_factor: 0.1,
            epsilon_floor: 1e-8,
            sigma: 0.95,
            collapse_floor: 1e-8,
            max_voltage_step: 0.5,
            l1_initial_source: 1e-3,
            l1_initial_multiplier: 0.5,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("tolerance", self.tolerance),
            ("if_threshold", self.if_threshold),
            ("epsilon_initial", self.epsilon_initial),
            ("epsilon_factor", self.epsilon_factor),
            ("epsilon_floor", self.epsilon_floor),
            ("collapse_floor", self.collapse_floor),
            ("max_voltage_step", self.max_voltage_step),
            ("l1_initial_source", self.l1_initial_source),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.l1_initial_multiplier > 0.0 && self.l1_initial_multiplier < 1.0) {
            return Err(format!(
                "l1_initial_multiplier must lie in (0, 1), got {}",
                self.l1_initial_multiplier
            ));
        }
        if self.max_iterations == 0 {
            return Err("max_iterations must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(format!("sigma must lie in (0, 1), got {}", self.sigma));
        }
        if self.epsilon_factor >= 1.0 {
            return Err(format!("epsilon_factor must be below 1, got {}", self.epsilon_factor));
        }
        if self.epsilon_floor > self.epsilon_initial {
            return Err("epsilon_floor exceeds epsilon_initial".into());
        }
        Ok(())
    }
}

/// Node-phase voltages (per-unit, rectangular) plus slack source currents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub v_re: Vec<f64>,
    pub v_im: Vec<f64>,
    pub source_re: Vec<f64>,
    pub source_im: Vec<f64>,
}

/// Slack current sources at the node-phases of a [`Problem`] subset.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibilityVars {
    LeastSquares { re: Vec<f64>, im: Vec<f64> },
    L1 {
        re_pos: Vec<f64>,
        re_neg: Vec<f64>,
        im_pos: Vec<f64>,
        im_neg: Vec<f64>,
    },
}

impl InfeasibilityVars {
    pub fn net_re(&self) -> Vec<f64> {
        match self {
            InfeasibilityVars::LeastSquares { re, .. } => re.clone(),
            InfeasibilityVars::L1 { re_pos, re_neg, .. } => re_pos.iter().zip(re_neg).map(|(p, n)| p - n).collect(),
        }
    }

    pub fn net_im(&self) -> Vec<f64> {
        match self {
            InfeasibilityVars::LeastSquares { im, .. } => im.clone(),
            InfeasibilityVars::L1 { im_pos, im_neg, .. } => im_pos.iter().zip(im_neg).map(|(p, n)| p - n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            InfeasibilityVars::LeastSquares { re, .. } => re.len(),
            InfeasibilityVars::L1 { re_pos, .. } => re_pos.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Equality duals (KCL rows `λ`, slack-source rows `ν`) and, for L1, the
/// inequality duals in [`SPLIT_COMPONENTS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVars {
    pub lambda_re: Vec<f64>,
    pub lambda_im: Vec<f64>,
    pub nu_re: Vec<f64>,
    pub nu_im: Vec<f64>,
    pub mu: Option<[Vec<f64>; 4]>,
}

/// A circuit paired with a formulation and the node-phases allowed to carry
/// infeasibility sources.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    circuit: &'a Circuit,
    layout: VarLayout,
    subset: Vec<usize>,
    source_slot: Vec<Option<usize>>,
    names: Arc<Vec<String>>,
}

impl<'a> Problem<'a> {
    pub fn power_flow(circuit: &'a Circuit) -> Problem<'a> {
        Problem::new(circuit, Formulation::PowerFlow, &[]).expect("power flow has no subset")
    }

    /// `subset` lists node-phase indices; slack node-phases are rejected.
    pub fn new(circuit: &'a Circuit, formulation: Formulation, subset: &[usize]) -> Result<Problem<'a>, EngineError> {
        let n = circuit.n_nodes();
        let mut subset: Vec<usize> = if formulation == Formulation::PowerFlow {
            Vec::new()
        } else {
            subset.to_vec()
        };
        subset.sort_unstable();
        subset.dedup();
        if let Some(&bad) = subset.iter().find(|&&k| k >= n) {
            return Err(EngineError::InvalidSubset(format!("node-phase index {bad} out of range")));
        }
        if let Some(&slack) = subset.iter().find(|&&k| circuit.is_slack(k)) {
            return Err(EngineError::InvalidSubset(format!(
                "slack node-phase {} cannot host a source",
                circuit.node_label(slack)
            )));
        }
        if formulation != Formulation::PowerFlow && subset.is_empty() {
            return Err(EngineError::InvalidSubset("subset is empty".into()));
        }
        let mut source_slot = vec![None; n];
        for (slot, &k) in subset.iter().enumerate() {
            source_slot[k] = Some(slot);
        }
        let layout = VarLayout::new(formulation, n, circuit.slack.len(), subset.len());
        let names = Arc::new(variable_names(circuit, &layout, &subset));
        Ok(Problem {
            circuit,
            layout,
            subset,
            source_slot,
            names,
        })
    }

    /// Every node-phase except the slack bus.
    pub fn default_subset(circuit: &Circuit) -> Vec<usize> {
        (0..circuit.n_nodes()).filter(|&k| !circuit.is_slack(k)).collect()
    }

    pub fn circuit(&self) -> &'a Circuit {
        self.circuit
    }

    pub fn layout(&self) -> VarLayout {
        self.layout
    }

    pub fn formulation(&self) -> Formulation {
        self.layout.formulation
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn source_slot(&self, node: usize) -> Option<usize> {
        self.source_slot[node]
    }

    pub fn variable_name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub(crate) fn names(&self) -> Arc<Vec<String>> {
        Arc::clone(&self.names)
    }
}

fn variable_names(circuit: &Circuit, layout: &VarLayout, subset: &[usize]) -> Vec<String> {
    let node = |k: usize| circuit.node_label(k);
    let slack_node = |j: usize| circuit.node_label(circuit.slack[j].node);
    let mut names = Vec::with_capacity(layout.len());
    names.extend((0..layout.n).map(|k| format!("V_R[{}]", node(k))));
    names.extend((0..layout.n).map(|k| format!("V_I[{}]", node(k))));
    names.extend((0..layout.s).map(|j| format!("I_src_R[{}]", slack_node(j))));
    names.extend((0..layout.s).map(|j| format!("I_src_I[{}]", slack_node(j))));
    match layout.formulation {
        Formulation::PowerFlow => return names,
        Formulation::LeastSquares => {
            for c in ["R", "I"] {
                names.extend(subset.iter().map(|&k| format!("if_{c}[{}]", node(k))));
            }
        }
        Formulation::L1 => {
            for c in SPLIT_COMPONENTS {
                names.extend(subset.iter().map(|&k| format!("if_{c}[{}]", node(k))));
            }
        }
    }
    names.extend((0..layout.n).map(|k| format!("lambda_R[{}]", node(k))));
    names.extend((0..layout.n).map(|k| format!("lambda_I[{}]", node(k))));
    names.extend((0..layout.s).map(|j| format!("nu_R[{}]", slack_node(j))));
    names.extend((0..layout.s).map(|j| format!("nu_I[{}]", slack_node(j))));
    if layout.formulation == Formulation::L1 {
        for c in SPLIT_COMPONENTS {
            names.extend(subset.iter().map(|&k| format!("mu_{c}[{}]", node(k))));
        }
    }
    debug_assert_eq!(names.len(), layout.len());
    names
}
