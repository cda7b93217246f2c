use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::engine::{AuditCheck, Formulation, Solution, SolveFailure};
use crate::model::{NetworkModel, Phase};
use crate::stamp::Circuit;

/// Result at one node-phase. Voltages in volts, currents in amperes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePhaseResult {
    pub bus: String,
    pub phase: Phase,
    pub v_re: f64,
    pub v_im: f64,
    pub v_pu: f64,
    pub if_re: f64,
    pub if_im: f64,
    pub if_mag: f64,
    /// |i_f| on the bus current base; compared against the threshold.
    pub if_mag_pu: f64,
    pub flagged: bool,
}

/// Largest infeasibility current over the phases of one bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResult {
    pub bus: String,
    pub max_if_pu: f64,
    pub max_if: f64,
    pub flagged: bool,
}

/// Complex power supplied by the infeasibility source at a flagged node-phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingPower {
    pub bus: String,
    pub phase: Phase,
    pub p_w: f64,
    pub q_var: f64,
}

/// Missing power summed over the phases of one bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeMissingPower {
    pub bus: String,
    pub p_w: f64,
    pub q_var: f64,
}

/// Everything a single solve produced, in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub mode: Formulation,
    pub converged: bool,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub matrix_size: usize,
    /// Final residual when converged, best residual otherwise (per-unit).
    /// Absent when no residual was ever evaluated.
    pub residual: Option<f64>,
    pub threshold: f64,
    pub failure: Option<String>,
    /// Buses that carry at least one infeasibility source.
    pub eligible_nodes: usize,
    pub node_phases: Vec<NodePhaseResult>,
    pub nodes: Vec<NodeResult>,
    pub nonzero_node_phases: usize,
    pub nonzero_nodes: usize,
    pub missing_power: Vec<MissingPower>,
    pub audit: Vec<AuditCheck>,
    /// Closed branches as (from, to) bus pairs.
    pub edges: Vec<(String, String)>,
    pub fingerprint: String,
}

impl SolutionReport {
    /// Same vectors, classified against a different threshold.
    pub fn with_threshold(&self, threshold: f64) -> SolutionReport {
        let mut out = self.clone();
        out.threshold = threshold;
        out.classify();
        out
    }

    /// Converged with every |i_f| at or below the threshold.
    pub fn is_feasible(&self) -> bool {
        self.converged && self.nonzero_node_phases == 0
    }

    pub fn flagged(&self) -> impl Iterator<Item = &NodePhaseResult> {
        self.node_phases.iter().filter(|r| r.flagged)
    }

    /// Missing power summed per bus, in bus order.
    pub fn missing_power_by_node(&self) -> Vec<NodeMissingPower> {
        let mut out: Vec<NodeMissingPower> = Vec::new();
        for m in &self.missing_power {
            match out.iter_mut().find(|n| n.bus == m.bus) {
                Some(n) => {
                    n.p_w += m.p_w;
                    n.q_var += m.q_var;
                }
                None => out.push(NodeMissingPower {
                    bus: m.bus.clone(),
                    p_w: m.p_w,
                    q_var: m.q_var,
                }),
            }
        }
        out
    }

    pub fn node(&self, bus: &str) -> Option<&NodeResult> {
        self.nodes.iter().find(|n| n.bus == bus)
    }

    pub fn node_phase(&self, bus: &str, phase: Phase) -> Option<&NodePhaseResult> {
        self.node_phases.iter().find(|r| r.bus == bus && r.phase == phase)
    }

    fn classify(&mut self) {
        let t = self.threshold;
        for r in &mut self.node_phases {
            r.flagged = self.converged && r.if_mag_pu > t;
        }
        for n in &mut self.nodes {
            n.flagged = self.converged && n.max_if_pu > t;
        }
        self.nonzero_node_phases = self.node_phases.iter().filter(|r| r.flagged).count();
        self.nonzero_nodes = self.nodes.iter().filter(|n| n.flagged).count();
        self.missing_power = missing_power(self);
    }
}

/// `S = V conj(i_f)` at every flagged node-phase, in watts and vars.
pub fn missing_power(report: &SolutionReport) -> Vec<MissingPower> {
    report
        .flagged()
        .map(|r| {
            let s = Complex64::new(r.v_re, r.v_im) * Complex64::new(r.if_re, r.if_im).conj();
            MissingPower {
                bus: r.bus.clone(),
                phase: r.phase,
                p_w: s.re,
                q_var: s.im,
            }
        })
        .collect()
}

pub(crate) struct ReportContext<'a> {
    pub network: &'a NetworkModel,
    pub circuit: &'a Circuit,
    pub threshold: f64,
    pub wall_time_s: f64,
    pub fingerprint: String,
    pub subset: &'a [usize],
}

fn edges(network: &NetworkModel) -> Vec<(String, String)> {
    network
        .branches
        .iter()
        .filter(|b| b.is_closed())
        .map(|b| (b.from.clone(), b.to.clone()))
        .collect()
}

fn eligible_nodes(circuit: &Circuit, subset: &[usize]) -> usize {
    let mut buses: Vec<usize> = subset.iter().map(|&k| circuit.node(k).bus).collect();
    buses.sort_unstable();
    buses.dedup();
    buses.len()
}

fn rows(circuit: &Circuit, v: &[Complex64], i_f: &[Complex64]) -> (Vec<NodePhaseResult>, Vec<NodeResult>) {
    let pu = circuit.per_unit;
    let mut node_phases = Vec::with_capacity(circuit.n_nodes());
    let mut per_bus: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for k in 0..circuit.n_nodes() {
        let np = circuit.node(k);
        let vb = circuit.voltage_base[k];
        let vol = pu.voltage_from_pu(v[k], vb);
        let cur = pu.current_from_pu(i_f[k], vb);
        let mag_pu = i_f[k].norm();
        node_phases.push(NodePhaseResult {
            bus: circuit.bus_ids[np.bus].clone(),
            phase: np.phase,
            v_re: vol.re,
            v_im: vol.im,
            v_pu: v[k].norm(),
            if_re: cur.re,
            if_im: cur.im,
            if_mag: cur.norm(),
            if_mag_pu: mag_pu,
            flagged: false,
        });
        let e = per_bus.entry(np.bus).or_insert((0.0, 0.0));
        if mag_pu > e.0 {
            *e = (mag_pu, cur.norm());
        }
    }
    let nodes = per_bus
        .into_iter()
        .map(|(b, (pu_mag, mag))| NodeResult {
            bus: circuit.bus_ids[b].clone(),
            max_if_pu: pu_mag,
            max_if: mag,
            flagged: false,
        })
        .collect();
    (node_phases, nodes)
}

pub(crate) fn converged_report(ctx: &ReportContext, sol: &Solution) -> SolutionReport {
    let v = sol.voltages();
    let i_f = sol.source_currents(ctx.circuit.n_nodes());
    let (node_phases, nodes) = rows(ctx.circuit, &v, &i_f);
    let mut report = SolutionReport {
        mode: sol.formulation,
        converged: true,
        iterations: sol.iterations,
        wall_time_s: ctx.wall_time_s,
        matrix_size: sol.matrix_size,
        residual: Some(sol.residual),
        threshold: ctx.threshold,
        failure: None,
        eligible_nodes: eligible_nodes(ctx.circuit, ctx.subset),
        node_phases,
        nodes,
        nonzero_node_phases: 0,
        nonzero_nodes: 0,
        missing_power: Vec::new(),
        audit: sol.audit.clone(),
        edges: edges(ctx.network),
        fingerprint: ctx.fingerprint.clone(),
    };
    report.classify();
    report
}

pub(crate) fn failed_report(ctx: &ReportContext, mode: Formulation, failure: &SolveFailure) -> SolutionReport {
    let v: Vec<Complex64> = failure
        .state
        .v_re
        .iter()
        .zip(&failure.state.v_im)
        .map(|(r, i)| Complex64::new(*r, *i))
        .collect();
    let zeros = vec![Complex64::default(); ctx.circuit.n_nodes()];
    let (node_phases, nodes) = rows(ctx.circuit, &v, &zeros);
    SolutionReport {
        mode,
        converged: false,
        iterations: failure.iterations,
        wall_time_s: ctx.wall_time_s,
        matrix_size: failure.matrix_size,
        residual: Some(failure.best_residual).filter(|r| r.is_finite()),
        threshold: ctx.threshold,
        failure: Some(failure.reason.to_string()),
        eligible_nodes: eligible_nodes(ctx.circuit, ctx.subset),
        node_phases,
        nodes,
        nonzero_node_phases: 0,
        nonzero_nodes: 0,
        missing_power: Vec::new(),
        audit: Vec::new(),
        edges: edges(ctx.network),
        fingerprint: ctx.fingerprint.clone(),
    }
}

/// Report for a network that never reached the solver.
pub(crate) fn rejected_report(network: &NetworkModel, mode: Formulation, threshold: f64, reason: String) -> SolutionReport {
    SolutionReport {
        mode,
        converged: false,
        iterations: 0,
        wall_time_s: 0.0,
        matrix_size: 0,
        residual: None,
        threshold,
        failure: Some(reason),
        eligible_nodes: 0,
        node_phases: Vec::new(),
        nodes: Vec::new(),
        nonzero_node_phases: 0,
        nonzero_nodes: 0,
        missing_power: Vec::new(),
        audit: Vec::new(),
        edges: edges(network),
        fingerprint: crate::ingest::fingerprint(network),
    }
}
