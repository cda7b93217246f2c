//! Linear admittance stamping and constant-PQ load currents.
//!
//! All quantities produced here are per-unit. Currents are written as leaving
//! the node, so KCL at node-phase `k` reads
//!
//! ```text
//! (G V_R − B V_I)_k + I_R(V_k) = 0
//! (B V_R + G V_I)_k + I_I(V_k) = 0
//! ```
//!
//! with the load current `I = conj(S) / conj(V)`.

use std::collections::HashMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{CscMatrix, Triplets};
use crate::model::{BusKind, NetworkModel, PerUnit, Phase, Violation};

/// Smallest `V_R² + V_I²` (per-unit²) at which load currents are evaluated.
pub const COLLAPSE_FLOOR: f64 = 1e-8;

/// A single scalar electrical node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePhase {
    /// Position of the bus in [`NetworkModel::buses`].
    pub bus: usize,
    pub phase: Phase,
}

/// Bijection between node-phases and row indices `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMap {
    nodes: Vec<NodePhase>,
    lookup: HashMap<NodePhase, usize>,
}

impl IndexMap {
    /// Buses in input order, phases `A, B, C` within each bus.
    pub fn from_network(network: &NetworkModel) -> IndexMap {
        let nodes: Vec<NodePhase> = network
            .buses
            .iter()
            .enumerate()
            .flat_map(|(bus, b)| b.phases.iter().map(move |phase| NodePhase { bus, phase }))
            .collect();
        let lookup = nodes.iter().enumerate().map(|(i, np)| (*np, i)).collect();
        IndexMap { nodes, lookup }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, bus: usize, phase: Phase) -> Option<usize> {
        self.lookup.get(&NodePhase { bus, phase }).copied()
    }

    pub fn node(&self, index: usize) -> NodePhase {
        self.nodes[index]
    }

    pub fn nodes(&self) -> &[NodePhase] {
        &self.nodes
    }
}

/// Real and imaginary parts of the bus admittance matrix, per-unit.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrices {
    pub g: CscMatrix,
    pub b: CscMatrix,
    pub index: IndexMap,
}

impl AdmittanceMatrices {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    /// `Y V` for a complex voltage vector.
    pub fn current(&self, v: &[Complex64]) -> Vec<Complex64> {
        let vr: Vec<f64> = v.iter().map(|z| z.re).collect();
        let vi: Vec<f64> = v.iter().map(|z| z.im).collect();
        let g_r = self.g.mul_vec(&vr);
        let g_i = self.g.mul_vec(&vi);
        let b_r = self.b.mul_vec(&vr);
        let b_i = self.b.mul_vec(&vi);
        (0..v.len())
            .map(|k| Complex64::new(g_r[k] - b_i[k], b_r[k] + g_i[k]))
            .collect()
    }
}

/// Loops over the closed branches and capacitors of a network. The network is
/// assumed to have passed validation.
pub fn stamp_linear(network: &NetworkModel) -> AdmittanceMatrices {
    let index = IndexMap::from_network(network);
    let pu = PerUnit::new(network.base_power);
    let n = index.len();
    let bus_pos: HashMap<&str, usize> = network
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();

    let mut g = Triplets::new(n, n);
    let mut b = Triplets::new(n, n);
    let mut push = |r: usize, c: usize, y: Complex64| {
        g.push(r, c, y.re);
        b.push(r, c, y.im);
    };

    for br in network.branches.iter().filter(|br| br.is_closed()) {
        let (Some(&f), Some(&t)) = (bus_pos.get(br.from.as_str()), bus_pos.get(br.to.as_str())) else {
            continue;
        };
        let vf = network.buses[f].nominal_voltage;
        let vt = network.buses[t].nominal_voltage;
        // physical turns ratio seen from the from side
        let ratio = match br.kind {
            crate::model::BranchKind::Transformer => br.tap_ratio * vf / vt,
            _ => 1.0,
        };
        let s = pu.base_power;
        for p in br.phases.iter() {
            for q in br.phases.iter() {
                let y = br.series_admittance[(p, q)];
                let ysh = br.shunt_admittance[(p, q)] * 0.5;
                if y == Complex64::default() && ysh == Complex64::default() {
                    continue;
                }
                let (Some(fp), Some(fq), Some(tp), Some(tq)) =
                    (index.get(f, p), index.get(f, q), index.get(t, p), index.get(t, q))
                else {
                    continue;
                };
                push(fp, fq, y * (vf * vf / (ratio * ratio * s)) + ysh * (vf * vf / s));
                push(tp, tq, y * (vt * vt / s) + ysh * (vt * vt / s));
                push(fp, tq, -y * (vf * vt / (ratio * s)));
                push(tp, fq, -y * (vf * vt / (ratio * s)));
            }
        }
    }

    for cap in &network.capacitors {
        let Some(&k) = bus_pos.get(cap.bus.as_str()) else {
            continue;
        };
        let v = network.buses[k].nominal_voltage;
        for p in Phase::ALL {
            let bval = cap.susceptance[p.index()];
            if bval != 0.0 {
                if let Some(i) = index.get(k, p) {
                    push(i, i, Complex64::new(0.0, bval * v * v / pu.base_power));
                }
            }
        }
    }

    AdmittanceMatrices {
        g: g.to_csc(),
        b: b.to_csc(),
        index,
    }
}

#[derive(Debug, Clone, Copy, Error, PartialEq)]
#[error("voltage collapse: |V|² = {magnitude_sq:.3e} below floor {COLLAPSE_FLOOR:e}")]
pub struct VoltageCollapse {
    pub magnitude_sq: f64,
}

/// Constant-PQ load current and its first partial derivatives at one node-phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCurrent {
    pub i_re: f64,
    pub i_im: f64,
    pub d_re_d_vre: f64,
    pub d_re_d_vim: f64,
    pub d_im_d_vre: f64,
    pub d_im_d_vim: f64,
}

/// `I_R = (P V_R + Q V_I)/|V|²`, `I_I = (P V_I − Q V_R)/|V|²`.
pub fn load_current(v_re: f64, v_im: f64, p: f64, q: f64) -> Result<LoadCurrent, VoltageCollapse> {
    load_current_with_floor(v_re, v_im, p, q, COLLAPSE_FLOOR)
}

pub(crate) fn load_current_with_floor(
    v_re: f64,
    v_im: f64,
    p: f64,
    q: f64,
    floor: f64,
) -> Result<LoadCurrent, VoltageCollapse> {
    let d = v_re * v_re + v_im * v_im;
    if !(d >= floor) {
        return Err(VoltageCollapse { magnitude_sq: d });
    }
    let d2 = d * d;
    let n1 = p * (v_im * v_im - v_re * v_re) - 2.0 * q * v_re * v_im;
    let n2 = q * (v_re * v_re - v_im * v_im) - 2.0 * p * v_re * v_im;
    Ok(LoadCurrent {
        i_re: (p * v_re + q * v_im) / d,
        i_im: (p * v_im - q * v_re) / d,
        d_re_d_vre: n1 / d2,
        d_re_d_vim: n2 / d2,
        d_im_d_vre: n2 / d2,
        d_im_d_vim: -n1 / d2,
    })
}

/// Second partial derivatives of the load current, used for the
/// dual-weighted Hessian of the optimality systems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCurvature {
    /// `∂²I_R/∂V_R²`, `∂²I_R/∂V_R∂V_I`, `∂²I_R/∂V_I²`
    pub re: [f64; 3],
    /// `∂²I_I/∂V_R²`, `∂²I_I/∂V_R∂V_I`, `∂²I_I/∂V_I²`
    pub im: [f64; 3],
}

pub fn load_curvature(v_re: f64, v_im: f64, p: f64, q: f64) -> Result<LoadCurvature, VoltageCollapse> {
    let d = v_re * v_re + v_im * v_im;
    if !(d >= COLLAPSE_FLOOR) {
        return Err(VoltageCollapse { magnitude_sq: d });
    }
    Ok(curvature_unchecked(v_re, v_im, p, q))
}

pub(crate) fn curvature_unchecked(v_re: f64, v_im: f64, p: f64, q: f64) -> LoadCurvature {
    let (a, b) = (v_re, v_im);
    let d = a * a + b * b;
    let d3 = d * d * d;
    let n1 = p * (b * b - a * a) - 2.0 * q * a * b;
    let n2 = q * (a * a - b * b) - 2.0 * p * a * b;
    let rr_aa = ((-2.0 * p * a - 2.0 * q * b) * d - 4.0 * a * n1) / d3;
    let rr_ab = ((2.0 * p * b - 2.0 * q * a) * d - 4.0 * b * n1) / d3;
    let rr_bb = ((-2.0 * q * b - 2.0 * p * a) * d - 4.0 * b * n2) / d3;
    let ii_aa = ((2.0 * q * a - 2.0 * p * b) * d - 4.0 * a * n2) / d3;
    LoadCurvature {
        re: [rr_aa, rr_ab, rr_bb],
        im: [ii_aa, -rr_aa, -rr_ab],
    }
}

/// Max relative error of the analytic partials against central differences:
/// `max |analytic − fd| / max(1, |analytic|)`.
pub fn load_jacobian_check(v_re: f64, v_im: f64, p: f64, q: f64, h: f64) -> Result<f64, VoltageCollapse> {
    let at = load_current(v_re, v_im, p, q)?;
    let plus_r = load_current(v_re + h, v_im, p, q)?;
    let minus_r = load_current(v_re - h, v_im, p, q)?;
    let plus_i = load_current(v_re, v_im + h, p, q)?;
    let minus_i = load_current(v_re, v_im - h, p, q)?;
    let fd = [
        (plus_r.i_re - minus_r.i_re) / (2.0 * h),
        (plus_i.i_re - minus_i.i_re) / (2.0 * h),
        (plus_r.i_im - minus_r.i_im) / (2.0 * h),
        (plus_i.i_im - minus_i.i_im) / (2.0 * h),
    ];
    let analytic = [at.d_re_d_vre, at.d_re_d_vim, at.d_im_d_vre, at.d_im_d_vim];
    Ok(analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Failure to build a [`Circuit`] from an invalid network.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("network is invalid: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct InvalidNetwork {
    pub violations: Vec<Violation>,
}

/// Ideal source holding one slack node-phase at a fixed voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackSource {
    pub node: usize,
    pub voltage: Complex64,
}

/// A validated network reduced to per-unit circuit data.
#[derive(Debug, Clone)]
pub struct Circuit {
    pub admittance: AdmittanceMatrices,
    /// Aggregated constant-PQ demand per node-phase.
    pub loads: Vec<Complex64>,
    pub slack: Vec<SlackSource>,
    /// Nominal line-to-neutral voltage per node-phase.
    pub voltage_base: Vec<f64>,
    pub per_unit: PerUnit,
    pub bus_ids: Vec<String>,
}

impl Circuit {
    pub fn new(network: &NetworkModel) -> Result<Circuit, InvalidNetwork> {
        let violations = network.validate();
        if !violations.is_empty() {
            return Err(InvalidNetwork { violations });
        }
        let admittance = stamp_linear(network);
        let index = &admittance.index;
        let pu = PerUnit::new(network.base_power);
        let mut loads = vec![Complex64::default(); index.len()];
        for load in &network.loads {
            let bus = network.bus_index(&load.bus).expect("validated");
            for p in Phase::ALL {
                if let Some(k) = index.get(bus, p) {
                    loads[k] += pu.power_to_pu(load.power(p));
                }
            }
        }
        let slack_bus = network
            .buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated");
        let slack = Phase::ALL
            .iter()
            .map(|&p| SlackSource {
                node: index.get(slack_bus, p).expect("slack carries ABC"),
                voltage: Complex64::from_polar(1.0, p.nominal_angle()),
            })
            .collect();
        let voltage_base = index
            .nodes()
            .iter()
            .map(|np| network.buses[np.bus].nominal_voltage)
            .collect();
        Ok(Circuit {
            admittance,
            loads,
            slack,
            voltage_base,
            per_unit: pu,
            bus_ids: network.buses.iter().map(|b| b.id.clone()).collect(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.admittance.dim()
    }

    pub fn node(&self, k: usize) -> NodePhase {
        self.admittance.index.node(k)
    }

    /// `bus.phase`, e.g. `n12.B`.
    pub fn node_label(&self, k: usize) -> String {
        let np = self.node(k);
        format!("{}.{}", self.bus_ids[np.bus], np.phase)
    }

    pub fn is_slack(&self, k: usize) -> bool {
        self.slack.iter().any(|s| s.node == k)
    }

    pub fn flat_start(&self) -> Vec<Complex64> {
        flat_start(self)
    }
}

/// Nominal magnitude at 0°, −120°, +120° for phases A, B, C.
pub fn flat_start(circuit: &Circuit) -> Vec<Complex64> {
    circuit
        .admittance
        .index
        .nodes()
        .iter()
        .map(|np| Complex64::from_polar(1.0, np.phase.nominal_angle()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Branch, BranchStatus, Bus, PhaseMatrix, PhaseSet};

    fn one_phase_pair(branches: Vec<Branch>) -> NetworkModel {
        NetworkModel {
            base_power: 1.0,
            buses: vec![
                Bus {
                    id: "s".into(),
                    phases: PhaseSet::ABC,
                    nominal_voltage: 1.0,
                    kind: BusKind::Slack,
                },
                Bus {
                    id: "k".into(),
                    phases: PhaseSet::single(Phase::A),
                    nominal_voltage: 1.0,
                    kind: BusKind::Load,
                },
            ],
            branches,
            loads: vec![],
            capacitors: vec![],
        }
    }

    fn branch(id: &str, y: Complex64) -> Branch {
        let a = PhaseSet::single(Phase::A);
        Branch::line(id, "s", "k", a, PhaseMatrix::diagonal(y, a), PhaseMatrix::zero())
    }

    #[test]
    fn two_node_stamp_identity() {
        let (g, b) = (3.0, -7.0);
        let y = stamp_linear(&one_phase_pair(vec![branch("l", Complex64::new(g, b))]));
        let sa = y.index.get(0, Phase::A).unwrap();
        let ka = y.index.get(1, Phase::A).unwrap();
        assert_eq!(y.g.get(sa, sa), g);
        assert_eq!(y.g.get(sa, ka), -g);
        assert_eq!(y.g.get(ka, sa), -g);
        assert_eq!(y.g.get(ka, ka), g);
        assert_eq!(y.b.get(sa, sa), b);
        assert_eq!(y.b.get(ka, sa), -b);
        assert_eq!(y.b.get(ka, ka), b);
        assert_eq!(y.g.nnz(), 4);
    }

    #[test]
    fn open_branch_contributes_nothing() {
        let mut br = branch("l", Complex64::new(3.0, -7.0));
        br.status = BranchStatus::Open;
        let y = stamp_linear(&one_phase_pair(vec![br]));
        assert!(y.g.values().iter().all(|&v| v == 0.0));
        assert!(y.b.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parallel_branches_superpose() {
        let yv = Complex64::new(2.5, -4.0);
        let single = stamp_linear(&one_phase_pair(vec![branch("l", yv)]));
        let double = stamp_linear(&one_phase_pair(vec![branch("l1", yv), branch("l2", yv)]));
        for (i, j, v) in single.g.iter() {
            assert_eq!(double.g.get(i, j), 2.0 * v);
        }
        for (i, j, v) in single.b.iter() {
            assert_eq!(double.b.get(i, j), 2.0 * v);
        }
    }

    #[test]
    fn load_current_examples() {
        let at = |vr, vi, p, q| {
            let l = load_current(vr, vi, p, q).unwrap();
            (l.i_re, l.i_im)
        };
        assert_eq!(at(1.0, 0.0, 1.0, 0.0), (1.0, 0.0));
        assert_eq!(at(0.0, 1.0, 1.0, 0.0), (0.0, 1.0));
        assert_eq!(at(1.0, 0.0, 0.0, 1.0), (0.0, -1.0));
        assert!(load_current(1e-5, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn jacobian_check_examples() {
        assert!(load_jacobian_check(1.0, 0.0, 1.0, 0.5, 1e-6).unwrap() < 1e-6);
        assert!(load_jacobian_check(0.9, -0.1, 2.0, 1.0, 1e-6).unwrap() < 1e-6);
        let zero = load_current(0.8, 0.3, 0.0, 0.0).unwrap();
        assert_eq!(
            [zero.d_re_d_vre, zero.d_re_d_vim, zero.d_im_d_vre, zero.d_im_d_vim],
            [0.0; 4]
        );
        assert_eq!(load_jacobian_check(0.8, 0.3, 0.0, 0.0, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn curvature_matches_differences_of_partials() {
        let h = 1e-6;
        for &(a, b, p, q) in &[(1.0, 0.0, 1.0, 0.5), (0.9, -0.1, 2.0, 1.0), (-0.4, 0.8, 0.7, -0.3)] {
            let c = load_curvature(a, b, p, q).unwrap();
            let pr = load_current(a + h, b, p, q).unwrap();
            let mr = load_current(a - h, b, p, q).unwrap();
            let pi = load_current(a, b + h, p, q).unwrap();
            let mi = load_current(a, b - h, p, q).unwrap();
            let fd_re = [
                (pr.d_re_d_vre - mr.d_re_d_vre) / (2.0 * h),
                (pi.d_re_d_vre - mi.d_re_d_vre) / (2.0 * h),
                (pi.d_re_d_vim - mi.d_re_d_vim) / (2.0 * h),
            ];
            let fd_im = [
                (pr.d_im_d_vre - mr.d_im_d_vre) / (2.0 * h),
                (pi.d_im_d_vre - mi.d_im_d_vre) / (2.0 * h),
                (pi.d_im_d_vim - mi.d_im_d_vim) / (2.0 * h),
            ];
            for k in 0..3 {
                assert!((c.re[k] - fd_re[k]).abs() < 1e-6 * c.re[k].abs().max(1.0));
                assert!((c.im[k] - fd_im[k]).abs() < 1e-6 * c.im[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn transformer_stamp_is_symmetric_with_tap() {
        let mut net = one_phase_pair(vec![]);
        net.buses[1].nominal_voltage = 0.4;
        let a = PhaseSet::single(Phase::A);
        net.branches.push(Branch {
            id: "t".into(),
            from: "s".into(),
            to: "k".into(),
            kind: crate::model::BranchKind::Transformer,
            phases: a,
            series_admittance: PhaseMatrix::diagonal(Complex64::new(4.0, -20.0), a),
            shunt_admittance: PhaseMatrix::zero(),
            tap_ratio: 1.05,
            status: BranchStatus::Closed,
        });
        let y = stamp_linear(&net);
        assert!(y.g.is_symmetric());
        assert!(y.b.is_symmetric());
        // y' = Y vt² / S = 4 * 0.16; off-diagonal −y'/t, from-side diagonal y'/t²
        let yp = 4.0 * 0.16;
        assert!((y.g.get(0, 3) + yp / 1.05).abs() < 1e-15);
        assert!((y.g.get(0, 0) - yp / (1.05 * 1.05)).abs() < 1e-15);
        assert!((y.g.get(3, 3) - yp).abs() < 1e-15);
    }
}
