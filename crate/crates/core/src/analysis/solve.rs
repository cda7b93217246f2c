use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{converged_report, failed_report, rejected_report, ReportContext};
use super::{AnalysisError, NodeSubset, SolutionReport};
use crate::engine::{iterate_to_convergence, Formulation, Problem, SolverSettings, StateVector};
use crate::ingest::fingerprint;
use crate::model::{Load, NetworkModel, Phase};
use crate::stamp::Circuit;

/// Norm minimized by the infeasibility analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    LeastSquares,
    L1,
}

impl Objective {
    pub fn formulation(self) -> Formulation {
        match self {
            Objective::LeastSquares => Formulation::LeastSquares,
            Objective::L1 => Formulation::L1,
        }
    }
}

/// Power-flow state to start a solve from, tied to one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub fingerprint: String,
    /// Load scale that produced `state`; `None` for the flat-start fallback.
    pub scale: Option<f64>,
    pub state: Option<StateVector>,
}

/// Power flow. Never errors: invalid input and divergence are report states.
pub fn solve_power_flow(network: &NetworkModel, settings: &SolverSettings) -> SolutionReport {
    if let Err(e) = settings.validate() {
        return rejected_report(network, Formulation::PowerFlow, settings.if_threshold, e);
    }
    let circuit = match Circuit::new(network) {
        Ok(c) => c,
        Err(e) => return rejected_report(network, Formulation::PowerFlow, settings.if_threshold, e.to_string()),
    };
    power_flow_on(network, &circuit, settings, None)
}

fn power_flow_on(
    network: &NetworkModel,
    circuit: &Circuit,
    settings: &SolverSettings,
    initial: Option<&StateVector>,
) -> SolutionReport {
    let problem = Problem::power_flow(circuit);
    let start = Instant::now();
    let out = iterate_to_convergence(&problem, settings, initial);
    let ctx = ReportContext {
        network,
        circuit,
        threshold: settings.if_threshold,
        wall_time_s: start.elapsed().as_secs_f64(),
        fingerprint: fingerprint(network),
        subset: &[],
    };
    match out {
        Ok(sol) => converged_report(&ctx, &sol),
        Err(f) => failed_report(&ctx, Formulation::PowerFlow, &f),
    }
}

/// Infeasibility analysis with sources on `subset` (default: every
/// node-phase except the slack bus).
///
/// Errors are reserved for inputs that cannot be solved at all; solver
/// divergence comes back as a report with `converged = false`.
pub fn solve_tpia(
    network: &NetworkModel,
    objective: Objective,
    subset: Option<&NodeSubset>,
    settings: &SolverSettings,
    warm_start: Option<&WarmStart>,
) -> Result<SolutionReport, AnalysisError> {
    settings.validate().map_err(AnalysisError::Settings)?;
    let circuit = Circuit::new(network)?;
    let print = fingerprint(network);
    if let Some(w) = warm_start {
        if w.fingerprint != print {
            return Err(AnalysisError::WarmStartMismatch {
                expected: print,
                found: w.fingerprint.clone(),
            });
        }
    }
    let default_subset;
    let subset = match subset {
        Some(s) => s,
        None => {
            default_subset = NodeSubset::all_but_slack(network);
            &default_subset
        }
    };
    let indices = subset.resolve(&circuit)?;
    let problem = Problem::new(&circuit, objective.formulation(), &indices)
        .map_err(|e| AnalysisError::Subset(e.to_string()))?;
    let start = Instant::now();
    let initial = warm_start.and_then(|w| w.state.as_ref());
    let out = iterate_to_convergence(&problem, settings, initial);
    let ctx = ReportContext {
        network,
        circuit: &circuit,
        threshold: settings.if_threshold,
        wall_time_s: start.elapsed().as_secs_f64(),
        fingerprint: print,
        subset: &indices,
    };
    Ok(match out {
        Ok(sol) => converged_report(&ctx, &sol),
        Err(f) => failed_report(&ctx, objective.formulation(), &f),
    })
}

/// Power flow at increasing load scales, each started from the previous
/// converged state. Scales outside (0, 1] are ignored; the rest are solved
/// in ascending order. Returns the last converged state, or a flat start
/// (with a warning) if none converged.
pub fn warm_start_chain(network: &NetworkModel, scales: &[f64], settings: &SolverSettings) -> WarmStart {
    let print = fingerprint(network);
    let mut steps: Vec<f64> = scales.iter().copied().filter(|s| *s > 0.0 && *s <= 1.0).collect();
    steps.sort_by(f64::total_cmp);
    steps.dedup();
    let mut best = WarmStart {
        fingerprint: print,
        scale: None,
        state: None,
    };
    for scale in steps {
        let scaled = network.with_load_scale(scale);
        let Ok(circuit) = Circuit::new(&scaled) else {
            break;
        };
        let problem = Problem::power_flow(&circuit);
        match iterate_to_convergence(&problem, settings, best.state.as_ref()) {
            Ok(sol) => {
                best.scale = Some(scale);
                best.state = Some(sol.state);
            }
            Err(f) => {
                log::debug!("warm start at scale {scale} failed: {f}");
                break;
            }
        }
    }
    if best.state.is_none() {
        log::warn!("no warm-start scale converged; falling back to a flat start");
    }
    best
}

/// Outcome of adding the missing power back and re-solving.
#[derive(Debug, Clone, PartialEq)]
pub struct RemediationOutcome {
    /// Network with one negative load per flagged node-phase.
    pub network: NetworkModel,
    pub power_flow: SolutionReport,
    pub least_squares: SolutionReport,
    pub l1: SolutionReport,
    /// Power flow converged and both analyses flag nothing.
    pub feasible: bool,
}

/// Load scales of the power-flow chain that warm-starts the L1 validation
/// solve in [`remediate_and_validate`].
pub const REMEDIATION_WARM_SCALES: [f64; 4] = [0.25, 0.5, 0.75, 0.9];

/// Adds `injection_scale` times the missing power of `report` as a
/// negative constant-PQ load at each flagged node-phase, then reruns power
/// flow and both infeasibility analyses. The least-squares run starts flat;
/// the L1 run is warm-started from power flow at
/// [`REMEDIATION_WARM_SCALES`] of the modified load. A report with nothing
/// flagged leaves the network unchanged.
pub fn remediate_and_validate(
    network: &NetworkModel,
    report: &SolutionReport,
    settings: &SolverSettings,
    injection_scale: f64,
) -> Result<RemediationOutcome, AnalysisError> {
    let mut fixed = network.clone();
    for (n, m) in report.missing_power.iter().enumerate() {
        let mut p = [0.0; 3];
        let mut q = [0.0; 3];
        p[m.phase.index()] = -injection_scale * m.p_w;
        q[m.phase.index()] = -injection_scale * m.q_var;
        fixed.loads.push(Load {
            id: format!("remedy_{n}_{}_{}", m.bus, phase_tag(m.phase)),
            bus: m.bus.clone(),
            p,
            q,
        });
    }
    let power_flow = solve_power_flow(&fixed, settings);
    let least_squares = solve_tpia(&fixed, Objective::LeastSquares, None, settings, None)?;
    let warm = warm_start_chain(&fixed, &REMEDIATION_WARM_SCALES, settings);
    let l1 = solve_tpia(&fixed, Objective::L1, None, settings, Some(&warm))?;
    let feasible = power_flow.converged && least_squares.is_feasible() && l1.is_feasible();
    Ok(RemediationOutcome {
        network: fixed,
        power_flow,
        least_squares,
        l1,
        feasible,
    })
}

fn phase_tag(p: Phase) -> char {
    match p {
        Phase::A => 'a',
        Phase::B => 'b',
        Phase::C => 'c',
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::missing_power;
    use crate::synthetic::{four_bus_with_load, two_bus_analog};

    const G: f64 = 10.0;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    // g (V − 1) + P / V = 0 on the high-voltage branch
    fn quadratic_root(p: f64) -> f64 {
        (G + (G * G - 4.0 * G * p).sqrt()) / (2.0 * G)
    }

    fn load_phase(report: &SolutionReport) -> &crate::analysis::NodePhaseResult {
        report.node_phase("load", Phase::A).unwrap()
    }

    #[test]
    fn power_flow_matches_quadratic_root() {
        let report = solve_power_flow(&two_bus_analog(1.0, G), &settings());
        assert!(report.converged);
        assert!((load_phase(&report).v_re - quadratic_root(1.0)).abs() < 1e-9);
        assert!((quadratic_root(1.0) - 0.887298).abs() < 1e-6);
    }

    #[test]
    fn power_flow_past_the_nose_is_a_report_state() {
        let report = solve_power_flow(&two_bus_analog(3.0, G), &settings());
        assert!(!report.converged);
        assert!(report.failure.is_some());
        assert!(report.residual.is_some());
    }

    #[test]
    fn least_squares_missing_power_matches_product_of_oracles() {
        let report = solve_tpia(&two_bus_analog(3.0, G), Objective::LeastSquares, None, &settings(), None).unwrap();
        let v = 0.3f64.sqrt();
        let i = 2.0 * 30f64.sqrt() - G;
        assert!((load_phase(&report).if_mag_pu - i).abs() < 1e-6);
        assert_eq!(report.nonzero_node_phases, 1);
        let m = &report.missing_power[0];
        assert!((m.p_w - v * i).abs() < 1e-6, "{}", m.p_w);
        assert!(m.q_var.abs() < 1e-6);
        assert_eq!(report.missing_power_by_node()[0].bus, "load");
    }

    #[test]
    fn imaginary_source_at_real_voltage_is_reactive() {
        let mut report = solve_tpia(&two_bus_analog(3.0, G), Objective::LeastSquares, None, &settings(), None).unwrap();
        for r in &mut report.node_phases {
            r.v_im = 0.0;
            r.if_re = 0.0;
            r.if_im = if r.flagged { 0.5 } else { 0.0 };
        }
        let m = missing_power(&report);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].p_w, 0.0);
        assert!(m[0].q_var < 0.0);
    }

    #[test]
    fn feasible_network_reports_no_missing_power() {
        let report = solve_tpia(&two_bus_analog(1.0, G), Objective::L1, None, &settings(), None).unwrap();
        assert!(report.is_feasible());
        assert!(missing_power(&report).is_empty());
        let out = remediate_and_validate(&two_bus_analog(1.0, G), &report, &settings(), 1.0).unwrap();
        assert!(out.feasible);
        assert_eq!(out.network, two_bus_analog(1.0, G));
    }

    #[test]
    fn full_injection_restores_feasibility_and_half_does_not() {
        let net = two_bus_analog(3.0, G);
        let report = solve_tpia(&net, Objective::LeastSquares, None, &settings(), None).unwrap();
        let full = remediate_and_validate(&net, &report, &settings(), 1.0).unwrap();
        // remaining load 3 − √0.3 (2√30 − 10) ≈ 2.477 is below g / 4 = 2.5
        let missing = 0.3f64.sqrt() * (2.0 * 30f64.sqrt() - G);
        let remaining = full.network.total_load().re;
        assert!((remaining - (3.0 - missing)).abs() < 1e-6, "{remaining}");
        assert!(remaining < G / 4.0);
        assert!(full.power_flow.converged);
        assert!(full.feasible, "{:?}", (full.least_squares.nonzero_node_phases, full.l1.nonzero_node_phases));
        assert!(full.network.loads.iter().any(|l| l.id == "remedy_0_load_a"));

        let half = remediate_and_validate(&net, &report, &settings(), 0.5).unwrap();
        let remaining = half.network.total_load().re;
        assert!((remaining - (3.0 - 0.5 * missing)).abs() < 1e-6);
        assert!(remaining > G / 4.0);
        assert!(!half.power_flow.converged);
        assert!(!half.feasible);
    }

    #[test]
    fn warm_start_chain_returns_reduced_load_solution() {
        let net = two_bus_analog(3.0, G);
        let warm = warm_start_chain(&net, &[0.5], &settings());
        assert_eq!(warm.scale, Some(0.5));
        let state = warm.state.as_ref().unwrap();
        let circuit = Circuit::new(&net).unwrap();
        let k = circuit.admittance.index.get(1, Phase::A).unwrap();
        assert!((state.v_re[k] - quadratic_root(1.5)).abs() < 1e-9);
        let report = solve_tpia(&net, Objective::L1, None, &settings(), Some(&warm)).unwrap();
        assert!(report.converged);
        assert_eq!(report.nonzero_nodes, 1);
    }

    #[test]
    fn warm_start_at_full_scale_is_the_power_flow() {
        let net = two_bus_analog(1.0, G);
        let warm = warm_start_chain(&net, &[1.0, 0.5, 1.0, 7.0], &settings());
        assert_eq!(warm.scale, Some(1.0));
        let pf = solve_power_flow(&net, &settings());
        let circuit = Circuit::new(&net).unwrap();
        let k = circuit.admittance.index.get(1, Phase::A).unwrap();
        assert!((warm.state.unwrap().v_re[k] - load_phase(&pf).v_re).abs() < 1e-12);
    }

    #[test]
    fn warm_start_falls_back_to_flat_start() {
        let warm = warm_start_chain(&two_bus_analog(30.0, G), &[0.5, 1.0], &settings());
        assert_eq!(warm.scale, None);
        assert!(warm.state.is_none());
    }

    #[test]
    fn warm_start_from_another_network_is_rejected() {
        let warm = warm_start_chain(&two_bus_analog(1.0, G), &[1.0], &settings());
        let e = solve_tpia(&two_bus_analog(3.0, G), Objective::L1, None, &settings(), Some(&warm)).unwrap_err();
        assert!(matches!(e, AnalysisError::WarmStartMismatch { .. }));
    }

    #[test]
    fn threshold_reclassifies_without_resolving() {
        let report = solve_tpia(&two_bus_analog(3.0, G), Objective::LeastSquares, None, &settings(), None).unwrap();
        let loose = report.with_threshold(10.0);
        assert_eq!(loose.nonzero_node_phases, 0);
        assert!(loose.missing_power.is_empty());
        assert_eq!(report.nonzero_node_phases, 1);
        for (a, b) in report.node_phases.iter().zip(&loose.node_phases) {
            assert_eq!((a.if_re, a.if_im, a.v_re, a.v_im), (b.if_re, b.if_im, b.v_re, b.v_im));
        }
        assert_eq!(loose.with_threshold(report.threshold), report);
    }

    #[test]
    fn subset_confines_sources() {
        let net = four_bus_with_load(12_000.0, 5_810.0);
        let subset = NodeSubset::from_buses(&net, ["n4"]).unwrap();
        let report = solve_tpia(&net, Objective::LeastSquares, Some(&subset), &settings(), None).unwrap();
        assert!(report.converged);
        assert_eq!(report.eligible_nodes, 1);
        for r in &report.node_phases {
            if r.bus != "n4" {
                assert_eq!((r.if_re, r.if_im), (0.0, 0.0));
            }
        }
        assert!(report.flagged().all(|r| subset.contains(&r.bus, r.phase)));
        assert!(report.nonzero_node_phases >= 1);
    }

    #[test]
    fn slack_and_unknown_subsets_are_rejected() {
        let net = two_bus_analog(1.0, G);
        let slack = NodeSubset::from_pairs([("src".to_string(), Phase::A)]);
        assert!(matches!(
            solve_tpia(&net, Objective::L1, Some(&slack), &settings(), None),
            Err(AnalysisError::Subset(_))
        ));
        assert!(NodeSubset::from_buses(&net, ["nowhere"]).is_err());
        let empty = NodeSubset::default();
        assert!(solve_tpia(&net, Objective::L1, Some(&empty), &settings(), None).is_err());
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let bad = SolverSettings {
            sigma: 1.5,
            ..settings()
        };
        let net = two_bus_analog(1.0, G);
        assert!(matches!(
            solve_tpia(&net, Objective::L1, None, &bad, None),
            Err(AnalysisError::Settings(_))
        ));
        assert!(!solve_power_flow(&net, &bad).converged);
    }
}
