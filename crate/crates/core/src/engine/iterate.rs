use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::assemble::{assemble_kkt_l1, assemble_kkt_l2, assemble_tpf, inf_norm, split_sign, KktSystem};
use super::newton::{diode_limit, newton_step};
use super::{DualVars, EngineError, Formulation, InfeasibilityVars, Problem, SolverSettings, StateVector, VarLayout};

/// Halvings tried before a step that keeps collapsing a load is abandoned.
const MAX_BACKOFF: usize = 60;

/// One post-convergence check of the optimality conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCheck {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl AuditCheck {
    fn at_most(name: &str, value: f64, limit: f64) -> AuditCheck {
        AuditCheck {
            name: name.to_string(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    fn positive(name: &str, value: f64) -> AuditCheck {
        AuditCheck {
            name: name.to_string(),
            value,
            limit: 0.0,
            passed: value > 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub formulation: Formulation,
    pub state: StateVector,
    pub infeasibility: Option<InfeasibilityVars>,
    pub duals: Option<DualVars>,
    /// Node-phase indices of the infeasibility sources, in slot order.
    pub subset: Vec<usize>,
    /// Newton steps taken.
    pub iterations: usize,
    /// `‖F‖∞` at the returned point.
    pub residual: f64,
    pub matrix_size: usize,
    /// Barrier parameter at exit (zero outside L1).
    pub epsilon: f64,
    /// Residual before every step.
    pub history: Vec<f64>,
    pub audit: Vec<AuditCheck>,
}

impl Solution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.state
            .v_re
            .iter()
            .zip(&self.state.v_im)
            .map(|(r, i)| Complex64::new(*r, *i))
            .collect()
    }

    /// Net injected source per node-phase (zero outside the subset), per-unit.
    pub fn source_currents(&self, n_nodes: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); n_nodes];
        if let Some(inf) = &self.infeasibility {
            for ((slot, re), im) in inf.net_re().into_iter().enumerate().zip(inf.net_im()) {
                out[self.subset[slot]] = Complex64::new(re, im);
            }
        }
        out
    }

    pub fn audit_passed(&self) -> bool {
        self.audit.iter().all(|a| a.passed)
    }
}

#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub reason: EngineError,
    pub iterations: usize,
    pub best_residual: f64,
    pub matrix_size: usize,
    /// Last iterate reached.
    pub state: StateVector,
    pub history: Vec<f64>,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} iterations", self.reason, self.iterations)
    }
}

impl std::error::Error for SolveFailure {}

fn assemble(problem: &Problem, z: &[f64], epsilon: f64, floor: f64) -> Result<KktSystem, EngineError> {
    match problem.formulation() {
        Formulation::PowerFlow => assemble_tpf(problem, z, floor),
        Formulation::LeastSquares => assemble_kkt_l2(problem, z, floor),
        Formulation::L1 => assemble_kkt_l1(problem, z, epsilon, floor),
    }
}

/// Packed starting point: flat or warm-start voltages, slack currents from
/// the KCL mismatch at the slack nodes, and infeasibility sources and
/// multipliers sized from the mismatch at the remaining subset nodes.
fn initial_point(
    problem: &Problem,
    settings: &SolverSettings,
    initial: Option<&StateVector>,
) -> Result<Vec<f64>, EngineError> {
    let l = problem.layout();
    let circuit = problem.circuit();
    let mut z = vec![0.0; l.len()];
    let mut v = match initial {
        Some(s) => {
            if s.v_re.len() != l.n || s.v_im.len() != l.n {
                return Err(EngineError::Dimension {
                    what: "initial voltages",
                    expected: l.n,
                    got: s.v_re.len().min(s.v_im.len()),
                });
            }
            s.v_re.iter().zip(&s.v_im).map(|(r, i)| Complex64::new(*r, *i)).collect()
        }
        None => circuit.flat_start(),
    };
    for src in &circuit.slack {
        v[src.node] = src.voltage;
    }
    let yv = circuit.admittance.current(&v);
    for (k, vk) in v.iter().enumerate() {
        z[k] = vk.re;
        z[l.n + k] = vk.im;
    }
    for (j, src) in circuit.slack.iter().enumerate() {
        let k = src.node;
        let vk = v[k];
        let load = if vk.norm_sqr() > 0.0 {
            (circuit.loads[k] / vk).conj()
        } else {
            Complex64::default()
        };
        let i = yv[k] + load;
        z[l.source_re().start + j] = i.re;
        z[l.source_im().start + j] = i.im;
    }
    if l.has_duals() {
        // sources absorb the starting KCL mismatch; with λ = 0 the Newton
        // step would coincide with the power-flow step and never leave it
        for (k, vk) in v.iter().enumerate() {
            let Some(j) = problem.source_slot(k) else { continue };
            let load = if vk.norm_sqr() > 0.0 {
                (circuit.loads[k] / vk).conj()
            } else {
                Complex64::default()
            };
            let m = yv[k] + load;
            for (part, value, lambda) in [(0, m.re, l.lambda_re().start + k), (1, m.im, l.lambda_im().start + k)] {
                if l.formulation == Formulation::LeastSquares {
                    z[l.infeas_block(part).start + j] = value;
                    z[lambda] = value;
                    continue;
                }
                let (plus, minus) = (2 * part, 2 * part + 1);
                z[l.infeas_block(plus).start + j] = settings.l1_initial_source + value.max(0.0);
                z[l.infeas_block(minus).start + j] = settings.l1_initial_source + (-value).max(0.0);
                let lam = if value == 0.0 {
                    0.0
                } else {
                    settings.l1_initial_multiplier.copysign(value)
                };
                z[lambda] = lam;
                z[l.mu_block(plus).start + j] = 1.0 - lam;
                z[l.mu_block(minus).start + j] = 1.0 + lam;
            }
        }
    }
    Ok(z)
}

fn unpack_state(l: &VarLayout, z: &[f64]) -> StateVector {
    StateVector {
        v_re: z[l.v_re()].to_vec(),
        v_im: z[l.v_im()].to_vec(),
        source_re: z[l.source_re()].to_vec(),
        source_im: z[l.source_im()].to_vec(),
    }
}

fn unpack_infeasibility(l: &VarLayout, z: &[f64]) -> Option<InfeasibilityVars> {
    let block = |c: usize| z[l.infeas_block(c)].to_vec();
    match l.formulation {
        Formulation::PowerFlow => None,
        Formulation::LeastSquares => Some(InfeasibilityVars::LeastSquares {
            re: block(0),
            im: block(1),
        }),
        Formulation::L1 => Some(InfeasibilityVars::L1 {
            re_pos: block(0),
            re_neg: block(1),
            im_pos: block(2),
            im_neg: block(3),
        }),
    }
}

fn unpack_duals(l: &VarLayout, z: &[f64]) -> Option<DualVars> {
    if !l.has_duals() {
        return None;
    }
    let lam = l.lambda().start;
    let mu = (l.formulation == Formulation::L1).then(|| {
        [
            z[l.mu_block(0)].to_vec(),
            z[l.mu_block(1)].to_vec(),
            z[l.mu_block(2)].to_vec(),
            z[l.mu_block(3)].to_vec(),
        ]
    });
    Some(DualVars {
        lambda_re: z[l.lambda_re()].to_vec(),
        lambda_im: z[l.lambda_im()].to_vec(),
        nu_re: z[lam + 2 * l.n..lam + 2 * l.n + l.s].to_vec(),
        nu_im: z[lam + 2 * l.n + l.s..lam + l.x_len()].to_vec(),
        mu,
    })
}

fn audit(problem: &Problem, settings: &SolverSettings, sys: &KktSystem, z: &[f64], epsilon: f64) -> Vec<AuditCheck> {
    let l = problem.layout();
    let tol = 10.0 * settings.tolerance;
    let kcl = l.kcl_offset();
    let mut checks = vec![AuditCheck::at_most(
        "kcl_residual",
        inf_norm(&sys.residual[kcl..kcl + l.x_len()]),
        tol,
    )];
    let lam_of = |c: usize, slot: usize| {
        let k = problem.subset()[slot];
        if c < 2 {
            z[l.lambda_re().start + k]
        } else {
            z[l.lambda_im().start + k]
        }
    };
    match l.formulation {
        Formulation::PowerFlow => {}
        Formulation::LeastSquares => {
            let mut worst: f64 = 0.0;
            for slot in 0..l.m {
                worst = worst.max((z[l.infeas_block(0).start + slot] - lam_of(0, slot)).abs());
                worst = worst.max((z[l.infeas_block(1).start + slot] - lam_of(2, slot)).abs());
            }
            checks.push(AuditCheck::at_most("source_equals_dual", worst, tol));
        }
        Formulation::L1 => {
            let mut bound: f64 = 0.0;
            let mut stationarity: f64 = 0.0;
            let mut complementarity: f64 = 0.0;
            let mut min_primal = f64::INFINITY;
            let mut min_dual = f64::INFINITY;
            for c in 0..4 {
                for slot in 0..l.m {
                    let i = z[l.infeas_block(c).start + slot];
                    let mu = z[l.mu_block(c).start + slot];
                    let lam = lam_of(c, slot);
                    bound = bound.max(lam.abs());
                    stationarity = stationarity.max((1.0 + split_sign(c) * lam - mu).abs());
                    complementarity = complementarity.max((mu * i).abs());
                    min_primal = min_primal.min(i);
                    min_dual = min_dual.min(mu);
                }
            }
            checks.push(AuditCheck::at_most("dual_bound", bound, 1.0 + tol));
            checks.push(AuditCheck::at_most("split_stationarity", stationarity, tol));
            checks.push(AuditCheck::at_most("complementarity", complementarity, epsilon + tol));
            checks.push(AuditCheck::positive("source_interior", min_primal));
            checks.push(AuditCheck::positive("dual_interior", min_dual));
        }
    }
    checks
}

/// Runs Newton (power flow, least squares) or the primal-dual interior-point
/// method (L1) from `initial` or a flat start.
///
/// Converged means `‖Δ‖∞ < tol`, `‖F‖∞ < 10 tol` and, for L1, the barrier at
/// its floor. The barrier shrinks by `epsilon_factor` whenever the residual
/// falls below ten times its current value; these re-evaluations do not
/// count as iterations.
pub fn iterate_to_convergence(
    problem: &Problem,
    settings: &SolverSettings,
    initial: Option<&StateVector>,
) -> Result<Solution, SolveFailure> {
    let l = problem.layout();
    let is_l1 = l.formulation == Formulation::L1;
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut matrix_size = 0;
    let mut z = match initial_point(problem, settings, initial) {
        Ok(z) => z,
        Err(reason) => {
            return Err(SolveFailure {
                reason,
                iterations: 0,
                best_residual: best,
                matrix_size,
                state: unpack_state(&l, &vec![0.0; l.len()]),
                history,
            })
        }
    };
    let fail = |reason: EngineError, iterations: usize, best: f64, size: usize, z: &[f64], history: Vec<f64>| {
        SolveFailure {
            reason,
            iterations,
            best_residual: best,
            matrix_size: size,
            state: unpack_state(&l, z),
            history,
        }
    };

    let mut epsilon = if is_l1 { settings.epsilon_initial } else { 0.0 };
    let loaded: Vec<usize> = problem
        .circuit()
        .loads
        .iter()
        .enumerate()
        .filter(|(_, s)| **s != Complex64::default())
        .map(|(k, _)| k)
        .collect();

    for iteration in 0..=settings.max_iterations {
        let sys = loop {
            let sys = match assemble(problem, &z, epsilon, settings.collapse_floor) {
                Ok(s) => s,
                Err(e) => return Err(fail(e, iteration, best, matrix_size, &z, history)),
            };
            let r = sys.residual_norm();
            if is_l1 && epsilon > settings.epsilon_floor && r < 10.0 * epsilon {
                epsilon = (epsilon * settings.epsilon_factor).max(settings.epsilon_floor);
                continue;
            }
            break sys;
        };
        matrix_size = sys.matrix_size();
        let r = sys.residual_norm();
        if !r.is_finite() {
            let reason = EngineError::Singular {
                variable: "non-finite residual".into(),
            };
            return Err(fail(reason, iteration, best, matrix_size, &z, history));
        }
        best = best.min(r);
        history.push(r);
        if iteration == settings.max_iterations {
            let reason = EngineError::MaxIterations {
                iterations: iteration,
                best_residual: best,
            };
            return Err(fail(reason, iteration, best, matrix_size, &z, history));
        }

        let dir = match newton_step(&sys) {
            Ok(d) => d,
            Err(e) => return Err(fail(e, iteration, best, matrix_size, &z, history)),
        };
        let at_floor = !is_l1 || epsilon <= settings.epsilon_floor;
        let converged = dir.norm() < settings.tolerance && r < 10.0 * settings.tolerance && at_floor;

        let mut alpha: f64 = 1.0;
        if is_l1 {
            let span = l.infeas().start..l.infeas().end;
            alpha = alpha.min(diode_limit(&z[span.clone()], &dir.delta[span], settings.sigma));
            let span = l.mu();
            alpha = alpha.min(diode_limit(&z[span.clone()], &dir.delta[span], settings.sigma));
        }
        for k in 0..l.n {
            let dv = dir.delta[k].hypot(dir.delta[l.n + k]);
            if alpha * dv > settings.max_voltage_step {
                alpha = settings.max_voltage_step / dv;
            }
        }
        let collapses = |alpha: f64| {
            loaded.iter().any(|&k| {
                let a = z[k] + alpha * dir.delta[k];
                let b = z[l.n + k] + alpha * dir.delta[l.n + k];
                !(a * a + b * b >= settings.collapse_floor)
            })
        };
        let mut backoff = 0;
        while collapses(alpha) {
            backoff += 1;
            if backoff > MAX_BACKOFF {
                let k = loaded
                    .iter()
                    .copied()
                    .find(|&k| z[k].hypot(z[l.n + k]) < settings.collapse_floor.sqrt())
                    .unwrap_or(loaded[0]);
                let reason = EngineError::Collapse {
                    node: problem.circuit().node_label(k),
                    magnitude_sq: z[k] * z[k] + z[l.n + k] * z[l.n + k],
                };
                return Err(fail(reason, iteration, best, matrix_size, &z, history));
            }
            alpha *= 0.5;
        }
        for (zi, di) in z.iter_mut().zip(&dir.delta) {
            *zi += alpha * di;
        }
        log::trace!(
            "{} iter {iteration}: |F| = {r:.3e}, |dz| = {:.3e}, alpha = {alpha:.3}, eps = {epsilon:.1e}, cond = {:.2e}",
            l.formulation.short_name(),
            dir.norm(),
            dir.condition
        );

        if converged {
            let sys = match assemble(problem, &z, epsilon, settings.collapse_floor) {
                Ok(s) => s,
                Err(e) => return Err(fail(e, iteration + 1, best, matrix_size, &z, history)),
            };
            let audit = audit(problem, settings, &sys, &z, epsilon);
            return Ok(Solution {
                formulation: l.formulation,
                state: unpack_state(&l, &z),
                infeasibility: unpack_infeasibility(&l, &z),
                duals: unpack_duals(&l, &z),
                subset: problem.subset().to_vec(),
                iterations: iteration + 1,
                residual: sys.residual_norm(),
                matrix_size: sys.matrix_size(),
                epsilon,
                history,
                audit,
            });
        }
    }
    unreachable!("loop returns on its last pass")
}
