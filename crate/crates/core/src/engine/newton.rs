use super::assemble::inf_norm;
use super::{EngineError, KktSystem};
use crate::linalg::{LinearSolveError, SparseLu};

/// Condition estimates above this reject the Newton matrix.
pub const CONDITION_LIMIT: f64 = 1e14;

/// Full-length Newton direction plus diagnostics of the linear solve.
#[derive(Debug, Clone)]
pub struct Direction {
    /// Packed-length update; dropped unknowns get zero.
    pub delta: Vec<f64>,
    /// 1-norm condition estimate of the row-equilibrated matrix.
    pub condition: f64,
    /// `‖J Δ + F‖∞` on the reduced system.
    pub linear_residual: f64,
}

impl Direction {
    pub fn norm(&self) -> f64 {
        inf_norm(&self.delta)
    }
}

/// Solves `J Δ = −F` for the reduced system.
pub fn newton_step(system: &KktSystem) -> Result<Direction, EngineError> {
    let name = |reduced: usize| system.variable_name(system.kept[reduced]).to_string();
    let lu = SparseLu::factorize(&system.matrix).map_err(|e| match e {
        LinearSolveError::Singular { column } => EngineError::Singular { variable: name(column) },
        LinearSolveError::IllConditioned { estimate, column } => EngineError::IllConditioned {
            estimate,
            variable: name(column),
        },
        LinearSolveError::NotSquare { .. } => unreachable!("Newton matrices are square"),
    })?;
    let condition = lu.condition_estimate();
    if !(condition <= CONDITION_LIMIT) {
        return Err(EngineError::IllConditioned {
            estimate: condition,
            variable: name(lu.weakest_pivot_column()),
        });
    }
    let rhs: Vec<f64> = system.reduced_residual().iter().map(|r| -r).collect();
    let step = lu.solve(&rhs);
    if step.iter().any(|v| !v.is_finite()) {
        return Err(EngineError::Singular {
            variable: name(lu.weakest_pivot_column()),
        });
    }
    let jd = system.matrix.mul_vec(&step);
    let linear_residual = jd.iter().zip(&rhs).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()));
    let mut delta = vec![0.0; system.residual.len()];
    for (r, &i) in system.kept.iter().enumerate() {
        delta[i] = step[r];
    }
    Ok(Direction {
        delta,
        condition,
        linear_residual,
    })
}

/// Largest `α ≤ 1` keeping every nonnegative variable above `(1 − σ)` of
/// its current value: `α = min(1, σ · min_{Δ<0} −v/Δ)`.
pub fn diode_limit(values: &[f64], steps: &[f64], sigma: f64) -> f64 {
    values
        .iter()
        .zip(steps)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| sigma * (-v / d))
        .fold(1.0, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Formulation, VarLayout};
    use crate::linalg::CscMatrix;

    #[test]
    fn diode_limit_examples() {
        assert_eq!(diode_limit(&[1.0, 2.0], &[0.5, 1.0], 0.95), 1.0);
        assert!((diode_limit(&[1.0, 2.0], &[-2.0, 1.0], 0.95) - 0.475).abs() < 1e-15);
        assert!((diode_limit(&[1.0, 0.1], &[-2.0, -1.0], 0.9) - 0.09).abs() < 1e-15);
        assert_eq!(diode_limit(&[], &[], 0.95), 1.0);
    }

    #[test]
    fn step_solves_linear_system() {
        let a = CscMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let sys = KktSystem::from_parts(&a, vec![1.0, 2.0], VarLayout::new(Formulation::PowerFlow, 1, 0, 0));
        let d = newton_step(&sys).unwrap();
        let back = a.mul_vec(&d.delta);
        assert!((back[0] + 1.0).abs() < 1e-14 && (back[1] + 2.0).abs() < 1e-14);
        assert!(d.linear_residual < 1e-14);
    }

    #[test]
    fn near_singular_matrix_is_rejected_with_variable() {
        let a = CscMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0 + 1e-16]]);
        let sys = KktSystem::from_parts(&a, vec![1.0, 0.0], VarLayout::new(Formulation::PowerFlow, 1, 0, 0));
        match newton_step(&sys) {
            Err(EngineError::IllConditioned { variable, .. }) | Err(EngineError::Singular { variable }) => {
                assert!(variable.starts_with("z["))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn random_spd_system_is_solved_to_roundoff() {
        use rand::{Rng, SeedableRng};
        let n = 50;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| if rng.random_bool(0.1) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect())
            .collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = CscMatrix::from_dense(&a);
        let sys = KktSystem::from_parts(&m, r.clone(), VarLayout::new(Formulation::PowerFlow, n / 2, 0, 0));
        let d = newton_step(&sys).unwrap();
        let ad = m.mul_vec(&d.delta);
        let err = ad.iter().zip(&r).map(|(x, y)| (x + y).powi(2)).sum::<f64>().sqrt();
        let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(err <= 1e-10 * norm, "{err}");
    }
}
