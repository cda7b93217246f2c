use std::sync::Arc;

use num_complex::Complex64;

use super::{EngineError, Formulation, Problem, VarLayout};
use crate::linalg::{CscMatrix, Triplets};
use crate::stamp::{curvature_unchecked, load_current_with_floor};

/// Newton system at one iterate: reduced matrix, full residual and the map
/// between them.
///
/// Unknowns whose row and column are both structurally empty are dropped
/// from `matrix`; `kept[i]` is the packed index of reduced row/column `i`.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub matrix: CscMatrix,
    pub residual: Vec<f64>,
    pub layout: VarLayout,
    pub kept: Vec<usize>,
    names: Arc<Vec<String>>,
}

impl KktSystem {
    /// Builds a system from an explicit full matrix; used by tests and
    /// benchmarks that bypass the circuit.
    pub fn from_parts(full: &CscMatrix, residual: Vec<f64>, layout: VarLayout) -> KktSystem {
        let names = Arc::new((0..full.n_cols()).map(|i| format!("z[{i}]")).collect());
        reduce(full, residual, layout, names)
    }

    pub fn residual_norm(&self) -> f64 {
        inf_norm(&self.residual)
    }

    /// Number of unknowns left after dropping structurally empty ones.
    pub fn matrix_size(&self) -> usize {
        self.kept.len()
    }

    pub fn variable_name(&self, packed: usize) -> &str {
        &self.names[packed]
    }

    pub fn reduced_residual(&self) -> Vec<f64> {
        self.kept.iter().map(|&i| self.residual[i]).collect()
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

fn reduce(full: &CscMatrix, residual: Vec<f64>, layout: VarLayout, names: Arc<Vec<String>>) -> KktSystem {
    let rows = full.row_occupancy();
    let cols = full.col_occupancy();
    let keep: Vec<bool> = rows.iter().zip(&cols).map(|(r, c)| *r || *c).collect();
    let kept: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    let matrix = if kept.len() == keep.len() {
        full.clone()
    } else {
        full.select(&keep, &keep)
    };
    KktSystem {
        matrix,
        residual,
        layout,
        kept,
        names,
    }
}

/// Power-flow Jacobian and mismatch at packed state `z`.
pub fn assemble_tpf(problem: &Problem, z: &[f64], collapse_floor: f64) -> Result<KktSystem, EngineError> {
    expect(problem, Formulation::PowerFlow)?;
    assemble(problem, z, 0.0, collapse_floor)
}

/// Least-squares optimality system at packed point `z`.
pub fn assemble_kkt_l2(problem: &Problem, z: &[f64], collapse_floor: f64) -> Result<KktSystem, EngineError> {
    expect(problem, Formulation::LeastSquares)?;
    assemble(problem, z, 0.0, collapse_floor)
}

/// Perturbed L1 optimality system at packed point `z` with barrier `epsilon`.
pub fn assemble_kkt_l1(
    problem: &Problem,
    z: &[f64],
    epsilon: f64,
    collapse_floor: f64,
) -> Result<KktSystem, EngineError> {
    expect(problem, Formulation::L1)?;
    assemble(problem, z, epsilon, collapse_floor)
}

fn expect(problem: &Problem, f: Formulation) -> Result<(), EngineError> {
    if problem.formulation() != f {
        return Err(EngineError::InvalidSubset(format!(
            "problem is set up for {}, not {}",
            problem.formulation().short_name(),
            f.short_name()
        )));
    }
    Ok(())
}

/// Mismatch `h(z)` and its Jacobian with respect to `X` and the
/// infeasibility sources, in h-row / packed-column coordinates.
struct Constraints {
    h: Vec<f64>,
    /// (h row, packed column, value)
    jac: Vec<(usize, usize, f64)>,
}

fn constraints(problem: &Problem, z: &[f64], collapse_floor: f64) -> Result<Constraints, EngineError> {
    let circuit = problem.circuit();
    let l = problem.layout();
    let n = l.n;
    let (vr, vi) = (&z[l.v_re()], &z[l.v_im()]);
    let g = &circuit.admittance.g;
    let b = &circuit.admittance.b;

    let mut h = vec![0.0; l.x_len()];
    let mut jac = Vec::with_capacity(4 * (g.nnz() + b.nnz()) + 8 * n);

    for j in 0..n {
        for (k, gkj) in g.column(j) {
            h[k] += gkj * vr[j];
            h[n + k] += gkj * vi[j];
            jac.push((k, j, gkj));
            jac.push((n + k, n + j, gkj));
        }
        for (k, bkj) in b.column(j) {
            h[k] -= bkj * vi[j];
            h[n + k] += bkj * vr[j];
            jac.push((k, n + j, -bkj));
            jac.push((n + k, j, bkj));
        }
    }

    for (k, s) in circuit.loads.iter().enumerate() {
        if *s == Complex64::default() {
            continue;
        }
        let c = load_current_with_floor(vr[k], vi[k], s.re, s.im, collapse_floor).map_err(|e| {
            EngineError::Collapse {
                node: circuit.node_label(k),
                magnitude_sq: e.magnitude_sq,
            }
        })?;
        h[k] += c.i_re;
        h[n + k] += c.i_im;
        jac.push((k, k, c.d_re_d_vre));
        jac.push((k, n + k, c.d_re_d_vim));
        jac.push((n + k, k, c.d_im_d_vre));
        jac.push((n + k, n + k, c.d_im_d_vim));
    }

    let (src_re, src_im) = (l.source_re(), l.source_im());
    for (j, src) in circuit.slack.iter().enumerate() {
        let k = src.node;
        h[k] -= z[src_re.start + j];
        h[n + k] -= z[src_im.start + j];
        jac.push((k, src_re.start + j, -1.0));
        jac.push((n + k, src_im.start + j, -1.0));
        let (row_re, row_im) = (2 * n + j, 2 * n + l.s + j);
        h[row_re] = vr[k] - src.voltage.re;
        h[row_im] = vi[k] - src.voltage.im;
        jac.push((row_re, k, 1.0));
        jac.push((row_im, n + k, 1.0));
    }

    match l.formulation {
        Formulation::PowerFlow => {}
        Formulation::LeastSquares => {
            let (fr, fi) = (l.infeas_block(0), l.infeas_block(1));
            for (slot, &k) in problem.subset().iter().enumerate() {
                h[k] -= z[fr.start + slot];
                h[n + k] -= z[fi.start + slot];
                jac.push((k, fr.start + slot, -1.0));
                jac.push((n + k, fi.start + slot, -1.0));
            }
        }
        Formulation::L1 => {
            for c in 0..4 {
                let block = l.infeas_block(c);
                let sign = split_sign(c);
                let offset = if c < 2 { 0 } else { n };
                for (slot, &k) in problem.subset().iter().enumerate() {
                    h[offset + k] += sign * z[block.start + slot];
                    jac.push((offset + k, block.start + slot, sign));
                }
            }
        }
    }
    Ok(Constraints { h, jac })
}

/// `∂h/∂i` for split component `c`: plus components inject, minus withdraw.
pub(crate) fn split_sign(c: usize) -> f64 {
    if c.is_multiple_of(2) {
        -1.0
    } else {
        1.0
    }
}

fn assemble(problem: &Problem, z: &[f64], epsilon: f64, collapse_floor: f64) -> Result<KktSystem, EngineError> {
    let l = problem.layout();
    if z.len() != l.len() {
        return Err(EngineError::Dimension {
            what: "packed iterate",
            expected: l.len(),
            got: z.len(),
        });
    }
    let cons = constraints(problem, z, collapse_floor)?;
    let dim = l.len();

    if l.formulation == Formulation::PowerFlow {
        let mut t = Triplets::with_capacity(dim, dim, cons.jac.len());
        for &(r, c, v) in &cons.jac {
            t.push(r, c, v);
        }
        return Ok(reduce(&t.to_csc(), cons.h, l, problem.names()));
    }

    let lam = l.lambda();
    let kcl = l.kcl_offset();
    let mut residual = vec![0.0; dim];
    let mut t = Triplets::with_capacity(dim, dim, 2 * cons.jac.len() + 16 * l.m + 4 * l.n);

    // constraint rows and their transpose in the stationarity rows
    for &(r, c, v) in &cons.jac {
        t.push(kcl + r, c, v);
        t.push(c, lam.start + r, v);
        residual[c] += v * z[lam.start + r];
    }
    residual[kcl..kcl + l.x_len()].copy_from_slice(&cons.h);

    // dual-weighted load curvature
    let circuit = problem.circuit();
    let n = l.n;
    for (k, s) in circuit.loads.iter().enumerate() {
        if *s == Complex64::default() {
            continue;
        }
        let (a, b) = (z[k], z[n + k]);
        let cv = curvature_unchecked(a, b, s.re, s.im);
        let (lr, li) = (z[lam.start + k], z[lam.start + n + k]);
        let aa = lr * cv.re[0] + li * cv.im[0];
        let ab = lr * cv.re[1] + li * cv.im[1];
        let bb = lr * cv.re[2] + li * cv.im[2];
        t.push(k, k, aa);
        t.push(k, n + k, ab);
        t.push(n + k, k, ab);
        t.push(n + k, n + k, bb);
    }

    match l.formulation {
        Formulation::LeastSquares => {
            for c in 0..2 {
                let block = l.infeas_block(c);
                for i in block {
                    t.push(i, i, 1.0);
                    residual[i] += z[i];
                }
            }
        }
        Formulation::L1 => {
            for c in 0..4 {
                let block = l.infeas_block(c);
                let mu = l.mu_block(c);
                for slot in 0..l.m {
                    let (i, m) = (block.start + slot, mu.start + slot);
                    // 1 + ∂h/∂i · λ − μ
                    residual[i] += 1.0 - z[m];
                    t.push(i, m, -1.0);
                    // μ i − ε
                    residual[m] = z[m] * z[i] - epsilon;
                    t.push(m, i, z[m]);
                    t.push(m, m, z[i]);
                }
            }
        }
        Formulation::PowerFlow => unreachable!(),
    }

    Ok(reduce(&t.to_csc(), residual, l, problem.names()))
}
