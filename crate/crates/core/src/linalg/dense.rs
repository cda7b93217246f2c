use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
#[error("matrix is singular (pivot {pivot:.3e} at step {step})")]
pub struct SingularMatrix {
    pub step: usize,
    pub pivot: f64,
}

/// Gauss–Jordan inverse with partial pivoting for small complex matrices.
///
/// A pivot below `1e-12 · max|a_ij|` is treated as singular.
pub fn invert_complex(a: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>, SingularMatrix> {
    let n = a.len();
    let scale = a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = 1e-12 * scale;
    let mut m: Vec<Vec<Complex64>> = a.to_vec();
    let mut inv: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Complex64::new(1.0, 0.0) } else { Complex64::default() })
                .collect()
        })
        .collect();

    for col in 0..n {
        let (piv_row, piv_abs) = (col..n)
            .map(|r| (r, m[r][col].norm()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if !(piv_abs > tol) {
            return Err(SingularMatrix {
                step: col,
                pivot: piv_abs,
            });
        }
        m.swap(col, piv_row);
        inv.swap(col, piv_row);
        let p = m[col][col];
        for j in 0..n {
            m[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != Complex64::default() {
                    for j in 0..n {
                        let mc = m[col][j];
                        let ic = inv[col][j];
                        m[r][j] -= f * mc;
                        inv[r][j] -= f * ic;
                    }
                }
            }
        }
    }
    Ok(inv)
}
