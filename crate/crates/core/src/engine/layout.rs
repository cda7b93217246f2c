use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Which system the engine solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Plain three-phase power flow.
    PowerFlow,
    /// Minimum ½‖i_f‖² subject to KCL.
    LeastSquares,
    /// Minimum ‖i_f‖₁ with split nonnegative sources.
    L1,
}

impl Formulation {
    pub fn short_name(self) -> &'static str {
        match self {
            Formulation::PowerFlow => "tpf",
            Formulation::LeastSquares => "l2",
            Formulation::L1 => "l1",
        }
    }
}

/// Position of every unknown in the packed Newton vector.
///
/// Blocks, in order: `V_R (n)`, `V_I (n)`, slack source currents `(s, s)`,
/// then for the optimization formulations the infeasibility sources
/// (`2m` signed or `4m` split), equality duals `(n, n, s, s)` and, for L1,
/// the inequality duals `(4m)`. Equations use the same block order, so the
/// Jacobian is square with row `i` paired to unknown `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarLayout {
    pub formulation: Formulation,
    /// Node-phases.
    pub n: usize,
    /// Slack node-phases.
    pub s: usize,
    /// Node-phases carrying infeasibility sources.
    pub m: usize,
}

/// Split-source component order used by every L1 block.
pub const SPLIT_COMPONENTS: [&str; 4] = ["R+", "R-", "I+", "I-"];

impl VarLayout {
    pub fn new(formulation: Formulation, n: usize, s: usize, m: usize) -> VarLayout {
        let m = if formulation == Formulation::PowerFlow { 0 } else { m };
        VarLayout { formulation, n, s, m }
    }

    pub fn v_re(&self) -> Range<usize> {
        0..self.n
    }

    pub fn v_im(&self) -> Range<usize> {
        self.n..2 * self.n
    }

    pub fn source_re(&self) -> Range<usize> {
        2 * self.n..2 * self.n + self.s
    }

    pub fn source_im(&self) -> Range<usize> {
        2 * self.n + self.s..self.x_len()
    }

    /// Length of the power-flow unknown block `X`.
    pub fn x_len(&self) -> usize {
        2 * self.n + 2 * self.s
    }

    pub fn infeas_count(&self) -> usize {
        match self.formulation {
            Formulation::PowerFlow => 0,
            Formulation::LeastSquares => 2 * self.m,
            Formulation::L1 => 4 * self.m,
        }
    }

    pub fn infeas(&self) -> Range<usize> {
        self.x_len()..self.x_len() + self.infeas_count()
    }

    /// Block `c` of the infeasibility sources: (R, I) for least squares,
    /// [`SPLIT_COMPONENTS`] order for L1.
    pub fn infeas_block(&self, c: usize) -> Range<usize> {
        let start = self.x_len() + c * self.m;
        start..start + self.m
    }

    pub fn has_duals(&self) -> bool {
        self.formulation != Formulation::PowerFlow
    }

    /// Equality duals, one per KCL and slack-source row.
    pub fn lambda(&self) -> Range<usize> {
        if !self.has_duals() {
            return 0..0;
        }
        let start = self.infeas().end;
        start..start + self.x_len()
    }

    pub fn lambda_re(&self) -> Range<usize> {
        let s = self.lambda().start;
        s..s + self.n
    }

    pub fn lambda_im(&self) -> Range<usize> {
        let s = self.lambda().start + self.n;
        s..s + self.n
    }

    pub fn mu(&self) -> Range<usize> {
        if self.formulation != Formulation::L1 {
            let e = self.lambda().end;
            return e..e;
        }
        let start = self.lambda().end;
        start..start + 4 * self.m
    }

    pub fn mu_block(&self, c: usize) -> Range<usize> {
        let start = self.mu().start + c * self.m;
        start..start + self.m
    }

    pub fn len(&self) -> usize {
        match self.formulation {
            Formulation::PowerFlow => self.x_len(),
            _ => self.mu().end,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offset of the KCL/source rows inside the equation vector.
    pub fn kcl_offset(&self) -> usize {
        match self.formulation {
            Formulation::PowerFlow => 0,
            _ => self.lambda().start,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_tile_the_vector() {
        for f in [Formulation::PowerFlow, Formulation::LeastSquares, Formulation::L1] {
            let l = VarLayout::new(f, 7, 3, 4);
            let mut blocks = vec![l.v_re(), l.v_im(), l.source_re(), l.source_im(), l.infeas(), l.lambda(), l.mu()];
            blocks.retain(|r| !r.is_empty());
            let mut next = 0;
            for r in blocks {
                assert_eq!(r.start, next);
                next = r.end;
            }
            assert_eq!(next, l.len());
        }
        let l = VarLayout::new(Formulation::L1, 7, 3, 4);
        assert_eq!(l.len(), 2 * (14 + 6) + 32);
        assert_eq!(l.infeas_block(3).end, l.infeas().end);
        assert_eq!(l.mu_block(3).end, l.len());
    }
}
