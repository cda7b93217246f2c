//! Sparse storage, sparse LU and the small dense complex inverse used at ingest.

mod dense;
mod lu;
mod sparse;

pub use dense::{invert_complex, SingularMatrix};
pub use lu::{LinearSolveError, SparseLu};
pub use sparse::{CscMatrix, Triplets};
