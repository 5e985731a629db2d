//! Sparse linear algebra used by the QP solvers.

mod ldl;
mod ordering;
mod sparse;

pub use ldl::EnvelopeLdl;
pub use ordering::reverse_cuthill_mckee;
pub use sparse::{dot, norm_inf, SparseMatrix};
