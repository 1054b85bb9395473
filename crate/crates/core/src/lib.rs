//! Numerical laboratory for boundary differentiability of solutions in the
//! Pucci class: exact Pucci operators, moduli of continuity, parametric
//! planar domains, radial barriers, a monotone wide-stencil solver, a
//! boundary squeeze probe and the dyadic recurrence ledgers behind it.

pub mod barriers;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod ledger;
pub mod literal;
pub mod moduli;
pub mod probe;
pub mod pucci;
pub mod scenario;
mod quad;
pub mod solver;

pub use error::{LabError, Result};
