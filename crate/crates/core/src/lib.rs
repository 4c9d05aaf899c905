//! Maximal regularity operators for analytic semigroups on `C^d`.
//!
//! The crate realizes the forward and backward maximal regularity operators
//!
//! ```text
//! M+ f(t) = int_0^t   A e^{-(t-s)A} f(s) ds,     M- f(t) = int_t^inf A e^{-(s-t)A} f(s) ds
//! ```
//!
//! for sectorial matrices `A`, together with the square-function norms,
//! sweeping (balayage) functionals and weighted `L^2(t^alpha dt; H)` norms
//! needed to check evolution and balayage identities numerically.
//!
//! * [`operator`] sectorial matrices and `e^{-tA}`
//! * [`grid`] log-uniform time grids, weighted norms, grid functions
//! * [`symbol`] sampled families such as `(tA)^n e^{-tA} h`
//! * [`maxreg`] direct and `O(N)` evaluation of `M+`/`M-`, adjoints, norm estimates
//! * [`squarefn`] square-function norms and best quadratic constants
//! * [`balayage`] sweeping integrals and hypothesis certificates
//! * [`verify`] identity checks and reports
//! * [`config`] run configuration and the operator zoo

// Parameter checks use `!(x < y)` so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balayage;
pub mod config;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod maxreg;
pub mod operator;
pub mod squarefn;
pub mod symbol;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{GridFunction, TimeGrid, WeightExponent};
pub use operator::{HVector, OperatorKind, SectorialOperator};
pub use symbol::Symbol;
