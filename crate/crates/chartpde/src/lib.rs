//! Chart-based Riemannian geometry and elliptic PDE toolkit.
//!
//! Solves semilinear problems Δu + f(u) = 0 with nonlinear Robin data
//! ∂νu + h(u) = 0 on logically rectangular metric charts, decides
//! stability of solutions through the second-variation quadratic form,
//! and numerically verifies the geometric identities and inequalities
//! (Bochner, boundary splitting, Poincaré-type) that enter the rigidity
//! classification of stable solutions.

pub mod boundary;
pub mod cli;
pub mod disc;
pub mod solver;
pub mod stability;
pub mod verify;
pub mod expr;
pub mod geometry;
pub mod linalg;

pub use expr::{Expr, ParseError};
