//! Finite element solvers for the two-dimensional order-one Oldroyd model
//! of viscoelastic flow, including a two-level scheme that solves the
//! nonlinear problem on a coarse mesh and a linearized problem on a
//! nested fine mesh.

pub mod assembly;
pub mod error;
pub mod fespace;
pub mod memory;
pub mod mesh;
pub mod quadrature;
pub mod solver;
pub mod sparse;
pub mod stepping;
pub mod twolevel;
pub mod verify;

pub use error::{Error, Result};
pub use fespace::{ElementKind, FeSpace};
pub use memory::{KernelRule, KernelState, OldroydParams};
pub use mesh::{Mesh, Point};
