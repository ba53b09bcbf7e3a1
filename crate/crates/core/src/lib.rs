//! Lagrangian fluid-structure interaction: a viscous incompressible fluid
//! coupled to a St. Venant-Kirchhoff solid on a fixed reference mesh, with
//! artificial viscosity in the solid, penalized incompressibility and a
//! harness of desk-scale verification experiments.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::assign_op_pattern)]

pub mod compat;
pub mod config;
pub mod error;
pub mod experiments;
pub mod field;
pub mod kinematics;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod output;
pub mod presets;
pub mod scalar;
pub mod stepper;
pub mod verify;

pub use error::{FsiError, Result};
