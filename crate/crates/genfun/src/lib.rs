//! Numerical toolkit for generating functions `g(x, y, z)`: the implicit
//! maps they induce, the A1/A1*/A2/A3w/A3s conditions, dual generating
//! functions, g-segments and sections, and g-convexity of sampled functions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod conditions;
pub mod duality;
pub mod error;
pub mod gconvex;
pub mod genfun;
pub mod geometry;
pub mod hull;
pub mod implicit;
pub mod numerics;
pub mod report;

pub use catalog::{build, build_with, Registry};
pub use error::{Error, Result};
pub use genfun::{
    eval_jet, BoxDomain, FiberPoint, GJet, Gamma, GeneratingFunction, JetPoint, Partials, SharedGf,
};
pub use numerics::{Matrix, Tolerances, Vector};
pub use report::{ConditionReport, Verdict, Witness};
