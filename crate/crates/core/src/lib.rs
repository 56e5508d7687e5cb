//! Verification toolkit for tensor-valued Itô-Wentzell formulas.
//!
//! The crate integrates stochastic flows of diffeomorphisms on chart atlases
//! together with their Jacobians, evaluates pull-backs and push-forwards of
//! time-dependent random tensor fields along them, and measures how fast the
//! discrete residual of each formula vanishes as the time grid is refined.

#![allow(clippy::needless_range_loop)]

pub mod flow;
pub mod geometry;
pub mod jet;
pub mod registry;
pub mod run;
pub mod stochastics;
pub mod tensor;
pub mod verifier;
