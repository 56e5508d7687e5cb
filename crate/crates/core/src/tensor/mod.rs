//! Tensor fields on chart atlases and the operations on them: evaluation with
//! exact partial derivatives, Lie derivatives, pull-backs and contractions.

mod field;
mod library;
mod lie;

pub use field::{
    invert_jets, transform_jets, Declared, Differential, FieldError, FieldRef, FnField, JetFn, LocalJet, MapFn,
    Pairing, Product, ProfiledField, PulledBack, TensorField, TensorJet, TimeProfile, C_INF,
};
pub use library::{build_field, sphere_height, sphere_point, sphere_rotation, FieldDecl, FieldInfo, CATALOG};
pub use lie::{directional_derivative, lie_derivative, lie_derivative_fd, lie_jet, value_and_jacobian, LieDerivative};
