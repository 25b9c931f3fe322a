//! Smooth fields over ℝⁿ and exact derivatives through Taylor-mode
//! arithmetic.
//!
//! Lie derivatives along the drift are read off the Taylor coefficients of
//! η(x(t)) where x(t) is the drift flow: L_f^k η(x) = k! [tᵏ] η(x(t)).
//! Seeding the initial state with [`Dual`] numbers yields gradients of those
//! quantities, from which L_g L_f^k η follows.

mod dual;
mod expr;
mod field;
mod jet;
mod lie;
mod scalar;

pub use dual::Dual;
pub use expr::{dot, sum, Expr};
pub use field::{flow_series, ScalarField, VectorFieldPair};
pub use jet::Jet;
pub use lie::{finite_diff_grad, grad, lie_f, lie_f_grad, lie_g_of};
pub(crate) use lie::row_times_g;
pub use scalar::Scalar;

#[cfg(test)]
mod tests;
