//! Dense linear algebra, activations, seeded random streams and a
//! finite-difference gradient oracle.

mod gradcheck;
mod matrix;
mod rng;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::{gemv, gemv_acc, gemv_t_acc, outer_acc, relu, sigmoid, Activation, Matrix};
pub use rng::{stream_id, Purpose, RngStream};
