//! Minimal dense linear algebra plus hand-derived backward passes for the
//! exact layer set the models need. No general autodiff: every gradient in
//! the crate is written out analytically and checked against central finite
//! differences in the tests.
//!
//! All math is 64-bit. A layer instance must not be shared across threads
//! while its cache is in use; distinct instances are independent.

mod gradcheck;
mod loss;
mod lstm;
mod matrix;
mod ops;

pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use loss::{cross_entropy_tied_softmax, sigmoid_mse, tied_softmax_losses, SoftmaxStep};
pub use lstm::{InferStep, LstmGrads, LstmLayer};
pub use matrix::Matrix;
pub use ops::{log_sum_exp, sigmoid, tanh};
