//! Adaptive iteratively regularized Gauss-Newton method for parameter
//! identification in 1D elliptic problems, with goal-oriented error
//! estimation driving mesh refinement.

// NaN must fail every range check, and index loops read better in the kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod benchmarks;
pub mod dwr;
pub mod error;
pub mod fem;
pub mod gnstep;
pub mod irgnm;
pub mod linalg;
pub mod mesh;
pub mod misfit;
pub mod oracle;
pub mod par;
pub mod problem;
pub mod regparam;
pub mod report;
pub mod studies;

pub use error::{Error, Result};
