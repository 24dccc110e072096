//! Numerics for rescaled Hitchin equations: special functions, radial
//! sinh-Gordon profiles, model fields near zeros and poles, glued metrics,
//! the four-punctured-sphere toy model and the LeBrun reduction on its end.

// `!(x > 0.0)` is used on purpose so NaN fails validation; index loops
// mirror the stencils.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fiducial;
pub mod glue;
pub mod io;
pub mod lebrun;
pub mod painleve;
mod quad;
pub mod specfun;
pub mod toymodel;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
