//! Hausdorff functionals, moment-based KP-cone recovery and the
//! cone-projection parametrization for discrete measures in R⁴.

// `!(r > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod geom;
pub mod hausdorff;
pub mod index;
pub mod io;
pub mod kpcone;
pub mod measure;
pub mod moments;
pub mod optim;
pub mod parametrize;
pub mod planes;
pub mod rates;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
pub use geom::Point;
