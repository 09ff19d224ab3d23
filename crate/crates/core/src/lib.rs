// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assembly;
pub mod cli_io;
pub mod domain;
pub mod error;
pub mod flux;
pub mod freeboundary;
pub mod linalg;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
