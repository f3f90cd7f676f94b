#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod benchmark;
pub mod cache;
pub mod cli;
pub mod data;
pub mod eigen;
pub mod error;
pub mod exec;
pub mod full_gp;
pub mod grid;
mod linalg;
pub mod optim;
pub mod quadrature;
pub mod regression;
pub mod skyline;
pub mod spectral;
pub mod stencil;
pub mod variational;

pub use error::{Error, Result};
pub use exec::Execution;
