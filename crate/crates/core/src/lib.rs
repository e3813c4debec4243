#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod derivative;
pub mod drift;
pub mod error;
pub mod field;
pub mod functional;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod kato;
pub mod kernel;
pub mod measure;
pub mod mollifier;
pub mod quadrature;
pub mod rng;
pub mod scenario;
pub mod sde;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
