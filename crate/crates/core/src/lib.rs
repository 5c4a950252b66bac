//! Time-periodic TE breathers in layered media with a retarded Kerr response.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod dual;
pub mod error;
pub mod grid;
pub mod material;
pub mod operator;
pub mod output;
pub mod pipeline;
pub mod reconstruct;
pub mod spectrum;
pub mod tridiag;

pub use error::{Error, Result};
