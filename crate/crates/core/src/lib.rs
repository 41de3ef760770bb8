//! Simulation and certification of continuous-variable amplifiers acting on
//! Gaussian ensembles of coherent states.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channels;
pub mod ensemble;
pub mod epr;
pub mod error;
pub mod figures;
pub mod fock;
pub mod gaussian;
pub mod nla;
pub mod numeric;
pub mod verify;

pub use error::{Error, Result};
