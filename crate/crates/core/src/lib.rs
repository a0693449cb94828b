//! Simulation and analysis of remote state preparation of polarization
//! qubits: an entangled photon pair, a trigger arm of wave plates and a
//! partial polarizer, tomography of the conditional state, and bounds on
//! which states a two-qubit resource can prepare remotely.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod optics;
pub mod qstate;
pub mod rsp;
pub mod simplex;
pub mod tomo;

pub use error::{Result, RspError};
