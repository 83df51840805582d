//! Granular contact dynamics with complementarity constraints.
//!
//! Spheres interact through rigid, optionally frictional contacts. Each
//! timestep assembles a linear complementarity problem in the contact
//! impulses and solves it with a minimum-map Newton method, whose inner
//! linear systems go either to a direct LU solve or to a variational
//! neural linear solver (a complex RBM trained by stochastic
//! reconfiguration). A Pauli-string analyzer reports how many terms those
//! systems need when written as sums of tensor products of Pauli matrices.

pub mod cli;
pub mod config;
pub mod contact;
pub mod error;
pub mod io;
pub mod lcp;
pub mod linsys;
pub mod pauli;
pub mod sim;
pub mod smoothing;
pub mod state;
pub mod vnls;

pub use config::{Container, SimConfig, SolverKind};
pub use error::{Error, Result};
