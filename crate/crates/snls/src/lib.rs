//! Numerical laboratory for multi-solitons of the one-dimensional stochastic
//! mass-supercritical nonlinear Schrödinger equation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod krylov;
pub mod ground_state;
pub mod linearized;
pub mod noise;
pub mod modulation;
pub mod solver;
pub mod diagnostics;
pub mod construction;
pub mod io;
pub mod config;
pub mod acceptance;
pub mod cli;

pub use error::{Error, Result};
pub use grid::{Field, Grid, NormKind, C64};
