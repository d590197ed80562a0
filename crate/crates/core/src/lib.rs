//! Nash equilibria of two-player general-sum discounted stochastic games.
//!
//! The equilibria are the zero-objective global minima of a nonlinear program
//! over values and stationary strategies. [`solver::solve`] minimizes it with
//! a feasible-direction interior method; [`diagnostics`] checks the result
//! independently.

pub mod error;
pub mod game;
pub mod ldl;
pub mod nlp;
pub mod sparse;
pub mod terrain;
pub mod simplex;
pub mod init;
pub mod direction;
pub mod step;
pub mod solver;
pub mod diagnostics;
pub mod random;

pub use error::{Error, Result};
