//! Asymptotic-preserving multiple-input neural operators for kinetic
//! equations in the high-field regime, with classical reference solvers.

pub mod cli;
pub mod diffcore;
pub mod kinetics;
pub mod networks;
pub mod refsolver;
pub mod residuals;
pub mod training;
