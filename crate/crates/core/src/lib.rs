//! Ambiguity-robust central limit theorems: closed-form limits, a
//! g-expectation PDE solver, exact worst-case dynamic programming and
//! robust hypothesis tests.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod brute_force;
pub mod cli;
pub mod closed_form;
pub mod error;
pub mod exact;
pub mod hypothesis;
pub mod measures;
pub mod pde;
pub mod quadrature;
pub mod statistics;
pub mod terminal;
pub mod worst_case;

pub use error::{Error, Result};
