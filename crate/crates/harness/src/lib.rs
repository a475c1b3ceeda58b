//! Configuration, orchestration, persistence and acceptance suites.

// Negated comparisons reject NaN; index loops mirror the grid formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod expr;
pub mod manifest;
pub mod oracle;
pub mod runs;
pub mod suites;
pub mod svg;
