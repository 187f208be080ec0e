//! Sequential mode estimation with anytime-valid stopping rules.
//!
//! The crate is layered bottom-up: [`numerics`] kernels feed the
//! [`bounds`] engines, which the [`stopping`] rules consume. [`elections`]
//! and [`blockchain`] are application simulators built on those rules, and
//! [`harness`] runs replicated experiments. [`theory`] holds closed-form
//! sample-complexity calculators and numeric verifiers.

pub mod blockchain;
pub mod bounds;
pub mod elections;
pub mod harness;
pub mod instances;
pub mod numerics;
pub mod stopping;
pub mod theory;
