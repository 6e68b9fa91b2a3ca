//! Solvers for long sequences of generalized least-squares problems that
//! share a single covariance matrix and a fixed block of predictors.
//!
//! The crate is organized in four layers:
//!
//! * [`kernels`]: column-major matrix containers and the dense linear
//!   algebra kernels, each of which records an analytic flop count.
//! * [`solvers`]: the solver ladder, from a naive per-problem baseline to
//!   the shared-factorization engine, plus the explicit-inverse baseline
//!   and the analytic cost model.
//! * [`storage`]: the binary dataset formats and the seeded generator.
//! * [`streaming`]: out-of-core execution over block plans, with a
//!   synchronous variant and a double-buffered asynchronous variant.

pub mod kernels;
pub mod solvers;
pub mod storage;
pub mod streaming;

#[cfg(test)]
pub(crate) mod testkit;
