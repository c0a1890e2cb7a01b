//! Optimal posted-price mechanisms for online resource allocation with
//! zero, linear, or strictly convex supply cost.
//!
//! The usual flow is [`Setup::classify`] → [`bvp::solve_optimal`] →
//! [`pricing::build_optimal`] → [`mechanism::run`] →
//! [`mechanism::certificate`], with [`offline`] and [`adversary`] providing
//! benchmarks and test instances.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod bvp;
pub mod cost_model;
pub mod error;
pub mod mechanism;
pub mod numeric;
pub mod offline;
pub mod pricing;
pub mod report;

pub use bvp::{solve_optimal, IvpSolution, OptimalParams};
pub use cost_model::{CostModel, Setup, SetupCase};
pub use error::{Error, Result};
pub use mechanism::{Agent, CertificateReport, MechanismTrace, MultiAgent, StepRecord};
pub use offline::{OfflineKind, OfflineResult};
pub use pricing::{build_optimal, Price, PricingFunction, Segment};
