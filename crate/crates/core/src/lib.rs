//! Allocation, pricing equilibria and bargaining mechanisms for two-hop
//! parallel relay networks with privately informed relays.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bargaining;
pub mod efficiency;
pub mod error;
pub mod model;
pub mod numeric;
pub mod pricing;
pub mod social;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    cost_eval, marginal_eval, sample_types, Allocation, CostFamily, CostModel, Outcome, PriceTable, PricingStrategy,
    Relay, Scenario, SourceModel, TypeDistribution,
};
