//! Convex log-sum-exp networks for recovering risk-neutral densities from
//! sparse option quotes.
//!
//! The crate builds up from numerically stable scalar primitives ([`lse`])
//! to the network itself ([`net`]), its max-affine bound machinery
//! ([`maxaffine`]), Black-Scholes pricing and implied-volatility inversion
//! ([`pricing`]), Monte Carlo market simulators ([`market`]), the two-phase
//! transfer-learning trainer ([`training`]), density extraction and
//! baselines ([`rnd`]), and an end-to-end experiment pipeline
//! ([`pipeline`]).

// `!(v > 0.0)` is deliberate in the validators: it rejects NaN along with
// the out-of-range values, which `v <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Row-major matrix access indexes by design.
#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod error;
pub mod lse;
pub mod market;
pub mod maxaffine;
pub mod net;
pub mod pipeline;
pub mod pricing;
pub mod rnd;
pub mod training;

pub use error::{Error, Result};
pub use net::{DeepLseNet, LayerCaps, SieveBox};
