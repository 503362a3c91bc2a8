//! Deterministic simulator and library for Byzantine-resilient
//! decentralized stochastic gradient descent.
//!
//! Nodes exchange model estimates over a random undirected graph and fold
//! their neighbors' broadcasts into a general update
//! `x' = alpha * x + (1 - alpha) * R(neighbors) - lambda * grad`, where the
//! aggregation rule `R` is one of: plain averaging, DKrum, marginal median,
//! DBulyan, BRIDGE-style trimmed mean, or the two-stage UBAR rule that
//! first distance-filters neighbors against the node's own estimate and
//! then loss-tests the survivors on the node's own batch.
//!
//! The [`adversary`] module implements Byzantine broadcast behaviors
//! (Gaussian noise, bit-flip, camouflage, and an amplified single-shot
//! injection that lands an exact shift on a node several hops away under
//! the averaging rule). The [`simulator`] module drives the synchronous
//! training loop and collects worst/mean benign accuracy and per-phase
//! wall time.
//!
//! Everything is reproducible: all randomness flows from one root seed
//! through per-node ChaCha streams, so repeat runs are bit-identical.

pub mod adversary;
pub mod aggregation;
pub mod error;
pub mod model;
pub mod simulator;
pub mod topology;

pub use error::{Error, Result};
pub use model::EstimateVector;
pub use topology::Topology;
