//! Planning, cost modeling and SM-level simulation of multi-GPU GNN neighbor
//! aggregation with intra-kernel communication/computation pipelining.
//!
//! The pieces compose in this order:
//!
//! 1. [`graph`] loads or generates a [`CsrGraph`](graph::CsrGraph).
//! 2. [`placement`] splits target nodes into edge-balanced per-GPU chunks and
//!    decides which GPU stores each node embedding.
//! 3. [`workload`] separates every chunk into local and remote neighbor lists,
//!    cuts them into fixed-size partitions and maps those onto warps and blocks.
//! 4. [`costmodel`] holds the analytical model and the hardware profiles.
//! 5. [`sim`] executes launch plans on modeled SMs.
//! 6. [`tuner`] searches `(ps, dist, wpb)` against a latency callback.

pub mod costmodel;
pub mod error;
pub mod graph;
pub mod placement;
pub mod sim;
pub mod tuner;
pub mod workload;

pub use error::{Error, Result};
