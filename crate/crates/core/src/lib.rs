//! Mean packet delay in lightly loaded single-hop 802.11 DCF networks.
//!
//! * [`mac`] solves the saturation fixed point and the throughput curve
//!   `S(n)`, whose plateau gives the capacity `C`.
//! * [`delay`] turns `C` and per-node Poisson rates into mean-delay
//!   predictions by decoupling the queues into M/M/1 queues.
//! * [`sim`] is a slot-level DCF simulator used to check those predictions.
//! * [`experiment`] replicates simulations, builds confidence intervals and
//!   writes comparison tables as CSV.

// NaN must fail validation, so `!(x > 0.0)` is deliberate
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bisect;
pub mod delay;
pub mod error;
pub mod experiment;
pub mod mac;
pub mod params;
pub mod sim;
pub mod stats;

pub use delay::{DelayReport, TrafficSpec};
pub use error::{Error, Result};
pub use mac::SlotModel;
pub use params::MacPhyParams;
pub use sim::{run_simulation, SimConfig, SimMetrics};
