//! Two-phase selection of pre-trained models over a trainer abstraction.
//!
//! Phase one (coarse recall) clusters models by their benchmark performance
//! vectors, scores only the cluster representatives with a transferability
//! proxy, and recalls the top K candidates. Phase two (fine selection) runs
//! staged fine-tuning with successive halving plus a convergence-trend
//! filter that eliminates models whose predicted final performance is
//! dominated. Every training epoch is accounted in an auditable ledger so
//! the method can be compared against brute force and plain halving.

pub mod cluster;
pub mod error;
pub mod leep;
pub mod pipeline;
pub mod recall;
pub mod repo;
pub mod select;
pub mod similarity;
pub mod synth;
pub mod trend;

pub use error::{Error, Result};
