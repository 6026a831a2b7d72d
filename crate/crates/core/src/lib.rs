//! Wallet-level anti-money-laundering analytics over USDT/USDC transfer logs.
//!
//! The pipeline runs ingest → graph → features → learners → eval → explain.
//! [`synth`] generates labeled corpora with planted laundering typologies so
//! every stage can be exercised without external data.

pub mod eval;
pub mod explain;
pub mod features;
pub mod gnn;
pub mod graph;
pub mod ingest;
pub mod learners;
pub mod rng;
pub mod synth;

pub use ingest::{Address, EventLog, TransferEvent};
