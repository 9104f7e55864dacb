//! Node-vulnerability analysis and stochastic fortification planning for
//! directed transportation networks.
//!
//! The pipeline: ingest a TNTP network and an OD demand table
//! ([`network`]), enumerate K-shortest loopless routes per OD pair
//! ([`kshortest`]), score node vulnerability with 27 local measures
//! ([`measures`]), derive disruption scenarios ([`scenario`]), build
//! risk-neutral / risk-averse / hybrid fortification MILPs with
//! piecewise-linearized BPR congestion ([`pla`], [`milp`], [`models`]),
//! and solve them through an external solver subprocess ([`solver`]).

pub mod fixtures;
pub mod kshortest;
pub mod measures;
pub mod milp;
pub mod models;
pub mod network;
pub mod pla;
pub mod scenario;
pub mod solver;

pub use network::{DemandTable, FortificationParams, Link, Network, NodeId};
