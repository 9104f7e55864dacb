//! Bundled Sioux Falls case-study data.
//!
//! Network and demand come from the published Sioux Falls test instance
//! (24 nodes, 76 links; 16 OD pairs over origins {1,2,3,13} and
//! destinations {6,7,18,20}). Fortification costs are not part of the
//! published data; [`default_fortification`] ships a uniform cost of 1
//! per node, which callers can override.

use crate::network::{load_demand, parse_tntp, DemandTable, FortificationParams, Network};

pub const SIOUX_FALLS_NET_TNTP: &str = include_str!("../data/siouxfalls_net.tntp");
pub const SIOUX_FALLS_DEMAND_CSV: &str = include_str!("../data/siouxfalls_demand.csv");
/// Published K=10 route lists per OD pair, as `{"(o,d)": [[[tail,head],...],...]}`.
pub const REFERENCE_ROUTES_JSON: &str = include_str!("../data/reference_routes.json");

/// The published table scales demand by 100.
pub const DEFAULT_DEMAND_MULTIPLIER: f64 = 100.0;

pub fn sioux_falls_network() -> Network {
    parse_tntp(SIOUX_FALLS_NET_TNTP).expect("bundled Sioux Falls network parses")
}

pub fn sioux_falls_demand(scale_multiplier: f64) -> DemandTable {
    load_demand(SIOUX_FALLS_DEMAND_CSV, scale_multiplier).expect("bundled demand parses")
}

/// Uniform unit fortification cost, budget of 4 nodes (the reference runs
/// fortify 4 nodes). Not part of the published dataset.
pub fn default_fortification(network: &Network) -> FortificationParams {
    FortificationParams::uniform(network, 1.0, 4)
}
