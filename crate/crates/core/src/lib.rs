//! Branch-and-price for stochastic team formation and routing, with
//! pluggable partial-pricing strategies including a graph-neural-network
//! predictor of negative pricing problems.

pub mod bnp;
pub mod distrib;
pub mod featgraph;
pub mod gnn;
pub mod instgen;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod pcg;
pub mod pricing;
pub mod rmp;
