//! Flow-level optimizer for joint forwarding and computation offloading of
//! service-chain applications on multi-hop networks with congestion-dependent
//! link and CPU costs.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`] holds the network graph, applications, the forwarding/offloading
//!   strategy and the traffic solver.
//! * [`cost`] holds the convex link/CPU cost functions and the aggregate cost.
//! * [`marginal`] computes marginal costs, both centrally and through a
//!   simulated round-synchronous broadcast.
//! * [`optimality`] checks the KKT and the traffic-free sufficiency conditions.
//! * [`gp`] is the distributed gradient-projection optimizer.
//! * [`baselines`] has the comparison heuristics and a Frank-Wolfe oracle that
//!   works in flow space.
//! * [`scenarios`] and [`harness`] generate instances and run experiments.

pub mod baselines;
pub mod cost;
pub mod error;
pub mod gp;
pub mod harness;
pub mod layered;
pub mod marginal;
pub mod model;
pub mod optimality;
pub mod par;
pub mod scenarios;

pub use cost::{total_cost, CostFn, CostModel};
pub use error::{Error, Result};
pub use model::{
    initial_strategy, solve_traffic, validate_strategy, Application, Dir, FlowState, Instance,
    NetworkGraph, Stage, Strategy, EPS_PHI,
};
pub use par::Exec;
