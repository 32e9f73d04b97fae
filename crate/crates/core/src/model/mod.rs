//! Network, applications, strategies and the traffic solver.

mod app;
mod flow;
mod graph;
mod init;
mod instance;
mod strategy;

pub use app::{Application, Stage};
pub use flow::{solve_traffic, solve_traffic_with, FlowState};
pub use graph::NetworkGraph;
pub use init::{initial_strategy, initial_strategy_masked, tree_strategy};
pub use instance::{Instance, InstanceBuilder, InstanceFile};
pub use strategy::{
    stage_topo_order, validate_strategy, Dir, DirectionMask, RowRef, RowSumIssue, Strategy,
    ValidationReport, EPS_PHI, ROW_SUM_TOL,
};
