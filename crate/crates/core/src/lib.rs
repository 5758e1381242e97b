//! Exchange value of ramified transport networks.
//!
//! An [`economy::Economy`] fixes goods at source locations and consumers with
//! prices, wealth and utilities. Demand yields a reference plan `q_bar`; a
//! [`transport_graph::TransportPath`] compatible with it admits every plan that
//! routes the same mass over each edge. The exchange value is the largest gain
//! in total expenditure over those plans that keeps every consumer as well off,
//! and [`h_optimizer`] trades it against the branched transport cost
//! `sum w(e)^alpha * length(e)`.

// Negated float comparisons are deliberate: they treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod economy;
pub mod error;
pub mod exchange_value;
pub mod h_optimizer;
pub mod io;
mod linalg;
pub mod plan_polytope;
pub mod tolerance;
pub mod transport_graph;

pub use economy::{expenditure, Consumer, DemandProfile, Economy, Good, QuantityTransform, UtilityFn};
pub use error::{Error, Result};
pub use exchange_value::{
    all_criteria, criterion_collinear_prices, criterion_disjoint_routes, criterion_positive,
    criterion_quantity_only, exchange_value, total_expenditure, uniqueness_probe, valuate, Conclusion,
    CriterionReport, Uniqueness, ValuationResult,
};
pub use h_optimizer::{
    enumerate_topologies, evaluate_family, h_cost, instantiate, optimize_geometry, optimize_h, sigma_sweep,
    CandidateResult, GeometryResult, HResult, TopologyCandidate, TopologyTemplate,
};
pub use io::{emit_economy, emit_graph, emit_plan, export_dot, parse_economy, parse_graph, parse_plan};
pub use plan_polytope::{
    build_constraints, compatibility_check, interior_point_test, polytope_dimension_formula,
    polytope_dimension_rank, vertices, ConstraintSystem, TransportPlan,
};
pub use tolerance::Tolerances;
pub use transport_graph::{hub_path, AtomicMeasure, RouteMatrix, Signature, TransportPath};
