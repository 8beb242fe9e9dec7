//! Hierarchical genetic algorithms: a generic GA engine, a TSP solver, a
//! soft-TSP meta-solver that picks vertex subsets, and a regression
//! meta-solver that tunes objective hyperparameters against a black-box
//! oracle. Exact reference solvers live in [`exact`].

pub mod error;
pub mod exact;
pub mod ga;
pub mod regression;
pub mod regression_meta;
pub mod rng;
pub mod soft_tsp;
pub mod tsp;

pub use error::{Error, Result};
pub use exact::{exact_soft_tsp, exact_tsp_path, least_squares_fit, OracleLimit};
pub use ga::{
    Evaluation, GaConfig, GenerationStats, GenomeOps, History, Individual, Population, SelectionKind,
    SelectionSpec,
};
pub use regression::{
    composite_objective, huber_loss, mae_loss, mse_loss, quantile_loss, run_regression_solver, weighted_loss,
    Dataset, LossKind, LossParams, PolynomialModel, RegionWeight, WeightRegion,
};
pub use regression_meta::{
    oracle_cost, run_regression_hierarchy, CostOracle, HyperGenome, OracleKind, OracleSpec, RegMetaRow,
    RegressionOutcome,
};
pub use rng::{derive_stream, GaRng};
pub use soft_tsp::{
    constraint_switch_experiment, run_adaptive, run_hierarchical, soft_cost, HierConfig, MetaHistory, MetaRow,
    PenaltyMap, SoftTspOutcome, SwitchReport,
};
pub use tsp::{greedy_two_approx, path_cost, run_tsp_solver, EuclideanInstance, Tour};
