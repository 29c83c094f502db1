//! Paired downlink/uplink training design for joint communication and
//! sensing: the downlink sequence `X` doubles as a radar probe, so it must be
//! impulse-like and uncorrelated with the uplink sequence `Y` over a zone of
//! `k` lags, while both keep the channel MSE low.

pub mod designer;
pub mod matio;
pub mod model;
pub mod project;

pub use designer::{
    correlation_report, design, design_from, initial_pair, target_matrices, AuxPair,
    ConstraintResiduals, CorrelationEntry, DesignResult, DesignTrace, MONOTONE_SLACK,
};
pub use model::{
    aux_objective, build_problem, channel_mse, correlation, correlation_db, exp_covariance,
    optimal_aux, shift_matrix, AuxMatrix, CMatrix, ComsensProblem, ComsensSettings, LinkModel,
    TrainingPair,
};
pub use project::{restore_x, solve_x_subproblem, solve_x_subproblem_anchored, solve_y_subproblem};
