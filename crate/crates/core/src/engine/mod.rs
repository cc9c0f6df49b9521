//! Bayesian optimization runs: plain EI, the subset stage, and the composed tuner.

mod bo;
mod hyperparams;
mod hypertune;
mod record;

pub use bo::{run_bo, run_bo_with, BoConfig, RunKind, StopRule};
pub use hyperparams::{fit_gp_hyperparams, gp_log_marginal_likelihood, TargetScaling};
pub use hypertune::{
    average_optima, hypertune, hypertune_with, parity_stop, run_baseline, sample_virtual_points, stream_rng,
    subset_stage, HyperTuneConfig, SubsetStage, MAIN_STREAM, SUBSET_STREAM_BASE, VIRTUAL_STREAM,
};
pub use record::{BudgetLedger, Phase, RunRecord, StopReason, Trial};
