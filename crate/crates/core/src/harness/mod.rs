//! Experiment orchestration: configuration, shared-seed test sets,
//! planner/policy benchmarks, the funnel study, and result persistence.

pub mod benchmark;
pub mod config;
pub mod funnel;
pub mod stats;
pub mod testset;

pub use benchmark::{
    read_trial_csv, run_planner_benchmark, run_policy_benchmark, summarize, write_summary_json,
    write_trial_csv, Summary, TrialRow,
};
pub use config::{ExperimentConfig, FunnelSettings, PlannerBudgets, CONFIG_VERSION};
pub use funnel::{run_funnel_study, write_funnel_csv, FunnelStudy};
pub use testset::build_test_set;
