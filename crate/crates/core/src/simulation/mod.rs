//! Synthetic data and Monte-Carlo experiments.

pub mod data;
pub mod experiments;

pub use data::{beta0, g0, g0_sup, gen_dataset, support, truth, ErrorMode, SimSetting, SUPPORT};
pub use experiments::{
    run_coverage, run_joint, run_power_curve, run_risk, Cell, ExperimentConfig, ExperimentReport, FiveNumber,
    JOINT_X0, JOINT_Z0,
};
