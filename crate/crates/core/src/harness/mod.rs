//! Experiment orchestration: configuration, static baseline strategies,
//! sweeps, ablations and the command-line interface.

mod cli;
mod config;
mod strategies;
mod sweep;

pub use cli::{cli_main, save_model_checkpoint};
pub use config::{ExperimentConfig, RewardGains, ScenarioConfig, CONFIG_VERSION, SPEED_OF_LIGHT};
pub use strategies::{strategy_eval, Strategy};
pub use sweep::{
    random_search_eval, run_ablation, run_sweep, AblationVariant, MetricRow, MetricTable,
    SweepAxis, SweepMethod, RANDOM_SEARCH_CANDIDATES,
};
