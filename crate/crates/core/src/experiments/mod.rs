//! Reproducible experiment drivers: the headline comparison, the loss
//! ablation, the beta-parameter sweep and the SNR sweep.

mod config;
mod run;
mod table;

pub use config::ExperimentConfig;
pub use run::{
    run_ablation, run_beta_sweep, run_headline, run_snr_sweep, Lab, System, TestSet, TrainedSystem, EVAL_ID_OFFSET,
};
pub use table::{ResultRow, ResultTable};
